//! Local solver for degenerate Monge-Ampere equations
//! det(z_ij + a_ij(u,v,z,Dz)) = K f(u,v,z,Dz) near a nondegenerate critical
//! point of K, by a Nash-Moser iteration over a regularized mixed-type
//! linearization. Front ends cover prescribed Gaussian curvature of graphs
//! and the local isometric embedding of surface metrics.

pub mod banded;
pub mod charcoords;
pub mod config;
pub mod error;
pub mod funcs;
pub mod grid;
pub mod nashmoser;
pub mod probes;
pub mod problem;
pub mod smoothing;
pub mod solver;
pub mod strip;
pub mod verify;

pub use error::{Error, Result};
