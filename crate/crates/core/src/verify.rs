//! Independent verification of produced solutions: the surface is rebuilt in
//! the original (u, v) coordinates and differentiated afresh, with no reuse
//! of the solver's chain rule. Curvature mode compares the graph curvature
//! against the prescription; embedding mode measures the Gauss curvature of
//! ds^2 - dz^2 and cross-checks it against the flatness equation residual.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::funcs::christoffels;
use crate::grid::{diff, Grid2D, ScalarField};
use crate::problem::{base_profile, MetricSpec, Mode, ProblemSpec};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualStats {
    pub sup: f64,
    pub l2: f64,
}

impl ResidualStats {
    pub fn of(field: &ScalarField) -> Self {
        Self { sup: field.sup_norm(), l2: field.l2_norm() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridStats {
    pub nx: usize,
    pub ny: usize,
    pub hu: f64,
    pub hv: f64,
    pub u_max: f64,
    pub v_max: f64,
}

/// Verification summary over the limit rectangle.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub ma_residual: ResidualStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curvature_error: Option<ResidualStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flatness_residual: Option<ResidualStats>,
    pub grid: GridStats,
}

/// z = u^2/2 - v^4/12 + eps^9 w on the (u, v) image of w's rectangle. The
/// image grid is the node-for-node linear map of w's grid, so no
/// interpolation enters.
pub fn reconstruct_z(w: &ScalarField, spec: &ProblemSpec) -> ScalarField {
    let e = spec.epsilon;
    let g = w.grid;
    let image = Grid2D {
        x_min: e.powi(4) * g.x_min,
        x_max: e.powi(4) * g.x_max,
        y_min: e * e * g.y_min,
        y_max: e * e * g.y_max,
        nx: g.nx,
        ny: g.ny,
    };
    let mut values = Vec::with_capacity(image.len());
    for ix in 0..image.nx {
        let u = image.x(ix);
        for iy in 0..image.ny {
            let v = image.y(iy);
            let (z0, _, _) = base_profile(u, v);
            values.push(z0 + e.powi(9) * w.at(ix, iy));
        }
    }
    ScalarField::new(image, values).expect("finite surface")
}

/// Gauss curvature of the graph z by fresh differencing:
/// (z_uu z_vv - z_uv^2) / (1 + |grad z|^2)^2.
pub fn graph_curvature(z: &ScalarField) -> Result<ScalarField> {
    let zu = diff(z, 1, 0)?;
    let zv = diff(z, 0, 1)?;
    let zuu = diff(z, 2, 0)?;
    let zuv = diff(z, 1, 1)?;
    let zvv = diff(z, 0, 2)?;
    let g = z.grid;
    let mut values = Vec::with_capacity(g.len());
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let det = zuu.at(ix, iy) * zvv.at(ix, iy) - zuv.at(ix, iy).powi(2);
            let grad_sq = zu.at(ix, iy).powi(2) + zv.at(ix, iy).powi(2);
            values.push(det / (1.0 + grad_sq).powi(2));
        }
    }
    ScalarField::new(g, values).map_err(|_| Error::NonFinite("graph curvature".into()))
}

/// Residual of the full equation det(Hess z + a) - K f over z's grid, with
/// all derivatives of z taken discretely.
pub fn ma_residual(z: &ScalarField, spec: &ProblemSpec) -> Result<ScalarField> {
    let zu = diff(z, 1, 0)?;
    let zv = diff(z, 0, 1)?;
    let zuu = diff(z, 2, 0)?;
    let zuv = diff(z, 1, 1)?;
    let zvv = diff(z, 0, 2)?;
    let g = z.grid;
    let mut values = Vec::with_capacity(g.len());
    for ix in 0..g.nx {
        let u = g.x(ix);
        for iy in 0..g.ny {
            let v = g.y(iy);
            let p = z.at(ix, iy);
            let (q1, q2) = (zu.at(ix, iy), zv.at(ix, iy));
            let m11 = zuu.at(ix, iy) + spec.a11.eval(u, v, p, q1, q2);
            let m12 = zuv.at(ix, iy) + spec.a12.eval(u, v, p, q1, q2);
            let m22 = zvv.at(ix, iy) + spec.a22.eval(u, v, p, q1, q2);
            let kf = spec.k.eval(u, v) * spec.f.eval(u, v, p, q1, q2);
            values.push(m11 * m22 - m12 * m12 - kf);
        }
    }
    ScalarField::new(g, values).map_err(|_| Error::NonFinite("equation residual".into()))
}

/// Gauss curvature (Brioschi) of ds^2 - dz^2, all fields discrete. Errors if
/// the reduced metric stops being positive definite (the gradient of z has
/// grown too large for an embedding).
pub fn flatness_residual(m: &MetricSpec, z: &ScalarField) -> Result<ScalarField> {
    let g = z.grid;
    let zu = diff(z, 1, 0)?;
    let zv = diff(z, 0, 1)?;
    let comp = |f: &dyn Fn(usize, usize) -> f64| -> ScalarField {
        let mut values = Vec::with_capacity(g.len());
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                values.push(f(ix, iy));
            }
        }
        ScalarField::new(g, values).expect("finite metric component")
    };
    let e_red = comp(&|ix, iy| m.e.eval(g.x(ix), g.y(iy)) - zu.at(ix, iy).powi(2));
    let f_red = comp(&|ix, iy| m.f.eval(g.x(ix), g.y(iy)) - zu.at(ix, iy) * zv.at(ix, iy));
    let g_red = comp(&|ix, iy| m.g.eval(g.x(ix), g.y(iy)) - zv.at(ix, iy).powi(2));
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let (ee, ff, gg) = (e_red.at(ix, iy), f_red.at(ix, iy), g_red.at(ix, iy));
            if !(ee > 0.0 && gg > 0.0 && ee * gg - ff * ff > 0.0) {
                return Err(Error::MetricNotPositiveDefinite(format!(
                    "ds^2 - dz^2 degenerate at node ({ix},{iy}); |grad z| too large"
                )));
            }
        }
    }
    brioschi_of_fields(&e_red, &f_red, &g_red)
}

/// Brioschi formula with all metric derivatives discrete.
fn brioschi_of_fields(e: &ScalarField, f: &ScalarField, g2: &ScalarField) -> Result<ScalarField> {
    let e_u = diff(e, 1, 0)?;
    let e_v = diff(e, 0, 1)?;
    let e_vv = diff(e, 0, 2)?;
    let g_u = diff(g2, 1, 0)?;
    let g_v = diff(g2, 0, 1)?;
    let g_uu = diff(g2, 2, 0)?;
    let f_u = diff(f, 1, 0)?;
    let f_v = diff(f, 0, 1)?;
    let f_uv = diff(f, 1, 1)?;
    let g = e.grid;
    let det3 = |m: [[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let mut values = Vec::with_capacity(g.len());
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let (ee, ff, gg) = (e.at(ix, iy), f.at(ix, iy), g2.at(ix, iy));
            let m1 = [
                [
                    -0.5 * e_vv.at(ix, iy) + f_uv.at(ix, iy) - 0.5 * g_uu.at(ix, iy),
                    0.5 * e_u.at(ix, iy),
                    f_u.at(ix, iy) - 0.5 * e_v.at(ix, iy),
                ],
                [f_v.at(ix, iy) - 0.5 * g_u.at(ix, iy), ee, ff],
                [0.5 * g_v.at(ix, iy), ff, gg],
            ];
            let m2 = [
                [0.0, 0.5 * e_v.at(ix, iy), 0.5 * g_u.at(ix, iy)],
                [0.5 * e_v.at(ix, iy), ee, ff],
                [0.5 * g_u.at(ix, iy), ff, gg],
            ];
            let disc = ee * gg - ff * ff;
            values.push((det3(m1) - det3(m2)) / (disc * disc));
        }
    }
    ScalarField::new(g, values).map_err(|_| Error::NonFinite("Brioschi residual".into()))
}

/// Residual of the flatness equation written against the original metric:
/// det(z_ij - Gamma^k_ij z_k) - K (EG - F^2 - E z_v^2 - G z_u^2 + 2 F z_u z_v),
/// the closed form that must vanish together with the reduced-metric
/// curvature.
pub fn embedding_equation_residual(m: &MetricSpec, z: &ScalarField) -> Result<ScalarField> {
    let g = z.grid;
    let zu = diff(z, 1, 0)?;
    let zv = diff(z, 0, 1)?;
    let zuu = diff(z, 2, 0)?;
    let zuv = diff(z, 1, 1)?;
    let zvv = diff(z, 0, 2)?;
    let h = crate::funcs::METRIC_FD_STEP;
    let mut values = Vec::with_capacity(g.len());
    for ix in 0..g.nx {
        let u = g.x(ix);
        for iy in 0..g.ny {
            let v = g.y(iy);
            let gamma = christoffels(&m.e, &m.f, &m.g, u, v, h);
            let (q1, q2) = (zu.at(ix, iy), zv.at(ix, iy));
            let red = |i: usize, j: usize, second: f64| {
                second - gamma[0][i][j] * q1 - gamma[1][i][j] * q2
            };
            let m11 = red(0, 0, zuu.at(ix, iy));
            let m12 = red(0, 1, zuv.at(ix, iy));
            let m22 = red(1, 1, zvv.at(ix, iy));
            let k = crate::funcs::brioschi_curvature(&m.e, &m.f, &m.g, u, v, h);
            let (ee, ff, gg) = (m.e.eval(u, v), m.f.eval(u, v), m.g.eval(u, v));
            let weight = ee * gg - ff * ff - ee * q2 * q2 - gg * q1 * q1 + 2.0 * ff * q1 * q2;
            values.push(m11 * m22 - m12 * m12 - k * weight);
        }
    }
    ScalarField::new(g, values).map_err(|_| Error::NonFinite("flatness equation residual".into()))
}

/// Full verification of a solution w over its rectangle: rebuild z, measure
/// the equation residual, and the mode-specific curvature error.
pub fn verify_solution(w: &ScalarField, spec: &ProblemSpec) -> Result<VerificationReport> {
    let z = reconstruct_z(w, spec);
    let residual = ma_residual(&z, spec)?;
    let curvature_error = match spec.mode {
        Mode::Curvature => {
            let k_comp = graph_curvature(&z)?;
            let img = z.grid;
            let err = k_comp.map_with_coords(|u, v, kc| kc - spec.k.eval(u, v));
            let _ = img;
            Some(ResidualStats::of(&err))
        }
        Mode::Embedding => None,
    };
    let flatness = match (&spec.metric, spec.mode) {
        (Some(m), Mode::Embedding) => {
            // the surface carried by the original metric is z_scale * z in
            // these coordinates
            let z_surface = z.scale(spec.z_scale);
            Some(ResidualStats::of(&flatness_residual(m, &z_surface)?))
        }
        _ => None,
    };
    let g = z.grid;
    Ok(VerificationReport {
        ma_residual: ResidualStats::of(&residual),
        curvature_error,
        flatness_residual: flatness,
        grid: GridStats {
            nx: g.nx,
            ny: g.ny,
            hu: g.hx(),
            hv: g.hy(),
            u_max: g.x_max,
            v_max: g.y_max,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::Func2;
    use crate::problem::model_problem;

    #[test]
    fn curvature_of_paraboloid() {
        let g = Grid2D::centered(0.8, 0.8, 33, 33).unwrap();
        let z = ScalarField::from_fn(g, |u, v| (u * u + v * v) / 2.0);
        let k = graph_curvature(&z).unwrap();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let (u, v) = (g.x(ix), g.y(iy));
                let expect = (1.0 + u * u + v * v).powi(-2);
                assert!((k.at(ix, iy) - expect).abs() < 1e-11, "at ({u},{v})");
            }
        }
    }

    #[test]
    fn curvature_of_plane_vanishes() {
        let g = Grid2D::centered(1.0, 1.0, 17, 17).unwrap();
        let z = ScalarField::from_fn(g, |u, v| 0.3 * u - 0.7 * v + 2.0);
        assert!(graph_curvature(&z).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn curvature_of_base_profile() {
        let g = Grid2D::centered(0.5, 0.5, 129, 129).unwrap();
        let z = ScalarField::from_fn(g, |u, v| u * u / 2.0 - v.powi(4) / 12.0);
        let k = graph_curvature(&z).unwrap();
        let expect = ScalarField::from_fn(g, |u, v| {
            -v * v / (1.0 + u * u + v.powi(6) / 9.0).powi(2)
        });
        let err = k.sub(&expect).sup_norm();
        let h = g.hy();
        assert!(err < 2.0 * h * h, "error {err:e} vs h^2 {:e}", h * h);
    }

    #[test]
    fn reconstruct_z_base_and_shift() {
        let spec = model_problem(0.05, 1.0, 1.0);
        let g = Grid2D::centered(1.0, 1.0, 17, 17).unwrap();
        let z0 = reconstruct_z(&ScalarField::zeros(g), &spec);
        for ix in 0..z0.grid.nx {
            for iy in 0..z0.grid.ny {
                let (u, v) = (z0.grid.x(ix), z0.grid.y(iy));
                assert!((z0.at(ix, iy) - (u * u / 2.0 - v.powi(4) / 12.0)).abs() < 1e-18);
            }
        }
        let c = 3.0;
        let zc = reconstruct_z(&ScalarField::from_fn(g, |_, _| c), &spec);
        let shift = 0.05f64.powi(9) * c;
        assert!((zc.at(5, 7) - z0.at(5, 7) - shift).abs() < 1e-20);
    }

    #[test]
    fn reconstruct_round_trip() {
        let spec = model_problem(0.05, 1.0, 1.0);
        let g = Grid2D::centered(1.0, 1.0, 17, 17).unwrap();
        let w = crate::probes::random_bump(g, &g, 3, 1.0);
        let z = reconstruct_z(&w, &spec);
        let e9 = 0.05f64.powi(9);
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let (u, v) = (z.grid.x(ix), z.grid.y(iy));
                let back = (z.at(ix, iy) - (u * u / 2.0 - v.powi(4) / 12.0)) / e9;
                assert!(
                    (back - w.at(ix, iy)).abs() < 1e-9 * (1.0 + w.at(ix, iy).abs()),
                    "node ({ix},{iy})"
                );
            }
        }
    }

    #[test]
    fn model_surface_equation_residual_tiny() {
        // the base profile solves the model problem; fresh differencing
        // leaves the O(h_v^2) quartic truncation, largest at the one-sided
        // boundary rows, and h_v = eps^2 hy shrinks fast with eps
        for (eps, tol) in [(0.05, 2e-8), (0.03, 1e-8)] {
            let spec = model_problem(eps, 1.0, 1.0);
            let g = Grid2D::centered(1.0, 1.0, 65, 65).unwrap();
            let z = reconstruct_z(&ScalarField::zeros(g), &spec);
            let r = ma_residual(&z, &spec).unwrap();
            assert!(r.sup_norm() <= tol, "eps {eps}: sup residual {:e}", r.sup_norm());
        }
    }

    #[test]
    fn flat_metric_zero_flatness() {
        let m = MetricSpec {
            e: Func2::Const { value: 1.0 },
            f: Func2::Zero,
            g: Func2::Const { value: 1.0 },
        };
        let g = Grid2D::centered(0.5, 0.5, 17, 17).unwrap();
        let z = ScalarField::zeros(g);
        let r = flatness_residual(&m, &z).unwrap();
        assert!(r.sup_norm() < 1e-12);
        let r12 = embedding_equation_residual(&m, &z).unwrap();
        assert!(r12.sup_norm() < 1e-10);
    }

    #[test]
    fn constructed_embedding_flatness() {
        // metric of the graph of z0: ds^2 - dz0^2 is exactly flat
        let m = MetricSpec {
            e: Func2::Poly { terms: vec![(1.0, 0, 0), (1.0, 2, 0)] },
            f: Func2::Poly { terms: vec![(-1.0 / 3.0, 1, 3)] },
            g: Func2::Poly { terms: vec![(1.0, 0, 0), (1.0 / 9.0, 0, 6)] },
        };
        let g = Grid2D::centered(0.5, 0.5, 65, 65).unwrap();
        let z = ScalarField::from_fn(g, |u, v| u * u / 2.0 - v.powi(4) / 12.0);
        let r = flatness_residual(&m, &z).unwrap();
        let h = g.hx();
        // the one-sided boundary stencils kink the reduced metric at the two
        // outermost rows and the second differencing inside the curvature
        // formula amplifies that; measure inside a two-node margin
        let interior = Grid2D::new(
            g.x_min + 2.0 * h,
            g.x_max - 2.0 * h,
            g.y_min + 2.0 * h,
            g.y_max - 2.0 * h,
            9,
            9,
        )
        .unwrap();
        let r_sup = r.sup_norm_over(&interior);
        assert!(r_sup < 5.0 * h * h, "flatness {r_sup:e}");
        // the closed-form flatness equation must vanish together with it
        let r12 = embedding_equation_residual(&m, &z).unwrap();
        let r12_sup = r12.sup_norm_over(&interior);
        assert!(r12_sup < 5.0 * h * h, "equation residual {r12_sup:e}");
        let ratio = (r_sup / r12_sup).max(r12_sup / r_sup);
        assert!(ratio <= 10.0, "cross-check ratio {ratio}");
    }

    #[test]
    fn steep_gradient_rejected() {
        let m = MetricSpec {
            e: Func2::Const { value: 1.0 },
            f: Func2::Zero,
            g: Func2::Const { value: 1.0 },
        };
        let g = Grid2D::centered(1.0, 1.0, 17, 17).unwrap();
        let z = ScalarField::from_fn(g, |u, _| 3.0 * u);
        assert!(flatness_residual(&m, &z).is_err());
    }
}
