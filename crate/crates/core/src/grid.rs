//! Uniform rectangular grids, scalar fields, finite-difference calculus and
//! discrete norms. Everything downstream works through this module.
//!
//! Storage is row-major with y fastest: `values[ix * ny + iy]`. Fields are
//! immutable values; every operation returns a new field.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Minimum node count per axis. Fourth-order operators compose two second
/// derivative stencils, each needing a margin of one, plus one-sided boundary
/// closures of width four.
pub const MIN_NODES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::InvalidGrid(format!(
                "degenerate rectangle [{x_min},{x_max}]x[{y_min},{y_max}]"
            )));
        }
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes per axis, got {nx}x{ny}"
            )));
        }
        if ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite bounds".into()));
        }
        Ok(Self { x_min, x_max, y_min, y_max, nx, ny })
    }

    /// Centered rectangle [-x0,x0] x [-y0,y0].
    pub fn centered(x0: f64, y0: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(-x0, x0, -y0, y0, nx, ny)
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x_min + ix as f64 * self.hx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.y_min + iy as f64 * self.hy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    /// Scaled rectangle lambda*R = { lambda p : p in R }, node counts kept.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            x_min: lambda * self.x_min,
            x_max: lambda * self.x_max,
            y_min: lambda * self.y_min,
            y_max: lambda * self.y_max,
            nx: self.nx,
            ny: self.ny,
        }
    }

    pub fn contains_rect(&self, sub: &Grid2D) -> bool {
        let tol = 1e-12 * (self.x_max - self.x_min).max(self.y_max - self.y_min);
        sub.x_min >= self.x_min - tol
            && sub.x_max <= self.x_max + tol
            && sub.y_min >= self.y_min - tol
            && sub.y_max <= self.y_max + tol
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Trapezoidal quadrature weight of node (ix, iy).
    pub fn quad_weight(&self, ix: usize, iy: usize) -> f64 {
        let wx = if ix == 0 || ix == self.nx - 1 { 0.5 } else { 1.0 };
        let wy = if iy == 0 || iy == self.ny - 1 { 0.5 } else { 1.0 };
        wx * wy * self.hx() * self.hy()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "value count {} does not match grid {}x{}",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("field values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.nx {
            let x = grid.x(ix);
            for iy in 0..grid.ny {
                values.push(f(x, grid.y(iy)));
            }
        }
        Self { grid, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.idx(ix, iy)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination with node coordinates available.
    pub fn map_with_coords(&self, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let g = self.grid;
        let mut values = Vec::with_capacity(g.len());
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                values.push(f(g.x(ix), g.y(iy), self.at(ix, iy)));
            }
        }
        Self { grid: g, values }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "zip_map requires matching grids");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn axpy(&self, c: f64, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal L2 norm over the field's rectangle.
    pub fn l2_norm(&self) -> f64 {
        self.inner_product(self).sqrt()
    }

    /// Trapezoidal L2 inner product.
    pub fn inner_product(&self, other: &ScalarField) -> f64 {
        assert_eq!(self.grid, other.grid, "inner product requires matching grids");
        let g = self.grid;
        let mut acc = 0.0;
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                acc += g.quad_weight(ix, iy) * self.at(ix, iy) * other.at(ix, iy);
            }
        }
        acc
    }

    /// L2 norm restricted to nodes inside `rect` (trapezoid weights of the
    /// parent grid). Used for norms over shrinking subdomains without
    /// re-gridding.
    pub fn l2_norm_over(&self, rect: &Grid2D) -> f64 {
        let g = self.grid;
        let mut acc = 0.0;
        for ix in 0..g.nx {
            let x = g.x(ix);
            for iy in 0..g.ny {
                if rect.contains_point(x, g.y(iy)) {
                    let v = self.at(ix, iy);
                    acc += g.quad_weight(ix, iy) * v * v;
                }
            }
        }
        acc.sqrt()
    }

    pub fn sup_norm_over(&self, rect: &Grid2D) -> f64 {
        let g = self.grid;
        let mut m = 0.0f64;
        for ix in 0..g.nx {
            let x = g.x(ix);
            for iy in 0..g.ny {
                if rect.contains_point(x, g.y(iy)) {
                    m = m.max(self.at(ix, iy).abs());
                }
            }
        }
        m
    }

    /// Bilinear interpolation at an arbitrary point of the rectangle.
    /// Snaps to node values when the point lies on a node.
    pub fn interp_bilinear(&self, x: f64, y: f64) -> f64 {
        let g = self.grid;
        let fx = ((x - g.x_min) / g.hx()).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((y - g.y_min) / g.hy()).clamp(0.0, (g.ny - 1) as f64);
        let (i0, tx) = split_cell(fx, g.nx);
        let (j0, ty) = split_cell(fy, g.ny);
        let f00 = self.at(i0, j0);
        let f10 = self.at(i0 + 1, j0);
        let f01 = self.at(i0, j0 + 1);
        let f11 = self.at(i0 + 1, j0 + 1);
        f00 * (1.0 - tx) * (1.0 - ty) + f10 * tx * (1.0 - ty) + f01 * (1.0 - tx) * ty + f11 * tx * ty
    }

    /// Bicubic (4-point Lagrange per axis) interpolation; falls back to the
    /// available stencil near edges. Exact on node coordinates.
    pub fn interp_bicubic(&self, x: f64, y: f64) -> f64 {
        let g = self.grid;
        let fx = ((x - g.x_min) / g.hx()).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((y - g.y_min) / g.hy()).clamp(0.0, (g.ny - 1) as f64);
        let (ix, tx) = cubic_base(fx, g.nx);
        let (iy, ty) = cubic_base(fy, g.ny);
        let wx = cubic_weights(tx);
        let wy = cubic_weights(ty);
        let mut acc = 0.0;
        for a in 0..4 {
            let mut row = 0.0;
            for b in 0..4 {
                row += wy[b] * self.at(ix + a, iy + b);
            }
            acc += wx[a] * row;
        }
        acc
    }

    /// Field file format: header `nx ny x_min x_max y_min y_max`, then one
    /// value per line, row-major with y fastest, 17 significant digits.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let g = self.grid;
        writeln!(out, "{} {} {:.16e} {:.16e} {:.16e} {:.16e}", g.nx, g.ny, g.x_min, g.x_max, g.y_min, g.y_max)?;
        for v in &self.values {
            writeln!(out, "{:.16e}", v)?;
        }
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config(format!("{}: empty field file", path.display())))??;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(Error::Config(format!("{}: bad field header", path.display())));
        }
        let nx: usize = parts[0].parse().map_err(|_| Error::Config("bad nx".into()))?;
        let ny: usize = parts[1].parse().map_err(|_| Error::Config("bad ny".into()))?;
        let bounds: Vec<f64> = parts[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Config("bad bound".into())))
            .collect::<Result<_>>()?;
        let grid = Grid2D::new(bounds[0], bounds[1], bounds[2], bounds[3], nx, ny)?;
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(t.parse::<f64>().map_err(|_| Error::Config("bad value line".into()))?);
        }
        Self::new(grid, values)
    }
}

fn split_cell(f: f64, n: usize) -> (usize, f64) {
    let mut i = f.floor() as usize;
    if i >= n - 1 {
        i = n - 2;
    }
    let mut t = f - i as f64;
    // snap to nodes so restriction onto coincident grids is exact
    if t.abs() < 1e-9 {
        t = 0.0;
    } else if (t - 1.0).abs() < 1e-9 {
        t = 1.0;
    }
    (i, t)
}

fn cubic_base(f: f64, n: usize) -> (usize, f64) {
    let cell = (f.floor() as usize).min(n - 2);
    let base = cell.saturating_sub(1).min(n - 4);
    let mut t = f - base as f64;
    if (t - t.round()).abs() < 1e-9 {
        t = t.round();
    }
    (base, t)
}

fn cubic_weights(t: f64) -> [f64; 4] {
    // Lagrange basis on nodes 0,1,2,3
    [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ]
}

/// Discrete norms of a field: L2, Sobolev H^s (trapezoid quadrature of all
/// derivatives of total order <= s) and Holder-style sup norms.
#[derive(Debug, Clone)]
pub struct NormReport {
    pub l2: f64,
    pub sobolev: BTreeMap<usize, f64>,
    pub holder: BTreeMap<usize, f64>,
}

/// Central second-order discrete derivative d^ax/dx^ax d^ay/dy^ay, with
/// one-sided second-order closures at the boundary layers. Orders above two
/// per axis are realized by composing the first/second derivative passes.
pub fn diff(field: &ScalarField, ax: usize, ay: usize) -> Result<ScalarField> {
    if ax + ay > 4 {
        return Err(Error::StencilTooLarge(format!("requested order {}", ax + ay)));
    }
    let g = field.grid;
    let need = |order: usize| if order == 0 { 1 } else { 4 };
    if g.nx < need(ax) || g.ny < need(ay) {
        return Err(Error::StencilTooLarge(format!(
            "grid {}x{} too small for d^({ax},{ay})",
            g.nx, g.ny
        )));
    }
    let mut out = field.clone();
    let mut rem = ax;
    while rem > 0 {
        let k = if rem >= 2 { 2 } else { 1 };
        out = diff_axis(&out, Axis::X, k);
        rem -= k;
    }
    let mut rem = ay;
    while rem > 0 {
        let k = if rem >= 2 { 2 } else { 1 };
        out = diff_axis(&out, Axis::Y, k);
        rem -= k;
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

fn diff_axis(field: &ScalarField, axis: Axis, order: usize) -> ScalarField {
    let g = field.grid;
    let (n, h) = match axis {
        Axis::X => (g.nx, g.hx()),
        Axis::Y => (g.ny, g.hy()),
    };
    let mut values = vec![0.0; g.len()];
    let get = |i: usize, j: usize| match axis {
        Axis::X => field.at(i, j),
        Axis::Y => field.at(j, i),
    };
    let lanes = match axis {
        Axis::X => g.ny,
        Axis::Y => g.nx,
    };
    for lane in 0..lanes {
        for i in 0..n {
            let v = match (order, i) {
                (1, 0) => (-3.0 * get(0, lane) + 4.0 * get(1, lane) - get(2, lane)) / (2.0 * h),
                (1, i) if i == n - 1 => {
                    (3.0 * get(n - 1, lane) - 4.0 * get(n - 2, lane) + get(n - 3, lane)) / (2.0 * h)
                }
                (1, i) => (get(i + 1, lane) - get(i - 1, lane)) / (2.0 * h),
                (2, 0) => {
                    (2.0 * get(0, lane) - 5.0 * get(1, lane) + 4.0 * get(2, lane) - get(3, lane))
                        / (h * h)
                }
                (2, i) if i == n - 1 => {
                    (2.0 * get(n - 1, lane) - 5.0 * get(n - 2, lane) + 4.0 * get(n - 3, lane)
                        - get(n - 4, lane))
                        / (h * h)
                }
                (2, i) => (get(i + 1, lane) - 2.0 * get(i, lane) + get(i - 1, lane)) / (h * h),
                _ => unreachable!("axis derivative order is 1 or 2"),
            };
            let idx = match axis {
                Axis::X => g.idx(i, lane),
                Axis::Y => g.idx(lane, i),
            };
            values[idx] = v;
        }
    }
    ScalarField { grid: g, values }
}

/// Discrete norms up to order `s_max`.
pub fn norms(field: &ScalarField, s_max: usize) -> Result<NormReport> {
    let mut sobolev = BTreeMap::new();
    let mut holder = BTreeMap::new();
    let mut sumsq = vec![0.0f64; s_max + 1];
    let mut sup = vec![0.0f64; s_max + 1];
    for ax in 0..=s_max {
        for ay in 0..=(s_max - ax) {
            let d = diff(field, ax, ay)?;
            let order = ax + ay;
            let nsq = d.inner_product(&d);
            let s = d.sup_norm();
            for k in order..=s_max {
                sumsq[k] += nsq;
                sup[k] = sup[k].max(s);
            }
        }
    }
    for k in 0..=s_max {
        sobolev.insert(k, sumsq[k].sqrt());
        holder.insert(k, sup[k]);
    }
    Ok(NormReport { l2: sobolev[&0], sobolev, holder })
}

/// Bilinear restriction of a field onto a subgrid. Exact when the subgrid
/// nodes coincide with parent nodes.
pub fn restrict(field: &ScalarField, sub: Grid2D) -> Result<ScalarField> {
    if !field.grid.contains_rect(&sub) {
        return Err(Error::RestrictOutOfBounds(format!(
            "[{},{}]x[{},{}] not inside [{},{}]x[{},{}]",
            sub.x_min, sub.x_max, sub.y_min, sub.y_max,
            field.grid.x_min, field.grid.x_max, field.grid.y_min, field.grid.y_max
        )));
    }
    Ok(ScalarField::from_fn(sub, |x, y| field.interp_bilinear(x, y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid2D {
        Grid2D::new(-1.0, 1.0, -1.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn grid_rejects_too_few_nodes() {
        assert!(Grid2D::new(0.0, 1.0, 0.0, 1.0, 5, 33).is_err());
    }

    #[test]
    fn diff_of_constant_is_zero() {
        let f = ScalarField::from_fn(unit_grid(17), |_, _| 3.5);
        let d = diff(&f, 1, 0).unwrap();
        assert!(d.sup_norm() < 1e-14);
    }

    #[test]
    fn diff_exact_on_quadratics() {
        let f = ScalarField::from_fn(unit_grid(17), |x, _| x * x);
        let d = diff(&f, 2, 0).unwrap();
        for ix in 0..17 {
            for iy in 0..17 {
                assert!((d.at(ix, iy) - 2.0).abs() < 1e-11, "node {ix},{iy}: {}", d.at(ix, iy));
            }
        }
    }

    #[test]
    fn diff_second_order_by_refinement() {
        // Richardson oracle: halving hx must shrink the interior error by >= 3.5x.
        let err = |n: usize| {
            let f = ScalarField::from_fn(unit_grid(n), |x, _| x.sin());
            let d = diff(&f, 1, 0).unwrap();
            let mut e = 0.0f64;
            for ix in 1..n - 1 {
                for iy in 0..n {
                    e = e.max((d.at(ix, iy) - d.grid.x(ix).cos()).abs());
                }
            }
            e
        };
        let (e1, e2) = (err(33), err(65));
        assert!(e1 / e2 >= 3.5, "error drop {} too small", e1 / e2);
    }

    #[test]
    fn diff_is_linear() {
        let g = unit_grid(17);
        let f1 = ScalarField::from_fn(g, |x, y| (2.0 * x).sin() * y);
        let f2 = ScalarField::from_fn(g, |x, y| x * x + (3.0 * y).cos());
        let combo = f1.scale(2.25).axpy(-1.5, &f2);
        let lhs = diff(&combo, 1, 1).unwrap();
        let rhs = diff(&f1, 1, 1).unwrap().scale(2.25).axpy(-1.5, &diff(&f2, 1, 1).unwrap());
        assert!(lhs.sub(&rhs).sup_norm() < 1e-12);
    }

    #[test]
    fn mixed_derivatives_commute() {
        let g = unit_grid(21);
        let f = ScalarField::from_fn(g, |x, y| (x * y).sin() + x * x * y);
        let a = diff(&diff(&f, 1, 0).unwrap(), 0, 1).unwrap();
        let b = diff(&diff(&f, 0, 1).unwrap(), 1, 0).unwrap();
        let scale = a.sup_norm().max(1.0);
        for ix in 1..g.nx - 1 {
            for iy in 1..g.ny - 1 {
                assert!((a.at(ix, iy) - b.at(ix, iy)).abs() / scale < 1e-10);
            }
        }
    }

    #[test]
    fn diff_rejects_order_five() {
        let f = ScalarField::zeros(unit_grid(17));
        assert!(diff(&f, 3, 2).is_err());
    }

    #[test]
    fn norms_zero_field() {
        let r = norms(&ScalarField::zeros(unit_grid(17)), 2).unwrap();
        assert_eq!(r.l2, 0.0);
        assert_eq!(r.sobolev[&2], 0.0);
        assert_eq!(r.holder[&2], 0.0);
    }

    #[test]
    fn norms_constant_one_unit_square() {
        let g = Grid2D::new(0.0, 1.0, 0.0, 1.0, 33, 33).unwrap();
        let r = norms(&ScalarField::from_fn(g, |_, _| 1.0), 0).unwrap();
        assert!((r.l2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norms_h1_of_sine_product() {
        // ||f||^2 = 1, ||f||_H1^2 = 1 + 2 pi^2 for f = sin(pi x) sin(pi y) on [-1,1]^2
        let g = unit_grid(129);
        let f = ScalarField::from_fn(g, |x, y| {
            (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
        });
        let r = norms(&f, 1).unwrap();
        let expect = (1.0 + 2.0 * std::f64::consts::PI.powi(2)).sqrt();
        assert!(
            (r.sobolev[&1] - expect).abs() / expect < 0.01,
            "H1 {} vs {}",
            r.sobolev[&1],
            expect
        );
        assert!((r.sobolev[&0] - r.l2).abs() == 0.0);
    }

    #[test]
    fn norms_monotone_in_order() {
        let f = ScalarField::from_fn(unit_grid(33), |x, y| (x + 2.0 * y).sin());
        let r = norms(&f, 3).unwrap();
        for s in 1..=3usize {
            assert!(r.sobolev[&s] >= r.sobolev[&(s - 1)]);
            assert!(r.holder[&s] >= r.holder[&(s - 1)]);
        }
    }

    #[test]
    fn restrict_identity_grid() {
        let f = ScalarField::from_fn(unit_grid(17), |x, y| x * y + y);
        let r = restrict(&f, f.grid).unwrap();
        assert_eq!(f, r);
    }

    #[test]
    fn restrict_exact_on_linear() {
        let f = ScalarField::from_fn(unit_grid(17), |x, y| x + 2.0 * y);
        let sub = Grid2D::new(-0.63, 0.52, -0.4, 0.9, 11, 13).unwrap();
        let r = restrict(&f, sub).unwrap();
        let direct = ScalarField::from_fn(sub, |x, y| x + 2.0 * y);
        assert!(r.sub(&direct).sup_norm() < 1e-13);
    }

    #[test]
    fn restrict_second_order_vs_sampling() {
        let err = |n: usize| {
            let f = ScalarField::from_fn(unit_grid(n), |x, _| x.sin());
            // half-spacing-aligned subgrid: nodes fall mid-cell
            let h = f.grid.hx();
            let sub = Grid2D::new(-1.0 + 0.5 * h, 1.0 - 1.5 * h, -1.0 + 0.5 * h, 1.0 - 1.5 * h, n - 2, n - 2).unwrap();
            let r = restrict(&f, sub).unwrap();
            let direct = ScalarField::from_fn(sub, |x, _| x.sin());
            r.sub(&direct).sup_norm()
        };
        let (e1, e2) = (err(33), err(65));
        assert!(e1 / e2 > 3.0, "restriction not second order: {} / {}", e1, e2);
    }

    #[test]
    fn restrict_rejects_larger_rect() {
        let f = ScalarField::zeros(unit_grid(17));
        let sub = Grid2D::new(-2.0, 1.0, -1.0, 1.0, 9, 9).unwrap();
        assert!(restrict(&f, sub).is_err());
    }

    #[test]
    fn norms_agree_on_restriction_to_same_rect() {
        let f = ScalarField::from_fn(unit_grid(65), |x, y| (2.0 * x).cos() * (y).sin());
        let sub = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 33, 33).unwrap();
        let r = restrict(&f, sub).unwrap();
        let n1 = norms(&f, 1).unwrap();
        let n2 = norms(&r, 1).unwrap();
        let rel = (n1.sobolev[&1] - n2.sobolev[&1]).abs() / n1.sobolev[&1];
        assert!(rel < 5e-3, "restricted H1 differs by {rel}");
    }

    #[test]
    fn field_file_roundtrip_bit_exact() {
        let dir = std::env::temp_dir().join(format!("monge-grid-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.field");
        let f = ScalarField::from_fn(unit_grid(9), |x, y| (x * 7.3 + y).sin() / 3.0);
        f.write_to(&path).unwrap();
        let g = ScalarField::read_from(&path).unwrap();
        assert_eq!(f.values(), g.values());
        assert_eq!(f.grid, g.grid);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bicubic_exact_on_cubics_and_nodes() {
        let f = ScalarField::from_fn(unit_grid(17), |x, y| x * x * x + y * y - x * y);
        for &(x, y) in &[(0.33, -0.71), (0.5, 0.5), (-0.99, 0.2)] {
            let exact = x * x * x + y * y - x * y;
            assert!((f.interp_bicubic(x, y) - exact).abs() < 1e-12);
        }
        assert_eq!(f.interp_bicubic(f.grid.x(3), f.grid.y(11)), f.at(3, 11));
    }
}
