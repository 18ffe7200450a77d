//! Characteristic change of variables (xi, eta) with eta = y, eliminating
//! the mixed second-derivative coefficient: xi is constant along integral
//! curves of dx/dt = a12/a22 seeded on the axis row, the vertical boundaries
//! are fixed pointwise, and coefficients are pushed forward by the chain
//! rule. Derivative fields of the map use fourth-order differencing so the
//! defining relation a12 xi_x + a22 xi_y = 0 survives discretely well below
//! the pushforward tolerance.

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::strip::CoefficientSet;

const ODE_TOL: f64 = 1e-10;
const MIXED_RESIDUAL_TOL: f64 = 1e-5;

/// The diffeomorphism xi(x,y), eta = y: the label field with its derivative
/// fields over the (x,y) grid, and the inverse x(xi,eta) over the same
/// rectangle read as a (xi,eta)-grid.
#[derive(Debug, Clone)]
pub struct DiffeoMap {
    pub xi: ScalarField,
    pub xi_x: ScalarField,
    pub xi_y: ScalarField,
    pub inverse_x: ScalarField,
    pub jacobian_min: f64,
}

impl DiffeoMap {
    pub fn identity(grid: Grid2D) -> Self {
        Self {
            xi: ScalarField::from_fn(grid, |x, _| x),
            xi_x: ScalarField::from_fn(grid, |_, _| 1.0),
            xi_y: ScalarField::zeros(grid),
            inverse_x: ScalarField::from_fn(grid, |x, _| x),
            jacobian_min: 1.0,
        }
    }

    pub fn grid(&self) -> Grid2D {
        self.xi.grid
    }

    /// One metadata line (jacobian_min), then xi, xi_x, xi_y in the field
    /// file format. The inverse map is rebuilt on read by row inversion.
    pub fn write_to(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "jacobian_min {:.16e}", self.jacobian_min)?;
        for field in [&self.xi, &self.xi_x, &self.xi_y] {
            let g = field.grid;
            writeln!(out, "{} {} {:.16e} {:.16e} {:.16e} {:.16e}", g.nx, g.ny, g.x_min, g.x_max, g.y_min, g.y_max)?;
            for v in field.values() {
                writeln!(out, "{:.16e}", v)?;
            }
        }
        Ok(())
    }

    pub fn read_from(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let meta = lines.next().ok_or_else(|| Error::Config("empty map file".into()))?;
        let jacobian_min: f64 = meta
            .strip_prefix("jacobian_min ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config("bad map metadata line".into()))?;
        let read_block = |lines: &mut std::str::Lines| -> Result<ScalarField> {
            let header = lines.next().ok_or_else(|| Error::Config("missing field header".into()))?;
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 6 {
                return Err(Error::Config("bad field header".into()));
            }
            let nx: usize = parts[0].parse().map_err(|_| Error::Config("bad nx".into()))?;
            let ny: usize = parts[1].parse().map_err(|_| Error::Config("bad ny".into()))?;
            let b: Vec<f64> = parts[2..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Config("bad bound".into())))
                .collect::<Result<_>>()?;
            let grid = Grid2D::new(b[0], b[1], b[2], b[3], nx, ny)?;
            let mut values = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                let line = lines.next().ok_or_else(|| Error::Config("truncated field".into()))?;
                values.push(line.trim().parse::<f64>().map_err(|_| Error::Config("bad value".into()))?);
            }
            ScalarField::new(grid, values)
        };
        let xi = read_block(&mut lines)?;
        let xi_x = read_block(&mut lines)?;
        let xi_y = read_block(&mut lines)?;
        let g = xi.grid;
        let seeds: Vec<f64> = (0..g.nx).map(|i| g.x(i)).collect();
        let mut inv_values = vec![0.0; g.len()];
        for iy in 0..g.ny {
            let labels: Vec<f64> = (0..g.nx).map(|ix| xi.at(ix, iy)).collect();
            let spline = CubicSpline::natural(&labels, &seeds);
            for (i, &s) in seeds.iter().enumerate() {
                inv_values[g.idx(i, iy)] = spline.eval(s);
            }
        }
        let inverse_x = ScalarField::new(g, inv_values)?;
        Ok(Self { xi, xi_x, xi_y, inverse_x, jacobian_min })
    }
}

/// Integrates the characteristic system from every axis seed and resamples
/// the labels onto the grid row by row.
pub fn build_characteristics(coeffs: &CoefficientSet) -> Result<DiffeoMap> {
    let g = coeffs.grid();
    let mid = axis_row(&g)?;
    let min_a22 = coeffs.a22.values().iter().cloned().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_a22 < 0.5 {
        return Err(Error::EpsilonTooLarge(format!(
            "a22 must stay away from zero, min |a22| = {min_a22}"
        )));
    }
    let slope = coeffs.a12.zip_map(&coeffs.a22, |n, d| n / d);
    let char_x = integrate_all(&slope, mid)?;

    // resample: per row, label as a function of x at the grid nodes
    let seeds: Vec<f64> = (0..g.nx).map(|i| g.x(i)).collect();
    let mut xi_values = vec![0.0; g.len()];
    for iy in 0..g.ny {
        let xs = &char_x[iy];
        for i in 1..g.nx {
            if xs[i] - xs[i - 1] <= 1e-12 {
                return Err(Error::CharacteristicFold(format!(
                    "labels collide at row {iy}, seeds {i}: x = {} vs {}",
                    xs[i - 1],
                    xs[i]
                )));
            }
        }
        let spline = CubicSpline::natural(xs, &seeds);
        for ix in 0..g.nx {
            xi_values[g.idx(ix, iy)] = spline.eval(g.x(ix));
        }
        // boundary columns are fixed exactly
        xi_values[g.idx(0, iy)] = g.x_min;
        xi_values[g.idx(g.nx - 1, iy)] = g.x_max;
    }
    let xi = ScalarField::new(g, xi_values)?;
    let xi_x = diff4(&xi, true);
    let xi_y = diff4(&xi, false);
    let jacobian_min = xi_x.values().iter().cloned().fold(f64::INFINITY, f64::min);
    if jacobian_min <= 0.0 {
        return Err(Error::CharacteristicFold(format!("xi_x reaches {jacobian_min}")));
    }
    let mut inv_values = vec![0.0; g.len()];
    for i in 0..g.nx {
        for iy in 0..g.ny {
            inv_values[g.idx(i, iy)] = char_x[iy][i];
        }
    }
    let inverse_x = ScalarField::new(g, inv_values)?;
    Ok(DiffeoMap { xi, xi_x, xi_y, inverse_x, jacobian_min })
}

fn axis_row(g: &Grid2D) -> Result<usize> {
    let mid = (g.ny - 1) / 2;
    if g.ny % 2 == 0 || g.y(mid).abs() > 1e-12 * g.hy().abs() {
        return Err(Error::InvalidGrid(
            "characteristic construction needs the axis y = 0 as a grid row".into(),
        ));
    }
    Ok(mid)
}

/// char_x[row][seed] = x-position of the characteristic through (seed, 0).
fn integrate_all(slope: &ScalarField, mid: usize) -> Result<Vec<Vec<f64>>> {
    let g = slope.grid;
    let mut char_x = vec![vec![0.0; g.nx]; g.ny];
    for (i, x_seed) in (0..g.nx).map(|i| (i, g.x(i))).collect::<Vec<_>>() {
        char_x[mid][i] = x_seed;
        let mut x = x_seed;
        for iy in mid + 1..g.ny {
            x = integrate_segment(slope, x, g.y(iy - 1), g.y(iy))?;
            char_x[iy][i] = x;
        }
        let mut x = x_seed;
        for iy in (0..mid).rev() {
            x = integrate_segment(slope, x, g.y(iy + 1), g.y(iy))?;
            char_x[iy][i] = x;
        }
    }
    Ok(char_x)
}

/// One row gap of dx/dt = slope(x,t), adaptive RK4 by step doubling.
fn integrate_segment(slope: &ScalarField, x0: f64, t0: f64, t1: f64) -> Result<f64> {
    let g = slope.grid;
    let eval = |x: f64, t: f64| -> Result<f64> {
        if x < g.x_min - 1e-9 || x > g.x_max + 1e-9 {
            return Err(Error::CharacteristicExit(format!(
                "characteristic reached x = {x} at t = {t}"
            )));
        }
        Ok(slope.interp_bicubic(x, t))
    };
    let run = |n: usize| -> Result<f64> {
        let h = (t1 - t0) / n as f64;
        let mut x = x0;
        let mut t = t0;
        for _ in 0..n {
            let k1 = eval(x, t)?;
            let k2 = eval(x + 0.5 * h * k1, t + 0.5 * h)?;
            let k3 = eval(x + 0.5 * h * k2, t + 0.5 * h)?;
            let k4 = eval(x + h * k3, t + h)?;
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
        }
        Ok(x)
    };
    let mut n = 2;
    let mut coarse = run(n)?;
    loop {
        n *= 2;
        let fine = run(n)?;
        if (fine - coarse).abs() <= ODE_TOL || n >= 64 {
            return Ok(fine);
        }
        coarse = fine;
    }
}

/// Fourth-order first derivative along one axis, one-sided at the edges.
fn diff4(field: &ScalarField, along_x: bool) -> ScalarField {
    let g = field.grid;
    let (n, h) = if along_x { (g.nx, g.hx()) } else { (g.ny, g.hy()) };
    let lanes = if along_x { g.ny } else { g.nx };
    let get = |i: usize, lane: usize| if along_x { field.at(i, lane) } else { field.at(lane, i) };
    let mut values = vec![0.0; g.len()];
    for lane in 0..lanes {
        for i in 0..n {
            let d = if i >= 2 && i + 2 < n {
                (get(i - 2, lane) - 8.0 * get(i - 1, lane) + 8.0 * get(i + 1, lane)
                    - get(i + 2, lane))
                    / (12.0 * h)
            } else if i == 0 {
                (-25.0 * get(0, lane) + 48.0 * get(1, lane) - 36.0 * get(2, lane)
                    + 16.0 * get(3, lane)
                    - 3.0 * get(4, lane))
                    / (12.0 * h)
            } else if i == 1 {
                (-3.0 * get(0, lane) - 10.0 * get(1, lane) + 18.0 * get(2, lane)
                    - 6.0 * get(3, lane)
                    + get(4, lane))
                    / (12.0 * h)
            } else if i == n - 2 {
                (3.0 * get(n - 1, lane) + 10.0 * get(n - 2, lane) - 18.0 * get(n - 3, lane)
                    + 6.0 * get(n - 4, lane)
                    - get(n - 5, lane))
                    / (12.0 * h)
            } else {
                (25.0 * get(n - 1, lane) - 48.0 * get(n - 2, lane) + 36.0 * get(n - 3, lane)
                    - 16.0 * get(n - 4, lane)
                    + 3.0 * get(n - 5, lane))
                    / (12.0 * h)
            };
            let idx = if along_x { g.idx(i, lane) } else { g.idx(lane, i) };
            values[idx] = d;
        }
    }
    ScalarField::new(g, values).expect("finite derivative")
}

/// sup over the grid of |a12 xi_x + a22 xi_y|, the defining relation.
pub fn mixed_residual_sup(coeffs: &CoefficientSet, map: &DiffeoMap) -> f64 {
    coeffs
        .a12
        .zip_map(&map.xi_x, |a, b| a * b)
        .add(&coeffs.a22.zip_map(&map.xi_y, |a, b| a * b))
        .sup_norm()
}

/// Sum of sup norms of the deviation from the unperturbed model; the logged
/// stand-in for the pushforward perturbation budget.
pub fn perturbation_sup(coeffs: &CoefficientSet) -> f64 {
    let b11 = coeffs.a11.map_with_coords(|_, y, v| v + y * y).sup_norm();
    let b22 = coeffs.a22.map(|v| v - 1.0).sup_norm();
    b11 + b22
        + coeffs.a12.sup_norm()
        + coeffs.a1.sup_norm()
        + coeffs.a2.sup_norm()
        + coeffs.a.sup_norm()
}

/// Transports coefficients into (xi, eta): abar11 = a11 xi_x^2
/// + 2 a12 xi_x xi_y + a22 xi_y^2, abar1 = a11 xi_xx + 2 a12 xi_xy
/// + a22 xi_yy + a1 xi_x + a2 xi_y; the mixed coefficient is checked against
/// tolerance and dropped, a22, a2, a transport by composition alone.
pub fn pushforward(coeffs: &CoefficientSet, map: &DiffeoMap) -> Result<CoefficientSet> {
    let g = coeffs.grid();
    let residual = mixed_residual_sup(coeffs, map);
    if residual > MIXED_RESIDUAL_TOL {
        return Err(Error::MixedResidual(format!("sup |abar12| = {residual:e}")));
    }
    let xi_xx = diff4(&map.xi_x, true);
    let xi_xy = diff4(&map.xi_x, false);
    let xi_yy = diff4(&map.xi_y, false);
    let mut a11_xy = coeffs.a11.zip_map(&map.xi_x, |a, j| a * j * j);
    a11_xy = a11_xy.add(&coeffs.a12.zip_map(&map.xi_x.zip_map(&map.xi_y, |a, b| a * b), |a, j| 2.0 * a * j));
    a11_xy = a11_xy.add(&coeffs.a22.zip_map(&map.xi_y, |a, j| a * j * j));
    let mut a1_xy = coeffs.a11.zip_map(&xi_xx, |a, j| a * j);
    a1_xy = a1_xy.add(&coeffs.a12.zip_map(&xi_xy, |a, j| 2.0 * a * j));
    a1_xy = a1_xy.add(&coeffs.a22.zip_map(&xi_yy, |a, j| a * j));
    a1_xy = a1_xy.add(&coeffs.a1.zip_map(&map.xi_x, |a, j| a * j));
    a1_xy = a1_xy.add(&coeffs.a2.zip_map(&map.xi_y, |a, j| a * j));

    let compose = |f: &ScalarField| -> ScalarField {
        let mut values = vec![0.0; g.len()];
        for i in 0..g.nx {
            for j in 0..g.ny {
                let x = map.inverse_x.at(i, j);
                values[g.idx(i, j)] = f.interp_bicubic(x, g.y(j));
            }
        }
        ScalarField::new(g, values).expect("finite pushforward")
    };

    Ok(CoefficientSet {
        a11: compose(&a11_xy),
        a12: ScalarField::zeros(g),
        a22: compose(&coeffs.a22),
        a1: compose(&a1_xy),
        a2: compose(&coeffs.a2),
        a: compose(&coeffs.a),
        lambda_budget: coeffs.lambda_budget,
    })
}

/// Transports a right-hand-side field into (xi, eta) by composition with the
/// inverse map.
pub fn pushforward_field(f: &ScalarField, map: &DiffeoMap) -> ScalarField {
    let g = map.grid();
    let mut values = vec![0.0; g.len()];
    for i in 0..g.nx {
        for j in 0..g.ny {
            values[g.idx(i, j)] = f.interp_bicubic(map.inverse_x.at(i, j), g.y(j));
        }
    }
    ScalarField::new(g, values).expect("finite pushforward")
}

/// u(x, y) = u_xi_eta(xi(x,y), y).
pub fn pullback_solution(u_xi_eta: &ScalarField, map: &DiffeoMap) -> ScalarField {
    let g = map.grid();
    let mut values = vec![0.0; g.len()];
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            values[g.idx(ix, iy)] = u_xi_eta.interp_bicubic(map.xi.at(ix, iy), g.y(iy));
        }
    }
    ScalarField::new(g, values).expect("finite pullback")
}

/// Natural cubic spline on strictly increasing abscissae.
struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    fn natural(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n >= 3 {
            // tridiagonal system for second derivatives, natural ends
            let mut sub = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut sup = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            diag[0] = 1.0;
            diag[n - 1] = 1.0;
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                sub[i] = h0;
                diag[i] = 2.0 * (h0 + h1);
                sup[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            // Thomas algorithm
            for i in 1..n {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[n - 1] = rhs[n - 1] / diag[n - 1];
            for i in (0..n - 1).rev() {
                m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
            }
        }
        Self { xs: xs.to_vec(), ys: ys.to_vec(), m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.xs[hi] - self.xs[lo];
        let t = ((x - self.xs[lo]) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.ys[lo], self.ys[hi]);
        let (m0, m1) = (self.m[lo], self.m[hi]);
        let a = y0;
        let b = (y1 - y0) / h - h / 6.0 * (2.0 * m0 + m1);
        let c = m0 / 2.0;
        let d = (m1 - m0) / (6.0 * h);
        let dx = t * h;
        a + b * dx + c * dx * dx + d * dx * dx * dx
    }
}
