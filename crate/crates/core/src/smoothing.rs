//! Smoothing operators S_gamma on rectangles: a spectral low-pass with a
//! compactly supported radial symbol, applied on the mirror-extended torus,
//! plus the reflection-based extension operator and empirical norm-constant
//! diagnostics.

use std::collections::BTreeMap;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{norms, Grid2D, ScalarField};

/// Radial spectral profile: identically 1 on [0, plateau], identically 0
/// beyond support, quintic smoothstep blend between. plateau < support.
#[derive(Debug, Clone, Copy)]
pub struct MollifierKernel {
    pub plateau: f64,
    pub support: f64,
}

impl Default for MollifierKernel {
    fn default() -> Self {
        Self { plateau: 1.0, support: 2.0 }
    }
}

impl MollifierKernel {
    /// Symbol value at radius r (frequency already divided by gamma).
    pub fn hat(&self, r: f64) -> f64 {
        if r <= self.plateau {
            1.0
        } else if r >= self.support {
            0.0
        } else {
            1.0 - smoothstep5((r - self.plateau) / (self.support - self.plateau))
        }
    }
}

pub fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Linear extension of a field to an enlarged rectangle: mirror reflection
/// across each edge, then a smooth taper to zero in the outer half of the
/// margin band. `margin` is the fraction of each axis extent (clamped to
/// whole grid cells); restriction of the result onto the original rectangle
/// reproduces the input bit-exactly.
pub fn extend(field: &ScalarField, margin: f64) -> Result<ScalarField> {
    if !(margin > 0.0) {
        return Err(Error::Config(format!("extension margin must be positive, got {margin}")));
    }
    let g = field.grid;
    let mx = ((margin * (g.nx - 1) as f64).ceil() as usize).clamp(1, g.nx - 1);
    let my = ((margin * (g.ny - 1) as f64).ceil() as usize).clamp(1, g.ny - 1);
    let ext = Grid2D {
        x_min: g.x_min - mx as f64 * g.hx(),
        x_max: g.x_max + mx as f64 * g.hx(),
        y_min: g.y_min - my as f64 * g.hy(),
        y_max: g.y_max + my as f64 * g.hy(),
        nx: g.nx + 2 * mx,
        ny: g.ny + 2 * my,
    };
    let taper = |excess: usize, m: usize| -> f64 {
        // excess = node distance beyond the original edge, 0..=m
        let d = excess as f64 / m as f64;
        if d <= 0.5 {
            1.0
        } else {
            1.0 - smoothstep5(2.0 * (d - 0.5))
        }
    };
    let mut values = Vec::with_capacity(ext.len());
    for p in 0..ext.nx {
        let (ix, ex) = fold_index(p as isize - mx as isize, g.nx);
        let tx = if ex == 0 { 1.0 } else { taper(ex, mx) };
        for q in 0..ext.ny {
            let (iy, ey) = fold_index(q as isize - my as isize, g.ny);
            let ty = if ey == 0 { 1.0 } else { taper(ey, my) };
            values.push(field.at(ix, iy) * tx * ty);
        }
    }
    ScalarField::new(ext, values)
}

/// Folds a logical index into the grid by mirror reflection; returns the
/// source index and how many nodes past the edge the request was.
fn fold_index(i: isize, n: usize) -> (usize, usize) {
    if i < 0 {
        ((-i) as usize, (-i) as usize)
    } else if i as usize > n - 1 {
        let over = i as usize - (n - 1);
        (n - 1 - over, over)
    } else {
        (i as usize, 0)
    }
}

/// S_gamma with the default kernel.
pub fn mollify(field: &ScalarField, gamma: f64) -> Result<ScalarField> {
    mollify_with(&MollifierKernel::default(), field, gamma)
}

/// Low-pass smoothing: separate the bilinear trend (reproduced exactly, the
/// discrete stand-in for the kernel's vanishing moments), mirror-periodize
/// the remainder onto the doubled torus, scale the symbol by gamma, invert,
/// restrict. Frequencies are in cycles per unit length.
pub fn mollify_with(kernel: &MollifierKernel, field: &ScalarField, gamma: f64) -> Result<ScalarField> {
    if gamma < 1.0 {
        return Err(Error::GammaTooSmall(gamma));
    }
    let trend = linear_trend(field);
    let resid = field.sub(&trend);
    let smoothed = mirror_lowpass(&resid, kernel, gamma);
    Ok(trend.add(&smoothed))
}

/// Least-squares fit of c0 + c1 x + c2 y over the grid nodes.
fn linear_trend(field: &ScalarField) -> ScalarField {
    let g = field.grid;
    let (mut n, mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sf, mut sxf, mut syf) = (0.0, 0.0, 0.0);
    for ix in 0..g.nx {
        let x = g.x(ix);
        for iy in 0..g.ny {
            let y = g.y(iy);
            let f = field.at(ix, iy);
            n += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
            sf += f;
            sxf += x * f;
            syf += y * f;
        }
    }
    let m = [[n, sx, sy], [sx, sxx, sxy], [sy, sxy, syy]];
    let rhs = [sf, sxf, syf];
    let c = solve3(m, rhs);
    ScalarField::from_fn(g, |x, y| c[0] + c[1] * x + c[2] * y)
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for k in 0..3 {
        let mut p = k;
        for r in k + 1..3 {
            if m[r][k].abs() > m[p][k].abs() {
                p = r;
            }
        }
        m.swap(k, p);
        b.swap(k, p);
        let piv = m[k][k];
        for r in k + 1..3 {
            let f = m[r][k] / piv;
            for c in k..3 {
                m[r][c] -= f * m[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut x = [0.0; 3];
    for k in (0..3).rev() {
        let mut acc = b[k];
        for c in k + 1..3 {
            acc -= m[k][c] * x[c];
        }
        x[k] = acc / m[k][k];
    }
    x
}

fn mirror_lowpass(field: &ScalarField, kernel: &MollifierKernel, gamma: f64) -> ScalarField {
    let g = field.grid;
    let mx = 2 * (g.nx - 1);
    let my = 2 * (g.ny - 1);
    let mut buf = vec![Complex::new(0.0, 0.0); mx * my];
    for p in 0..mx {
        let ix = fold_torus(p, g.nx);
        for q in 0..my {
            let iy = fold_torus(q, g.ny);
            buf[p * my + q] = Complex::new(field.at(ix, iy), 0.0);
        }
    }
    fft2_in_place(&mut buf, mx, my, false);
    let px = mx as f64 * g.hx();
    let py = my as f64 * g.hy();
    for p in 0..mx {
        let kx = signed_bin(p, mx) as f64 / px;
        for q in 0..my {
            let ky = signed_bin(q, my) as f64 / py;
            let r = (kx * kx + ky * ky).sqrt() / gamma;
            let m = kernel.hat(r);
            buf[p * my + q] *= m;
        }
    }
    fft2_in_place(&mut buf, mx, my, true);
    let scale = 1.0 / (mx * my) as f64;
    let mut values = Vec::with_capacity(g.len());
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            values.push(buf[ix * my + iy].re * scale);
        }
    }
    ScalarField::new(g, values).expect("lowpass output finite")
}

fn fold_torus(p: usize, n: usize) -> usize {
    if p < n {
        p
    } else {
        2 * (n - 1) - p
    }
}

fn signed_bin(k: usize, m: usize) -> i64 {
    if k <= m / 2 {
        k as i64
    } else {
        k as i64 - m as i64
    }
}

fn fft2_in_place(buf: &mut [Complex<f64>], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft_cols = if inverse { planner.plan_fft_inverse(cols) } else { planner.plan_fft_forward(cols) };
    for r in 0..rows {
        fft_cols.process(&mut buf[r * cols..(r + 1) * cols]);
    }
    let mut t = vec![Complex::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = buf[r * cols + c];
        }
    }
    let fft_rows = if inverse { planner.plan_fft_inverse(rows) } else { planner.plan_fft_forward(rows) };
    for c in 0..cols {
        fft_rows.process(&mut t[c * rows..(c + 1) * rows]);
    }
    for r in 0..rows {
        for c in 0..cols {
            buf[r * cols + c] = t[c * rows + r];
        }
    }
}

/// Empirical Lemma-5.1-style constants over a gamma sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothingReport {
    /// keyed "a{a}_b{b}" -> per-gamma constants (max over probes)
    pub constants: BTreeMap<String, Vec<GammaConstant>>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GammaConstant {
    pub gamma: f64,
    pub constant: f64,
}

/// Measures C_{a,b} = ||S_g f||_{H^b} / (g^{max(b-a,0)} ||f||_{H^a}) over
/// probes for a,b in {0,1,2}. PASS iff each constant varies by < 2x across
/// the gamma list. Zero probes are skipped.
pub fn smoothing_constants(gammas: &[f64], probes: &[ScalarField]) -> Result<SmoothingReport> {
    let mut constants: BTreeMap<String, Vec<GammaConstant>> = BTreeMap::new();
    for &gamma in gammas {
        let mut per_ab: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for probe in probes {
            let probe_norms = norms(probe, 2)?;
            if probe_norms.l2 == 0.0 {
                continue;
            }
            let smoothed = mollify(probe, gamma)?;
            let smoothed_norms = norms(&smoothed, 2)?;
            for a in 0..=2usize {
                for b in 0..=2usize {
                    let growth = if b > a { gamma.powi((b - a) as i32) } else { 1.0 };
                    let c = smoothed_norms.sobolev[&b] / (growth * probe_norms.sobolev[&a]);
                    let e = per_ab.entry((a, b)).or_insert(0.0);
                    *e = e.max(c);
                }
            }
        }
        for ((a, b), c) in per_ab {
            constants
                .entry(format!("a{a}_b{b}"))
                .or_default()
                .push(GammaConstant { gamma, constant: c });
        }
    }
    let mut pass = true;
    for list in constants.values() {
        let max = list.iter().fold(0.0f64, |m, g| m.max(g.constant));
        let min = list.iter().fold(f64::INFINITY, |m, g| m.min(g.constant));
        if min > 0.0 && max / min >= 2.0 {
            pass = false;
        }
    }
    Ok(SmoothingReport { constants, pass })
}

/// Residual decay diagnostic: per gamma, the worst ratio
/// ||f - S_g f||_0 / ||f||_{H^2} over probes, plus the fitted log-log decay
/// slope against gamma. Realizes the b=0, a=2 decay law.
pub fn decay_rate(gammas: &[f64], probes: &[ScalarField]) -> Result<(f64, Vec<GammaConstant>)> {
    let mut points = Vec::new();
    for &gamma in gammas {
        let mut worst = 0.0f64;
        for probe in probes {
            let h2 = norms(probe, 2)?.sobolev[&2];
            if h2 == 0.0 {
                continue;
            }
            let err = probe.sub(&mollify(probe, gamma)?).l2_norm();
            worst = worst.max(err / h2);
        }
        points.push(GammaConstant { gamma, constant: worst });
    }
    let slope =
        -log_log_slope(&points.iter().map(|p| (p.gamma, p.constant)).collect::<Vec<_>>());
    Ok((slope, points))
}

/// Least-squares slope of ln(y) against ln(x); pairs with y <= 0 are skipped.
pub fn log_log_slope(pairs: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Synthetic probe with a prescribed spectral tail |c_k| ~ |k|^{-exponent},
/// built from even-index cosine modes so the mirror periodization acts on it
/// diagonally. Mode index k corresponds to frequency k / (2 L) cycles.
pub fn spectral_tail_probe(grid: Grid2D, exponent: f64, k_max: usize, seed: u64) -> ScalarField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let lx = grid.x_max - grid.x_min;
    let ly = grid.y_max - grid.y_min;
    let mut modes = Vec::new();
    let mut k = 2usize;
    while k <= k_max {
        let mut l = 2usize;
        while l <= k_max {
            let r2 = (k * k + l * l) as f64;
            let amp = r2.powf(-exponent / 2.0);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            modes.push((k as f64, l as f64, sign * amp));
            l += 2;
        }
        k += 2;
    }
    ScalarField::from_fn(grid, |x, y| {
        let tx = (x - grid.x_min) / lx;
        let ty = (y - grid.y_min) / ly;
        modes
            .iter()
            .map(|&(k, l, c)| {
                c * (std::f64::consts::PI * k * tx).cos() * (std::f64::consts::PI * l * ty).cos()
            })
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::random_bump;

    fn unit_grid(n: usize) -> Grid2D {
        Grid2D::new(-1.0, 1.0, -1.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn rejects_gamma_below_one() {
        let f = ScalarField::zeros(unit_grid(17));
        assert!(mollify(&f, 0.5).is_err());
    }

    #[test]
    fn constant_field_unchanged() {
        let f = ScalarField::from_fn(unit_grid(33), |_, _| 2.75);
        for gamma in [1.0, 4.0, 16.0] {
            let s = mollify(&f, gamma).unwrap();
            assert!(s.sub(&f).sup_norm() < 1e-12, "gamma {gamma}");
        }
    }

    #[test]
    fn plateau_mode_unchanged() {
        // even-index cosine mode inside the symbol plateau; frequency k/(2L) = 1
        let g = unit_grid(65);
        let f = ScalarField::from_fn(g, |x, y| {
            let tx = (x + 1.0) / 2.0;
            let ty = (y + 1.0) / 2.0;
            (std::f64::consts::PI * 4.0 * tx).cos() * (std::f64::consts::PI * 2.0 * ty).cos()
        });
        let s = mollify(&f, 4.0).unwrap();
        assert!(s.sub(&f).sup_norm() < 1e-10, "err {}", s.sub(&f).sup_norm());
    }

    #[test]
    fn linear_field_reproduced() {
        let f = ScalarField::from_fn(unit_grid(33), |x, y| 0.7 * x - 1.3 * y + 0.2);
        let s = mollify(&f, 2.0).unwrap();
        // inner half of the domain
        let inner = Grid2D::new(-0.5, 0.5, -0.5, 0.5, 9, 9).unwrap();
        let err = s.sub(&f).sup_norm_over(&inner);
        assert!(err < 1e-9, "linear leakage {err}");
    }

    #[test]
    fn extension_restricts_exactly_and_is_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = unit_grid(17);
        for trial in 0..20 {
            let f = ScalarField::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let e = extend(&f, 0.25).unwrap();
            let back = crate::grid::restrict(&e, g).unwrap();
            assert_eq!(back.values(), f.values(), "trial {trial}");
            let kappa = e.l2_norm() / f.l2_norm();
            assert!(kappa <= 4.0, "kappa {kappa}");
        }
        // operator norm surrogate on H^1 for a smooth probe
        let f = crate::probes::random_bump(g, &g, 31, 1.0);
        let e = extend(&f, 0.25).unwrap();
        let h1 = |field: &ScalarField| norms(field, 1).unwrap().sobolev[&1];
        let kappa_h1 = h1(&e) / h1(&f);
        assert!(kappa_h1 <= 4.0, "H1 extension norm {kappa_h1}");
    }

    #[test]
    fn extension_of_constant_is_constant_before_taper() {
        let g = unit_grid(17);
        let f = ScalarField::from_fn(g, |_, _| 1.0);
        let e = extend(&f, 0.25).unwrap();
        // inner half of the margin band: mirror without taper
        let m = 0.25 * 2.0 / 2.0;
        let probe_x = g.x_max + 0.4 * m;
        assert!((e.interp_bilinear(probe_x, 0.0) - 1.0).abs() < 1e-12);
        // outer corner tapered to zero
        assert!(e.at(e.grid.nx - 1, e.grid.ny - 1).abs() < 1e-12);
    }

    #[test]
    fn decay_rate_matches_symbol_tail() {
        let g = unit_grid(129);
        let probe = spectral_tail_probe(g, 3.2, 126, 11);
        let (slope, pts) = decay_rate(&[2.0, 4.0, 8.0, 16.0], &[probe]).unwrap();
        assert!((1.6..=2.4).contains(&slope), "slope {slope}, points {pts:?}");
    }

    #[test]
    fn norm_constants_uniform() {
        // the probe set must contain a spectrally rough field, otherwise the
        // growth-law constants for b > a are never saturated
        let g = unit_grid(65);
        let probes = vec![
            random_bump(g, &g, 3, 1.0),
            spectral_tail_probe(g, 1.2, 62, 5),
            spectral_tail_probe(g, 3.2, 62, 6),
        ];
        let report = smoothing_constants(&[2.0, 4.0, 8.0], &probes).unwrap();
        assert!(report.pass, "constants not uniform: {:?}", report.constants);
    }

    #[test]
    fn mollify_linear_in_input() {
        let g = unit_grid(33);
        let f1 = random_bump(g, &g, 1, 1.0);
        let f2 = random_bump(g, &g, 2, 1.0);
        let combo = f1.scale(1.5).axpy(-0.5, &f2);
        let lhs = mollify(&combo, 4.0).unwrap();
        let rhs = mollify(&f1, 4.0).unwrap().scale(1.5).axpy(-0.5, &mollify(&f2, 4.0).unwrap());
        assert!(lhs.sub(&rhs).sup_norm() < 1e-11);
    }

    #[test]
    fn bounded_uniformly_in_gamma() {
        let g = unit_grid(65);
        let probe = random_bump(g, &g, 9, 1.0);
        for gamma in [1.0, 2.0, 4.0, 8.0, 16.0, 64.0] {
            let s = mollify(&probe, gamma).unwrap();
            assert!(s.l2_norm() <= 2.0 * probe.l2_norm(), "gamma {gamma}");
        }
    }
}
