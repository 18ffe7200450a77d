//! Problem ingestion and the scaled nonlinear operator.
//!
//! The equation det(z_ij + a_ij(u,v,z,Dz)) = K(u,v) f(u,v,z,Dz) is brought to
//! the model form by the substitution u = eps^4 x, v = eps^2 y,
//! z = u^2/2 - v^4/12 + eps^9 w, after which dividing by eps^5 leaves
//! Phi(w) = -y^2 w_xx + w_yy + eps F(eps,x,y,w,Dw,D2w) on the fixed rectangle
//! X. The nonlinear remainder is evaluated by substituting back into the
//! original equation (no symbolic expansion) and is multiplied by the cutoff
//! psi.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcs::{christoffels, mat2_det, mat2_inv, Func2, Func5};
use crate::grid::{diff, Grid2D, ScalarField};
use crate::smoothing::smoothstep5;
use crate::strip::CoefficientSet;

pub const HYPOTHESIS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Curvature,
    Embedding,
}

/// The nonlinear problem: curvature K, quasilinear data a_ij and f, the
/// scaling parameter and the working rectangle.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub mode: Mode,
    pub k: Func2,
    pub a11: Func5,
    pub a12: Func5,
    pub a22: Func5,
    pub f: Func5,
    pub epsilon: f64,
    pub x0: f64,
    pub y0: f64,
    /// cutoff plateau fraction (psi = 1 inside)
    pub psi_inner: f64,
    /// cutoff support fraction (psi = 0 outside)
    pub psi_outer: f64,
    /// embedding mode: the metric expressed in the problem's coordinates,
    /// kept for verification
    pub metric: Option<MetricSpec>,
    /// graph rescale accumulated by coordinate normalization: the surface in
    /// these coordinates is z_scale * z
    pub z_scale: f64,
}

#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub e: Func2,
    pub f: Func2,
    pub g: Func2,
}

impl MetricSpec {
    /// Positive definiteness near the origin, sampled.
    pub fn validate(&self) -> Result<()> {
        for i in -4..=4 {
            for j in -4..=4 {
                let (u, v) = (0.05 * i as f64, 0.05 * j as f64);
                let e = self.e.eval(u, v);
                let g = self.g.eval(u, v);
                let f = self.f.eval(u, v);
                if !(e > 0.0 && g > 0.0 && e * g - f * f > 0.0) {
                    return Err(Error::MetricNotPositiveDefinite(format!(
                        "at ({u}, {v}): E={e}, G={g}, EG-F^2={}",
                        e * g - f * f
                    )));
                }
            }
        }
        Ok(())
    }
}

impl ProblemSpec {
    /// Curvature-mode problem for a prescribed K: a_ij = 0 and
    /// f = (1 + |Dz|^2)^2.
    pub fn curvature(k: Func2, epsilon: f64, x0: f64, y0: f64) -> Self {
        Self {
            mode: Mode::Curvature,
            k,
            a11: Func5::Zero,
            a12: Func5::Zero,
            a22: Func5::Zero,
            f: Func5::GraphWeight,
            epsilon,
            x0,
            y0,
            psi_inner: 0.5,
            psi_outer: 0.75,
            metric: None,
            z_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!("epsilon must lie in (0, 0.5), got {}", self.epsilon)));
        }
        if !(self.x0 > 0.0 && self.y0 > 0.0) {
            return Err(Error::Config("rectangle half-widths must be positive".into()));
        }
        if !(0.0 < self.psi_inner && self.psi_inner < self.psi_outer && self.psi_outer <= 1.0) {
            return Err(Error::Config("cutoff fractions must satisfy 0 < inner < outer <= 1".into()));
        }
        // a_ij(0,0,p,q) = 0 for all (p,q), and all (u,v)-derivatives of order
        // <= 2 vanish at the origin
        let h = 1e-4;
        for (name, func) in [("a11", &self.a11), ("a12", &self.a12), ("a22", &self.a22)] {
            for &(p, q1, q2) in &[(0.0, 0.0, 0.0), (0.3, -0.2, 0.1), (-1.0, 0.5, 0.7)] {
                let v = func.eval(0.0, 0.0, p, q1, q2);
                if v.abs() > HYPOTHESIS_TOL {
                    return Err(Error::HypothesisViolated(format!(
                        "{name}(0,0,p,q) = {v:e} at p={p}, q=({q1},{q2})"
                    )));
                }
            }
            let at = |u: f64, v: f64| func.eval(u, v, 0.0, 0.0, 0.0);
            let derivs = [
                ("u", (at(h, 0.0) - at(-h, 0.0)) / (2.0 * h)),
                ("v", (at(0.0, h) - at(0.0, -h)) / (2.0 * h)),
                ("uu", (at(h, 0.0) - 2.0 * at(0.0, 0.0) + at(-h, 0.0)) / (h * h)),
                ("vv", (at(0.0, h) - 2.0 * at(0.0, 0.0) + at(0.0, -h)) / (h * h)),
                (
                    "uv",
                    (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h),
                ),
            ];
            for (dn, dv) in derivs {
                if dv.abs() > 1e-4 {
                    return Err(Error::HypothesisViolated(format!(
                        "d_{dn} {name}(0) = {dv:e} does not vanish"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Diagnosis of the critical-point hypotheses for K.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub k0: f64,
    pub grad: [f64; 2],
    pub hessian: [[f64; 2]; 2],
    /// ascending
    pub eigenvalues: [f64; 2],
}

/// Accepts iff K(0) and grad K(0) vanish (within tolerance) and Hess K(0)
/// has a negative eigenvalue. The positive-semidefinite case is handled by
/// classical elliptic methods and is out of scope here. Derivatives are
/// Richardson-extrapolated so curvatures that are themselves
/// finite-difference quantities still clear the tolerance.
pub fn check_hypotheses(k: &Func2) -> Result<HypothesisReport> {
    let k0 = k.eval(0.0, 0.0);
    let richardson2 = |coarse: [f64; 2], fine: [f64; 2]| {
        [(4.0 * fine[0] - coarse[0]) / 3.0, (4.0 * fine[1] - coarse[1]) / 3.0]
    };
    let h = 1e-2;
    let grad = richardson2(k.grad(0.0, 0.0, h), k.grad(0.0, 0.0, h / 2.0));
    let hc = k.hessian(0.0, 0.0, h);
    let hf = k.hessian(0.0, 0.0, h / 2.0);
    let mut hessian = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            hessian[i][j] = (4.0 * hf[i][j] - hc[i][j]) / 3.0;
        }
    }
    let eigenvalues = sym_eigenvalues(&hessian);
    let report = HypothesisReport { k0, grad, hessian, eigenvalues };
    if k0.abs() > HYPOTHESIS_TOL {
        return Err(Error::HypothesisViolated(format!("K(0) = {k0:e} (must vanish)")));
    }
    let gn = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
    if gn > HYPOTHESIS_TOL {
        return Err(Error::HypothesisViolated(format!("|grad K(0)| = {gn:e} (must vanish)")));
    }
    if eigenvalues[0] >= -1e-6 {
        return Err(Error::HypothesisViolated(format!(
            "Hess K(0) has no negative eigenvalue (eigenvalues {:?})",
            eigenvalues
        )));
    }
    Ok(report)
}

fn sym_eigenvalues(h: &[[f64; 2]; 2]) -> [f64; 2] {
    let tr = h[0][0] + h[1][1];
    let disc = ((h[0][0] - h[1][1]).powi(2) + 4.0 * h[0][1] * h[1][0]).max(0.0).sqrt();
    [(tr - disc) / 2.0, (tr + disc) / 2.0]
}

/// Linear change of coordinates (u,v) = M (u',v') after which the quadratic
/// part of (K f)(., ., 0, 0) has v'^2 coefficient exactly -1: a rotation
/// aligning the negative-eigenvalue direction with v', then axis scalings.
#[derive(Debug, Clone)]
pub struct Normalization {
    /// new coordinates to old
    pub map: [[f64; 2]; 2],
    /// graph rescale z = scale * z' keeping the equation shape; equals det(map)
    pub scale: f64,
    pub k_norm: Func2,
}

pub fn normalize(k: &Func2, f: &Func5) -> Result<Normalization> {
    check_hypotheses(k)?;
    // wide enough that finite-difference noise in K itself (present when K
    // is metric-derived) stays far below the probed curvature values
    let h = 1e-2;
    let g = |u: f64, v: f64| k.eval(u, v) * f.eval(u, v, 0.0, 0.0, 0.0);
    let huu = (g(h, 0.0) - 2.0 * g(0.0, 0.0) + g(-h, 0.0)) / (h * h);
    let hvv = (g(0.0, h) - 2.0 * g(0.0, 0.0) + g(0.0, -h)) / (h * h);
    let huv = (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4.0 * h * h);
    let hess = [[huu, huv], [huv, hvv]];
    let eig = sym_eigenvalues(&hess);
    let (lam_neg, lam_pos) = (eig[0], eig[1]);
    if lam_neg >= -1e-6 {
        return Err(Error::DegenerateHessian(format!(
            "quadratic part of K f has no negative direction, eigenvalues {eig:?}"
        )));
    }
    // eigenvector for lam_neg
    let neg_dir = sym_eigenvector(&hess, lam_neg);
    // rotation with second column = negative direction
    let pos_dir = [neg_dir[1], -neg_dir[0]];
    let beta = (2.0 / lam_neg.abs()).sqrt();
    let alpha = if lam_pos > 1e-6 { (2.0 / lam_pos).sqrt() } else { 1.0 };
    let map = [
        [pos_dir[0] * alpha, neg_dir[0] * beta],
        [pos_dir[1] * alpha, neg_dir[1] * beta],
    ];
    // verify by a finite-difference Hessian of the composed function
    let gm = |u: f64, v: f64| {
        let uu = map[0][0] * u + map[0][1] * v;
        let vv = map[1][0] * u + map[1][1] * v;
        g(uu, vv)
    };
    let cvv = 0.5 * (gm(0.0, h) - 2.0 * gm(0.0, 0.0) + gm(0.0, -h)) / (h * h);
    if (cvv + 1.0).abs() > 1e-3 {
        return Err(Error::DegenerateHessian(format!(
            "normalization check failed: v'^2 coefficient {cvv} instead of -1"
        )));
    }
    Ok(Normalization { map, scale: mat2_det(&map), k_norm: k.clone().composed(map) })
}

fn sym_eigenvector(h: &[[f64; 2]; 2], lambda: f64) -> [f64; 2] {
    // (h - lambda I) w = 0; pick the better-conditioned row
    let r1 = [h[0][0] - lambda, h[0][1]];
    let r2 = [h[1][0], h[1][1] - lambda];
    let (a, b) = if r1[0].abs() + r1[1].abs() >= r2[0].abs() + r2[1].abs() {
        (r1[0], r1[1])
    } else {
        (r2[0], r2[1])
    };
    let w = if b.abs() > a.abs() { [1.0, -a / b] } else { [-b / a, 1.0] };
    let n = (w[0] * w[0] + w[1] * w[1]).sqrt();
    [w[0] / n, w[1] / n]
}

impl Normalization {
    /// Applies the coordinate change to the full problem data. Gradient slots
    /// transform as q = scale * M^{-T} q'; the z slot is not transformed
    /// (none of the built-in data functions read it).
    pub fn apply(&self, spec: &ProblemSpec) -> Result<ProblemSpec> {
        let minv = mat2_inv(&self.map)?;
        let mt_inv = [
            [self.scale * minv[0][0], self.scale * minv[1][0]],
            [self.scale * minv[0][1], self.scale * minv[1][1]],
        ];
        let wrap = |f: &Func5| Func5::Composed {
            inner: Box::new(f.clone()),
            m: self.map,
            mt_inv,
            scale: 1.0,
        };
        // the metric follows the coordinate change so that verification in
        // the new coordinates measures the same geometry
        let metric = spec.metric.as_ref().map(|m| {
            let pull = |comp: (usize, usize)| Func2::MetricPullback {
                e: Box::new(m.e.clone()),
                f: Box::new(m.f.clone()),
                g: Box::new(m.g.clone()),
                lin: self.map,
                gamma0: [[[0.0; 2]; 2]; 2],
                comp,
            };
            MetricSpec { e: pull((0, 0)), f: pull((0, 1)), g: pull((1, 1)) }
        });
        Ok(ProblemSpec {
            mode: spec.mode,
            k: self.k_norm.clone(),
            a11: wrap(&spec.a11),
            a12: wrap(&spec.a12),
            a22: wrap(&spec.a22),
            f: wrap(&spec.f),
            epsilon: spec.epsilon,
            x0: spec.x0,
            y0: spec.y0,
            psi_inner: spec.psi_inner,
            psi_outer: spec.psi_outer,
            metric,
            z_scale: spec.z_scale * self.scale,
        })
    }
}

/// Converts a metric into Monge-Ampere data: applies the quadratic coordinate
/// change killing the Christoffel symbols at the origin, then emits
/// a_ij = -Gamma^1_ij q1 - Gamma^2_ij q2, f = EG - F^2 - E q2^2 - G q1^2
/// + 2 F q1 q2, and K by the Brioschi formula, all against the pulled-back
/// metric.
pub fn metric_to_problem(m: &MetricSpec, epsilon: f64, x0: f64, y0: f64) -> Result<ProblemSpec> {
    m.validate()?;
    let gamma0 = christoffels(&m.e, &m.f, &m.g, 0.0, 0.0, crate::funcs::METRIC_FD_STEP);
    // the pullback wants old coordinates as a function of the new ones,
    // u = u' - 1/2 Gamma0[u', u'], which kills the connection at the origin
    let mut neg = gamma0;
    for plane in neg.iter_mut() {
        for row in plane.iter_mut() {
            for entry in row.iter_mut() {
                *entry = -*entry;
            }
        }
    }
    let pull = |comp: (usize, usize)| Func2::MetricPullback {
        e: Box::new(m.e.clone()),
        f: Box::new(m.f.clone()),
        g: Box::new(m.g.clone()),
        lin: [[1.0, 0.0], [0.0, 1.0]],
        gamma0: neg,
        comp,
    };
    let (e2, f2, g2) = (pull((0, 0)), pull((0, 1)), pull((1, 1)));
    // the pulled-back connection must vanish at the origin
    let check = christoffels(&e2, &f2, &g2, 0.0, 0.0, crate::funcs::METRIC_FD_STEP);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                if check[i][j][k].abs() > 1e-6 {
                    return Err(Error::HypothesisViolated(format!(
                        "pulled-back Christoffel [{i}][{j}][{k}] = {:e}",
                        check[i][j][k]
                    )));
                }
            }
        }
    }
    let gamma_fn = |upper: usize, lower: (usize, usize)| Func2::Christoffel {
        e: Box::new(e2.clone()),
        f: Box::new(f2.clone()),
        g: Box::new(g2.clone()),
        upper,
        lower,
    };
    let a_fn = |i: usize, j: usize| Func5::GradForm {
        c1: Func2::Scaled { inner: Box::new(gamma_fn(0, (i, j))), scale: -1.0 },
        c2: Func2::Scaled { inner: Box::new(gamma_fn(1, (i, j))), scale: -1.0 },
    };
    let k = Func2::BrioschiK { e: Box::new(e2.clone()), f: Box::new(f2.clone()), g: Box::new(g2.clone()) };
    Ok(ProblemSpec {
        mode: Mode::Embedding,
        k,
        a11: a_fn(0, 0),
        a12: a_fn(0, 1),
        a22: a_fn(1, 1),
        f: Func5::MetricWeight { e: e2.clone(), f: f2.clone(), g: g2.clone() },
        epsilon,
        x0,
        y0,
        psi_inner: 0.5,
        psi_outer: 0.75,
        metric: Some(MetricSpec { e: e2, f: f2, g: g2 }),
        z_scale: 1.0,
    })
}

/// Switch for the nonlinear remainder of Phi.
#[derive(Debug, Clone)]
pub enum Remainder {
    /// the full operator
    Full,
    /// pure principal part -y^2 w_xx + w_yy
    Off,
    /// principal part minus a fixed forcing; keeps Phi affine in w
    LinearForcing(ScalarField),
}

/// Pointwise jet of w entering Phi: value, gradient, Hessian entries.
#[derive(Debug, Clone, Copy, Default)]
pub struct Jet {
    pub p: f64,
    pub qx: f64,
    pub qy: f64,
    pub rxx: f64,
    pub rxy: f64,
    pub ryy: f64,
}

/// The scaled operator Phi on a fixed rectangle grid.
#[derive(Debug, Clone)]
pub struct ScaledOperator {
    pub grid: Grid2D,
    pub epsilon: f64,
    pub spec: ProblemSpec,
    pub remainder: Remainder,
}

impl ScaledOperator {
    pub fn new(spec: ProblemSpec, grid: Grid2D) -> Result<Self> {
        spec.validate()?;
        if (grid.x_max - spec.x0).abs() > 1e-12
            || (grid.x_min + spec.x0).abs() > 1e-12
            || (grid.y_max - spec.y0).abs() > 1e-12
            || (grid.y_min + spec.y0).abs() > 1e-12
        {
            return Err(Error::InvalidGrid(format!(
                "operator grid must be [-{0},{0}]x[-{1},{1}]",
                spec.x0, spec.y0
            )));
        }
        let op = Self { grid, epsilon: spec.epsilon, spec, remainder: Remainder::Full };
        // f must stay positive over the mapped box along the base profile
        for ix in 0..grid.nx {
            for iy in 0..grid.ny {
                let (u, v) = op.map_uv(grid.x(ix), grid.y(iy));
                let (z, zu, zv) = base_profile(u, v);
                let fv = op.spec.f.eval(u, v, z, zu, zv);
                if !(fv > 0.0) {
                    return Err(Error::EpsilonTooLarge(format!(
                        "f({u},{v},...) = {fv} not positive on the mapped box"
                    )));
                }
            }
        }
        Ok(op)
    }

    /// Pure linear problem Phi(w) = -y^2 w_xx + w_yy - forcing, for exercising
    /// the iteration machinery against a known linear solve.
    pub fn linear_forced(grid: Grid2D, forcing: ScalarField) -> Self {
        assert_eq!(forcing.grid, grid);
        let x0 = grid.x_max;
        let y0 = grid.y_max;
        let spec = ProblemSpec::curvature(Func2::Quadratic { cuu: 0.0, cuv: 0.0, cvv: -1.0 }, 0.1, x0, y0);
        Self { grid, epsilon: 0.1, spec, remainder: Remainder::LinearForcing(forcing) }
    }

    pub fn principal_only(grid: Grid2D) -> Self {
        let x0 = grid.x_max;
        let y0 = grid.y_max;
        let spec = ProblemSpec::curvature(Func2::Quadratic { cuu: 0.0, cuv: 0.0, cvv: -1.0 }, 0.1, x0, y0);
        Self { grid, epsilon: 0.1, spec, remainder: Remainder::Off }
    }

    pub fn map_uv(&self, x: f64, y: f64) -> (f64, f64) {
        let e = self.epsilon;
        (e.powi(4) * x, e * e * y)
    }

    /// Tensor cutoff: 1 on the inner plateau, 0 beyond the outer fraction.
    pub fn psi(&self, x: f64, y: f64) -> f64 {
        let s = |t: f64, half: f64| -> f64 {
            let r = t.abs() / half;
            if r <= self.spec.psi_inner {
                1.0
            } else if r >= self.spec.psi_outer {
                0.0
            } else {
                1.0 - smoothstep5((r - self.spec.psi_inner) / (self.spec.psi_outer - self.spec.psi_inner))
            }
        };
        s(x, self.spec.x0) * s(y, self.spec.y0)
    }

    /// Phi at one node given the jet of w there.
    pub fn phi_point(&self, x: f64, y: f64, jet: &Jet) -> f64 {
        let principal = -y * y * jet.rxx + jet.ryy;
        match &self.remainder {
            Remainder::Off | Remainder::LinearForcing(_) => principal,
            Remainder::Full => {
                let psi = self.psi(x, y);
                if psi == 0.0 {
                    return principal;
                }
                let scaled = self.scaled_residual(x, y, jet);
                principal + psi * (scaled - principal)
            }
        }
    }

    /// eps^{-5} [ det(Hess z + a) - K f ] with z assembled from the base
    /// profile and the scaled jet of w.
    fn scaled_residual(&self, x: f64, y: f64, jet: &Jet) -> f64 {
        let e = self.epsilon;
        let (u, v) = self.map_uv(x, y);
        let z = u * u / 2.0 - v.powi(4) / 12.0 + e.powi(9) * jet.p;
        let zu = u + e.powi(5) * jet.qx;
        let zv = -v.powi(3) / 3.0 + e.powi(7) * jet.qy;
        let zuu = 1.0 + e * jet.rxx;
        let zuv = e.powi(3) * jet.rxy;
        let zvv = -v * v + e.powi(5) * jet.ryy;
        let m11 = zuu + self.spec.a11.eval(u, v, z, zu, zv);
        let m12 = zuv + self.spec.a12.eval(u, v, z, zu, zv);
        let m22 = zvv + self.spec.a22.eval(u, v, z, zu, zv);
        let det = m11 * m22 - m12 * m12;
        let kf = self.spec.k.eval(u, v) * self.spec.f.eval(u, v, z, zu, zv);
        (det - kf) / e.powi(5)
    }

    fn jets(&self, w: &ScalarField) -> Result<[ScalarField; 5]> {
        Ok([
            diff(w, 1, 0)?,
            diff(w, 0, 1)?,
            diff(w, 2, 0)?,
            diff(w, 1, 1)?,
            diff(w, 0, 2)?,
        ])
    }

    /// Phi(w) on the grid.
    pub fn phi_apply(&self, w: &ScalarField) -> Result<ScalarField> {
        if w.grid != self.grid {
            return Err(Error::InvalidGrid("w must live on the operator grid".into()));
        }
        let [wx, wy, wxx, wxy, wyy] = self.jets(w)?;
        let g = self.grid;
        let mut values = Vec::with_capacity(g.len());
        for ix in 0..g.nx {
            let x = g.x(ix);
            for iy in 0..g.ny {
                let y = g.y(iy);
                let jet = Jet {
                    p: w.at(ix, iy),
                    qx: wx.at(ix, iy),
                    qy: wy.at(ix, iy),
                    rxx: wxx.at(ix, iy),
                    rxy: wxy.at(ix, iy),
                    ryy: wyy.at(ix, iy),
                };
                values.push(self.phi_point(x, y, &jet));
            }
        }
        let mut out = ScalarField::new(g, values)
            .map_err(|_| Error::NonFinite("Phi(w) produced a non-finite value".into()))?;
        if let Remainder::LinearForcing(b) = &self.remainder {
            out = out.sub(b);
        }
        Ok(out)
    }

    /// Coefficients of the linearization L(w) by central Gateaux differences
    /// of the pointwise jet function, one slot at a time. The mixed
    /// second-derivative coefficient is stored halved so that
    /// L = a11 dxx + 2 a12 dxy + a22 dyy + a1 dx + a2 dy + a.
    pub fn linearize(&self, w: &ScalarField) -> Result<CoefficientSet> {
        if w.grid != self.grid {
            return Err(Error::InvalidGrid("w must live on the operator grid".into()));
        }
        let g = self.grid;
        if matches!(self.remainder, Remainder::Off | Remainder::LinearForcing(_)) {
            return Ok(CoefficientSet::principal(g));
        }
        let h = 1e-5 * (1.0 + w.sup_norm());
        let [wx, wy, wxx, wxy, wyy] = self.jets(w)?;
        let mut fields: [Vec<f64>; 6] = Default::default();
        for f in fields.iter_mut() {
            f.reserve(g.len());
        }
        for ix in 0..g.nx {
            let x = g.x(ix);
            for iy in 0..g.ny {
                let y = g.y(iy);
                let jet = Jet {
                    p: w.at(ix, iy),
                    qx: wx.at(ix, iy),
                    qy: wy.at(ix, iy),
                    rxx: wxx.at(ix, iy),
                    rxy: wxy.at(ix, iy),
                    ryy: wyy.at(ix, iy),
                };
                for (slot, out) in fields.iter_mut().enumerate() {
                    let mut plus = jet;
                    let mut minus = jet;
                    let (pp, mm): (&mut f64, &mut f64) = match slot {
                        0 => (&mut plus.rxx, &mut minus.rxx),
                        1 => (&mut plus.rxy, &mut minus.rxy),
                        2 => (&mut plus.ryy, &mut minus.ryy),
                        3 => (&mut plus.qx, &mut minus.qx),
                        4 => (&mut plus.qy, &mut minus.qy),
                        _ => (&mut plus.p, &mut minus.p),
                    };
                    *pp += h;
                    *mm -= h;
                    let d = (self.phi_point(x, y, &plus) - self.phi_point(x, y, &minus)) / (2.0 * h);
                    if !d.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "Gateaux difference at node ({ix},{iy}), slot {slot}"
                        )));
                    }
                    out.push(if slot == 1 { d / 2.0 } else { d });
                }
            }
        }
        let [a11v, a12v, a22v, a1v, a2v, av] = fields;
        let mk = |v: Vec<f64>| ScalarField::new(g, v).expect("finite coefficients");
        let a11 = mk(a11v);
        let a12 = mk(a12v);
        let a22 = mk(a22v);
        let a1 = mk(a1v);
        let a2 = mk(a2v);
        let a = mk(av);
        let lambda_budget = self.measure_lambda(&a11, &a12, &a22, &a1, &a2, &a)?;
        Ok(CoefficientSet { a11, a12, a22, a1, a2, a, lambda_budget })
    }

    /// Sup over the C^2-order seminorms of the perturbation fields b where
    /// a11 = -y^2 + eps b11, a22 = 1 + eps b22, rest = eps b.
    fn measure_lambda(
        &self,
        a11: &ScalarField,
        a12: &ScalarField,
        a22: &ScalarField,
        a1: &ScalarField,
        a2: &ScalarField,
        a: &ScalarField,
    ) -> Result<f64> {
        let e = self.epsilon;
        let b11 = a11.map_with_coords(|_, y, v| (v + y * y) / e);
        let b22 = a22.map(|v| (v - 1.0) / e);
        let parts = [
            b11,
            a12.scale(1.0 / e),
            b22,
            a1.scale(1.0 / e),
            a2.scale(1.0 / e),
            a.scale(1.0 / e),
        ];
        let mut total = 0.0;
        for b in &parts {
            let r = crate::grid::norms(b, 2)?;
            total += r.holder[&2];
        }
        Ok(total)
    }
}

pub fn base_profile(u: f64, v: f64) -> (f64, f64, f64) {
    (u * u / 2.0 - v.powi(4) / 12.0, u, -v.powi(3) / 3.0)
}

/// The exact-solution model: K equal to the Gauss curvature of the base
/// profile, so that w = 0 solves the problem identically.
pub fn model_problem(epsilon: f64, x0: f64, y0: f64) -> ProblemSpec {
    ProblemSpec::curvature(Func2::ModelCurvature, epsilon, x0, y0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::random_bump;

    fn x_grid(n: usize) -> Grid2D {
        Grid2D::centered(1.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn hypotheses_saddle_accepted() {
        let k = Func2::Quadratic { cuu: 1.0, cuv: 0.0, cvv: -1.0 };
        let r = check_hypotheses(&k).unwrap();
        assert!((r.eigenvalues[0] + 2.0).abs() < 1e-6);
        assert!((r.eigenvalues[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn hypotheses_definite_rejected() {
        let k = Func2::Quadratic { cuu: 1.0, cuv: 0.0, cvv: 1.0 };
        let err = check_hypotheses(&k).unwrap_err();
        assert!(err.to_string().contains("negative eigenvalue"), "{err}");
    }

    #[test]
    fn hypotheses_nonzero_gradient_rejected() {
        let k = Func2::Linear { cu: 0.0, cv: 1.0 };
        let err = check_hypotheses(&k).unwrap_err();
        assert!(err.to_string().contains("grad"), "{err}");
    }

    #[test]
    fn normalize_already_normal() {
        let k = Func2::Quadratic { cuu: 0.0, cuv: 0.0, cvv: -1.0 };
        let n = normalize(&k, &Func5::Const { value: 1.0 }).unwrap();
        let id_err = (n.map[0][0] - 1.0).abs()
            + n.map[0][1].abs()
            + n.map[1][0].abs()
            + (n.map[1][1] - 1.0).abs();
        assert!(id_err < 1e-5, "map {:?}", n.map);
    }

    #[test]
    fn normalize_rescales_v() {
        let k = Func2::Quadratic { cuu: 0.0, cuv: 0.0, cvv: -4.0 };
        let n = normalize(&k, &Func5::Const { value: 1.0 }).unwrap();
        assert!((n.map[1][1].abs() - 0.5).abs() < 1e-5, "map {:?}", n.map);
        assert!(n.map[0][1].abs() + n.map[1][0].abs() < 1e-6);
        // composed K has v'^2 coefficient -1
        assert!((n.k_norm.eval(0.0, 1.0) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_rotates_saddle_product() {
        let k = Func2::Quadratic { cuu: 0.0, cuv: 1.0, cvv: 0.0 };
        let n = normalize(&k, &Func5::Const { value: 1.0 }).unwrap();
        // composed quadratic form must be u'^2 - v'^2 up to the +1 scaling
        let h = n.k_norm.hessian(0.0, 0.0, 1e-4);
        assert!((h[1][1] + 2.0).abs() < 1e-3, "h = {h:?}");
        assert!(h[0][1].abs() < 1e-3);
        assert!((h[0][0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn metric_flat_gives_zero_data() {
        let m = MetricSpec {
            e: Func2::Const { value: 1.0 },
            f: Func2::Zero,
            g: Func2::Const { value: 1.0 },
        };
        let p = metric_to_problem(&m, 0.1, 1.0, 1.0).unwrap();
        for &(u, v) in &[(0.0, 0.0), (0.2, -0.1)] {
            assert!(p.k.eval(u, v).abs() < 1e-8);
            assert!(p.a11.eval(u, v, 0.0, 0.3, 0.4).abs() < 1e-8);
        }
        // f = 1 - q1^2 - q2^2 for the flat metric
        let f = p.f.eval(0.1, 0.2, 0.0, 0.3, 0.4);
        assert!((f - (1.0 - 0.09 - 0.16)).abs() < 1e-10, "f = {f}");
    }

    #[test]
    fn metric_warped_negative_curvature() {
        let m = MetricSpec {
            e: Func2::Const { value: 1.0 },
            f: Func2::Zero,
            g: Func2::Exp { cu: 2.0, cv: 0.0 },
        };
        let p = metric_to_problem(&m, 0.1, 1.0, 1.0).unwrap();
        // Gamma(0) = 0 forces the pullback; K stays -1 (flat-coordinates
        // change preserves curvature)
        assert!((p.k.eval(0.0, 0.0) + 1.0).abs() < 1e-5, "K(0) = {}", p.k.eval(0.0, 0.0));
        assert!((p.k.eval(0.05, 0.02) + 1.0).abs() < 1e-4);
    }

    #[test]
    fn metric_data_vanishes_at_origin() {
        let m = MetricSpec {
            e: Func2::Const { value: 1.0 },
            f: Func2::Zero,
            g: Func2::OnePlusPoly { c: [0.0, 0.0, 0.0, 1.0 / 6.0, -1.0, 0.0] },
        };
        let p = metric_to_problem(&m, 0.1, 1.0, 1.0).unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn metric_rejects_indefinite() {
        let m = MetricSpec {
            e: Func2::Const { value: 1.0 },
            f: Func2::Const { value: 2.0 },
            g: Func2::Const { value: 1.0 },
        };
        assert!(metric_to_problem(&m, 0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn phi_zero_on_exact_model() {
        let op = ScaledOperator::new(model_problem(0.05, 1.0, 1.0), x_grid(33)).unwrap();
        let phi0 = op.phi_apply(&ScalarField::zeros(op.grid)).unwrap();
        assert!(phi0.sup_norm() <= 1e-8, "Phi(0) sup = {:e}", phi0.sup_norm());
    }

    #[test]
    fn phi_principal_part_when_remainder_off() {
        let g = x_grid(33);
        let op = ScaledOperator::principal_only(g);
        let w = random_bump(g, &g, 3, 1.0);
        let phi = op.phi_apply(&w).unwrap();
        let expect = diff(&w, 2, 0)
            .unwrap()
            .map_with_coords(|_, y, v| -y * y * v)
            .add(&diff(&w, 0, 2).unwrap());
        assert!(phi.sub(&expect).sup_norm() < 1e-13);
    }

    #[test]
    fn phi_cutoff_reduces_to_principal_outside() {
        let g = x_grid(33);
        let op = ScaledOperator::new(
            ProblemSpec::curvature(Func2::Quadratic { cuu: 1.0, cuv: 0.0, cvv: -1.0 }, 0.05, 1.0, 1.0),
            g,
        )
        .unwrap();
        let w = random_bump(g, &g, 5, 0.7);
        let phi = op.phi_apply(&w).unwrap();
        let wxx = diff(&w, 2, 0).unwrap();
        let wyy = diff(&w, 0, 2).unwrap();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let (x, y) = (g.x(ix), g.y(iy));
                if x.abs() >= 0.75 || y.abs() >= 0.75 {
                    let principal = -y * y * wxx.at(ix, iy) + wyy.at(ix, iy);
                    assert!(
                        (phi.at(ix, iy) - principal).abs() < 1e-12,
                        "node ({x},{y}) outside cutoff"
                    );
                }
            }
        }
    }

    #[test]
    fn phi_scale_sweep_in_epsilon() {
        // with K = u^2 - v^2, ||Phi(0)|| = O(eps) and halving eps shrinks it
        let g = x_grid(33);
        let k = Func2::Quadratic { cuu: 1.0, cuv: 0.0, cvv: -1.0 };
        let norm_at = |eps: f64| {
            let op = ScaledOperator::new(ProblemSpec::curvature(k.clone(), eps, 1.0, 1.0), g).unwrap();
            op.phi_apply(&ScalarField::zeros(g)).unwrap().l2_norm()
        };
        let n1 = norm_at(0.1);
        let n2 = norm_at(0.05);
        assert!(n2 < n1 / 2.0, "eps sweep: {n1} -> {n2}");
    }

    #[test]
    fn linearize_principal_when_off() {
        let g = x_grid(17);
        let op = ScaledOperator::principal_only(g);
        let c = op.linearize(&ScalarField::zeros(g)).unwrap();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let y = g.y(iy);
                assert_eq!(c.a11.at(ix, iy), -y * y);
                assert_eq!(c.a22.at(ix, iy), 1.0);
                assert_eq!(c.a12.at(ix, iy), 0.0);
            }
        }
    }

    #[test]
    fn linearize_taylor_remainder_quadratic() {
        let g = x_grid(33);
        let op = ScaledOperator::new(
            ProblemSpec::curvature(Func2::Quadratic { cuu: 1.0, cuv: 0.0, cvv: -1.0 }, 0.1, 1.0, 1.0),
            g,
        )
        .unwrap();
        let w = random_bump(g, &g, 11, 0.5);
        let dir = random_bump(g, &g, 12, 0.5);
        let coeffs = op.linearize(&w).unwrap();
        let phi_w = op.phi_apply(&w).unwrap();
        let lv = coeffs.apply(&dir).unwrap();
        let mut errs = Vec::new();
        for &h in &[1e-2, 1e-3] {
            let phi_wh = op.phi_apply(&w.axpy(h, &dir)).unwrap();
            let taylor = phi_w.axpy(h, &lv);
            errs.push(phi_wh.sub(&taylor).l2_norm());
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (50.0..200.0).contains(&ratio),
            "Taylor remainder not quadratic: errors {errs:?}, ratio {ratio}"
        );
    }

    #[test]
    fn linearize_model_perturbations_bounded() {
        let g = x_grid(33);
        let op = ScaledOperator::new(model_problem(0.1, 1.0, 1.0), g).unwrap();
        let c = op.linearize(&ScalarField::zeros(g)).unwrap();
        // a11 = -y^2 + eps b11 with b bounded
        let b11_sup = c.a11.map_with_coords(|_, y, v| (v + y * y) / 0.1).sup_norm();
        let b22_sup = c.a22.map(|v| (v - 1.0) / 0.1).sup_norm();
        assert!(b11_sup < 100.0, "b11 sup {b11_sup}");
        assert!(b22_sup < 100.0, "b22 sup {b22_sup}");
        assert!(c.lambda_budget.is_finite() && c.lambda_budget >= 0.0);
        // perturbations vanish outside the cutoff support
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let (x, y) = (g.x(ix), g.y(iy));
                if x.abs() >= 0.75 || y.abs() >= 0.75 {
                    assert!((c.a11.at(ix, iy) + y * y).abs() < 1e-12);
                    assert!((c.a22.at(ix, iy) - 1.0).abs() < 1e-12);
                    assert!(c.a1.at(ix, iy).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn epsilon_out_of_range_rejected() {
        let spec = ProblemSpec::curvature(Func2::ModelCurvature, 0.7, 1.0, 1.0);
        assert!(ScaledOperator::new(spec, x_grid(17)).is_err());
    }
}
