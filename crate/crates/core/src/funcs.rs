//! Named built-in functions for problem data. Config files refer to these by
//! name plus a coefficient list; no runtime expression parsing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar function of the base point (u, v).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Func2 {
    Zero,
    Const { value: f64 },
    /// cu u + cv v
    Linear { cu: f64, cv: f64 },
    /// c0 u^2 + c1 u v + c2 v^2
    Quadratic { cuu: f64, cuv: f64, cvv: f64 },
    /// Gauss curvature of the model graph u^2/2 - v^4/12:
    /// -v^2 / (1 + u^2 + v^6/9)^2
    ModelCurvature,
    /// exp(c u + d v)
    Exp { cu: f64, cv: f64 },
    /// 1 + c0 u^2 + c1 u v + c2 v^2 + c3 u^4 + c4 u^2 v^2 + c5 v^4
    OnePlusPoly { c: [f64; 6] },
    /// sum of c * u^a * v^b terms
    Poly { terms: Vec<(f64, u32, u32)> },
    /// Affine precomposition: inner(m11 u' + m12 v', m21 u' + m22 v')
    Composed { inner: Box<Func2>, m: [[f64; 2]; 2] },
    /// scale * inner
    Scaled { inner: Box<Func2>, scale: f64 },
    /// Component (i,j) of the metric (E,F,G) pulled back through the map
    /// u^k -> lin^k_m u^m + 0.5 gamma0^k_{jm} u^j u^m
    MetricPullback {
        e: Box<Func2>,
        f: Box<Func2>,
        g: Box<Func2>,
        lin: [[f64; 2]; 2],
        gamma0: [[[f64; 2]; 2]; 2],
        comp: (usize, usize),
    },
    /// Gauss curvature of the metric (E,F,G) by the Brioschi formula,
    /// derivatives taken by central differences
    BrioschiK { e: Box<Func2>, f: Box<Func2>, g: Box<Func2> },
    /// Christoffel symbol Gamma^upper_{lower} of the metric (E,F,G)
    Christoffel { e: Box<Func2>, f: Box<Func2>, g: Box<Func2>, upper: usize, lower: (usize, usize) },
}

/// Step for the nested central differences of metric-derived quantities.
pub const METRIC_FD_STEP: f64 = 1e-4;

impl Func2 {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match self {
            Func2::Zero => 0.0,
            Func2::Const { value } => *value,
            Func2::Linear { cu, cv } => cu * u + cv * v,
            Func2::Quadratic { cuu, cuv, cvv } => cuu * u * u + cuv * u * v + cvv * v * v,
            Func2::ModelCurvature => {
                let grad_sq = u * u + v.powi(6) / 9.0;
                -v * v / (1.0 + grad_sq).powi(2)
            }
            Func2::Exp { cu, cv } => (cu * u + cv * v).exp(),
            Func2::OnePlusPoly { c } => {
                1.0 + c[0] * u * u
                    + c[1] * u * v
                    + c[2] * v * v
                    + c[3] * u.powi(4)
                    + c[4] * u * u * v * v
                    + c[5] * v.powi(4)
            }
            Func2::Poly { terms } => terms
                .iter()
                .map(|&(c, a, b)| c * u.powi(a as i32) * v.powi(b as i32))
                .sum(),
            Func2::Composed { inner, m } => {
                inner.eval(m[0][0] * u + m[0][1] * v, m[1][0] * u + m[1][1] * v)
            }
            Func2::Scaled { inner, scale } => scale * inner.eval(u, v),
            Func2::MetricPullback { e, f, g, lin, gamma0, comp } => {
                let quad = |k: usize| {
                    0.5 * (gamma0[k][0][0] * u * u
                        + 2.0 * gamma0[k][0][1] * u * v
                        + gamma0[k][1][1] * v * v)
                };
                let phi = [
                    lin[0][0] * u + lin[0][1] * v + quad(0),
                    lin[1][0] * u + lin[1][1] * v + quad(1),
                ];
                let jac = |k: usize, i: usize| -> f64 {
                    let w = [u, v];
                    lin[k][i] + gamma0[k][i][0] * w[0] + gamma0[k][i][1] * w[1]
                };
                let base = metric_at(e, f, g, phi[0], phi[1]);
                let (i, j) = *comp;
                let mut acc = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        acc += base[k][l] * jac(k, i) * jac(l, j);
                    }
                }
                acc
            }
            Func2::BrioschiK { e, f, g } => {
                // Richardson in the difference step: the plain second
                // differences carry a machine-roundoff floor of
                // eps_mach / h^2 that downstream probes of the nearly-flat
                // curvature would otherwise inherit
                let h = 2e-3;
                let coarse = brioschi_curvature(e, f, g, u, v, h);
                let fine = brioschi_curvature(e, f, g, u, v, h / 2.0);
                (4.0 * fine - coarse) / 3.0
            }
            Func2::Christoffel { e, f, g, upper, lower } => {
                christoffels(e, f, g, u, v, METRIC_FD_STEP)[*upper][lower.0][lower.1]
            }
        }
    }

    pub fn composed(self, m: [[f64; 2]; 2]) -> Func2 {
        Func2::Composed { inner: Box::new(self), m }
    }

    /// Central finite-difference gradient.
    pub fn grad(&self, u: f64, v: f64, h: f64) -> [f64; 2] {
        [
            (self.eval(u + h, v) - self.eval(u - h, v)) / (2.0 * h),
            (self.eval(u, v + h) - self.eval(u, v - h)) / (2.0 * h),
        ]
    }

    /// Central finite-difference Hessian.
    pub fn hessian(&self, u: f64, v: f64, h: f64) -> [[f64; 2]; 2] {
        let f = |a: f64, b: f64| self.eval(a, b);
        let fuu = (f(u + h, v) - 2.0 * f(u, v) + f(u - h, v)) / (h * h);
        let fvv = (f(u, v + h) - 2.0 * f(u, v) + f(u, v - h)) / (h * h);
        let fuv = (f(u + h, v + h) - f(u + h, v - h) - f(u - h, v + h) + f(u - h, v - h))
            / (4.0 * h * h);
        [[fuu, fuv], [fuv, fvv]]
    }
}

/// Scalar function of (u, v, p, q1, q2) where p = z and (q1, q2) = grad z.
/// Used for the Monge-Ampere data a_ij and f.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Func5 {
    Zero,
    Const { value: f64 },
    /// (1 + q1^2 + q2^2)^2, the graph-curvature right-hand side weight
    GraphWeight,
    /// c1 q1 + c2 q2 with (u,v)-dependent coefficients
    GradForm { c1: Func2, c2: Func2 },
    /// E G - F^2 - E q2^2 - G q1^2 + 2 F q1 q2, the embedding weight
    MetricWeight { e: Func2, f: Func2, g: Func2 },
    /// Base-point function lifted to five arguments
    Lift { f: Func2 },
    /// scale * inner(m u + ..., ...) with gradient slots rotated by mt
    Composed { inner: Box<Func5>, m: [[f64; 2]; 2], mt_inv: [[f64; 2]; 2], scale: f64 },
}

impl Func5 {
    pub fn eval(&self, u: f64, v: f64, p: f64, q1: f64, q2: f64) -> f64 {
        match self {
            Func5::Zero => 0.0,
            Func5::Const { value } => *value,
            Func5::GraphWeight => (1.0 + q1 * q1 + q2 * q2).powi(2),
            Func5::GradForm { c1, c2 } => c1.eval(u, v) * q1 + c2.eval(u, v) * q2,
            Func5::MetricWeight { e, f, g } => {
                let (ee, ff, gg) = (e.eval(u, v), f.eval(u, v), g.eval(u, v));
                ee * gg - ff * ff - ee * q2 * q2 - gg * q1 * q1 + 2.0 * ff * q1 * q2
            }
            Func5::Lift { f } => f.eval(u, v),
            Func5::Composed { inner, m, mt_inv, scale } => {
                let (uu, vv) = (m[0][0] * u + m[0][1] * v, m[1][0] * u + m[1][1] * v);
                // q = M^{-T} q' so that q' = grad of the composed graph
                let qq1 = mt_inv[0][0] * q1 + mt_inv[0][1] * q2;
                let qq2 = mt_inv[1][0] * q1 + mt_inv[1][1] * q2;
                scale * inner.eval(uu, vv, p, qq1, qq2)
            }
        }
    }
}

pub fn metric_at(e: &Func2, f: &Func2, g: &Func2, u: f64, v: f64) -> [[f64; 2]; 2] {
    let ff = f.eval(u, v);
    [[e.eval(u, v), ff], [ff, g.eval(u, v)]]
}

/// Christoffel symbols Gamma^i_{jk} = 1/2 g^{il} (d_j g_{lk} + d_k g_{jl} - d_l g_{jk}),
/// metric derivatives by central differences of step h.
pub fn christoffels(e: &Func2, f: &Func2, g: &Func2, u: f64, v: f64, h: f64) -> [[[f64; 2]; 2]; 2] {
    let at = |uu: f64, vv: f64| metric_at(e, f, g, uu, vv);
    let gp = at(u + h, v);
    let gm = at(u - h, v);
    let hp = at(u, v + h);
    let hm = at(u, v - h);
    let mut dg = [[[0.0f64; 2]; 2]; 2]; // dg[k][i][j] = d_k g_ij
    for i in 0..2 {
        for j in 0..2 {
            dg[0][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * h);
            dg[1][i][j] = (hp[i][j] - hm[i][j]) / (2.0 * h);
        }
    }
    let g0 = at(u, v);
    let det = g0[0][0] * g0[1][1] - g0[0][1] * g0[1][0];
    let ginv = [[g0[1][1] / det, -g0[0][1] / det], [-g0[1][0] / det, g0[0][0] / det]];
    let mut out = [[[0.0f64; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                let mut acc = 0.0;
                for l in 0..2 {
                    acc += ginv[i][l] * (dg[j][l][k] + dg[k][j][l] - dg[l][j][k]);
                }
                out[i][j][k] = 0.5 * acc;
            }
        }
    }
    out
}

/// Brioschi closed form for the Gauss curvature of E du^2 + 2F du dv + G dv^2.
pub fn brioschi_curvature(e: &Func2, f: &Func2, g: &Func2, u: f64, v: f64, h: f64) -> f64 {
    let d1 = |q: &Func2, du: f64, dv: f64| (q.eval(u + du * h, v + dv * h) - q.eval(u - du * h, v - dv * h)) / (2.0 * h);
    let e_u = d1(e, 1.0, 0.0);
    let e_v = d1(e, 0.0, 1.0);
    let g_u = d1(g, 1.0, 0.0);
    let g_v = d1(g, 0.0, 1.0);
    let f_u = d1(f, 1.0, 0.0);
    let f_v = d1(f, 0.0, 1.0);
    let e_vv = (e.eval(u, v + h) - 2.0 * e.eval(u, v) + e.eval(u, v - h)) / (h * h);
    let g_uu = (g.eval(u + h, v) - 2.0 * g.eval(u, v) + g.eval(u - h, v)) / (h * h);
    let f_uv = (f.eval(u + h, v + h) - f.eval(u + h, v - h) - f.eval(u - h, v + h)
        + f.eval(u - h, v - h))
        / (4.0 * h * h);
    let (ee, ff, gg) = (e.eval(u, v), f.eval(u, v), g.eval(u, v));
    let det3 = |m: [[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let m1 = [
        [-0.5 * e_vv + f_uv - 0.5 * g_uu, 0.5 * e_u, f_u - 0.5 * e_v],
        [f_v - 0.5 * g_u, ee, ff],
        [0.5 * g_v, ff, gg],
    ];
    let m2 = [[0.0, 0.5 * e_v, 0.5 * g_u], [0.5 * e_v, ee, ff], [0.5 * g_u, ff, gg]];
    let disc = ee * gg - ff * ff;
    (det3(m1) - det3(m2)) / (disc * disc)
}

pub fn mat2_det(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn mat2_inv(m: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let d = mat2_det(m);
    if d.abs() < 1e-14 {
        return Err(Error::DegenerateHessian("singular 2x2 matrix".into()));
    }
    Ok([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}
