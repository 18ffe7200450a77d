//! Coefficient sets of the linearized operator, their extension from the
//! working rectangle X to a truncated strip, and the multiplier functions
//! with a numerical energy-inequality checker.
//!
//! The extension rules: the zeroth-order coefficient ramps to 1 above |y|=y1,
//! the leading coefficient a11 continues as -y^2 then flattens onto the
//! plateau -((y1+y2)/2)^2 with bounded second derivative, and a2 acquires a
//! gentle outward damping slope beyond y2. Near the lateral boundary a11 is
//! pushed below -theta with all x-derivatives vanishing on the boundary
//! itself.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{diff, Grid2D, ScalarField};
use crate::smoothing::smoothstep5;

/// The six coefficient fields of L = a11 dxx + 2 a12 dxy + a22 dyy
///                                  + a1 dx + a2 dy + a.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub a11: ScalarField,
    pub a12: ScalarField,
    pub a22: ScalarField,
    pub a1: ScalarField,
    pub a2: ScalarField,
    pub a: ScalarField,
    /// Measured size surrogate for the perturbation part (sup over the
    /// C^2-order seminorms of the b-fields where a11 = -y^2 + eps b11 etc).
    pub lambda_budget: f64,
}

impl CoefficientSet {
    pub fn grid(&self) -> Grid2D {
        self.a11.grid
    }

    /// Unperturbed degenerate model: a11 = -y^2, a22 = 1, all else zero.
    pub fn principal(grid: Grid2D) -> Self {
        Self {
            a11: ScalarField::from_fn(grid, |_, y| -y * y),
            a12: ScalarField::zeros(grid),
            a22: ScalarField::from_fn(grid, |_, _| 1.0),
            a1: ScalarField::zeros(grid),
            a2: ScalarField::zeros(grid),
            a: ScalarField::zeros(grid),
            lambda_budget: 0.0,
        }
    }

    /// L u with second-order stencils.
    pub fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
        let uxx = diff(u, 2, 0)?;
        let uxy = diff(u, 1, 1)?;
        let uyy = diff(u, 0, 2)?;
        let ux = diff(u, 1, 0)?;
        let uy = diff(u, 0, 1)?;
        let mut out = self.a11.zip_map(&uxx, |c, d| c * d);
        out = out.add(&self.a12.zip_map(&uxy, |c, d| 2.0 * c * d));
        out = out.add(&self.a22.zip_map(&uyy, |c, d| c * d));
        out = out.add(&self.a1.zip_map(&ux, |c, d| c * d));
        out = out.add(&self.a2.zip_map(&uy, |c, d| c * d));
        out = out.add(&self.a.zip_map(u, |c, d| c * d));
        Ok(out)
    }

    /// L_theta u = -theta u_xxyy + L u.
    pub fn apply_theta(&self, u: &ScalarField, theta: f64) -> Result<ScalarField> {
        let uxxyy = diff(u, 2, 2)?;
        Ok(self.apply(u)?.axpy(-theta, &uxxyy))
    }
}

/// Strip geometry and blending parameters. The working rectangle reaches
/// |y| = y0; coefficients are modified on y0 < |y| <= Y and the strip is
/// truncated at |y| = Y with Dirichlet rows.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StripParams {
    pub y0: f64,
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    /// truncation height Y > y3
    pub big_y: f64,
    pub delta: f64,
    pub theta: f64,
}

impl Default for StripParams {
    fn default() -> Self {
        // delta bounds both the a11 blend curvature and the a2 damping
        // slope; the blend from slope -2 y1 to the plateau over width
        // y2 - y1 = 0.25 forces sup d_yy a11 near 19, so delta sits above
        // that rather than at the "small delta" end of the family.
        Self { y0: 1.0, y1: 1.25, y2: 1.5, y3: 1.75, big_y: 2.75, delta: 22.0, theta: 1e-3 }
    }
}

impl StripParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.y0 < self.y1 && self.y1 < self.y2 && self.y2 < self.y3 && self.y3 < self.big_y) {
            return Err(Error::StripConstruction(format!(
                "ordering y0<y1<y2<y3<Y ({}, {}, {}, {}, {})",
                self.y0, self.y1, self.y2, self.y3, self.big_y
            )));
        }
        if self.delta <= 0.0 {
            return Err(Error::StripConstruction("delta > 0".into()));
        }
        if self.theta <= 0.0 {
            return Err(Error::StripConstruction("theta > 0".into()));
        }
        Ok(())
    }

    /// Plateau level of the extended a11.
    pub fn plateau(&self) -> f64 {
        let m = 0.5 * (self.y1 + self.y2);
        -m * m
    }
}

/// Profile of d_y a11 / (-2 y1) on the blend interval, in blend coordinate
/// t = (|y| - y1)/(y2 - y1). Cubic Hermite matched so a11 stays C^2 at both
/// ends, plus a quartic bump fixing the integral so the plateau level is hit
/// exactly.
#[derive(Debug, Clone, Copy)]
struct BlendProfile {
    slope0: f64,
    bump: f64,
    width: f64,
    y1: f64,
}

impl BlendProfile {
    fn new(p: &StripParams) -> Self {
        let width = p.y2 - p.y1;
        let slope0 = width / p.y1;
        let midpoint = 0.5 * (p.y1 + p.y2);
        let target = (p.y1 + midpoint) / (4.0 * p.y1);
        let hermite_integral = 0.5 + slope0 / 12.0;
        let bump = 30.0 * (target - hermite_integral);
        Self { slope0, bump, width, y1: p.y1 }
    }

    fn g(&self, t: f64) -> f64 {
        let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
        let h10 = t.powi(3) - 2.0 * t * t + t;
        h00 + self.slope0 * h10 + self.bump * t * t * (1.0 - t) * (1.0 - t)
    }

    fn g_prime(&self, t: f64) -> f64 {
        let dh00 = 6.0 * t * t - 6.0 * t;
        let dh10 = 3.0 * t * t - 4.0 * t + 1.0;
        dh00 + self.slope0 * dh10 + self.bump * (2.0 * t - 6.0 * t * t + 4.0 * t.powi(3))
    }

    fn g_integral(&self, t: f64) -> f64 {
        let ih00 = 0.5 * t.powi(4) - t.powi(3) + t;
        let ih10 = 0.25 * t.powi(4) - (2.0 / 3.0) * t.powi(3) + 0.5 * t * t;
        let ibump = t.powi(3) / 3.0 - 0.5 * t.powi(4) + 0.2 * t.powi(5);
        ih00 + self.slope0 * ih10 + self.bump * ibump
    }

    /// a11 on the blend, |y| in [y1, y2].
    fn a11(&self, ay: f64) -> f64 {
        let t = (ay - self.y1) / self.width;
        -self.y1 * self.y1 - 2.0 * self.y1 * self.width * self.g_integral(t)
    }

    /// Largest d_yy a11 over the blend and smallest g (for sign checks).
    fn extremes(&self) -> (f64, f64) {
        let mut max_dyy = f64::NEG_INFINITY;
        let mut min_g = f64::INFINITY;
        for i in 0..=400 {
            let t = i as f64 / 400.0;
            max_dyy = max_dyy.max(-2.0 * self.y1 * self.g_prime(t) / self.width);
            min_g = min_g.min(self.g(t));
        }
        (max_dyy, min_g)
    }
}

/// Extends post-characteristic coefficients (a12 = 0, perturbations vanish
/// near the rectangle boundary) from X onto the truncated strip.
pub fn extend_to_strip(coeffs: &CoefficientSet, p: &StripParams) -> Result<CoefficientSet> {
    p.validate()?;
    let g = coeffs.grid();
    if (g.y_max - p.y0).abs() > 1e-9 * p.y0 || (g.y_min + p.y0).abs() > 1e-9 * p.y0 {
        return Err(Error::StripConstruction(format!(
            "input rectangle reaches |y| = {}, params have y0 = {}",
            g.y_max, p.y0
        )));
    }
    if coeffs.a12.sup_norm() > 1e-5 {
        return Err(Error::MixedResidual(format!(
            "a12 must vanish before strip extension, sup = {:e}",
            coeffs.a12.sup_norm()
        )));
    }
    let blend = BlendProfile::new(p);
    let (max_dyy, min_g) = blend.extremes();
    if max_dyy > p.delta {
        return Err(Error::StripConstruction(format!(
            "sup d_yy a11 <= delta: blend needs {max_dyy:.3}, delta = {}",
            p.delta
        )));
    }
    if min_g < 0.0 {
        return Err(Error::StripConstruction(
            "d_y a11 <= 0 for y >= y0: blend profile changes sign".into(),
        ));
    }

    let hy = g.hy();
    let extra = ((p.big_y - p.y0) / hy).ceil() as usize;
    let big_y = p.y0 + extra as f64 * hy;
    let strip = Grid2D::new(g.x_min, g.x_max, -big_y, big_y, g.nx, g.ny + 2 * extra)?;

    let x0 = g.x_max;
    // lateral shaping of a11: -theta correction with a plateau touching the
    // boundary so x-derivatives vanish on x = +-x0 exactly
    let x_ramp_start = 0.875 * x0;
    let x_ramp_end = 0.9375 * x0;
    let chi = |x: f64| -> f64 {
        let ax = x.abs();
        if ax <= x_ramp_start {
            0.0
        } else if ax >= x_ramp_end {
            1.0
        } else {
            smoothstep5((ax - x_ramp_start) / (x_ramp_end - x_ramp_start))
        }
    };

    let inner_iy = |y: f64| -> usize { ((y - g.y_min) / hy).round() as usize };

    let mid23 = 0.5 * (p.y2 + p.y3);
    let w23 = p.y3 - p.y2;
    // integral of smoothstep5
    let s5_int = |t: f64| -> f64 {
        let t = t.clamp(0.0, 1.0);
        2.5 * t.powi(4) - 3.0 * t.powi(5) + t.powi(6)
    };

    let sample = |field: &ScalarField, ix: usize, y: f64| -> f64 {
        if y.abs() <= p.y0 + 1e-12 {
            field.at(ix, inner_iy(y.clamp(-p.y0, p.y0)))
        } else {
            0.0
        }
    };

    let build = |f: &dyn Fn(usize, f64) -> f64| -> ScalarField {
        let mut values = Vec::with_capacity(strip.len());
        for ix in 0..strip.nx {
            for iy in 0..strip.ny {
                values.push(f(ix, strip.y(iy)));
            }
        }
        ScalarField::new(strip, values).expect("strip coefficients finite")
    };

    let a11 = build(&|ix, y| {
        let ay = y.abs();
        let base = if ay <= p.y0 {
            sample(&coeffs.a11, ix, y)
        } else if ay <= p.y1 {
            -y * y
        } else if ay <= p.y2 {
            blend.a11(ay)
        } else {
            p.plateau()
        };
        base - p.theta * chi(strip.x(ix))
    });
    let a22 = build(&|ix, y| if y.abs() <= p.y0 { sample(&coeffs.a22, ix, y) } else { 1.0 });
    let a1 = build(&|ix, y| sample(&coeffs.a1, ix, y));
    let a2 = build(&|ix, y| {
        let ay = y.abs();
        let v = if ay <= p.y0 {
            sample(&coeffs.a2, ix, y)
        } else if ay <= p.y2 {
            0.0
        } else if ay <= p.y3 {
            -p.delta * w23 * s5_int((ay - p.y2) / w23)
        } else {
            -p.delta * ay + p.delta * mid23
        };
        if y >= 0.0 {
            v
        } else {
            -v
        }
    });
    let a = build(&|ix, y| {
        let ay = y.abs();
        if ay <= p.y0 {
            sample(&coeffs.a, ix, y)
        } else if ay <= p.y1 {
            smoothstep5((ay - p.y0) / (p.y1 - p.y0))
        } else {
            1.0
        }
    });

    Ok(CoefficientSet {
        a11,
        a12: ScalarField::zeros(strip),
        a22,
        a1,
        a2,
        a,
        lambda_budget: coeffs.lambda_budget,
    })
}

/// Multiplier functions of the energy inequality.
#[derive(Debug, Clone)]
pub struct MultiplierSet {
    pub a: ScalarField,
    pub b: ScalarField,
    pub c: ScalarField,
    pub d: ScalarField,
    pub mu: f64,
}

/// Builds A, B, C, D on the strip grid: C = mu d_y a11 inside |y| < y0 and
/// -2 mu y outside, A = d_y C / 2 - a11, B = -theta gamma(x) with gamma
/// decreasing and vanishing at x0, D = theta. mu is the least constant with
/// mu/4 + a11 >= 1, plus 10 percent.
pub fn build_multipliers(coeffs: &CoefficientSet, p: &StripParams) -> Result<MultiplierSet> {
    let g = coeffs.grid();
    let min_a11 = coeffs.a11.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let mu = 4.0 * (1.0 - min_a11) * 1.1;
    let da11 = diff(&coeffs.a11, 0, 1)?;
    let c = ScalarField::from_fn(g, |x, y| {
        if y.abs() < p.y0 {
            let ix = ((x - g.x_min) / g.hx()).round() as usize;
            let iy = ((y - g.y_min) / g.hy()).round() as usize;
            mu * da11.at(ix, iy)
        } else {
            -2.0 * mu * y
        }
    });
    // continuity across |y| = y0: inside branch reaches mu * d_y(-y^2) = -2 mu y0
    let iy0 = ((p.y0 - g.y_min) / g.hy()).round() as usize;
    for ix in 0..g.nx {
        let jump = (mu * da11.at(ix, iy0) - (-2.0 * mu * p.y0)).abs();
        if jump > 1e-6 * mu {
            return Err(Error::StripConstruction(format!(
                "C continuous across |y|=y0: jump {jump:e} at column {ix}"
            )));
        }
    }
    let dc = diff(&c, 0, 1)?;
    let a = dc.scale(0.5).sub(&coeffs.a11);
    let x0 = g.x_max;
    let gamma = |x: f64| -> f64 {
        if x <= 0.5 * x0 {
            1.0
        } else {
            1.0 - smoothstep5((x - 0.5 * x0) / (0.5 * x0))
        }
    };
    let b = ScalarField::from_fn(g, |x, _| -p.theta * gamma(x));
    let d = ScalarField::from_fn(g, |_, _| p.theta);
    Ok(MultiplierSet { a, b, c, d, mu })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Quadrature check of the basic energy inequality
/// (A u + B u_x + C u_y + D u_yy, L_theta u) >= c0 * [ ||u||^2 + ||u_y||^2
/// + theta(||u_x||^2 + ||u_xy||^2 + ||u_yy||^2) + theta^2 ||u_xyy||^2 ],
/// with the weight E replaced by its lower bound 1 on the truncated strip.
/// Returns the measured ratio LHS / bracket.
pub fn check_energy_inequality(
    coeffs: &CoefficientSet,
    mult: &MultiplierSet,
    theta: f64,
    u: &ScalarField,
) -> Result<EnergyReport> {
    let g = coeffs.grid();
    if u.grid != g {
        return Err(Error::BadProbe("probe grid does not match coefficient grid".into()));
    }
    let sup = u.sup_norm();
    let mut boundary_sup = 0.0f64;
    for ix in 0..g.nx {
        boundary_sup = boundary_sup.max(u.at(ix, 0).abs()).max(u.at(ix, g.ny - 1).abs());
    }
    for iy in 0..g.ny {
        boundary_sup = boundary_sup.max(u.at(0, iy).abs()).max(u.at(g.nx - 1, iy).abs());
    }
    if sup > 0.0 && boundary_sup > 1e-10 * sup {
        return Err(Error::BadProbe(format!(
            "probe must be compactly supported in the strip interior, boundary sup {boundary_sup:e}"
        )));
    }

    let ux = diff(u, 1, 0)?;
    let uy = diff(u, 0, 1)?;
    let uxy = diff(u, 1, 1)?;
    let uyy = diff(u, 0, 2)?;
    let uxyy = diff(u, 1, 2)?;
    let lu = coeffs.apply_theta(u, theta)?;

    let multiplier = mult
        .a
        .zip_map(u, |m, v| m * v)
        .add(&mult.b.zip_map(&ux, |m, v| m * v))
        .add(&mult.c.zip_map(&uy, |m, v| m * v))
        .add(&mult.d.zip_map(&uyy, |m, v| m * v));
    let lhs = multiplier.inner_product(&lu);
    let rhs = u.inner_product(u)
        + uy.inner_product(&uy)
        + theta * (ux.inner_product(&ux) + uxy.inner_product(&uxy) + uyy.inner_product(&uyy))
        + theta * theta * uxyy.inner_product(&uxyy);
    if rhs == 0.0 {
        return Ok(EnergyReport { lhs, rhs, ratio: f64::INFINITY, pass: true });
    }
    let ratio = lhs / rhs;
    Ok(EnergyReport { lhs, rhs, ratio, pass: ratio > 0.0 })
}
