//! The cusp family: a planar map that is singular at the origin, split into a
//! wide region `A` and a thin cusp `B` around the positive real axis.
//!
//! Regions, for `0 < r < r0` and `theta` in `(-pi, pi]`:
//! `B1 = {|theta| < gamma(r)}`, `A1 = {gamma < theta < pi - gamma}`,
//! `A2 = -A1`, `B2 = -B1`. The map is even: `f(z) = f(-z)`.
//!
//! Derivatives are reported in the polar frame `(d/dr, r^-1 d/dtheta)`.
//! Internally everything is computed in `t = log(1/r)` with the matrix scaled by
//! `r`, which keeps entries of order one and lets quadrature reach radii far
//! below the smallest positive double.

use std::f64::consts::{E, FRAC_PI_2, PI};

use serde::Serialize;
use thiserror::Error;

use crate::family::Quantity;
use crate::geometry::{normalize_angle, Mat2, PolarPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum CuspRegime {
    /// `h = r^(2/p)`, `gamma = log^-eps(1/r)`.
    LpDuality { p: f64, eps: f64 },
    /// `h = r^(2/p)`, `gamma = r^(2/p) log(1/r)`.
    SigmaLs { p: f64 },
    /// `h = log^-nu(1/r)`, `gamma = log^(1-nu)(1/r)`.
    ExpK { mu: f64, nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CuspParams {
    pub regime: CuspRegime,
    pub r0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CuspRegion {
    A1,
    A2,
    B1,
    B2,
    Interface,
}

/// Which closed-form branch to evaluate, regardless of where the point falls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

impl CuspRegion {
    pub fn side(self) -> Option<Side> {
        match self {
            CuspRegion::A1 | CuspRegion::A2 => Some(Side::A),
            CuspRegion::B1 | CuspRegion::B2 => Some(Side::B),
            CuspRegion::Interface => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CuspError {
    #[error("radius {0} outside (0, r0)")]
    OutOfDomain(f64),
    #[error("point (r = {r}, theta = {theta}) lies on a region boundary")]
    Interface { r: f64, theta: f64 },
    #[error("degenerate Jacobian {jac:e} at t = {t}")]
    Degenerate { t: f64, jac: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Default angular tolerance for boundary detection.
pub const DEFAULT_ANGULAR_TOL: f64 = 1e-12;

/// Curve data at `t = log(1/r)`. Derivatives are logarithmic: `r_dh = r h'(r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curves {
    pub h: f64,
    pub r_dh: f64,
    pub gamma: f64,
    pub r_dgamma: f64,
    pub h_over_gamma: f64,
    pub r_d_h_over_gamma: f64,
}

impl CuspParams {
    pub fn lp_duality(p: f64, eps: f64) -> Result<Self, CuspError> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(CuspError::InvalidParams(format!("p = {p} must exceed 1")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(CuspError::InvalidParams(format!(
                "eps = {eps} must lie in (0, 1)"
            )));
        }
        Self::checked(CuspRegime::LpDuality { p, eps }, (-E).exp())
    }

    /// `r0 = e^-4`; `gamma` stays increasing and below one there for `p < 8 / log 4`.
    pub fn sigma_ls(p: f64) -> Result<Self, CuspError> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(CuspError::InvalidParams(format!("p = {p} must exceed 1")));
        }
        Self::checked(CuspRegime::SigmaLs { p }, (-4f64).exp())
    }

    /// `nu` defaults to `(mu + 2) / 2`.
    pub fn exp_k(mu: f64, nu: Option<f64>) -> Result<Self, CuspError> {
        if !(mu > 0.0 && mu < 2.0) {
            return Err(CuspError::InvalidParams(format!(
                "mu = {mu} must lie in (0, 2)"
            )));
        }
        let nu = nu.unwrap_or(0.5 * (mu + 2.0));
        if !(nu > mu && nu > 1.0 && nu < 2.0) {
            return Err(CuspError::InvalidParams(format!(
                "nu = {nu} must lie in (max(mu, 1), 2)"
            )));
        }
        Self::checked(CuspRegime::ExpK { mu, nu }, (-E).exp())
    }

    fn checked(regime: CuspRegime, r0: f64) -> Result<Self, CuspError> {
        let params = Self { regime, r0 };
        params.check_curves()?;
        Ok(params)
    }

    /// Grid check that `gamma` is increasing in `r`, below one, and `h` increasing.
    fn check_curves(&self) -> Result<(), CuspError> {
        let t0 = self.t0();
        let mut prev: Option<Curves> = None;
        for i in 0..=400 {
            let t = t0 + 0.25 * f64::from(i);
            let c = self.curves(t);
            if !(c.gamma < 1.0 && c.gamma > 0.0) {
                return Err(CuspError::InvalidParams(format!(
                    "gamma = {} at t = {t} leaves (0, 1)",
                    c.gamma
                )));
            }
            if let Some(q) = prev {
                // t grows as r shrinks, so both curves must decrease along the grid.
                if !(c.gamma < q.gamma) || !(c.h <= q.h) {
                    return Err(CuspError::InvalidParams(format!(
                        "curves not increasing in r near t = {t}"
                    )));
                }
            }
            prev = Some(c);
        }
        Ok(())
    }

    /// `log(1/r0)`.
    pub fn t0(&self) -> f64 {
        -self.r0.ln()
    }

    /// Exponent `p` of the regime, when it has one.
    pub fn p(&self) -> Option<f64> {
        match self.regime {
            CuspRegime::LpDuality { p, .. } | CuspRegime::SigmaLs { p } => Some(p),
            CuspRegime::ExpK { .. } => None,
        }
    }

    pub fn curves(&self, t: f64) -> Curves {
        match self.regime {
            CuspRegime::LpDuality { p, eps } => {
                let h = (-2.0 * t / p).exp();
                let te = t.powf(eps);
                let hg = h * te;
                Curves {
                    h,
                    r_dh: 2.0 / p * h,
                    gamma: 1.0 / te,
                    r_dgamma: eps / (te * t),
                    h_over_gamma: hg,
                    r_d_h_over_gamma: hg * (2.0 / p - eps / t),
                }
            }
            CuspRegime::SigmaLs { p } => {
                let h = (-2.0 * t / p).exp();
                Curves {
                    h,
                    r_dh: 2.0 / p * h,
                    gamma: h * t,
                    r_dgamma: h * (2.0 * t / p - 1.0),
                    h_over_gamma: 1.0 / t,
                    r_d_h_over_gamma: 1.0 / (t * t),
                }
            }
            CuspRegime::ExpK { nu, .. } => {
                let tn = t.powf(-nu);
                Curves {
                    h: tn,
                    r_dh: nu * tn / t,
                    gamma: tn * t,
                    r_dgamma: (nu - 1.0) * tn,
                    h_over_gamma: 1.0 / t,
                    r_d_h_over_gamma: 1.0 / (t * t),
                }
            }
        }
    }

    pub fn gamma(&self, r: f64) -> f64 {
        self.curves(-r.ln()).gamma
    }

    pub fn h(&self, r: f64) -> f64 {
        self.curves(-r.ln()).h
    }

    fn check_radius(&self, r: f64) -> Result<f64, CuspError> {
        if r > 0.0 && r < self.r0 {
            Ok(-r.ln())
        } else {
            Err(CuspError::OutOfDomain(r))
        }
    }
}

fn check_formula_radius(r: f64) -> Result<f64, CuspError> {
    if r > 0.0 && r < 1.0 {
        Ok(-r.ln())
    } else {
        Err(CuspError::OutOfDomain(r))
    }
}

/// Folds `theta` onto the upper half (`A1`) or the right half (`B1`) using `f(z) = f(-z)`.
pub fn fold_angle(side: Side, theta: f64) -> f64 {
    let th = normalize_angle(theta);
    match side {
        Side::A => {
            if th < 0.0 {
                th + PI
            } else {
                th
            }
        }
        Side::B => {
            if th > FRAC_PI_2 {
                th - PI
            } else if th < -FRAC_PI_2 {
                th + PI
            } else {
                th
            }
        }
    }
}

pub fn classify(
    params: &CuspParams,
    pt: PolarPoint,
    angular_tol: f64,
) -> Result<CuspRegion, CuspError> {
    let t = params.check_radius(pt.r)?;
    let gamma = params.curves(t).gamma;
    let th = normalize_angle(pt.theta);
    let a = th.abs();
    if (a - gamma).abs() <= angular_tol || (a - (PI - gamma)).abs() <= angular_tol {
        return Ok(CuspRegion::Interface);
    }
    Ok(if a < gamma {
        CuspRegion::B1
    } else if a > PI - gamma {
        CuspRegion::B2
    } else if th > 0.0 {
        CuspRegion::A1
    } else {
        CuspRegion::A2
    })
}

fn side_of(params: &CuspParams, pt: PolarPoint) -> Result<Side, CuspError> {
    classify(params, pt, DEFAULT_ANGULAR_TOL)?
        .side()
        .ok_or(CuspError::Interface {
            r: pt.r,
            theta: pt.theta,
        })
}

/// Second coordinate of `f` on the given branch, as a function of `t` and a folded angle.
fn second_coordinate(c: &Curves, side: Side, th: f64) -> f64 {
    match side {
        Side::A => c.h * th,
        Side::B => c.h * (FRAC_PI_2 + th) - FRAC_PI_2 * c.h_over_gamma * th,
    }
}

/// Evaluates the branch `side` at `(t, theta)`; the formula is used as is, even
/// outside the branch's own region.
pub fn f_at(params: &CuspParams, side: Side, t: f64, theta: f64) -> [f64; 2] {
    let c = params.curves(t);
    let th = fold_angle(side, theta);
    [-t.ln(), second_coordinate(&c, side, th)]
}

/// `r * Df` on branch `side` with the second row stored as `e^ln_scale * second`.
/// The first row is always `(1/t, 0)`. Where `h` underflows the second row is
/// proportional to `h`, and the factored form keeps it representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledRows {
    pub ln_scale: f64,
    pub second: [f64; 2],
}

impl ScaledRows {
    pub fn to_mat(&self, t: f64) -> Mat2 {
        let s = self.ln_scale.exp();
        Mat2::new(1.0 / t, 0.0, s * self.second[0], s * self.second[1])
    }
}

pub fn scaled_rows(params: &CuspParams, side: Side, t: f64, theta: f64) -> ScaledRows {
    let th = fold_angle(side, theta);
    let factor_h = match (params.regime, side) {
        (CuspRegime::LpDuality { .. }, _) | (CuspRegime::SigmaLs { .. }, Side::A) => params.p(),
        _ => None,
    };
    if let Some(p) = factor_h {
        // h = e^(-2t/p) and r h' = (2/p) h in both power regimes
        let dh = 2.0 / p;
        let second = match (params.regime, side) {
            (_, Side::A) => [dh * th, 1.0],
            (CuspRegime::LpDuality { eps, .. }, Side::B) => {
                let te = t.powf(eps);
                let dhg = te * (dh - eps / t);
                [
                    (FRAC_PI_2 + th) * dh - FRAC_PI_2 * th * dhg,
                    1.0 - FRAC_PI_2 * te,
                ]
            }
            _ => unreachable!(),
        };
        return ScaledRows {
            ln_scale: -2.0 * t / p,
            second,
        };
    }
    let c = params.curves(t);
    let second = match side {
        Side::A => [c.r_dh * th, c.h],
        Side::B => [
            (FRAC_PI_2 + th) * c.r_dh - FRAC_PI_2 * th * c.r_d_h_over_gamma,
            c.h - FRAC_PI_2 * c.h_over_gamma,
        ],
    };
    ScaledRows {
        ln_scale: 0.0,
        second,
    }
}

/// `r * Df` in the polar frame on branch `side` at `(t, theta)`.
pub fn scaled_df(params: &CuspParams, side: Side, t: f64, theta: f64) -> Mat2 {
    scaled_rows(params, side, t, theta).to_mat(t)
}

/// Logs of `K`, `Sigma` and `|Df|^2` from the factored derivative. `K` is scale
/// free; `Sigma = 2 |Df|^2` in `B` and zero in `A`.
pub fn log_k_sigma(side: Side, rows: &ScaledRows, t: f64) -> Result<(f64, f64, f64), CuspError> {
    let a = 1.0 / t;
    let [c, d] = rows.second;
    let jac = a * d;
    let oriented = match side {
        Side::A => jac > 0.0,
        Side::B => jac < 0.0,
    };
    if !oriented || !jac.is_finite() {
        return Err(CuspError::Degenerate { t, jac });
    }
    let ln_jac = a.ln() + rows.ln_scale + d.abs().ln();
    // largest squared singular value, with the second row scaled by e^ln_scale
    let s2 = (2.0 * rows.ln_scale).exp();
    let half_trace = 0.5 * (a * a + s2 * (c * c + d * d));
    let det_sq = (a * d).powi(2) * s2;
    let disc = (half_trace * half_trace - det_sq).max(0.0).sqrt();
    let ln_norm_sq = (half_trace + disc).ln();
    let ln_k = (ln_norm_sq - ln_jac).max(0.0);
    let ln_df2 = ln_norm_sq + 2.0 * t;
    let ln_sigma = match side {
        Side::A => f64::NEG_INFINITY,
        Side::B => 2f64.ln() + ln_df2,
    };
    Ok((ln_k, ln_sigma, ln_df2))
}

/// `c + rate * t + log_power * log t`, the leading order of a log-field in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogPower {
    pub rate: f64,
    pub log_power: f64,
}

impl LogPower {
    /// Whether `int^inf e^(rate t) t^log_power dt` is finite.
    pub fn integrable(&self) -> bool {
        const EDGE: f64 = 1e-12;
        self.rate < -EDGE || (self.rate.abs() <= EDGE && self.log_power < -1.0)
    }
}

/// Leading order of `log F` as `t -> inf` on one side, for the two power
/// regimes. `None` when `F` vanishes identically there or the regime is not covered.
pub fn field_asymptote(params: &CuspParams, side: Side, quantity: Quantity) -> Option<LogPower> {
    let lp = |rate, log_power| Some(LogPower { rate, log_power });
    let (p, eps) = match params.regime {
        CuspRegime::LpDuality { p, eps } => (p, Some(eps)),
        CuspRegime::SigmaLs { p } => (p, None),
        CuspRegime::ExpK { .. } => return None,
    };
    match (side, quantity, eps) {
        // A: K = 1/(t h), Sigma = 0, |r Df| -> 1/t
        (Side::A, Quantity::K, _) => lp(2.0 / p, -1.0),
        (Side::A, Quantity::Sigma | Quantity::SigmaOverK, _) => None,
        (_, Quantity::Sigma | Quantity::DfOpnormSq, _) => lp(2.0, -2.0),
        // B with gamma = t^-eps: the h/gamma terms stay below 1/t
        (Side::B, Quantity::K, Some(eps)) => lp(2.0 / p, -1.0 - eps),
        (Side::B, Quantity::SigmaOverK, Some(eps)) => lp(2.0 - 2.0 / p, eps - 1.0),
        // B with gamma = h t: r Df -> diag(1/t, -pi/(2t)), K -> pi/2
        (Side::B, Quantity::K, None) => lp(0.0, 0.0),
        (Side::B, Quantity::SigmaOverK, None) => lp(2.0, -2.0),
        (_, Quantity::ExpK, _) => None,
    }
}

/// Leading order of `log(angular width * r^2)`, the area weight per unit `t`.
pub fn measure_asymptote(params: &CuspParams, side: Side) -> LogPower {
    match (side, params.regime) {
        (Side::A, _) => LogPower {
            rate: -2.0,
            log_power: 0.0,
        },
        (Side::B, CuspRegime::LpDuality { eps, .. }) => LogPower {
            rate: -2.0,
            log_power: -eps,
        },
        (Side::B, CuspRegime::SigmaLs { p }) => LogPower {
            rate: -2.0 - 2.0 / p,
            log_power: 1.0,
        },
        (Side::B, CuspRegime::ExpK { nu, .. }) => LogPower {
            rate: -2.0,
            log_power: 1.0 - nu,
        },
    }
}

/// One-dimensional reduction of `int_side F^q`: `Some(true)` finite, `Some(false)`
/// infinite. Vanishing fields count as finite.
pub fn power_integral_finite(
    params: &CuspParams,
    side: Side,
    quantity: Quantity,
    q: f64,
) -> Option<bool> {
    if matches!(params.regime, CuspRegime::ExpK { .. }) || quantity == Quantity::ExpK {
        return None;
    }
    let Some(f) = field_asymptote(params, side, quantity) else {
        return Some(true);
    };
    let m = measure_asymptote(params, side);
    Some(
        LogPower {
            rate: q * f.rate + m.rate,
            log_power: q * f.log_power + m.log_power,
        }
        .integrable(),
    )
}

pub fn eval_f(params: &CuspParams, pt: PolarPoint) -> Result<[f64; 2], CuspError> {
    let t = params.check_radius(pt.r)?;
    let gamma = params.curves(t).gamma;
    // f is continuous, so boundary points take either branch; use B inside the closed cusp.
    let a = normalize_angle(pt.theta).abs();
    let side = if a <= gamma || a >= PI - gamma {
        Side::B
    } else {
        Side::A
    };
    Ok(f_at(params, side, t, pt.theta))
}

/// One-sided value of `f` on branch `side`; valid for any `0 < r < 1`.
pub fn eval_f_on(params: &CuspParams, side: Side, pt: PolarPoint) -> Result<[f64; 2], CuspError> {
    let t = check_formula_radius(pt.r)?;
    Ok(f_at(params, side, t, pt.theta))
}

pub fn eval_df(params: &CuspParams, pt: PolarPoint) -> Result<Mat2, CuspError> {
    let side = side_of(params, pt)?;
    eval_df_on(params, side, pt)
}

/// One-sided derivative on branch `side`; valid for any `0 < r < 1`.
pub fn eval_df_on(params: &CuspParams, side: Side, pt: PolarPoint) -> Result<Mat2, CuspError> {
    let t = check_formula_radius(pt.r)?;
    Ok(scaled_df(params, side, t, pt.theta).scale(1.0 / pt.r))
}

/// `(K, Sigma)` at an interior point.
pub fn eval_k_sigma(params: &CuspParams, pt: PolarPoint) -> Result<(f64, f64), CuspError> {
    let side = side_of(params, pt)?;
    eval_k_sigma_on(params, side, pt)
}

pub fn eval_k_sigma_on(
    params: &CuspParams,
    side: Side,
    pt: PolarPoint,
) -> Result<(f64, f64), CuspError> {
    let t = check_formula_radius(pt.r)?;
    let rows = scaled_rows(params, side, t, pt.theta);
    let (ln_k, ln_sigma, _) = log_k_sigma(side, &rows, t)?;
    Ok((ln_k.exp(), ln_sigma.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp() -> CuspParams {
        CuspParams::lp_duality(2.0, 0.5).unwrap()
    }

    fn fd_df(params: &CuspParams, side: Side, r: f64, th: f64) -> Mat2 {
        let dr = 1e-6 * r;
        let dth = 1e-6;
        let f = |rr: f64, tt: f64| eval_f_on(params, side, PolarPoint::new(rr, tt)).unwrap();
        let (fp, fm) = (f(r + dr, th), f(r - dr, th));
        let (gp, gm) = (f(r, th + dth), f(r, th - dth));
        Mat2::new(
            (fp[0] - fm[0]) / (2.0 * dr),
            (gp[0] - gm[0]) / (2.0 * dth * r),
            (fp[1] - fm[1]) / (2.0 * dr),
            (gp[1] - gm[1]) / (2.0 * dth * r),
        )
    }

    #[test]
    fn classification_examples() {
        let p = lp();
        let r = p.r0 / 2.0;
        let tag = |th| classify(&p, PolarPoint::new(r, th), DEFAULT_ANGULAR_TOL).unwrap();
        assert_eq!(tag(FRAC_PI_2), CuspRegion::A1);
        assert_eq!(tag(0.0), CuspRegion::B1);
        assert_eq!(tag(-PI + p.gamma(r) / 2.0), CuspRegion::B2);
        assert_eq!(tag(-FRAC_PI_2), CuspRegion::A2);
        assert_eq!(tag(p.gamma(r)), CuspRegion::Interface);
        assert!(classify(&p, PolarPoint::new(p.r0, 0.0), 0.0).is_err());
        assert!(classify(&p, PolarPoint::new(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn first_coordinate_at_outer_radius() {
        let p = lp();
        // log(1/r0) = e, so -log log(1/r0) = -1.
        let v = f_at(&p, Side::A, p.t0(), FRAC_PI_2);
        assert!((v[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn cusp_boundary_values() {
        let p = lp();
        let r = 0.01;
        let (h, g) = (p.h(r), p.gamma(r));
        let at = |th| eval_f_on(&p, Side::B, PolarPoint::new(r, th)).unwrap()[1];
        assert!((at(g) - h * g).abs() < 1e-15);
        assert!((at(-g) - h * (PI - g)).abs() < 1e-15);
    }

    #[test]
    fn first_row_in_a() {
        let p = lp();
        let r = 0.02;
        let m = eval_df(&p, PolarPoint::new(r, 1.0)).unwrap();
        assert!((m.0[0][0] - 1.0 / (r * (1.0 / r).ln())).abs() < 1e-12 * m.0[0][0]);
        assert_eq!(m.0[0][1], 0.0);
    }

    #[test]
    fn jacobian_closed_form_at_inverse_e() {
        // h(r)/(r^2 log(1/r)) = e at r = 1/e for h(r) = r. Checked on the formula
        // extension since 1/e lies outside the preset domain.
        let p = lp();
        let r = (-1f64).exp();
        let m = eval_df_on(&p, Side::A, PolarPoint::new(r, 1.0)).unwrap();
        assert!((m.det() - E).abs() < 1e-13);
        let fd = fd_df(&p, Side::A, r, 1.0);
        assert!((fd.det() - E).abs() < 1e-6);
    }

    #[test]
    fn b_branch_reverses_orientation() {
        for params in [
            lp(),
            CuspParams::sigma_ls(2.0).unwrap(),
            CuspParams::exp_k(1.5, None).unwrap(),
        ] {
            let r = params.r0 * 1e-3;
            let th = 0.3 * params.gamma(r);
            let m = eval_df(&params, PolarPoint::new(r, th)).unwrap();
            assert!(m.0[1][1] < 0.0);
            assert!(m.det() < 0.0);
        }
    }

    #[test]
    fn analytic_matches_finite_differences() {
        for params in [
            lp(),
            CuspParams::sigma_ls(1.5).unwrap(),
            CuspParams::exp_k(1.5, None).unwrap(),
        ] {
            for &r in &[params.r0 * 0.5, params.r0 * 1e-3] {
                let g = params.gamma(r);
                for (side, th) in [
                    (Side::A, FRAC_PI_2),
                    (Side::A, 2.0),
                    (Side::B, 0.0),
                    (Side::B, 0.5 * g),
                ] {
                    let m = eval_df_on(&params, side, PolarPoint::new(r, th)).unwrap();
                    let fd = fd_df(&params, side, r, th);
                    assert!(m.rel_error(&fd) < 1e-6, "{params:?} {side:?} r={r} th={th}");
                }
            }
        }
    }

    #[test]
    fn k_sigma_saturate_the_inclusion() {
        let p = lp();
        let r = 1e-3;
        let pa = PolarPoint::new(r, 1.0);
        let m = eval_df(&p, pa).unwrap();
        let (k, s) = eval_k_sigma(&p, pa).unwrap();
        assert_eq!(s, 0.0);
        let lhs = m.op_norm_sq();
        assert!((k * m.det() - lhs).abs() <= 1e-12 * lhs);

        let pb = PolarPoint::new(r, 0.1 * p.gamma(r));
        let m = eval_df(&p, pb).unwrap();
        let (k, s) = eval_k_sigma(&p, pb).unwrap();
        let lhs = m.op_norm_sq();
        assert!((lhs - (k * m.det() + s)).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn factored_rows_reach_deep_radii() {
        for params in [lp(), CuspParams::sigma_ls(2.0).unwrap()] {
            for side in [Side::A, Side::B] {
                let t = 40.0;
                let th = match side {
                    Side::A => 1.0,
                    Side::B => 0.5 * params.curves(t).gamma,
                };
                let m = scaled_df(&params, side, t, th);
                let (ln_k, _, _) =
                    log_k_sigma(side, &scaled_rows(&params, side, t, th), t).unwrap();
                let direct = (m.op_norm_sq() / m.det().abs()).ln();
                assert!(
                    (ln_k - direct).abs() < 1e-12 * direct.abs(),
                    "{params:?} {side:?}"
                );
            }
        }
        // lp with p = 2: K = 1/(t h) once h is negligible, so log K -> t - log t
        let t = 5000.0;
        let (ln_k, _, ln_df2) =
            log_k_sigma(Side::A, &scaled_rows(&lp(), Side::A, t, 1.0), t).unwrap();
        assert!((ln_k - (t - t.ln())).abs() < 1e-9);
        assert!((ln_df2 - (2.0 * t - 2.0 * t.ln())).abs() < 1e-9);
    }

    #[test]
    fn field_asymptotes_match_pointwise_values() {
        use crate::family::MapFamily;
        use crate::quadrature::QuadPoint;
        for params in [
            lp(),
            CuspParams::lp_duality(1.5, 0.3).unwrap(),
            CuspParams::sigma_ls(2.0).unwrap(),
        ] {
            let map = MapFamily::Cusp(params);
            for side in [Side::A, Side::B] {
                for quantity in [
                    Quantity::K,
                    Quantity::Sigma,
                    Quantity::SigmaOverK,
                    Quantity::DfOpnormSq,
                ] {
                    let Some(model) = field_asymptote(&params, side, quantity) else {
                        continue;
                    };
                    let offset = |t: f64| {
                        let g = params.curves(t).gamma;
                        let theta = match side {
                            Side::A => FRAC_PI_2,
                            Side::B => 0.5 * g,
                        };
                        let pt = QuadPoint { t, r: 0.0, theta };
                        let v = map
                            .ln_quantity(crate::family::Branch::Cusp(side), quantity, &pt)
                            .unwrap();
                        v - model.rate * t - model.log_power * t.ln()
                    };
                    // corrections decay like t^-eps, so compare far out
                    let drift = (offset(2e6) - offset(1e6)).abs();
                    assert!(drift < 1e-2, "{params:?} {side:?} {quantity:?}: {drift}");
                }
            }
        }
    }

    #[test]
    fn reduced_thresholds() {
        let p = lp();
        let finite = |side, quantity, q| power_integral_finite(&p, side, quantity, q).unwrap();
        assert!(finite(Side::A, Quantity::K, 2.0) && finite(Side::B, Quantity::K, 2.0));
        assert!(finite(Side::B, Quantity::SigmaOverK, 1.5));
        assert!(finite(Side::B, Quantity::SigmaOverK, 2.0));
        assert!(!finite(Side::B, Quantity::SigmaOverK, 2.5));
        assert!(!finite(Side::B, Quantity::SigmaOverK, 3.0));
        let ls = CuspParams::sigma_ls(2.0).unwrap();
        let sigma = |s| power_integral_finite(&ls, Side::B, Quantity::Sigma, s).unwrap();
        assert!(sigma(1.4) && sigma(1.5) && !sigma(1.7));
    }

    #[test]
    fn exp_k_distortion_grows_like_log_power() {
        let p = CuspParams::exp_k(1.5, None).unwrap();
        let nu = 1.75;
        // Fit C on a log grid, then check the ratio stays bounded by it at r = e^{-e^2}.
        let ratio = |t: f64| {
            let rows = scaled_rows(&p, Side::A, t, 1.0);
            log_k_sigma(Side::A, &rows, t).unwrap().0.exp() / t.powf(nu - 1.0)
        };
        let c = (0..200)
            .map(|i| ratio(p.t0() * (1.05f64).powi(i)))
            .fold(0.0, f64::max);
        assert!(c.is_finite() && c < 2.0);
        assert!(ratio(E * E) <= c);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(CuspParams::lp_duality(1.0, 0.5).is_err());
        assert!(CuspParams::lp_duality(2.0, 1.0).is_err());
        assert!(CuspParams::exp_k(1.5, Some(1.2)).is_err());
        assert!(CuspParams::sigma_ls(7.0).is_err());
    }
}
