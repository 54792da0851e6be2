//! The double-spiral family.
//!
//! Points are addressed by an unwrapped angle `theta >= theta0` and a radius in the
//! strip `g(theta + 2 pi) <= r < g(theta)`, where `g(theta) = 1 / (theta log theta)`.
//! The midline `h(theta) = (g(theta) + g(theta + 2 pi)) / 2` splits each strip:
//! region `B` is the outer half, region `A` the inner half.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::special_fn::{lambert_w, LambertError, SolverSettings};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum SpiralRegime {
    /// `phi(r) = r`.
    BoundedSigma,
    /// `phi'(r) = r^(2/p - 2) log^(-7/4 + 1/p)(1/r)`.
    Lp { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpiralParams {
    pub regime: SpiralRegime,
    pub theta0: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpiralCoords {
    pub theta: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpiralRegion {
    A,
    B,
    Interface,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpiralError {
    #[error("angle {0} below theta0")]
    AngleBelowStart(f64),
    #[error("point (theta = {theta}, r = {r}) is outside the parameter strip")]
    OutsideStrip { theta: f64, r: f64 },
    #[error("point ({x}, {y}) is outside the domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("point (theta = {theta}, r = {r}) lies on a region boundary")]
    Interface { theta: f64, r: f64 },
    #[error("degenerate Jacobian {jac:e} at theta = {theta}")]
    Degenerate { theta: f64, jac: f64 },
    #[error(transparent)]
    Lambert(#[from] LambertError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub const DEFAULT_STRIP_TOL: f64 = 1e-12;

/// `g(theta) = 1 / (theta log theta)`.
pub fn g(theta: f64) -> f64 {
    1.0 / (theta * theta.ln())
}

/// `g(theta) - g(theta + 2 pi)` without cancellation.
pub fn strip_width(theta: f64) -> f64 {
    let tau = theta + TWO_PI;
    let (lt, ltau) = (theta.ln(), tau.ln());
    // tau log tau - theta log theta = 2 pi log tau + theta log(1 + 2 pi / theta)
    let num = TWO_PI * ltau + theta * (TWO_PI / theta).ln_1p();
    num / (theta * lt * tau * ltau)
}

/// Inverse of `g`: the angle with `g(theta) = r`, i.e. `exp(W(1/r))`.
pub fn g_inverse(r: f64) -> Result<f64, LambertError> {
    Ok(lambert_w(1.0 / r, &SolverSettings::default())?.exp())
}

/// `(g(theta), h(theta))`.
pub fn spiral_curves(params: &SpiralParams, theta: f64) -> Result<(f64, f64), SpiralError> {
    if !(theta >= params.theta0) {
        return Err(SpiralError::AngleBelowStart(theta));
    }
    let gt = g(theta);
    Ok((gt, gt - 0.5 * strip_width(theta)))
}

impl SpiralCoords {
    /// The point at fraction `x` across the strip at `theta`: `x = 0` on the inner
    /// curve `g(theta + 2 pi)`, `x = 1/2` on the midline, `x = 1` on `g(theta)`.
    pub fn at_fraction(theta: f64, x: f64) -> Self {
        let inner = g(theta + TWO_PI);
        Self {
            theta,
            r: inner + x * strip_width(theta),
        }
    }

    pub fn to_cartesian(self) -> [f64; 2] {
        [self.r * self.theta.cos(), self.r * self.theta.sin()]
    }
}

#[derive(Debug, Clone)]
pub struct SpiralMap {
    pub params: SpiralParams,
    phi: PhiProfile,
}

#[derive(Debug, Clone)]
enum PhiProfile {
    Identity,
    Cached(PhiCache),
}

impl SpiralMap {
    pub fn bounded_sigma() -> Self {
        Self {
            params: SpiralParams {
                regime: SpiralRegime::BoundedSigma,
                theta0: TWO_PI,
                r0: 1.0,
            },
            phi: PhiProfile::Identity,
        }
    }

    /// `theta0 = 4 pi` and `r0 = g(4 pi)`.
    pub fn lp(p: f64) -> Result<Self, SpiralError> {
        if !(1.0..=2.0).contains(&p) {
            return Err(SpiralError::InvalidParams(format!(
                "p = {p} must lie in [1, 2]"
            )));
        }
        let theta0 = 2.0 * TWO_PI;
        let r0 = g(theta0);
        let cache = PhiCache::build(p, r0);
        if !cache.is_increasing() {
            return Err(SpiralError::InvalidParams("phi is not increasing".into()));
        }
        Ok(Self {
            params: SpiralParams {
                regime: SpiralRegime::Lp { p },
                theta0,
                r0,
            },
            phi: PhiProfile::Cached(cache),
        })
    }

    pub fn phi(&self, r: f64) -> f64 {
        match &self.phi {
            PhiProfile::Identity => r,
            PhiProfile::Cached(c) => c.value(r),
        }
    }

    pub fn phi_prime(&self, r: f64) -> f64 {
        match self.params.regime {
            SpiralRegime::BoundedSigma => 1.0,
            SpiralRegime::Lp { p } => phi_prime_lp(p, r),
        }
    }

    fn check(&self, c: SpiralCoords) -> Result<(), SpiralError> {
        if !(c.theta >= self.params.theta0) {
            return Err(SpiralError::AngleBelowStart(c.theta));
        }
        let inner = g(c.theta + TWO_PI);
        if !(c.r >= inner && c.r < g(c.theta)) {
            return Err(SpiralError::OutsideStrip {
                theta: c.theta,
                r: c.r,
            });
        }
        Ok(())
    }

    /// Region of a strip point; `Interface` within `tol` strip widths of a curve.
    pub fn classify(&self, c: SpiralCoords, tol: f64) -> Result<SpiralRegion, SpiralError> {
        self.check(c)?;
        let w = strip_width(c.theta);
        let inner = g(c.theta + TWO_PI);
        let x = (c.r - inner) / w;
        if x <= tol || (x - 0.5).abs() <= tol {
            return Ok(SpiralRegion::Interface);
        }
        Ok(if x < 0.5 {
            SpiralRegion::A
        } else {
            SpiralRegion::B
        })
    }

    fn region_of(&self, c: SpiralCoords) -> Result<SpiralRegion, SpiralError> {
        match self.classify(c, DEFAULT_STRIP_TOL)? {
            SpiralRegion::Interface => Err(SpiralError::Interface {
                theta: c.theta,
                r: c.r,
            }),
            region => Ok(region),
        }
    }

    /// Recovers strip coordinates of a Cartesian point of the domain.
    pub fn unwrap(&self, x: f64, y: f64) -> Result<SpiralCoords, SpiralError> {
        let r = x.hypot(y);
        let outside = SpiralError::OutsideDomain { x, y };
        if !(r > 0.0) || !r.is_finite() {
            return Err(outside);
        }
        let theta0 = self.params.theta0;
        let base = theta0 + (y.atan2(x) - theta0).rem_euclid(TWO_PI);
        if r >= g(base) {
            return Err(outside);
        }
        // g is decreasing, so the winding is fixed by where g^{-1}(r) falls.
        let star = g_inverse(r)?;
        let mut k = ((star - base) / TWO_PI).floor().max(0.0);
        for _ in 0..4 {
            let theta = base + TWO_PI * k;
            if r >= g(theta) {
                k -= 1.0;
            } else if r < g(theta + TWO_PI) {
                k += 1.0;
            } else {
                return Ok(SpiralCoords { theta, r });
            }
            if k < 0.0 {
                break;
            }
        }
        Err(outside)
    }

    /// Auxiliary `(u, W(u))` of region `A`, `u = 1 / (2 r - g(theta + 2 pi))`.
    pub fn region_a_aux(&self, c: SpiralCoords) -> Result<(f64, f64), SpiralError> {
        let tau = c.theta + TWO_PI;
        let u = 1.0 / (2.0 * c.r - g(tau));
        let w = lambert_w(u, &SolverSettings::default())?;
        Ok((u, w))
    }

    pub fn eval_f(&self, c: SpiralCoords) -> Result<[f64; 2], SpiralError> {
        self.check(c)?;
        // f is continuous across the midline, so either branch serves there.
        let x = (c.r - g(c.theta + TWO_PI)) / strip_width(c.theta);
        let region = if x < 0.5 {
            SpiralRegion::A
        } else {
            SpiralRegion::B
        };
        self.eval_f_on(region, c)
    }

    /// Branch formula for `region`, without checking which region `c` is in.
    pub fn eval_f_on(
        &self,
        region: SpiralRegion,
        c: SpiralCoords,
    ) -> Result<[f64; 2], SpiralError> {
        let re = self.phi(c.r);
        match region {
            SpiralRegion::B => Ok([re, -c.theta.ln().ln()]),
            SpiralRegion::A => {
                let (_, w) = self.region_a_aux(c)?;
                Ok([re, -w.ln()])
            }
            SpiralRegion::Interface => Err(SpiralError::Interface {
                theta: c.theta,
                r: c.r,
            }),
        }
    }

    pub fn eval_df(&self, c: SpiralCoords) -> Result<crate::geometry::Mat2, SpiralError> {
        let region = self.region_of(c)?;
        self.eval_df_on(region, c)
    }

    pub fn eval_df_on(
        &self,
        region: SpiralRegion,
        c: SpiralCoords,
    ) -> Result<crate::geometry::Mat2, SpiralError> {
        use crate::geometry::Mat2;
        let dphi = self.phi_prime(c.r);
        match region {
            SpiralRegion::B => Ok(Mat2::new(dphi, 0.0, 0.0, -g(c.theta) / c.r)),
            SpiralRegion::A => {
                let tau = c.theta + TWO_PI;
                let lt = tau.ln();
                let (u, w) = self.region_a_aux(c)?;
                let d_r = 2.0 * u / (1.0 + w);
                let d_theta = (1.0 + lt) * u / (c.r * (1.0 + w) * tau * tau * lt * lt);
                Ok(Mat2::new(dphi, 0.0, d_r, d_theta))
            }
            SpiralRegion::Interface => Err(SpiralError::Interface {
                theta: c.theta,
                r: c.r,
            }),
        }
    }

    pub fn eval_k_sigma(&self, c: SpiralCoords) -> Result<(f64, f64), SpiralError> {
        let region = self.region_of(c)?;
        self.eval_k_sigma_on(region, c)
    }

    pub fn eval_k_sigma_on(
        &self,
        region: SpiralRegion,
        c: SpiralCoords,
    ) -> Result<(f64, f64), SpiralError> {
        match region {
            SpiralRegion::B => {
                let dphi = self.phi_prime(c.r);
                Ok((dphi.max(1.0), 6.0 + 3.0 * dphi * dphi))
            }
            SpiralRegion::A => {
                let m = self.eval_df_on(region, c)?;
                let jac = m.det();
                if !(jac > 0.0) || !jac.is_finite() {
                    return Err(SpiralError::Degenerate {
                        theta: c.theta,
                        jac,
                    });
                }
                Ok(((m.op_norm_sq() / jac).max(1.0), 0.0))
            }
            SpiralRegion::Interface => Err(SpiralError::Interface {
                theta: c.theta,
                r: c.r,
            }),
        }
    }
}

fn phi_prime_lp(p: f64, r: f64) -> f64 {
    let l = -r.ln();
    r.powf(2.0 / p - 2.0) * l.powf(-1.75 + 1.0 / p)
}

/// `phi` for the `Lp` regime on a geometric radius grid.
///
/// Values between nodes are completed by Gauss-Legendre quadrature of `phi'`
/// from the next smaller node, so `phi` stays consistent with the closed-form
/// `phi'` to rounding level.
#[derive(Debug, Clone)]
struct PhiCache {
    p: f64,
    t_start: f64,
    dt: f64,
    values: Vec<f64>,
}

const PHI_GRID: usize = 10_000;
const PHI_T_END: f64 = 700.0;

impl PhiCache {
    fn build(p: f64, r0: f64) -> Self {
        let t_start = -r0.ln();
        let dt = (PHI_T_END - t_start) / (PHI_GRID - 1) as f64;
        let mut values = vec![0.0; PHI_GRID];
        values[PHI_GRID - 1] = phi_tail(p, PHI_T_END);
        for i in (0..PHI_GRID - 1).rev() {
            let a = t_start + dt * i as f64;
            values[i] = values[i + 1] + phi_integral_t(p, a, a + dt);
        }
        Self {
            p,
            t_start,
            dt,
            values,
        }
    }

    fn is_increasing(&self) -> bool {
        // values are indexed by increasing t, i.e. decreasing r
        self.values.windows(2).all(|w| w[0] > w[1]) && self.values.iter().all(|v| v.is_finite())
    }

    fn value(&self, r: f64) -> f64 {
        let t = -r.ln();
        if t >= PHI_T_END {
            return phi_tail(self.p, t);
        }
        let pos = ((t - self.t_start) / self.dt).floor().max(0.0);
        let idx = (pos as usize + 1).min(PHI_GRID - 1);
        let t_node = self.t_start + self.dt * idx as f64;
        self.values[idx] + phi_integral_t(self.p, t, t_node)
    }
}

/// Integrand of `phi` in `t = log(1/r)`: `phi'(e^-t) e^-t`.
fn phi_integrand_t(p: f64, t: f64) -> f64 {
    (-(2.0 / p - 1.0) * t).exp() * t.powf(-1.75 + 1.0 / p)
}

fn phi_integral_t(p: f64, a: f64, b: f64) -> f64 {
    crate::quadrature::gauss_legendre(16).integrate(a, b, |t| phi_integrand_t(p, t))
}

/// `int_T^inf phi_integrand_t dt`, through `t = T u^-4`.
fn phi_tail(p: f64, big_t: f64) -> f64 {
    let rule = crate::quadrature::gauss_legendre(16);
    let panels = 32;
    let mut sum = 0.0;
    for k in 0..panels {
        let a = k as f64 / panels as f64;
        let b = (k + 1) as f64 / panels as f64;
        sum += rule.integrate(a, b, |u| {
            if u <= 0.0 {
                return 0.0;
            }
            let u4 = u.powi(4);
            let t = big_t / u4;
            let v = phi_integrand_t(p, t) * 4.0 * big_t / (u4 * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        });
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_at_two_pi() {
        let (gt, h) = spiral_curves(&SpiralMap::bounded_sigma().params, TWO_PI).unwrap();
        let reference = 1.0 / (TWO_PI * TWO_PI.ln());
        assert!((gt - reference).abs() < 1e-16);
        assert!((reference - 0.086_597_164_740_096_49).abs() < 1e-15);
        let mid = 0.5 * (g(TWO_PI) + g(2.0 * TWO_PI));
        assert!((h - mid).abs() < 1e-16);
    }

    #[test]
    fn curves_are_ordered() {
        let params = SpiralMap::bounded_sigma().params;
        for i in 0..200 {
            let theta = TWO_PI * (1.1f64).powi(i);
            let (gt, h) = spiral_curves(&params, theta).unwrap();
            assert!(g(theta + TWO_PI) < h && h < gt, "theta = {theta}");
        }
        assert!(spiral_curves(&params, 1.0).is_err());
    }

    #[test]
    fn stable_width_matches_direct_difference() {
        let theta = 50.0;
        let direct = g(theta) - g(theta + TWO_PI);
        assert!((strip_width(theta) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn unwrap_round_trip() {
        let map = SpiralMap::bounded_sigma();
        for &(theta, x) in &[
            (3.0 * PI, 0.5),
            (7.0, 0.1),
            (1234.5, 0.9),
            (TWO_PI + 1e-3, 0.3),
        ] {
            let c = SpiralCoords::at_fraction(theta, x);
            let [cx, cy] = c.to_cartesian();
            let back = map.unwrap(cx, cy).unwrap();
            assert!(
                (back.theta - theta).abs() < 1e-10 * theta.max(1.0),
                "{theta}"
            );
            let [bx, by] = back.to_cartesian();
            assert!((bx - cx).abs() < 1e-12 && (by - cy).abs() < 1e-12);
        }
        // Outside every winding.
        assert!(map.unwrap(0.5, 0.0).is_err());
        assert!(map.unwrap(0.0, 0.0).is_err());
    }

    #[test]
    fn continuity_identities() {
        let map = SpiralMap::bounded_sigma();
        let theta = 40.0;
        let mid = SpiralCoords::at_fraction(theta, 0.5);
        let a = map.eval_f_on(SpiralRegion::A, mid).unwrap()[1];
        assert!((a + theta.ln().ln()).abs() < 1e-12);
        let inner = SpiralCoords::at_fraction(theta, 0.0);
        let a = map.eval_f_on(SpiralRegion::A, inner).unwrap()[1];
        let tau = theta + TWO_PI;
        assert!((a + tau.ln().ln()).abs() < 1e-12);
    }

    #[test]
    fn region_b_jacobian_and_bounds() {
        let map = SpiralMap::bounded_sigma();
        let c = SpiralCoords::at_fraction(100.0, 0.75);
        let m = map.eval_df(c).unwrap();
        assert!((m.det() + g(c.theta) / c.r).abs() < 1e-14 * m.det().abs());
        assert!(g(c.theta) / c.r <= 2.0);
        let (k, s) = map.eval_k_sigma(c).unwrap();
        assert_eq!((k, s), (1.0, 9.0));
        assert!(s - m.op_norm_sq() - k * m.det().abs() >= 0.0);
    }

    #[test]
    fn region_a_matches_finite_differences() {
        for map in [
            SpiralMap::bounded_sigma(),
            SpiralMap::lp(2.0).unwrap(),
            SpiralMap::lp(1.3).unwrap(),
        ] {
            for &theta in &[20.0, 300.0, 5000.0] {
                let c = SpiralCoords::at_fraction(theta, 0.25);
                let m = map.eval_df(c).unwrap();
                let dr = 1e-3 * strip_width(theta);
                let dth = 1e-5 * theta;
                let f = |cc: SpiralCoords| map.eval_f_on(SpiralRegion::A, cc).unwrap();
                let rp = f(SpiralCoords { r: c.r + dr, ..c });
                let rm = f(SpiralCoords { r: c.r - dr, ..c });
                let tp = f(SpiralCoords {
                    theta: c.theta + dth,
                    ..c
                });
                let tm = f(SpiralCoords {
                    theta: c.theta - dth,
                    ..c
                });
                let fd = crate::geometry::Mat2::new(
                    (rp[0] - rm[0]) / (2.0 * dr),
                    (tp[0] - tm[0]) / (2.0 * dth * c.r),
                    (rp[1] - rm[1]) / (2.0 * dr),
                    (tp[1] - tm[1]) / (2.0 * dth * c.r),
                );
                assert!(m.rel_error(&fd) < 1e-6, "theta = {theta}: {m:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn phi_for_p_two_has_closed_form() {
        // p = 2: phi(r) = 4 log^{-1/4}(1/r).
        let map = SpiralMap::lp(2.0).unwrap();
        for &r in &[map.params.r0 * 0.9, 1e-5, 1e-100, 1e-310] {
            let exact = 4.0 * (-r.ln()).powf(-0.25);
            assert!((map.phi(r) - exact).abs() < 1e-12, "r = {r}");
        }
    }

    #[test]
    fn phi_derivative_is_consistent() {
        let map = SpiralMap::lp(1.5).unwrap();
        let r = 1e-4;
        let d = 1e-6 * r;
        let fd = (map.phi(r + d) - map.phi(r - d)) / (2.0 * d);
        assert!((fd - map.phi_prime(r)).abs() < 1e-7 * map.phi_prime(r));
    }
}
