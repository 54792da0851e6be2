//! Principal real branch of the Lambert W function.
//!
//! `lambert_w` inverts `w * exp(w)` on `[-1/e, inf)` with values in `[-1, inf)`.

use std::f64::consts::E;

use thiserror::Error;

const INV_E: f64 = 1.0 / E;

/// Width of the window above `-1/e` where the branch-point series is used directly.
const BRANCH_WINDOW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Absolute bound on `w * exp(w) - t`.
    pub abs_tol: f64,
    /// Bound on the residual relative to `|t|`.
    pub rel_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            abs_tol: 1e-13,
            rel_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LambertError {
    #[error("argument {0} lies outside [-1/e, inf)")]
    Domain(f64),
    #[error("no convergence for t = {t} after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        t: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("invalid solver settings")]
    InvalidSettings,
}

impl SolverSettings {
    fn validate(&self) -> Result<(), LambertError> {
        if self.max_iterations == 0
            || !(self.abs_tol > 0.0)
            || !(self.rel_tol > 0.0)
            || !self.abs_tol.is_finite()
            || !self.rel_tol.is_finite()
        {
            return Err(LambertError::InvalidSettings);
        }
        Ok(())
    }

    fn residual_bound(&self, t: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * t.abs())
    }
}

/// Series of W about the branch point in `p = sqrt(2 (e t + 1))`.
fn branch_series(p: f64) -> f64 {
    const C: [f64; 7] = [
        -1.0,
        1.0,
        -1.0 / 3.0,
        11.0 / 72.0,
        -43.0 / 540.0,
        769.0 / 17280.0,
        -221.0 / 8505.0,
    ];
    C.iter().rev().fold(0.0, |acc, &c| acc * p + c)
}

fn branch_p(t: f64) -> f64 {
    // e*t + 1 with t = -1/e + d loses digits if formed naively; split the constant.
    let d = t + INV_E;
    let q = E * d;
    (2.0 * q.max(0.0)).sqrt()
}

/// Principal branch `W(t)`, the solution `w >= -1` of `w * exp(w) = t`.
pub fn lambert_w(t: f64, settings: &SolverSettings) -> Result<f64, LambertError> {
    settings.validate()?;
    if t.is_nan() || t == f64::INFINITY {
        return Err(LambertError::Domain(t));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t < -INV_E {
        if t >= -INV_E - settings.abs_tol {
            return Ok(-1.0);
        }
        return Err(LambertError::Domain(t));
    }
    if t == -INV_E {
        return Ok(-1.0);
    }
    if t <= -INV_E + BRANCH_WINDOW {
        return Ok(branch_series(branch_p(t)));
    }

    let mut w = if t < -0.25 {
        branch_series(branch_p(t))
    } else if t < 3.0 {
        (1.0 + t).ln()
    } else {
        // Asymptotic start: log t - log log t.
        let l1 = t.ln();
        l1 - l1.ln()
    };

    let bound = settings.residual_bound(t);
    let mut residual = f64::INFINITY;
    for _ in 0..settings.max_iterations {
        let ew = w.exp();
        let f = w * ew - t;
        residual = f.abs();
        if f == 0.0 {
            return Ok(w);
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        if !step.is_finite() {
            break;
        }
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            residual = (w * w.exp() - t).abs();
            if residual <= bound {
                return Ok(w);
            }
            break;
        }
    }
    residual = residual.min((w * w.exp() - t).abs());
    if residual <= bound {
        return Ok(w);
    }
    Err(LambertError::NoConvergence {
        t,
        iterations: settings.max_iterations,
        residual,
    })
}

/// Derivative `W'(t) = W / (t (1 + W)) = 1 / (t + exp(W))`, evaluated as `exp(-W) / (1 + W)`.
pub fn lambert_w_prime(t: f64, settings: &SolverSettings) -> Result<f64, LambertError> {
    if !(t > -INV_E) {
        return Err(LambertError::Domain(t));
    }
    let w = lambert_w(t, settings)?;
    if w <= -1.0 {
        return Err(LambertError::Domain(t));
    }
    Ok((-w).exp() / (1.0 + w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(t: f64) -> f64 {
        lambert_w(t, &SolverSettings::default()).unwrap()
    }

    #[test]
    fn fixed_points() {
        assert_eq!(w(0.0), 0.0);
        assert_eq!(w(-INV_E), -1.0);
        assert!((w(E) - 1.0).abs() < 1e-15);
        let l2 = 2f64.ln();
        assert!((w(2.0 * l2) - l2).abs() < 1e-15);
    }

    #[test]
    fn rejects_left_of_branch_point() {
        assert!(matches!(
            lambert_w(-0.5, &SolverSettings::default()),
            Err(LambertError::Domain(_))
        ));
        assert!(lambert_w(f64::NAN, &SolverSettings::default()).is_err());
        // Slack below the endpoint snaps to -1.
        assert_eq!(w(-INV_E - 1e-14), -1.0);
    }

    #[test]
    fn zero_iterations_rejected() {
        let s = SolverSettings {
            max_iterations: 0,
            ..Default::default()
        };
        assert_eq!(lambert_w(1.0, &s), Err(LambertError::InvalidSettings));
    }

    #[test]
    fn derivative_values() {
        let s = SolverSettings::default();
        assert!((lambert_w_prime(0.0, &s).unwrap() - 1.0).abs() < 1e-15);
        // W(e) = 1 gives W'(e) = 1/(2e).
        assert!((lambert_w_prime(E, &s).unwrap() - 0.5 / E).abs() < 1e-15);
        let t = 2.0 * 2f64.ln();
        let wt = w(t);
        let ratio_form = wt / (t * (1.0 + wt));
        let exp_form = 1.0 / (t + wt.exp());
        let got = lambert_w_prime(t, &s).unwrap();
        assert!((got - ratio_form).abs() < 1e-12 * got);
        assert!((got - exp_form).abs() < 1e-12 * got);
        assert!(lambert_w_prime(-INV_E, &s).is_err());
    }

    #[test]
    fn branch_window_joins_halley_region() {
        let t = -INV_E + BRANCH_WINDOW;
        let below = w(t);
        let above = w(t + 1e-12);
        assert!(above > below);
        assert!((below * below.exp() - t).abs() < 1e-15);
    }
}
