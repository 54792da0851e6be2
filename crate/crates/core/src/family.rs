//! A common interface over all map families: evaluation of `f`, `Df`, `K`, `Sigma`
//! at polar points or spiral strip points, with optional forced branches.

use std::f64::consts::E;

use serde::Serialize;
use thiserror::Error;

use crate::cusp::{self, CuspError, CuspParams, Side};
use crate::geometry::{polar_frame, Mat2, PolarPoint};
use crate::quadrature::QuadPoint;
use crate::spiral::{SpiralCoords, SpiralError, SpiralMap, SpiralRegion};

#[derive(Debug, Clone)]
pub enum MapFamily {
    Cusp(CuspParams),
    Spiral(SpiralMap),
    /// `f(x) = (log log log(e^e / |x|), 0)` on the unit disk.
    TripleLog,
    /// `f(x) = (log^-alpha(1/|x|), 0)` on the unit disk, with `f(0) = 0`.
    PowerLog {
        alpha: f64,
    },
    /// `f(x) = A x`; test fixture.
    Linear(Mat2),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapPoint {
    Polar(PolarPoint),
    Strip(SpiralCoords),
}

/// Which closed-form branch to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Cusp(Side),
    Spiral(SpiralRegion),
    /// Decide from the point's location.
    Located,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    pub point: MapPoint,
    pub f: [f64; 2],
    pub df: Mat2,
    pub jac: f64,
    pub op_norm: f64,
    pub k: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    K,
    Sigma,
    SigmaOverK,
    DfOpnormSq,
    /// `exp(K)`.
    ExpK,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error(transparent)]
    Cusp(#[from] CuspError),
    #[error(transparent)]
    Spiral(#[from] SpiralError),
    #[error("point outside the domain: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

fn polar(pt: MapPoint) -> Result<PolarPoint, FamilyError> {
    match pt {
        MapPoint::Polar(p) => Ok(p),
        MapPoint::Strip(c) => Ok(PolarPoint::new(c.r, c.theta)),
    }
}

fn unit_disk_t(r: f64) -> Result<f64, FamilyError> {
    if r > 0.0 && r < 1.0 {
        Ok(-r.ln())
    } else {
        Err(FamilyError::Domain(format!("radius {r} outside (0, 1)")))
    }
}

/// `(K, Sigma)` for a matrix with no preferred orientation: the minimal `K`
/// where `det > 0`, otherwise `K = 1` and `Sigma` closes the gap.
fn generic_k_sigma(df: &Mat2) -> (f64, f64) {
    let n2 = df.op_norm_sq();
    let jac = df.det();
    if jac > 0.0 {
        ((n2 / jac).max(1.0), 0.0)
    } else {
        (1.0, (n2 - jac).max(0.0))
    }
}

impl MapFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MapFamily::Cusp(p) => match p.regime {
                cusp::CuspRegime::LpDuality { .. } => "cusp-lp-duality",
                cusp::CuspRegime::SigmaLs { .. } => "cusp-sigma-ls",
                cusp::CuspRegime::ExpK { .. } => "cusp-exp-k",
            },
            MapFamily::Spiral(s) => match s.params.regime {
                crate::spiral::SpiralRegime::BoundedSigma => "spiral-bounded-sigma",
                crate::spiral::SpiralRegime::Lp { .. } => "spiral-lp",
            },
            MapFamily::TripleLog => "triple-log",
            MapFamily::PowerLog { .. } => "power-log",
            MapFamily::Linear(_) => "linear",
        }
    }

    /// Whether `f` extends continuously to the origin.
    pub fn continuous_at_origin(&self) -> bool {
        matches!(self, MapFamily::PowerLog { .. } | MapFamily::Linear(_))
    }

    /// Point given in Cartesian coordinates, converted to the family's native form.
    pub fn point_from_cartesian(&self, x: f64, y: f64) -> Result<MapPoint, FamilyError> {
        match self {
            MapFamily::Spiral(s) => Ok(MapPoint::Strip(s.unwrap(x, y)?)),
            _ => Ok(MapPoint::Polar(PolarPoint::from_cartesian(x, y))),
        }
    }

    pub fn eval_f(&self, pt: MapPoint) -> Result<[f64; 2], FamilyError> {
        match (self, pt) {
            (MapFamily::Cusp(p), _) => Ok(cusp::eval_f(p, polar(pt)?)?),
            (MapFamily::Spiral(s), MapPoint::Strip(c)) => Ok(s.eval_f(c)?),
            (MapFamily::Spiral(_), MapPoint::Polar(_)) => Err(FamilyError::Unsupported(
                "spiral maps take strip coordinates".into(),
            )),
            _ => self.eval_f_on(Branch::Located, pt),
        }
    }

    /// Value of `f` on a forced branch (closed form extended past its region).
    pub fn eval_f_on(&self, branch: Branch, pt: MapPoint) -> Result<[f64; 2], FamilyError> {
        match (self, branch, pt) {
            (MapFamily::Cusp(p), Branch::Cusp(side), _) => {
                Ok(cusp::eval_f_on(p, side, polar(pt)?)?)
            }
            (MapFamily::Cusp(_), _, _) => self.eval_f(pt),
            (MapFamily::Spiral(s), Branch::Spiral(region), MapPoint::Strip(c)) => {
                Ok(s.eval_f_on(region, c)?)
            }
            (MapFamily::Spiral(_), _, _) => self.eval_f(pt),
            (MapFamily::TripleLog, _, _) => {
                let t = unit_disk_t(polar(pt)?.r)?;
                Ok([(E + t).ln().ln(), 0.0])
            }
            (MapFamily::PowerLog { alpha }, _, _) => {
                let r = polar(pt)?.r;
                if r == 0.0 {
                    return Ok([0.0, 0.0]);
                }
                let t = unit_disk_t(r)?;
                Ok([t.powf(-alpha), 0.0])
            }
            (MapFamily::Linear(a), _, _) => {
                let [x, y] = polar(pt)?.to_cartesian();
                let [[p, q], [u, v]] = a.0;
                Ok([p * x + q * y, u * x + v * y])
            }
        }
    }

    pub fn eval_df(&self, pt: MapPoint) -> Result<Mat2, FamilyError> {
        self.eval_df_on(Branch::Located, pt)
    }

    /// Polar-frame derivative `[[d_r f1, r^-1 d_theta f1], [d_r f2, r^-1 d_theta f2]]`.
    pub fn eval_df_on(&self, branch: Branch, pt: MapPoint) -> Result<Mat2, FamilyError> {
        match (self, branch, pt) {
            (MapFamily::Cusp(p), Branch::Cusp(side), _) => {
                Ok(cusp::eval_df_on(p, side, polar(pt)?)?)
            }
            (MapFamily::Cusp(p), _, _) => Ok(cusp::eval_df(p, polar(pt)?)?),
            (MapFamily::Spiral(s), Branch::Spiral(region), MapPoint::Strip(c)) => {
                Ok(s.eval_df_on(region, c)?)
            }
            (MapFamily::Spiral(s), _, MapPoint::Strip(c)) => Ok(s.eval_df(c)?),
            (MapFamily::Spiral(_), _, MapPoint::Polar(_)) => Err(FamilyError::Unsupported(
                "spiral maps take strip coordinates".into(),
            )),
            (MapFamily::TripleLog, _, _) => {
                let r = polar(pt)?.r;
                let t = unit_disk_t(r)?;
                let u = E + t;
                Ok(Mat2::new(-1.0 / (r * u * u.ln()), 0.0, 0.0, 0.0))
            }
            (MapFamily::PowerLog { alpha }, _, _) => {
                let r = polar(pt)?.r;
                let t = unit_disk_t(r)?;
                Ok(Mat2::new(alpha * t.powf(-alpha - 1.0) / r, 0.0, 0.0, 0.0))
            }
            (MapFamily::Linear(a), _, _) => Ok(a.mul(&polar_frame(polar(pt)?.theta))),
        }
    }

    /// `(K, Sigma)` on the given branch.
    pub fn eval_k_sigma_on(&self, branch: Branch, pt: MapPoint) -> Result<(f64, f64), FamilyError> {
        match (self, branch, pt) {
            (MapFamily::Cusp(p), Branch::Cusp(side), _) => {
                Ok(cusp::eval_k_sigma_on(p, side, polar(pt)?)?)
            }
            (MapFamily::Cusp(p), _, _) => Ok(cusp::eval_k_sigma(p, polar(pt)?)?),
            (MapFamily::Spiral(s), Branch::Spiral(region), MapPoint::Strip(c)) => {
                Ok(s.eval_k_sigma_on(region, c)?)
            }
            (MapFamily::Spiral(s), _, MapPoint::Strip(c)) => Ok(s.eval_k_sigma(c)?),
            (MapFamily::Spiral(_), _, MapPoint::Polar(_)) => Err(FamilyError::Unsupported(
                "spiral maps take strip coordinates".into(),
            )),
            _ => Ok(generic_k_sigma(&self.eval_df_on(branch, pt)?)),
        }
    }

    pub fn sample(&self, pt: MapPoint) -> Result<FieldSample, FamilyError> {
        self.sample_on(Branch::Located, pt)
    }

    pub fn sample_on(&self, branch: Branch, pt: MapPoint) -> Result<FieldSample, FamilyError> {
        let f = self.eval_f_on(branch, pt)?;
        let df = self.eval_df_on(branch, pt)?;
        let (k, sigma) = self.eval_k_sigma_on(branch, pt)?;
        Ok(FieldSample {
            point: pt,
            f,
            df,
            jac: df.det(),
            op_norm: df.op_norm(),
            k,
            sigma,
        })
    }

    /// `log` of a scalar field at a quadrature point. Cusp values are formed from
    /// the `r`-scaled derivative, so `t = log(1/r)` may exceed the double range of `r`.
    pub fn ln_quantity(
        &self,
        branch: Branch,
        quantity: Quantity,
        p: &QuadPoint,
    ) -> Result<f64, FamilyError> {
        let (ln_k, ln_sigma, ln_df2) = match self {
            MapFamily::Cusp(params) => {
                let side = match branch {
                    Branch::Cusp(side) => side,
                    _ => {
                        let pt = PolarPoint::new(p.r, p.theta);
                        cusp::classify(params, pt, 0.0)?.side().unwrap_or(Side::A)
                    }
                };
                let rows = cusp::scaled_rows(params, side, p.t, p.theta);
                cusp::log_k_sigma(side, &rows, p.t)?
            }
            MapFamily::Spiral(s) => {
                let c = SpiralCoords {
                    theta: p.theta,
                    r: p.r,
                };
                let region = match branch {
                    Branch::Spiral(region) => region,
                    _ => match s.classify(c, 0.0)? {
                        SpiralRegion::Interface => SpiralRegion::B,
                        region => region,
                    },
                };
                let (k, sigma) = s.eval_k_sigma_on(region, c)?;
                let df = s.eval_df_on(region, c)?;
                (k.ln(), sigma.ln(), df.op_norm_sq().ln())
            }
            MapFamily::TripleLog => {
                let u = E + p.t;
                let ln_df2 = 2.0 * p.t - 2.0 * u.ln() - 2.0 * u.ln().ln();
                (0.0, ln_df2, ln_df2)
            }
            MapFamily::PowerLog { alpha } => {
                let ln_df2 = 2.0 * alpha.ln() - (2.0 * alpha + 2.0) * p.t.ln() + 2.0 * p.t;
                (0.0, ln_df2, ln_df2)
            }
            MapFamily::Linear(a) => {
                let (k, sigma) = generic_k_sigma(a);
                (k.ln(), sigma.ln(), a.op_norm_sq().ln())
            }
        };
        Ok(match quantity {
            Quantity::K => ln_k,
            Quantity::Sigma => ln_sigma,
            Quantity::SigmaOverK => ln_sigma - ln_k,
            Quantity::DfOpnormSq => ln_df2,
            Quantity::ExpK => ln_k.exp(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fixture_frames() {
        let id = MapFamily::Linear(Mat2::IDENTITY);
        let pt = MapPoint::Polar(PolarPoint::new(0.5, 0.7));
        let s = id.sample(pt).unwrap();
        assert!((s.jac - 1.0).abs() < 1e-15);
        assert!((s.op_norm - 1.0).abs() < 1e-15);
        assert_eq!((s.k, s.sigma), (1.0, 0.0));
    }

    #[test]
    fn triple_log_is_degenerate() {
        let m = MapFamily::TripleLog;
        let s = m
            .sample(MapPoint::Polar(PolarPoint::new(1e-5, 0.3)))
            .unwrap();
        assert_eq!(s.jac, 0.0);
        assert!(s.sigma >= s.op_norm * s.op_norm);
    }

    #[test]
    fn log_quantities_match_direct_samples() {
        let params = CuspParams::lp_duality(2.0, 0.5).unwrap();
        let map = MapFamily::Cusp(params);
        let r: f64 = 1e-4;
        let theta = 0.5 * params.gamma(r);
        let qp = QuadPoint {
            t: -r.ln(),
            r,
            theta,
        };
        let s = map
            .sample(MapPoint::Polar(PolarPoint::new(r, theta)))
            .unwrap();
        let ln_sigma = map
            .ln_quantity(Branch::Cusp(Side::B), Quantity::Sigma, &qp)
            .unwrap();
        assert!((ln_sigma.exp() - s.sigma).abs() < 1e-12 * s.sigma);
        let ln_df2 = map
            .ln_quantity(Branch::Located, Quantity::DfOpnormSq, &qp)
            .unwrap();
        assert!((ln_df2.exp() - s.op_norm * s.op_norm).abs() < 1e-12 * ln_df2.exp());
    }
}
