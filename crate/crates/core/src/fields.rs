//! Pointwise checks on a map family: inclusion residuals, finite-difference
//! derivatives, interface gaps, blow-up radii and moduli of continuity.

use std::f64::consts::{E, PI};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cusp::Side;
use crate::family::{Branch, FamilyError, FieldSample, MapFamily, MapPoint};
use crate::geometry::{Mat2, PolarPoint};
use crate::sampling::R2;
use crate::spiral::{g, strip_width, SpiralCoords, SpiralRegion};

const TWO_PI: f64 = 2.0 * PI;

/// Deepest sampled log-radius `log(1/r)` for polar families.
pub const SAMPLE_T_MAX: f64 = 60.0;
/// Largest sampled spiral angle; finite differences lose digits beyond it.
pub const SAMPLE_THETA_MAX: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("finite-difference stencil at {0:?} leaves its region")]
    StencilCrossesInterface(MapPoint),
    #[error("interface {0:?} does not belong to this family")]
    InvalidInterface(InterfaceId),
    #[error("map is not continuous at the base point")]
    Discontinuous,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InclusionReport {
    /// `|Df|^n`, operator norm.
    pub lhs: f64,
    /// `|Df|^n` with the Frobenius norm, for reference.
    pub lhs_frobenius: f64,
    pub rhs: f64,
    pub residual: f64,
    pub point: MapPoint,
}

/// `|A|^n <= K det A + w Sigma` terms for a sample; `w = |f - y0|^n` when `y0` is given.
pub fn inclusion_terms(s: &FieldSample, y0: Option<[f64; 2]>, n: i32) -> InclusionReport {
    let weight = match y0 {
        Some([a, b]) => (s.f[0] - a).hypot(s.f[1] - b).powi(n),
        None => 1.0,
    };
    let lhs = s.op_norm.powi(n);
    let rhs = s.k * s.jac + weight * s.sigma;
    InclusionReport {
        lhs,
        lhs_frobenius: s.df.frobenius_sq().sqrt().powi(n),
        rhs,
        residual: lhs - rhs,
        point: s.point,
    }
}

pub fn inclusion_residual(
    map: &MapFamily,
    branch: Branch,
    pt: MapPoint,
    y0: Option<[f64; 2]>,
) -> Result<InclusionReport, CheckError> {
    Ok(inclusion_terms(&map.sample_on(branch, pt)?, y0, 2))
}

/// An interior sample with the branch it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SitePoint {
    pub branch: Branch,
    pub point: MapPoint,
}

/// Low-discrepancy interior samples, spread evenly over the family's regions in
/// `(log r, theta)` (strip fraction for spirals), away from interfaces by a
/// relative margin of 5%.
///
/// The cusp component around `theta = pi` is sampled only where its half-angle
/// is at least `1e-5`: doubles near `pi` are spaced `4e-16` apart, so thinner
/// parts of that component are not resolvable.
pub fn sample_sites(map: &MapFamily, count: usize, seed: u64) -> Vec<SitePoint> {
    let seq = R2::new(seed);
    let far_cap = match map {
        MapFamily::Cusp(p) => {
            let (mut lo, mut hi) = (p.t0(), SAMPLE_T_MAX);
            if p.curves(hi).gamma >= 1e-5 {
                hi
            } else {
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if p.curves(mid).gamma >= 1e-5 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
        }
        _ => SAMPLE_T_MAX,
    };
    let lerp = |a: f64, b: f64, u: f64| a + (b - a) * (0.05 + 0.9 * u);
    (0..count as u64)
        .map(|i| {
            let [u, v] = seq.point(i);
            match map {
                MapFamily::Cusp(p) => {
                    let deepest = if i % 4 == 3 { far_cap } else { SAMPLE_T_MAX };
                    let t = lerp(p.t0(), deepest, u);
                    let gamma = p.curves(t).gamma;
                    let (side, lo, hi) = match i % 4 {
                        0 => (Side::A, gamma, PI - gamma),
                        1 => (Side::A, -PI + gamma, -gamma),
                        2 => (Side::B, -gamma, gamma),
                        _ => (Side::B, PI - gamma, PI + gamma),
                    };
                    let theta = crate::geometry::normalize_angle(lerp(lo, hi, v));
                    SitePoint {
                        branch: Branch::Cusp(side),
                        point: MapPoint::Polar(PolarPoint::new((-t).exp(), theta)),
                    }
                }
                MapFamily::Spiral(s) => {
                    let lt = lerp(s.params.theta0.ln(), SAMPLE_THETA_MAX.ln(), u);
                    let (region, lo, hi) = if i % 2 == 0 {
                        (SpiralRegion::A, 0.0, 0.5)
                    } else {
                        (SpiralRegion::B, 0.5, 1.0)
                    };
                    SitePoint {
                        branch: Branch::Spiral(region),
                        point: MapPoint::Strip(SpiralCoords::at_fraction(
                            lt.exp(),
                            lerp(lo, hi, v),
                        )),
                    }
                }
                _ => {
                    let t = lerp(0.05, SAMPLE_T_MAX, u);
                    SitePoint {
                        branch: Branch::Located,
                        point: MapPoint::Polar(PolarPoint::new((-t).exp(), lerp(-PI, PI, v))),
                    }
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InclusionSummary {
    pub samples: usize,
    /// Largest `residual / (1 + lhs)`.
    pub max_scaled_residual: f64,
    /// Largest `|residual| / (1 + lhs)`.
    pub max_abs_scaled_residual: f64,
    pub worst: Option<InclusionReport>,
}

pub fn inclusion_batch(
    map: &MapFamily,
    sites: &[SitePoint],
    y0: Option<[f64; 2]>,
) -> Result<InclusionSummary, CheckError> {
    let reports: Vec<Result<InclusionReport, CheckError>> = sites
        .par_iter()
        .map(|s| inclusion_residual(map, s.branch, s.point, y0))
        .collect();
    let mut out = InclusionSummary {
        samples: sites.len(),
        max_scaled_residual: f64::NEG_INFINITY,
        max_abs_scaled_residual: 0.0,
        worst: None,
    };
    for rep in reports {
        let rep = rep?;
        let scaled = rep.residual / (1.0 + rep.lhs);
        if !(scaled <= out.max_scaled_residual) {
            out.max_scaled_residual = scaled;
            out.worst = Some(rep);
        }
        out.max_abs_scaled_residual = out.max_abs_scaled_residual.max(scaled.abs());
    }
    Ok(out)
}

/// Step scales `(dr, dtheta)` per unit relative step: radius and region width
/// for polar families, strip width and one radian for spirals.
fn step_scales(map: &MapFamily, branch: Branch, pt: MapPoint) -> (f64, f64) {
    match (map, pt) {
        (_, MapPoint::Strip(c)) => (strip_width(c.theta), 1.0),
        (MapFamily::Cusp(p), MapPoint::Polar(q)) => {
            let gamma = p.gamma(q.r);
            let width = match branch {
                Branch::Cusp(Side::B) => 2.0 * gamma,
                _ => PI - 2.0 * gamma,
            };
            (q.r, width)
        }
        (_, MapPoint::Polar(q)) => (q.r, 1.0),
    }
}

fn shifted(pt: MapPoint, dr: f64, dtheta: f64) -> MapPoint {
    match pt {
        MapPoint::Polar(p) => MapPoint::Polar(PolarPoint::new(p.r + dr, p.theta + dtheta)),
        MapPoint::Strip(c) => MapPoint::Strip(SpiralCoords {
            theta: c.theta + dtheta,
            r: c.r + dr,
        }),
    }
}

fn radius(pt: MapPoint) -> f64 {
    match pt {
        MapPoint::Polar(p) => p.r,
        MapPoint::Strip(c) => c.r,
    }
}

/// Confirms that a stencil point still lies in the region of `branch`.
fn same_region(map: &MapFamily, branch: Branch, pt: MapPoint) -> bool {
    match (map, branch, pt) {
        (MapFamily::Cusp(p), Branch::Cusp(side), MapPoint::Polar(q)) => {
            matches!(crate::cusp::classify(p, q, 0.0).map(|r| r.side()), Ok(Some(s)) if s == side)
        }
        (MapFamily::Spiral(s), Branch::Spiral(region), MapPoint::Strip(c)) => {
            matches!(s.classify(c, 0.0), Ok(r) if r == region)
        }
        _ => true,
    }
}

/// Central-difference polar-frame derivative with relative step `step`.
pub fn fd_jacobian(
    map: &MapFamily,
    branch: Branch,
    pt: MapPoint,
    step: f64,
) -> Result<Mat2, CheckError> {
    let (sr, st) = step_scales(map, branch, pt);
    let (hr, ht) = (step * sr, step * st);
    let mut cols = [[0.0; 2]; 2];
    for (j, (dr, dt)) in [(hr, 0.0), (0.0, ht)].into_iter().enumerate() {
        let plus = shifted(pt, dr, dt);
        let minus = shifted(pt, -dr, -dt);
        if !same_region(map, branch, plus) || !same_region(map, branch, minus) {
            return Err(CheckError::StencilCrossesInterface(pt));
        }
        let fp = map.eval_f_on(branch, plus)?;
        let fm = map.eval_f_on(branch, minus)?;
        let denom = if j == 0 {
            2.0 * hr
        } else {
            2.0 * ht * radius(pt)
        };
        cols[j] = [(fp[0] - fm[0]) / denom, (fp[1] - fm[1]) / denom];
    }
    Ok(Mat2::new(cols[0][0], cols[1][0], cols[0][1], cols[1][1]))
}

/// Richardson combination `(4 D(step/2) - D(step)) / 3` of two central differences.
pub fn fd_jacobian_richardson(
    map: &MapFamily,
    branch: Branch,
    pt: MapPoint,
    step: f64,
) -> Result<(Mat2, Mat2), CheckError> {
    let coarse = fd_jacobian(map, branch, pt, step)?;
    let fine = fd_jacobian(map, branch, pt, 0.5 * step)?;
    Ok((fine.scale(4.0).sub(&coarse).scale(1.0 / 3.0), fine))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeSummary {
    pub samples: usize,
    /// Largest relative Frobenius error of the extrapolated difference.
    pub max_rel_error: f64,
    /// Same for the plain central difference at half the step.
    pub max_rel_error_plain: f64,
    pub worst: Option<MapPoint>,
}

pub fn derivative_batch(
    map: &MapFamily,
    sites: &[SitePoint],
    step: f64,
) -> Result<DerivativeSummary, CheckError> {
    let errs: Vec<Result<(f64, f64), CheckError>> = sites
        .par_iter()
        .map(|s| {
            let exact = map.eval_df_on(s.branch, s.point)?;
            let (extrap, plain) = fd_jacobian_richardson(map, s.branch, s.point, step)?;
            Ok((extrap.rel_error(&exact), plain.rel_error(&exact)))
        })
        .collect();
    let mut out = DerivativeSummary {
        samples: sites.len(),
        max_rel_error: 0.0,
        max_rel_error_plain: 0.0,
        worst: None,
    };
    for (site, e) in sites.iter().zip(errs) {
        let (extrap, plain) = e?;
        if !(extrap <= out.max_rel_error) {
            out.max_rel_error = extrap;
            out.worst = Some(site.point);
        }
        out.max_rel_error_plain = out.max_rel_error_plain.max(plain);
    }
    Ok(out)
}

/// Curves where two closed-form branches meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceId {
    /// `theta = gamma(r)`, between `A1` and `B1`; parameter `r`.
    CuspUpperRight,
    /// `theta = pi - gamma(r)`, between `A1` and `B2`.
    CuspUpperLeft,
    /// `theta = -gamma(r)`, between `B1` and `A2`.
    CuspLowerRight,
    /// `theta = -pi + gamma(r)`, between `A2` and `B2`.
    CuspLowerLeft,
    /// `r = h(theta)`, between `A` and `B` of one strip; parameter `theta`.
    SpiralMidline,
    /// `r = g(theta + 2 pi)`, between `A` at `theta` and `B` one turn later.
    SpiralInner,
}

pub fn interfaces(map: &MapFamily) -> Vec<InterfaceId> {
    use InterfaceId::*;
    match map {
        MapFamily::Cusp(_) => vec![CuspUpperRight, CuspUpperLeft, CuspLowerRight, CuspLowerLeft],
        MapFamily::Spiral(_) => vec![SpiralMidline, SpiralInner],
        _ => Vec::new(),
    }
}

/// `f(outside) - f(inside)` across `id` at parameter `s`, sides `offset` apart in
/// relative units (fractions of `gamma` or of the strip width).
fn side_difference(
    map: &MapFamily,
    id: InterfaceId,
    s: f64,
    offset: f64,
) -> Result<[f64; 2], CheckError> {
    use InterfaceId::*;
    let (fa, fb) = match (map, id) {
        (MapFamily::Cusp(p), CuspUpperRight | CuspUpperLeft | CuspLowerRight | CuspLowerLeft) => {
            let gamma = p.gamma(s);
            let d = offset * gamma;
            // (angle on the curve, direction pointing into A)
            let (theta, into_a) = match id {
                CuspUpperRight => (gamma, 1.0),
                CuspUpperLeft => (PI - gamma, -1.0),
                CuspLowerRight => (-gamma, -1.0),
                _ => (-PI + gamma, 1.0),
            };
            let a = MapPoint::Polar(PolarPoint::new(s, theta + into_a * d));
            let b = MapPoint::Polar(PolarPoint::new(s, theta - into_a * d));
            (
                map.eval_f_on(Branch::Cusp(Side::A), a)?,
                map.eval_f_on(Branch::Cusp(Side::B), b)?,
            )
        }
        (MapFamily::Spiral(_), SpiralMidline) => {
            let a = SpiralCoords::at_fraction(s, 0.5 - offset);
            let b = SpiralCoords::at_fraction(s, 0.5 + offset);
            (
                map.eval_f_on(Branch::Spiral(SpiralRegion::A), MapPoint::Strip(a))?,
                map.eval_f_on(Branch::Spiral(SpiralRegion::B), MapPoint::Strip(b))?,
            )
        }
        (MapFamily::Spiral(_), SpiralInner) => {
            let tau = s + TWO_PI;
            let r = g(tau);
            let a = SpiralCoords {
                theta: s,
                r: r + offset * strip_width(s),
            };
            let b = SpiralCoords {
                theta: tau,
                r: r - offset * strip_width(tau),
            };
            (
                map.eval_f_on(Branch::Spiral(SpiralRegion::A), MapPoint::Strip(a))?,
                map.eval_f_on(Branch::Spiral(SpiralRegion::B), MapPoint::Strip(b))?,
            )
        }
        _ => return Err(CheckError::InvalidInterface(id)),
    };
    Ok([fa[0] - fb[0], fa[1] - fb[1]])
}

/// `|f(side A) - f(side B)|` at parameter `s` of interface `id`, extrapolated to
/// zero offset from the offsets `offset` and `offset / 2`.
pub fn interface_gap(
    map: &MapFamily,
    id: InterfaceId,
    s: f64,
    offset: f64,
) -> Result<f64, CheckError> {
    if !(offset > 0.0 && offset < 0.25) {
        return Err(CheckError::InvalidInput(format!(
            "offset {offset} must lie in (0, 1/4)"
        )));
    }
    let d1 = side_difference(map, id, s, offset)?;
    let d2 = side_difference(map, id, s, 0.5 * offset)?;
    Ok((2.0 * d2[0] - d1[0]).hypot(2.0 * d2[1] - d1[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterfaceSummary {
    pub interface: InterfaceId,
    pub samples: usize,
    pub max_gap: f64,
}

/// Gaps at `count` curve parameters spread log-uniformly over the sampled range.
pub fn interface_batch(
    map: &MapFamily,
    count: usize,
    offset: f64,
    seed: u64,
) -> Result<Vec<InterfaceSummary>, CheckError> {
    let seq = R2::new(seed);
    let params: Vec<f64> = (0..count as u64)
        .map(|i| {
            let u = seq.point(i)[0];
            match map {
                MapFamily::Cusp(p) => {
                    let t = p.t0() + 0.01 + (SAMPLE_T_MAX - p.t0()) * u;
                    (-t).exp()
                }
                MapFamily::Spiral(s) => {
                    let lo = s.params.theta0.ln();
                    (lo + (SAMPLE_THETA_MAX.ln() - lo) * u).exp()
                }
                _ => 0.0,
            }
        })
        .collect();
    interfaces(map)
        .into_iter()
        .map(|id| {
            let gaps: Vec<Result<f64, CheckError>> = params
                .par_iter()
                .map(|&s| interface_gap(map, id, s, offset))
                .collect();
            let mut max_gap = 0.0f64;
            for gap in gaps {
                max_gap = max_gap.max(gap?);
            }
            Ok(InterfaceSummary {
                interface: id,
                samples: count,
                max_gap,
            })
        })
        .collect()
}

/// Closed-form radius below which `|f| >= M`. `log(1/r)` is kept separately
/// because the radius itself underflows for moderate `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessRadius {
    pub radius: f64,
    pub log_inv_radius: f64,
}

pub fn blowup_witness(map: &MapFamily, m: f64) -> Result<WitnessRadius, CheckError> {
    if !(m > 0.0) {
        return Err(CheckError::InvalidInput(format!(
            "M = {m} must be positive"
        )));
    }
    let t = match map {
        // |f_1| = log log(1/r)
        MapFamily::Cusp(p) => m.exp().max(p.t0()),
        // |Im f| >= log log(theta) for theta beyond exp(e^M); every point with
        // r <= g(theta + 2 pi) lies at such an angle.
        MapFamily::Spiral(s) => -g(m.exp().exp().max(s.params.theta0) + TWO_PI).ln(),
        // log log log(e^e / r) = M
        MapFamily::TripleLog => m.exp().exp() - E,
        MapFamily::PowerLog { .. } | MapFamily::Linear(_) => {
            return Err(CheckError::Unsupported(
                "the map is continuous at the origin".into(),
            ))
        }
    };
    Ok(WitnessRadius {
        radius: (-t).exp(),
        log_inv_radius: t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupReport {
    pub m: f64,
    pub witness: WitnessRadius,
    pub samples: usize,
    /// Smallest `|f|` seen inside the radius.
    pub min_abs_f: f64,
}

/// Samples points inside the witness radius and records the smallest `|f|`.
/// Polar families are sampled for `log(1/r)` up to four times that of the
/// witness; spirals on strips up to a thousand times its angle.
pub fn blowup_check(
    map: &MapFamily,
    m: f64,
    count: usize,
    seed: u64,
) -> Result<BlowupReport, CheckError> {
    let witness = blowup_witness(map, m)?;
    let seq = R2::new(seed);
    let t_in = witness.log_inv_radius;
    let mut min_abs = f64::INFINITY;
    for i in 0..count as u64 {
        let [u, v] = seq.point(i);
        let f = match map {
            MapFamily::Spiral(s) => {
                // the strip at angle theta lies below g(theta), so theta >= g^-1(radius)
                let start = crate::spiral::g_inverse(witness.radius)
                    .map_err(|e| CheckError::Family(FamilyError::Spiral(e.into())))?
                    .max(s.params.theta0);
                let theta = start * 10f64.powf(3.0 * u);
                // far out the strip is narrower than the spacing of doubles near r,
                // so the branch is picked from the fraction instead of the radius
                let region = if v < 0.5 {
                    SpiralRegion::A
                } else {
                    SpiralRegion::B
                };
                let c = SpiralCoords::at_fraction(theta, v);
                map.eval_f_on(Branch::Spiral(region), MapPoint::Strip(c))?
            }
            MapFamily::Cusp(p) => {
                let t = t_in * (1.0 + 3.0 * u);
                let theta = PI * (2.0 * v - 1.0);
                let side = if crate::cusp::fold_angle(Side::B, theta).abs() <= p.curves(t).gamma {
                    Side::B
                } else {
                    Side::A
                };
                crate::cusp::f_at(p, side, t, theta)
            }
            _ => {
                let t = t_in * (1.0 + 3.0 * u);
                [(E + t).ln().ln(), 0.0]
            }
        };
        min_abs = min_abs.min(f[0].hypot(f[1]));
    }
    Ok(BlowupReport {
        m,
        witness,
        samples: count,
        min_abs_f: min_abs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulusSample {
    pub r: f64,
    /// Estimate from 256 angles by 64 radii, made nondecreasing in `r`.
    pub omega: f64,
    /// Same with both counts doubled.
    pub omega_refined: f64,
}

fn sup_on_disk(
    map: &MapFamily,
    x0: [f64; 2],
    f0: [f64; 2],
    r: f64,
    angles: usize,
    radii: usize,
) -> Result<f64, CheckError> {
    let mut best = 0.0f64;
    for j in 1..=radii {
        let s = r * j as f64 / radii as f64;
        for i in 0..angles {
            let th = TWO_PI * i as f64 / angles as f64;
            let x = x0[0] + s * th.cos();
            let y = x0[1] + s * th.sin();
            let f = map.eval_f(map.point_from_cartesian(x, y)?)?;
            best = best.max((f[0] - f0[0]).hypot(f[1] - f0[1]));
        }
    }
    Ok(best)
}

/// Sampled modulus of continuity of `f` at `x0` for each radius.
pub fn modulus_samples(
    map: &MapFamily,
    x0: [f64; 2],
    radii: &[f64],
) -> Result<Vec<ModulusSample>, CheckError> {
    // only the continuous families qualify
    if !map.continuous_at_origin() {
        return Err(CheckError::Discontinuous);
    }
    let f0 = map.eval_f(map.point_from_cartesian(x0[0], x0[1])?)?;
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let raw: Vec<Result<(f64, f64), CheckError>> = radii
        .par_iter()
        .map(|&r| {
            if !(r > 0.0) {
                return Err(CheckError::InvalidInput(format!(
                    "radius {r} must be positive"
                )));
            }
            Ok((
                sup_on_disk(map, x0, f0, r, 256, 64)?,
                sup_on_disk(map, x0, f0, r, 512, 128)?,
            ))
        })
        .collect();
    let raw: Vec<(f64, f64)> = raw.into_iter().collect::<Result<_, _>>()?;
    let mut out = vec![
        ModulusSample {
            r: 0.0,
            omega: 0.0,
            omega_refined: 0.0
        };
        radii.len()
    ];
    let (mut run, mut run_refined) = (0.0f64, 0.0f64);
    for &i in &order {
        run = run.max(raw[i].0);
        run_refined = run_refined.max(raw[i].1);
        out[i] = ModulusSample {
            r: radii[i],
            omega: run,
            omega_refined: run_refined,
        };
    }
    Ok(out)
}
