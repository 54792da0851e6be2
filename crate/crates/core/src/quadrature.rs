//! Tensor Gauss-Legendre quadrature on dyadic shells around the origin.
//!
//! Integrands are handled in log space: an integrand returns `log F` (`-inf` for
//! zero) and cells are combined by log-sum-exp, so shells deep enough that `r`
//! underflows (cusp shells are parametrized by `t = log(1/r)`) stay usable.
//! Cell results are reduced in a fixed pairwise order, which makes every result
//! bit-identical for any number of worker threads.

use std::f64::consts::{E, PI};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cusp::{CuspParams, Side};
use crate::family::{Branch, FamilyError, MapFamily, Quantity};
use crate::spiral::{g, g_inverse, strip_width, SpiralRegion};

const TWO_PI: f64 = 2.0 * PI;
const MAX_RULE_ORDER: usize = 128;
const MAX_SHELLS: usize = 200_000;
/// Largest extent in `t = log(1/r)` of one radial cell.
const MAX_CELL_DT: f64 = 2.0;
/// Log of the largest integrand value an `Exp` transform contributes to `value`.
pub const EXP_CLAMP_LN: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand is negative ({value:e}) at t = {t}, theta = {theta}")]
    Negative { value: f64, t: f64, theta: f64 },
    #[error("integrand is NaN at t = {t}, theta = {theta}")]
    NotANumber { t: f64, theta: f64 },
    #[error("evaluation failed at t = {t}, theta = {theta}: {source}")]
    Family {
        source: FamilyError,
        t: f64,
        theta: f64,
    },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }
}

fn compute_rule(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Cached `n`-point rule, `1 <= n <= 128`.
pub fn gauss_legendre(n: usize) -> &'static Rule {
    static RULES: [OnceLock<Rule>; MAX_RULE_ORDER + 1] =
        [const { OnceLock::new() }; MAX_RULE_ORDER + 1];
    assert!(
        (1..=MAX_RULE_ORDER).contains(&n),
        "Gauss-Legendre order {n} out of range"
    );
    RULES[n].get_or_init(|| compute_rule(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Adaptive 8/16-point Gauss-Legendre on `[a, b]`, bisecting the worst panel.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Estimate {
    let (lo, hi) = (gauss_legendre(8), gauss_legendre(16));
    let panel = |a: f64, b: f64| {
        let v = hi.integrate(a, b, &f);
        (a, b, v, (v - lo.integrate(a, b, &f)).abs())
    };
    let mut panels = vec![panel(a, b)];
    for _ in 0..4000 {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            break;
        }
        let (worst, _) =
            panels.iter().enumerate().fold(
                (0, -1.0),
                |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc },
            );
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let m = 0.5 * (pa + pb);
        panels.push(panel(pa, m));
        panels.push(panel(m, pb));
    }
    panels.sort_by(|x, y| x.0.total_cmp(&y.0));
    Estimate {
        value: panels.iter().map(|p| p.2).sum(),
        error: panels.iter().map(|p| p.3).sum(),
    }
}

/// `log(e^a + e^b)`.
pub fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY || hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a fixed balanced binary tree.
pub fn ln_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => f64::NEG_INFINITY,
        1 => values[0],
        n => ln_add(ln_sum(&values[..n / 2]), ln_sum(&values[n / 2..])),
    }
}

fn ln_sum_flat(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `log |e^a - e^b|`.
fn ln_abs_diff(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    if hi == f64::INFINITY {
        return if lo == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            hi
        };
    }
    hi + (-(lo - hi).exp_m1()).ln()
}

/// A quadrature node. `t = log(1/r)` is exact even where `r` underflows.
/// For spiral regions `theta` is the unwrapped strip angle; for cusp regions it
/// may leave `(-pi, pi]` by one turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadPoint {
    pub t: f64,
    pub r: f64,
    pub theta: f64,
}

pub trait Integrand: Sync {
    /// `log F(p)`, `-inf` where `F` vanishes.
    fn ln_value(&self, p: &QuadPoint) -> Result<f64, QuadError>;
}

/// Integrand given by its values.
pub struct Values<F>(pub F);

impl<F: Fn(&QuadPoint) -> f64 + Sync> Integrand for Values<F> {
    fn ln_value(&self, p: &QuadPoint) -> Result<f64, QuadError> {
        let v = (self.0)(p);
        if v.is_nan() {
            return Err(QuadError::NotANumber {
                t: p.t,
                theta: p.theta,
            });
        }
        if v < 0.0 {
            return Err(QuadError::Negative {
                value: v,
                t: p.t,
                theta: p.theta,
            });
        }
        Ok(v.ln())
    }
}

/// Integrand given by its logarithm.
pub struct LogValues<F>(pub F);

impl<F: Fn(&QuadPoint) -> f64 + Sync> Integrand for LogValues<F> {
    fn ln_value(&self, p: &QuadPoint) -> Result<f64, QuadError> {
        let v = (self.0)(p);
        if v.is_nan() {
            return Err(QuadError::NotANumber {
                t: p.t,
                theta: p.theta,
            });
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Disk,
    Annulus,
    CuspA,
    CuspB,
    SpiralA,
    SpiralB,
}

/// Integration domain. `r_inner = 0` reaches the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RegionSpec {
    /// `r_inner < |x| < r_outer`.
    Disk { r_inner: f64, r_outer: f64 },
    /// One half of a cusp family's partition inside `r_inner < |x| < r_outer`.
    Cusp {
        side: Side,
        params: CuspParams,
        r_inner: f64,
        r_outer: f64,
    },
    /// One half of every spiral strip beyond `theta0`, inside `|x| > r_inner`.
    Spiral {
        region: SpiralRegion,
        theta0: f64,
        r_inner: f64,
    },
}

impl RegionSpec {
    pub fn disk(r: f64) -> Self {
        RegionSpec::Disk {
            r_inner: 0.0,
            r_outer: r,
        }
    }

    pub fn annulus(r_inner: f64, r_outer: f64) -> Self {
        RegionSpec::Disk { r_inner, r_outer }
    }

    /// The whole of side `side` below the family's `r0`.
    pub fn cusp(side: Side, params: CuspParams) -> Self {
        RegionSpec::Cusp {
            side,
            params,
            r_inner: 0.0,
            r_outer: params.r0,
        }
    }

    pub fn spiral(region: SpiralRegion, theta0: f64) -> Self {
        RegionSpec::Spiral {
            region,
            theta0,
            r_inner: 0.0,
        }
    }

    pub fn with_inner(self, r: f64) -> Self {
        match self {
            RegionSpec::Disk { r_outer, .. } => RegionSpec::Disk {
                r_inner: r,
                r_outer,
            },
            RegionSpec::Cusp {
                side,
                params,
                r_outer,
                ..
            } => RegionSpec::Cusp {
                side,
                params,
                r_inner: r,
                r_outer,
            },
            RegionSpec::Spiral { region, theta0, .. } => RegionSpec::Spiral {
                region,
                theta0,
                r_inner: r,
            },
        }
    }

    pub fn kind(&self) -> RegionKind {
        match self {
            RegionSpec::Disk { r_inner, .. } if *r_inner > 0.0 => RegionKind::Annulus,
            RegionSpec::Disk { .. } => RegionKind::Disk,
            RegionSpec::Cusp { side: Side::A, .. } => RegionKind::CuspA,
            RegionSpec::Cusp { side: Side::B, .. } => RegionKind::CuspB,
            RegionSpec::Spiral {
                region: SpiralRegion::A,
                ..
            } => RegionKind::SpiralA,
            RegionSpec::Spiral { .. } => RegionKind::SpiralB,
        }
    }

    pub fn r_inner(&self) -> f64 {
        match *self {
            RegionSpec::Disk { r_inner, .. }
            | RegionSpec::Cusp { r_inner, .. }
            | RegionSpec::Spiral { r_inner, .. } => r_inner,
        }
    }

    pub fn r_outer(&self) -> f64 {
        match *self {
            RegionSpec::Disk { r_outer, .. } | RegionSpec::Cusp { r_outer, .. } => r_outer,
            RegionSpec::Spiral { theta0, .. } => g(theta0),
        }
    }

    /// Branch a map family should use on this region.
    pub fn branch(&self) -> Branch {
        match *self {
            RegionSpec::Disk { .. } => Branch::Located,
            RegionSpec::Cusp { side, .. } => Branch::Cusp(side),
            RegionSpec::Spiral { region, .. } => Branch::Spiral(region),
        }
    }

    fn validate(&self) -> Result<(), QuadError> {
        let (ri, ro) = (self.r_inner(), self.r_outer());
        if !(ro > 0.0 && ro.is_finite() && ri >= 0.0 && ri < ro) {
            return Err(QuadError::InvalidRegion(format!(
                "need 0 <= r_inner < r_outer, got {ri}, {ro}"
            )));
        }
        match self {
            RegionSpec::Cusp { params, .. } if ro > params.r0 => Err(QuadError::InvalidRegion(
                format!("cusp region must lie inside r0 = {}", params.r0),
            )),
            RegionSpec::Spiral {
                region: SpiralRegion::Interface,
                ..
            } => Err(QuadError::InvalidRegion(
                "choose spiral region A or B".into(),
            )),
            RegionSpec::Spiral { theta0, .. } if !(*theta0 > 1.0) => Err(QuadError::InvalidRegion(
                format!("theta0 = {theta0} must exceed 1"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadSettings {
    /// Angular cells per shell and per angular interval of the region.
    pub cells_per_shell: usize,
    /// Gauss-Legendre order per cell direction; the error estimate compares it
    /// against twice the order.
    pub order: usize,
    /// Shells before the tail cell when the region reaches the origin.
    pub depth: usize,
    /// Radius ratio between consecutive shell boundaries.
    pub ratio: f64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            cells_per_shell: 4,
            order: 8,
            depth: 40,
            ratio: 0.5,
            workers: None,
        }
    }
}

impl QuadSettings {
    fn validate(&self) -> Result<(), QuadError> {
        if self.cells_per_shell == 0 {
            return Err(QuadError::InvalidSettings(
                "cells_per_shell must be positive".into(),
            ));
        }
        if self.order == 0 || 2 * self.order > MAX_RULE_ORDER {
            return Err(QuadError::InvalidSettings(format!(
                "order must lie in 1..={}",
                MAX_RULE_ORDER / 2
            )));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(QuadError::InvalidSettings(format!(
                "ratio {} must lie in (0, 1)",
                self.ratio
            )));
        }
        if self.workers == Some(0) {
            return Err(QuadError::InvalidSettings(
                "workers must be positive".into(),
            ));
        }
        Ok(())
    }

    fn run<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T, QuadError> {
        match self.workers {
            None => Ok(job()),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map(|pool| pool.install(job))
                .map_err(|e| QuadError::ThreadPool(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CellShape {
    /// `t` in `[a, b]`, angular interval `interval`, angular sub-cell `j`.
    Radial {
        a: f64,
        b: f64,
        interval: usize,
        j: usize,
    },
    /// `t` in `[a, inf)` through `t = a / u`.
    RadialTail { a: f64, interval: usize, j: usize },
    /// Strip angle in `[a, b]`, sub-cell `j`.
    Strip { a: f64, b: f64, j: usize },
    /// Strip angle in `[a, inf)` through `theta = a / u`.
    StripTail { a: f64, j: usize },
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    /// Shell index; `usize::MAX` for the tail.
    shell: usize,
    shape: CellShape,
}

#[derive(Debug, Clone, Copy)]
struct CellSum {
    ln_hi: f64,
    ln_lo: f64,
    ln_clamped: f64,
    saturated: bool,
}

struct Layout {
    cells: Vec<Cell>,
    shells: usize,
}

/// Shell structure of a region: shells are uniform in `t` with step `-log(ratio)`.
struct Plan<'a> {
    region: &'a RegionSpec,
    settings: &'a QuadSettings,
    dt: f64,
    t_outer: f64,
}

impl<'a> Plan<'a> {
    fn new(region: &'a RegionSpec, settings: &'a QuadSettings) -> Result<Self, QuadError> {
        region.validate()?;
        settings.validate()?;
        Ok(Self {
            region,
            settings,
            dt: -settings.ratio.ln(),
            t_outer: -region.r_outer().ln(),
        })
    }

    fn angular_intervals(&self) -> usize {
        match self.region {
            RegionSpec::Disk { .. } => 1,
            _ => 2,
        }
    }

    /// Angular interval `k` at log-radius `t`.
    fn interval(&self, t: f64, k: usize) -> (f64, f64) {
        match self.region {
            RegionSpec::Disk { .. } => (-PI, PI),
            RegionSpec::Cusp { side, params, .. } => {
                let gamma = params.curves(t).gamma;
                match (side, k) {
                    (Side::A, 0) => (gamma, PI - gamma),
                    (Side::A, _) => (-PI + gamma, -gamma),
                    (Side::B, 0) => (-gamma, gamma),
                    (Side::B, _) => (PI - gamma, PI + gamma),
                }
            }
            RegionSpec::Spiral { .. } => unreachable!("spiral regions use strip cells"),
        }
    }

    fn fraction_range(&self) -> (f64, f64) {
        match self.region {
            RegionSpec::Spiral {
                region: SpiralRegion::A,
                ..
            } => (0.0, 0.5),
            _ => (0.5, 1.0),
        }
    }

    /// Strip angle where the radius first drops to `outer * ratio^k`.
    fn strip_angle(&self, theta0: f64, k: f64) -> Result<f64, QuadError> {
        if k == 0.0 {
            return Ok(theta0);
        }
        let ln_r = -self.t_outer - k * self.dt;
        let r = ln_r.exp();
        if !(r > 0.0) {
            return Err(QuadError::InvalidSettings(format!(
                "spiral shell {k} lies below the double range"
            )));
        }
        g_inverse(r).map_err(|e| QuadError::InvalidSettings(e.to_string()))
    }

    /// Shell count before the inner radius (if any) and whether a tail follows.
    fn shell_count(&self, limit: Option<usize>) -> Result<(usize, bool), QuadError> {
        let ri = self.region.r_inner();
        if let Some(k) = limit {
            return Ok((k, false));
        }
        if ri > 0.0 {
            let n = ((-ri.ln() - self.t_outer) / self.dt * (1.0 - 1e-12))
                .ceil()
                .max(1.0);
            if n > MAX_SHELLS as f64 {
                return Err(QuadError::InvalidSettings(format!(
                    "{n} shells exceed the limit"
                )));
            }
            Ok((n as usize, false))
        } else {
            Ok((self.settings.depth, true))
        }
    }

    fn layout(&self, limit: Option<usize>) -> Result<Layout, QuadError> {
        let (shells, tail) = self.shell_count(limit)?;
        let cps = self.settings.cells_per_shell;
        let t_inner = match self.region.r_inner() {
            r if r > 0.0 => -r.ln(),
            _ => f64::INFINITY,
        };
        let mut cells = Vec::new();
        match self.region {
            RegionSpec::Spiral { theta0, .. } => {
                let theta_inner = if t_inner.is_finite() {
                    g_inverse((-t_inner).exp())
                        .map_err(|e| QuadError::InvalidSettings(e.to_string()))?
                } else {
                    f64::INFINITY
                };
                for k in 0..shells {
                    let a = self.strip_angle(*theta0, k as f64)?;
                    let b = self.strip_angle(*theta0, (k + 1) as f64)?.min(theta_inner);
                    for j in 0..cps {
                        cells.push(Cell {
                            shell: k,
                            shape: CellShape::Strip { a, b, j },
                        });
                    }
                }
                if tail {
                    let a = self.strip_angle(*theta0, shells as f64)?;
                    for j in 0..cps {
                        cells.push(Cell {
                            shell: usize::MAX,
                            shape: CellShape::StripTail { a, j },
                        });
                    }
                }
            }
            _ => {
                let sub = (self.dt / MAX_CELL_DT).ceil().max(1.0) as usize;
                for k in 0..shells {
                    let ta = self.t_outer + k as f64 * self.dt;
                    let tb = (ta + self.dt).min(t_inner);
                    let h = (tb - ta) / sub as f64;
                    for s in 0..sub {
                        let (a, b) = (ta + s as f64 * h, ta + (s + 1) as f64 * h);
                        for interval in 0..self.angular_intervals() {
                            for j in 0..cps {
                                cells.push(Cell {
                                    shell: k,
                                    shape: CellShape::Radial { a, b, interval, j },
                                });
                            }
                        }
                    }
                }
                if tail {
                    let a = self.t_outer + shells as f64 * self.dt;
                    for interval in 0..self.angular_intervals() {
                        for j in 0..cps {
                            cells.push(Cell {
                                shell: usize::MAX,
                                shape: CellShape::RadialTail { a, interval, j },
                            });
                        }
                    }
                }
            }
        }
        Ok(Layout { cells, shells })
    }

    /// `(log integral, log clamped integral, saturated)` of one cell with `order` nodes.
    fn cell_sum(
        &self,
        f: &dyn Integrand,
        shape: CellShape,
        order: usize,
        clamp: Option<f64>,
    ) -> Result<(f64, f64, bool), QuadError> {
        let rule = gauss_legendre(order);
        let cps = self.settings.cells_per_shell as f64;
        let mut terms = Vec::with_capacity(order * order);
        let mut clamped = Vec::with_capacity(order * order);
        let mut saturated = false;
        let mut push = |lnf: f64, lnw: f64| {
            let mut lc = lnf;
            if let Some(c) = clamp {
                if lnf > c {
                    saturated = true;
                    lc = c;
                }
            }
            terms.push(lnf + lnw);
            clamped.push(lc + lnw);
        };
        let eval = |p: QuadPoint| f.ln_value(&p);
        match shape {
            CellShape::Radial { .. } | CellShape::RadialTail { .. } => {
                let (interval, j) = match shape {
                    CellShape::Radial { interval, j, .. }
                    | CellShape::RadialTail { interval, j, .. } => (interval, j),
                    _ => unreachable!(),
                };
                for (xt, wt) in rule.nodes.iter().zip(&rule.weights) {
                    let (t, ln_wt) = match shape {
                        CellShape::Radial { a, b, .. } => {
                            let half = 0.5 * (b - a);
                            (0.5 * (a + b) + half * xt, (half * wt).ln())
                        }
                        CellShape::RadialTail { a, .. } => {
                            let u = 0.5 * (1.0 + xt);
                            (a / u, (0.5 * wt * a / (u * u)).ln())
                        }
                        _ => unreachable!(),
                    };
                    let (lo, hi) = self.interval(t, interval);
                    let w = (hi - lo) / cps;
                    let start = lo + w * j as f64;
                    let r = (-t).exp();
                    for (xs, ws) in rule.nodes.iter().zip(&rule.weights) {
                        let theta = start + 0.5 * w * (1.0 + xs);
                        let lnf = eval(QuadPoint { t, r, theta })?;
                        push(lnf, ln_wt + (0.5 * w * ws).ln() - 2.0 * t);
                    }
                }
            }
            CellShape::Strip { .. } | CellShape::StripTail { .. } => {
                let (xa, xb) = self.fraction_range();
                for (xt, wt) in rule.nodes.iter().zip(&rule.weights) {
                    let (theta, ln_wt) = match shape {
                        CellShape::Strip { a, b, j } => {
                            let w = (b - a) / cps;
                            let start = a + w * j as f64;
                            (start + 0.5 * w * (1.0 + xt), (0.5 * w * wt).ln())
                        }
                        CellShape::StripTail { a, j } => {
                            let w = 1.0 / cps;
                            let u = w * j as f64 + 0.5 * w * (1.0 + xt);
                            (a / u, (0.5 * w * wt * a / (u * u)).ln())
                        }
                        _ => unreachable!(),
                    };
                    let inner = g(theta + TWO_PI);
                    let width = strip_width(theta);
                    for (xs, ws) in rule.nodes.iter().zip(&rule.weights) {
                        let x = xa + 0.5 * (xb - xa) * (1.0 + xs);
                        let r = inner + x * width;
                        let lnf = eval(QuadPoint {
                            t: -r.ln(),
                            r,
                            theta,
                        })?;
                        push(
                            lnf,
                            ln_wt + (0.5 * (xb - xa) * ws).ln() + r.ln() + width.ln(),
                        );
                    }
                }
            }
        }
        Ok((ln_sum_flat(&terms), ln_sum_flat(&clamped), saturated))
    }

    fn cell(
        &self,
        f: &dyn Integrand,
        shape: CellShape,
        clamp: Option<f64>,
    ) -> Result<CellSum, QuadError> {
        let n = self.settings.order;
        let (ln_hi, ln_clamped, saturated) = self.cell_sum(f, shape, 2 * n, clamp)?;
        let (ln_lo, _, _) = self.cell_sum(f, shape, n, clamp)?;
        Ok(CellSum {
            ln_hi,
            ln_lo,
            ln_clamped,
            saturated,
        })
    }

    /// Per-shell sums followed by the tail (if present).
    fn sums(
        &self,
        f: &dyn Integrand,
        limit: Option<usize>,
        clamp: Option<f64>,
    ) -> Result<Sums, QuadError> {
        let layout = self.layout(limit)?;
        let results: Vec<Result<CellSum, QuadError>> = self.settings.run(|| {
            layout
                .cells
                .par_iter()
                .map(|c| self.cell(f, c.shape, clamp))
                .collect()
        })?;
        let mut groups: Vec<Vec<CellSum>> = vec![Vec::new(); layout.shells + 1];
        for (cell, res) in layout.cells.iter().zip(results) {
            let idx = if cell.shell == usize::MAX {
                layout.shells
            } else {
                cell.shell
            };
            groups[idx].push(res?);
        }
        let mut out = Sums::default();
        for (i, group) in groups.iter().enumerate() {
            if i == layout.shells && group.is_empty() {
                break;
            }
            let hi: Vec<f64> = group.iter().map(|c| c.ln_hi).collect();
            let clamped: Vec<f64> = group.iter().map(|c| c.ln_clamped).collect();
            let err: Vec<f64> = group
                .iter()
                .map(|c| ln_abs_diff(c.ln_hi, c.ln_lo))
                .collect();
            out.ln_values.push(ln_sum(&hi));
            out.ln_clamped.push(ln_sum(&clamped));
            out.ln_errors.push(ln_sum(&err));
            out.saturated |= group.iter().any(|c| c.saturated);
        }
        out.shells = layout.shells;
        out.cells = layout.cells.len();
        Ok(out)
    }

    /// Log-radius at the middle of shell `k`.
    fn shell_t(&self, k: usize) -> f64 {
        self.t_outer + (k as f64 + 0.5) * self.dt
    }
}

#[derive(Debug, Default)]
struct Sums {
    ln_values: Vec<f64>,
    ln_clamped: Vec<f64>,
    ln_errors: Vec<f64>,
    saturated: bool,
    shells: usize,
    cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub ln_value: f64,
    pub ln_error_estimate: f64,
    /// Some node exceeded `EXP_CLAMP_LN`; `value` then uses the clamped integrand.
    pub saturated: bool,
    pub shells: usize,
    pub cells: usize,
}

fn finish(sums: &Sums) -> Integral {
    let ln_value = ln_sum(&sums.ln_values);
    let ln_err = ln_sum(&sums.ln_errors);
    let value = if sums.saturated {
        ln_sum(&sums.ln_clamped).exp()
    } else {
        ln_value.exp()
    };
    Integral {
        value,
        error_estimate: ln_err.exp(),
        ln_value,
        ln_error_estimate: ln_err,
        saturated: sums.saturated,
        shells: sums.shells,
        cells: sums.cells,
    }
}

/// Integral of a nonnegative integrand over `region` with respect to area.
/// Regions reaching the origin get `settings.depth` shells plus one tail cell.
pub fn integrate(
    f: &dyn Integrand,
    region: &RegionSpec,
    settings: &QuadSettings,
) -> Result<Integral, QuadError> {
    let plan = Plan::new(region, settings)?;
    Ok(finish(&plan.sums(f, None, None)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// `F`.
    Raw,
    /// `F^p`.
    Power { p: f64 },
    /// `F log^mu(e + F)`.
    Zygmund { mu: f64 },
    /// `exp(lambda F)`.
    Exp { lambda: f64 },
}

impl Transform {
    /// `log T(F)` from `log F`.
    pub fn apply_ln(&self, ln_f: f64) -> f64 {
        match *self {
            Transform::Raw => ln_f,
            Transform::Power { p } => {
                if ln_f == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    p * ln_f
                }
            }
            Transform::Zygmund { mu } => {
                let ln_e_plus = if ln_f > 1.0 {
                    ln_f + (E * (-ln_f).exp()).ln_1p()
                } else {
                    (E + ln_f.exp()).ln()
                };
                ln_f + mu * ln_e_plus.ln()
            }
            Transform::Exp { lambda } => lambda * ln_f.exp(),
        }
    }
}

pub struct NormQuery<'a> {
    pub map: &'a MapFamily,
    pub quantity: Quantity,
    pub transform: Transform,
    pub region: RegionSpec,
    pub settings: QuadSettings,
}

struct QueryIntegrand<'a> {
    map: &'a MapFamily,
    branch: Branch,
    quantity: Quantity,
    transform: Transform,
}

impl Integrand for QueryIntegrand<'_> {
    fn ln_value(&self, p: &QuadPoint) -> Result<f64, QuadError> {
        let ln_f = self
            .map
            .ln_quantity(self.branch, self.quantity, p)
            .map_err(|source| QuadError::Family {
                source,
                t: p.t,
                theta: p.theta,
            })?;
        let v = self.transform.apply_ln(ln_f);
        if v.is_nan() {
            return Err(QuadError::NotANumber {
                t: p.t,
                theta: p.theta,
            });
        }
        Ok(v)
    }
}

impl<'a> NormQuery<'a> {
    fn integrand(&self) -> QueryIntegrand<'a> {
        QueryIntegrand {
            map: self.map,
            branch: self.region.branch(),
            quantity: self.quantity,
            transform: self.transform,
        }
    }

    fn clamp(&self) -> Option<f64> {
        match self.transform {
            Transform::Exp { .. } => Some(EXP_CLAMP_LN),
            _ => None,
        }
    }
}

/// `int_region T(quantity)`.
pub fn norm_value(q: &NormQuery) -> Result<Integral, QuadError> {
    let plan = Plan::new(&q.region, &q.settings)?;
    Ok(finish(&plan.sums(&q.integrand(), None, q.clamp())?))
}

/// Shell contributions of a query with radius ratio `ratio`, classified.
/// Classification uses unclamped log values.
pub fn shell_profile(
    q: &NormQuery,
    ratio: f64,
    k_max: usize,
) -> Result<ConvergenceVerdict, QuadError> {
    let settings = QuadSettings {
        ratio,
        ..q.settings
    };
    profile_of(&q.integrand(), &q.region, &settings, k_max)
}

/// Shell profile of the sum of several queries over the same shells, e.g. both
/// halves of a partition.
pub fn shell_profile_union(
    queries: &[NormQuery],
    ratio: f64,
    k_max: usize,
) -> Result<ConvergenceVerdict, QuadError> {
    let first = queries
        .first()
        .ok_or_else(|| QuadError::InvalidRegion("no regions given".into()))?;
    let r_outer = first.region.r_outer();
    let mut total = vec![f64::NEG_INFINITY; k_max];
    let mut ts = Vec::new();
    for q in queries {
        if q.region.r_outer() != r_outer {
            return Err(QuadError::InvalidRegion(
                "regions must share r_outer".into(),
            ));
        }
        let settings = QuadSettings {
            ratio,
            ..q.settings
        };
        let plan = Plan::new(&q.region, &settings)?;
        let sums = plan.sums(&q.integrand(), Some(k_max), None)?;
        for (acc, v) in total.iter_mut().zip(&sums.ln_values) {
            *acc = ln_add(*acc, *v);
        }
        ts = (0..k_max).map(|k| plan.shell_t(k)).collect();
    }
    Ok(classify_shells(&total, &ts))
}

/// Shell contributions of a general integrand, classified.
pub fn profile_of(
    f: &dyn Integrand,
    region: &RegionSpec,
    settings: &QuadSettings,
    k_max: usize,
) -> Result<ConvergenceVerdict, QuadError> {
    if k_max == 0 {
        return Err(QuadError::InvalidSettings("k_max must be positive".into()));
    }
    let plan = Plan::new(region, settings)?;
    let sums = plan.sums(f, Some(k_max), None)?;
    let ts: Vec<f64> = (0..k_max).map(|k| plan.shell_t(k)).collect();
    Ok(classify_shells(&sums.ln_values, &ts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Geometric,
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceVerdict {
    pub partial_value: f64,
    pub ln_partial_value: f64,
    pub shell_contributions: Vec<f64>,
    pub ln_shell_contributions: Vec<f64>,
    /// `log(1/r)` at the middle of each shell.
    pub shell_log_radii: Vec<f64>,
    /// Per-shell factor of the geometric fit `c_k ~ C rho^k`.
    pub geometric_ratio: f64,
    /// Exponent `s` of the fit `c_k ~ C log^-s(1/r_k)`.
    pub log_exponent: f64,
    pub model: DecayModel,
    /// Slope of the selected fit: `log rho` or `-s`.
    pub fitted_slope: f64,
    /// Tail estimate relative to the partial sum, where the model gives one.
    pub relative_tail: Option<f64>,
    pub verdict: Verdict,
    pub verdict_basis: String,
}

/// `(slope, intercept, residual sum of squares)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icept = my - slope * mx;
    let rss = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - icept - slope * x).powi(2))
        .sum();
    (slope, icept, rss)
}

/// Margin around 1 for the log-power exponent.
pub const SLOPE_MARGIN: f64 = 0.1;
/// Largest relative tail a geometric fit may leave for a convergent verdict.
pub const TAIL_FRACTION: f64 = 1e-3;

/// Classifies shell contributions `ln_c` taken at log-radii `ts`.
///
/// The fits use the last `max(6, n/2)` shells. A nondecreasing window or a
/// nonnegative geometric trend is divergent. A geometric fit that beats the
/// log-power fit and bounds the tail below `1e-3` of the partial sum is
/// convergent. Otherwise the log-power exponent decides, with margin `0.1`
/// around 1.
pub fn classify_shells(ln_c: &[f64], ts: &[f64]) -> ConvergenceVerdict {
    let n = ln_c.len();
    let ln_partial = ln_sum(ln_c);
    let mut out = ConvergenceVerdict {
        partial_value: ln_partial.exp(),
        ln_partial_value: ln_partial,
        shell_contributions: ln_c.iter().map(|v| v.exp()).collect(),
        ln_shell_contributions: ln_c.to_vec(),
        shell_log_radii: ts.to_vec(),
        geometric_ratio: f64::NAN,
        log_exponent: f64::NAN,
        model: DecayModel::Geometric,
        fitted_slope: f64::NAN,
        relative_tail: None,
        verdict: Verdict::Inconclusive,
        verdict_basis: String::new(),
    };
    if n < 3 {
        out.verdict_basis = format!("only {n} shells");
        return out;
    }
    let w = 6.max(n / 2).min(n);
    let window = &ln_c[n - w..];
    let wts = &ts[n - w..];
    if window.iter().all(|v| *v == f64::NEG_INFINITY) {
        out.verdict = Verdict::Convergent;
        out.verdict_basis = "contributions vanish in the fitting window".into();
        return out;
    }
    let pts: Vec<(f64, f64, f64)> = window
        .iter()
        .zip(wts)
        .enumerate()
        .filter(|(_, (v, _))| v.is_finite())
        .map(|(i, (v, t))| ((n - w + i) as f64, t.ln(), *v))
        .collect();
    if pts.len() < 3 {
        out.verdict_basis = format!("only {} usable shells", pts.len());
        return out;
    }
    let ks: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let lts: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let (b_geo, _, rss_geo) = linear_fit(&ks, &ys);
    let (b_pow, _, rss_pow) = linear_fit(&lts, &ys);
    let s = -b_pow;
    out.geometric_ratio = b_geo.exp();
    out.log_exponent = s;
    let geometric_better = rss_geo <= rss_pow;
    out.model = if geometric_better {
        DecayModel::Geometric
    } else {
        DecayModel::PowerLaw
    };
    out.fitted_slope = if geometric_better { b_geo } else { b_pow };

    if window.windows(2).all(|p| p[1] - p[0] >= -1e-9) {
        out.verdict = Verdict::Divergent;
        out.verdict_basis = "shell contributions are nondecreasing".into();
        return out;
    }
    if b_geo >= 0.0 {
        out.verdict = Verdict::Divergent;
        out.verdict_basis = format!(
            "shell contributions trend upward by {:.4} per shell",
            b_geo.exp()
        );
        return out;
    }
    let last = *ys.last().unwrap();
    if geometric_better {
        // c_last * rho / (1 - rho)
        let ln_tail = last + b_geo - (-b_geo.exp_m1()).ln();
        let rel = (ln_tail - ln_partial).exp();
        out.relative_tail = Some(rel);
        if rel < TAIL_FRACTION {
            out.verdict = Verdict::Convergent;
            out.verdict_basis = format!(
                "geometric decay, ratio {:.4} per shell, tail {:.2e} of the partial sum",
                b_geo.exp(),
                rel
            );
            return out;
        }
    } else if s > 1.0 {
        let dt = (ts[n - 1] - ts[0]) / (n.max(2) - 1) as f64;
        let t_last = ts[n - 1];
        let ln_tail = last + (t_last / ((s - 1.0) * dt.max(f64::MIN_POSITIVE))).ln();
        out.relative_tail = Some((ln_tail - ln_partial).exp());
    }
    if s >= 1.0 + SLOPE_MARGIN {
        out.verdict = Verdict::Convergent;
        out.verdict_basis = format!("log-power decay with exponent {s:.3} > 1");
    } else if s <= 1.0 - SLOPE_MARGIN {
        out.verdict = Verdict::Divergent;
        out.verdict_basis = format!("log-power decay with exponent {s:.3} < 1");
    } else {
        out.verdict_basis = format!("log-power exponent {s:.3} is within {SLOPE_MARGIN} of 1");
    }
    out
}
