//! Numerical oracles for standalone inequalities: a Young-type inequality for
//! `exp`, an integrated differential inequality, a radial lower bound for
//! `int ds / (s K)`, a reverse Hoelder ratio monitor and log-exponent fits.

use std::f64::consts::E;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::family::{FamilyError, MapFamily};
use crate::quadrature::{adaptive, gauss_legendre, ln_add};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LemmaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{0} is not monotone on the grid")]
    NotMonotone(&'static str),
    #[error("hypothesis violated by {excess:e} at r = {r}")]
    HypothesisViolated { r: f64, excess: f64 },
    #[error("need R < R0 = {r0}, got R = {big_r}")]
    OuterRadiusTooLarge { big_r: f64, r0: f64 },
    #[error("need r < R / e^3 = {limit}, got r = {r}")]
    InnerRadiusTooLarge { r: f64, limit: f64 },
    #[error(
        "cube centered at {center:?} with half-width {half_width} leaves the domain: {source}"
    )]
    CubeOutsideDomain {
        center: [f64; 2],
        half_width: f64,
        source: FamilyError,
    },
    #[error("fit needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("radii span {decades:.2} decades, need 6")]
    InsufficientSpan { decades: f64 },
    #[error("sample {index} has nonpositive value {value}")]
    NonpositiveSample { index: usize, value: f64 },
}

/// Sharp constant `A` in `exp(t) >= A t^(2 kappa)` for `t >= 0`, attained at `t = 2 kappa`.
pub fn exp_power_constant(kappa: f64) -> f64 {
    (E / (2.0 * kappa)).powf(2.0 * kappa)
}

/// `C(kappa, lambda)` with `a b < exp(lambda a^(1/kappa)) + C b log^kappa(e + b)`.
pub fn exp_young_constant(kappa: f64, lambda: f64) -> f64 {
    let a = exp_power_constant(kappa);
    let l = (1.0 / (a * lambda.powf(2.0 * kappa))).ln().abs();
    (2.0 / lambda).powf(kappa) * l.powf(kappa) + (4.0 / lambda).powf(kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpYoungCase {
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub lambda: f64,
}

impl ExpYoungCase {
    /// `log(a b) - log(rhs)`; negative when the inequality holds. Computed in
    /// log space, so an overflowing `exp` term counts as holding.
    pub fn log_margin(&self) -> f64 {
        let lhs = self.a.ln() + self.b.ln();
        let exp_term = self.lambda * self.a.powf(1.0 / self.kappa);
        let c = exp_young_constant(self.kappa, self.lambda);
        let young = c.ln() + self.b.ln() + self.kappa * (E + self.b).ln().ln();
        lhs - ln_add(exp_term, young)
    }

    pub fn holds(&self) -> bool {
        self.log_margin() < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpYoungSuite {
    pub cases: usize,
    pub seed: u64,
    pub violations: usize,
    /// Largest `log(lhs / rhs)` seen.
    pub worst_log_margin: f64,
    pub worst_case: Option<ExpYoungCase>,
}

/// Random cases: `a, b` log-uniform on `[1e-6, 1e6]` (every 97th case sets one of
/// them to 0), `kappa, lambda` uniform on `[0.25, 4]`.
pub fn exp_young_cases(count: usize, seed: u64) -> Vec<ExpYoungCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut a = 10f64.powf(rng.gen_range(-6.0..6.0));
            let mut b = 10f64.powf(rng.gen_range(-6.0..6.0));
            if i % 97 == 0 {
                a = 0.0;
            } else if i % 97 == 1 {
                b = 0.0;
            }
            ExpYoungCase {
                a,
                b,
                kappa: rng.gen_range(0.25..4.0),
                lambda: rng.gen_range(0.25..4.0),
            }
        })
        .collect()
}

pub fn exp_young_suite(count: usize, seed: u64) -> ExpYoungSuite {
    let cases = exp_young_cases(count, seed);
    let margins: Vec<f64> = cases.par_iter().map(|c| c.log_margin()).collect();
    let mut out = ExpYoungSuite {
        cases: count,
        seed,
        violations: 0,
        worst_log_margin: f64::NEG_INFINITY,
        worst_case: None,
    };
    for (c, m) in cases.iter().zip(margins) {
        if !(m < 0.0) {
            out.violations += 1;
        }
        if !(m <= out.worst_log_margin) {
            out.worst_log_margin = m;
            out.worst_case = Some(*c);
        }
    }
    out
}

type Scalar = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// `Phi <= A (Psi / Psi') Phi' + Gamma` on `(0, R]` with `Phi <= S`.
pub struct DiffIneqInstance {
    pub a: f64,
    pub big_r: f64,
    pub s: f64,
    pub phi: Scalar,
    pub phi_prime: Scalar,
    pub psi: Scalar,
    pub psi_prime: Scalar,
    pub gamma: Scalar,
    pub gamma_prime: Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffIneqReport {
    pub grid: usize,
    pub r_min: f64,
    /// `(S - Gamma(R)) / Psi^(1/A)(R)`.
    pub constant: f64,
    /// Largest `Phi - (Gamma + Psi^(1/A) (C + int_r^R Gamma' / Psi^(1/A)))`.
    pub max_excess: f64,
    /// Largest `Phi - (Gamma + C' Psi^(1/A) (1 + int_r^R Gamma' / Psi^(1/A)))`
    /// with `C' = max(C, 1)`.
    pub max_excess_factored: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Checks the integrated bound on a geometric grid of `grid` radii in
/// `[r_min, R]`, after confirming monotonicity, `Phi <= S` and the hypothesis.
pub fn check_diff_ineq(
    inst: &DiffIneqInstance,
    grid: usize,
    r_min: f64,
) -> Result<DiffIneqReport, LemmaError> {
    let big_r = inst.big_r;
    if !(inst.a > 0.0 && big_r > 0.0 && inst.s > 0.0 && r_min > 0.0 && r_min < big_r && grid >= 2) {
        return Err(LemmaError::InvalidInput(
            "need A, R, S > 0, 0 < r_min < R and grid >= 2".into(),
        ));
    }
    let tol = 1e-9 * (1.0 + inst.s);
    let radii: Vec<f64> = (0..grid)
        .map(|i| r_min * (big_r / r_min).powf(i as f64 / (grid - 1) as f64))
        .collect();
    for (name, f) in [
        ("Phi", &inst.phi),
        ("Psi", &inst.psi),
        ("Gamma", &inst.gamma),
    ] {
        if radii.windows(2).any(|w| f(w[1]) < f(w[0]) - tol) {
            return Err(LemmaError::NotMonotone(name));
        }
    }
    for &r in &radii {
        let phi = (inst.phi)(r);
        if phi > inst.s + tol {
            return Err(LemmaError::InvalidInput(format!(
                "Phi({r}) = {phi} exceeds S"
            )));
        }
        let rhs =
            inst.a * (inst.psi)(r) / (inst.psi_prime)(r) * (inst.phi_prime)(r) + (inst.gamma)(r);
        if phi - rhs > tol {
            return Err(LemmaError::HypothesisViolated {
                r,
                excess: phi - rhs,
            });
        }
    }
    let inv_a = 1.0 / inst.a;
    let root = |r: f64| (inst.psi)(r).powf(inv_a);
    let c = (inst.s - (inst.gamma)(big_r)) / root(big_r);
    let c_factored = c.max(1.0);
    // inner integrals accumulated from R inwards, panel by panel
    let mut integral = vec![0.0; grid];
    for i in (0..grid - 1).rev() {
        let est = adaptive(
            |s| (inst.gamma_prime)(s) / root(s),
            radii[i],
            radii[i + 1],
            1e-14,
            1e-13,
        );
        integral[i] = integral[i + 1] + est.value;
    }
    let (mut worst, mut worst_factored) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, &r) in radii.iter().enumerate() {
        let phi = (inst.phi)(r);
        let gam = (inst.gamma)(r);
        let bound = gam + root(r) * (c + integral[i]);
        let bound_factored = gam + c_factored * root(r) * (1.0 + integral[i]);
        worst = worst.max(phi - bound);
        worst_factored = worst_factored.max(phi - bound_factored);
    }
    Ok(DiffIneqReport {
        grid,
        r_min,
        constant: c,
        max_excess: worst,
        max_excess_factored: worst_factored,
        tolerance: tol,
        holds: worst <= tol && worst_factored <= tol,
    })
}

/// Parameters of a random instance: `Psi = r^beta (1 + c_psi r)`,
/// `Gamma = c_gamma r^alpha`, and `Phi` solving
/// `Phi' = (Phi - Gamma)_+ Psi' / (A slack Psi) + drift` from `Phi(r_start) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffIneqRecipe {
    pub a: f64,
    pub beta: f64,
    pub c_psi: f64,
    pub alpha: f64,
    pub c_gamma: f64,
    pub slack: f64,
    pub drift: f64,
    pub r_start: f64,
}

impl DiffIneqRecipe {
    /// The growth exponent `beta / (A slack)` of `Phi` is drawn from `[0.2, 3]`
    /// so `S` stays moderate.
    pub fn random(rng: &mut impl Rng) -> Self {
        let a = rng.gen_range(0.5..3.0);
        let slack = rng.gen_range(0.25..=1.0);
        let growth = rng.gen_range(0.2..3.0);
        Self {
            a,
            beta: growth * a * slack,
            c_psi: rng.gen_range(0.0..2.0),
            alpha: rng.gen_range(0.2..2.0),
            c_gamma: if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(0.0..1.0)
            },
            slack,
            drift: rng.gen_range(0.0..1.0),
            r_start: 1e-7,
        }
    }

    /// Builds the instance on `[r_start, 1]` by RK4 in `log r`; `Phi` between
    /// nodes is cubic Hermite.
    pub fn build(&self, steps: usize) -> DiffIneqInstance {
        let p = *self;
        let psi = move |r: f64| r.powf(p.beta) * (1.0 + p.c_psi * r);
        // r Psi' / Psi
        let log_slope = move |r: f64| p.beta + p.c_psi * r / (1.0 + p.c_psi * r);
        let gamma = move |r: f64| p.c_gamma * r.powf(p.alpha);
        let rhs = move |r: f64, phi: f64| {
            (phi - gamma(r)).max(0.0) * log_slope(r) / (p.a * p.slack * r) + p.drift
        };
        let (u0, u1) = (p.r_start.ln(), 0.0);
        let h = (u1 - u0) / steps as f64;
        let mut us = Vec::with_capacity(steps + 1);
        let mut phis = Vec::with_capacity(steps + 1);
        let mut phi = 0.0;
        for k in 0..=steps {
            let u = u0 + h * k as f64;
            us.push(u);
            phis.push(phi);
            if k == steps {
                break;
            }
            // d phi / du = r phi'(r)
            let du = |u: f64, y: f64| {
                let r = u.exp();
                r * rhs(r, y)
            };
            let k1 = du(u, phi);
            let k2 = du(u + 0.5 * h, phi + 0.5 * h * k1);
            let k3 = du(u + 0.5 * h, phi + 0.5 * h * k2);
            let k4 = du(u + h, phi + h * k3);
            phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let s = *phis.last().unwrap();
        let table = (us, phis);
        let phi_fn = move |r: f64| {
            let (us, phis) = (&table.0, &table.1);
            let u = r.ln();
            if u <= us[0] {
                return 0.0;
            }
            let pos = ((u - us[0]) / h).floor() as usize;
            let i = pos.min(us.len() - 2);
            let (ua, ub) = (us[i], us[i + 1]);
            let (ya, yb) = (phis[i], phis[i + 1]);
            let (da, db) = (ua.exp() * rhs(ua.exp(), ya), ub.exp() * rhs(ub.exp(), yb));
            let x = (u - ua) / h;
            let (x2, x3) = (x * x, x * x * x);
            (2.0 * x3 - 3.0 * x2 + 1.0) * ya
                + (x3 - 2.0 * x2 + x) * h * da
                + (-2.0 * x3 + 3.0 * x2) * yb
                + (x3 - x2) * h * db
        };
        let phi_fn = std::sync::Arc::new(phi_fn);
        let phi_eval = phi_fn.clone();
        DiffIneqInstance {
            a: p.a,
            big_r: 1.0,
            s,
            phi: Box::new(move |r| phi_fn(r)),
            phi_prime: Box::new(move |r| {
                if r < p.r_start {
                    0.0
                } else {
                    rhs(r, phi_eval(r))
                }
            }),
            psi: Box::new(psi),
            psi_prime: Box::new(move |r| psi(r) * log_slope(r) / r),
            gamma: Box::new(gamma),
            gamma_prime: Box::new(move |r| p.c_gamma * p.alpha * r.powf(p.alpha - 1.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffIneqSuite {
    pub instances: usize,
    pub seed: u64,
    pub failures: usize,
    pub worst_excess: f64,
    pub reports: Vec<(DiffIneqRecipe, DiffIneqReport)>,
}

/// Random instances that satisfy the hypothesis by construction, checked on a
/// grid of `grid` radii in `[1e-6, 1]`.
pub fn diff_ineq_suite(count: usize, seed: u64, grid: usize) -> Result<DiffIneqSuite, LemmaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let recipes: Vec<DiffIneqRecipe> = (0..count)
        .map(|_| DiffIneqRecipe::random(&mut rng))
        .collect();
    let reports: Vec<Result<DiffIneqReport, LemmaError>> = recipes
        .par_iter()
        .map(|r| check_diff_ineq(&r.build(20_000), grid, 1e-6))
        .collect();
    let mut out = DiffIneqSuite {
        instances: count,
        seed,
        failures: 0,
        worst_excess: f64::NEG_INFINITY,
        reports: Vec::with_capacity(count),
    };
    for (recipe, rep) in recipes.into_iter().zip(reports) {
        let rep = rep?;
        if !rep.holds {
            out.failures += 1;
        }
        out.worst_excess = out
            .worst_excess
            .max(rep.max_excess.max(rep.max_excess_factored));
        out.reports.push((recipe, rep));
    }
    Ok(out)
}

/// Radial distortion profile `K(s)` on a ball centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialProfile {
    Constant {
        value: f64,
    },
    /// `K(s) = log(1/s)`.
    LogInverse,
}

impl RadialProfile {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            RadialProfile::Constant { value } => value,
            RadialProfile::LogInverse => -s.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripleJensenInstance {
    pub n: u32,
    pub lambda: f64,
    pub profile: RadialProfile,
    /// Radius of the ball `Omega` carrying the profile.
    pub domain_radius: f64,
    pub big_r: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripleJensenReport {
    /// `int_Omega exp(lambda K~) / |S^(n-1)|`.
    pub c: f64,
    /// `(C e)^(1/n)`.
    pub r0: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// `int_r^R ds / (s K(s))` against
/// `(lambda/n) (log log(C / r^n) - log log(C e^2 / R^n))` for a radial profile
/// centered at the origin, where the spherical means of `K^(n-1)` are `K(s)^(n-1)`.
pub fn triple_jensen_check(inst: &TripleJensenInstance) -> Result<TripleJensenReport, LemmaError> {
    let n = inst.n as f64;
    if inst.n < 2 || !(inst.lambda > 0.0) || !(inst.r > 0.0) || !(inst.big_r <= inst.domain_radius)
    {
        return Err(LemmaError::InvalidInput(
            "need n >= 2, lambda > 0, r > 0 and R inside the domain".into(),
        ));
    }
    let floor = (n - 2.0) / inst.lambda;
    let k_tilde = |s: f64| inst.profile.value(s).max(floor);
    // C = int_0^rho s^(n-1) exp(lambda K~(s)) ds, in s = rho e^-v
    let rho = inst.domain_radius;
    let integrand = |v: f64| {
        let s = rho * (-v).exp();
        s.powf(n) * (inst.lambda * k_tilde(s)).exp()
    };
    let mut c = 0.0;
    let mut lo = 0.0;
    loop {
        let piece = adaptive(integrand, lo, lo + 8.0, 1e-300, 1e-13).value;
        c += piece;
        lo += 8.0;
        if piece <= 1e-17 * c || lo > 4000.0 {
            break;
        }
    }
    let r0 = (c * E).powf(1.0 / n);
    if !(inst.big_r < r0) {
        return Err(LemmaError::OuterRadiusTooLarge {
            big_r: inst.big_r,
            r0,
        });
    }
    let limit = inst.big_r / E.powi(3);
    if !(inst.r < limit) {
        return Err(LemmaError::InnerRadiusTooLarge { r: inst.r, limit });
    }
    let lhs = adaptive(
        |u: f64| 1.0 / inst.profile.value(u.exp()),
        inst.r.ln(),
        inst.big_r.ln(),
        1e-14,
        1e-13,
    )
    .value;
    let rhs = inst.lambda / n
        * ((c.ln() - n * inst.r.ln()).ln() - (c.ln() + 2.0 - n * inst.big_r.ln()).ln());
    Ok(TripleJensenReport {
        c,
        r0,
        lhs,
        rhs,
        margin: lhs - rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cube {
    pub center: [f64; 2],
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReverseHolderReport {
    pub cells: usize,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// Means of `|Df|^2`, `|Df|^(4/3)`, `Sigma` and the largest `K` over a square,
/// with `cells x cells` Gauss-Legendre panels of order 8.
fn square_means(map: &MapFamily, q: Cube, cells: usize) -> Result<[f64; 4], LemmaError> {
    let rule = gauss_legendre(8);
    let h = 2.0 * q.half_width / cells as f64;
    let mut sums = [0.0; 3];
    let mut k_max = 0.0f64;
    let mut weight_total = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            let x0 = q.center[0] - q.half_width + h * i as f64;
            let y0 = q.center[1] - q.half_width + h * j as f64;
            for (xa, wa) in rule.nodes.iter().zip(&rule.weights) {
                for (ya, wb) in rule.nodes.iter().zip(&rule.weights) {
                    let x = x0 + 0.5 * h * (1.0 + xa);
                    let y = y0 + 0.5 * h * (1.0 + ya);
                    let err = |source| LemmaError::CubeOutsideDomain {
                        center: q.center,
                        half_width: q.half_width,
                        source,
                    };
                    let pt = map.point_from_cartesian(x, y).map_err(err)?;
                    let s = map.sample(pt).map_err(err)?;
                    let w = wa * wb;
                    let n2 = s.op_norm * s.op_norm;
                    sums[0] += w * n2;
                    sums[1] += w * n2.powf(2.0 / 3.0);
                    sums[2] += w * s.sigma;
                    k_max = k_max.max(s.k);
                    weight_total += w;
                }
            }
        }
    }
    Ok([
        sums[0] / weight_total,
        sums[1] / weight_total,
        sums[2] / weight_total,
        k_max,
    ])
}

/// For each square `Q`: `(mean_Q |Df|^2)^(2/3)` divided by
/// `sup_2Q K^(2/3) (mean_2Q |Df|^(4/3) + (mean_2Q Sigma)^(2/3))`.
pub fn reverse_holder_ratio(
    map: &MapFamily,
    cubes: &[Cube],
    cells: usize,
) -> Result<ReverseHolderReport, LemmaError> {
    if cells == 0 || cubes.is_empty() {
        return Err(LemmaError::InvalidInput(
            "need at least one cube and one cell".into(),
        ));
    }
    let ratios: Vec<Result<f64, LemmaError>> = cubes
        .par_iter()
        .map(|&q| {
            let inner = square_means(map, q, cells)?;
            let outer = square_means(
                map,
                Cube {
                    center: q.center,
                    half_width: 2.0 * q.half_width,
                },
                cells,
            )?;
            let num = inner[0].powf(2.0 / 3.0);
            if num == 0.0 {
                return Ok(0.0);
            }
            Ok(num / (outer[3].powf(2.0 / 3.0) * (outer[1] + outer[2].powf(2.0 / 3.0))))
        })
        .collect();
    let ratios: Vec<f64> = ratios.into_iter().collect::<Result<_, _>>()?;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(ReverseHolderReport {
        cells,
        ratios,
        max_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogExponentFit {
    pub alpha_hat: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Least-squares slope of `log omega` against `log log(1/r)`; `alpha_hat = -slope`.
pub fn fit_log_exponent(samples: &[(f64, f64)]) -> Result<LogExponentFit, LemmaError> {
    if samples.len() < 8 {
        return Err(LemmaError::TooFewSamples {
            needed: 8,
            got: samples.len(),
        });
    }
    for (i, &(r, w)) in samples.iter().enumerate() {
        if !(w > 0.0) {
            return Err(LemmaError::NonpositiveSample { index: i, value: w });
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(LemmaError::InvalidInput(format!(
                "radius {r} outside (0, 1)"
            )));
        }
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(r, _)| {
            (lo.min(r), hi.max(r))
        });
    let decades = (hi / lo).log10();
    if decades < 6.0 {
        return Err(LemmaError::InsufficientSpan { decades });
    }
    let xs: Vec<f64> = samples.iter().map(|&(r, _)| (-r.ln()).ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, w)| w.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    Ok(LogExponentFit {
        alpha_hat: -slope,
        stderr: (rss / (n - 2.0) / sxx).sqrt(),
        samples: samples.len(),
    })
}
