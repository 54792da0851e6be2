//! The five subcommands. Each one appends checks to a [`Runner`].

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use distortion_lab::cusp::{self, CuspParams, Side};
use distortion_lab::family::{Branch, MapFamily, Quantity};
use distortion_lab::fields::{
    blowup_check, derivative_batch, fd_jacobian_richardson, inclusion_batch, interface_batch,
    modulus_samples, sample_sites, CheckError,
};
use distortion_lab::geometry::Mat2;
use distortion_lab::lemmas::{
    check_diff_ineq, diff_ineq_suite, exp_young_suite, fit_log_exponent, reverse_holder_ratio,
    triple_jensen_check, Cube, DiffIneqInstance, RadialProfile, TripleJensenInstance,
};
use distortion_lab::quadrature::{
    profile_of, shell_profile_union, ConvergenceVerdict, LogValues, NormQuery, QuadPoint,
    QuadSettings, RegionSpec, Transform, Verdict, SLOPE_MARGIN, TAIL_FRACTION,
};
use distortion_lab::spiral::SpiralRegion;
use serde_json::{json, Value};

use crate::options::Options;
use crate::presets::{Preset, Resolved};
use crate::report::{Check, Runner, Status};
use crate::CliError;

type Settings = BTreeMap<String, Value>;

const INCLUSION_TOL: f64 = 1e-9;
const DERIVATIVE_TOL: f64 = 1e-6;
const DERIVATIVE_STEP: f64 = 1e-2;
const INTERFACE_TOL: f64 = 1e-8;
const INTERFACE_OFFSET: f64 = 1e-5;
const INTERFACE_SAMPLES: usize = 1000;
const BLOWUP_LEVELS: [f64; 3] = [1.0, 2.0, 4.0];
const BLOWUP_SAMPLES: usize = 1000;

/// Shell ratio and count of a convergence profile.
#[derive(Debug, Clone, Copy)]
struct ShellPlan {
    ratio: f64,
    shells: usize,
}

const STANDARD: ShellPlan = ShellPlan {
    ratio: 0.5,
    shells: 40,
};

impl ShellPlan {
    fn new(ratio_ln: f64, shells: usize) -> Self {
        Self {
            ratio: (-ratio_ln).exp(),
            shells,
        }
    }

    /// `--ratio` and `--depth` replace the default plan.
    fn overridden(self, opts: &Options) -> Self {
        Self {
            ratio: opts.ratio.unwrap_or(self.ratio),
            shells: opts.depth.unwrap_or(self.shells),
        }
    }
}

fn quad_settings(opts: &Options) -> Result<QuadSettings, CliError> {
    let s = QuadSettings {
        cells_per_shell: opts
            .cells
            .unwrap_or(QuadSettings::default().cells_per_shell),
        order: opts.order.unwrap_or(QuadSettings::default().order),
        ..QuadSettings::default()
    };
    if s.cells_per_shell == 0 || s.order == 0 {
        return Err(CliError::Usage(
            "--cells and --order must be positive".into(),
        ));
    }
    if let Some(r) = opts.ratio {
        if !(r > 0.0 && r < 1.0) {
            return Err(CliError::Usage(format!("--ratio {r} must lie in (0, 1)")));
        }
    }
    if opts.depth == Some(0) {
        return Err(CliError::Usage("--depth must be positive".into()));
    }
    Ok(s)
}

fn record_quad(settings: &mut Settings, q: &QuadSettings) {
    settings.insert("cells_per_shell".into(), json!(q.cells_per_shell));
    settings.insert("order".into(), json!(q.order));
}

/// The partition the integrals run over: both sides of a cusp, both spiral
/// regions, or the disk of radius 1/2 for the radial families.
fn partition(map: &MapFamily) -> Vec<RegionSpec> {
    match map {
        MapFamily::Cusp(p) => vec![RegionSpec::cusp(Side::A, *p), RegionSpec::cusp(Side::B, *p)],
        MapFamily::Spiral(s) => vec![
            RegionSpec::spiral(SpiralRegion::A, s.params.theta0),
            RegionSpec::spiral(SpiralRegion::B, s.params.theta0),
        ],
        _ => vec![RegionSpec::disk(0.5)],
    }
}

fn cusp_params(map: &MapFamily) -> Option<CuspParams> {
    match map {
        MapFamily::Cusp(p) => Some(*p),
        _ => None,
    }
}

fn profile(
    map: &MapFamily,
    quantity: Quantity,
    transform: Transform,
    regions: &[RegionSpec],
    quad: QuadSettings,
    plan: ShellPlan,
) -> Result<ConvergenceVerdict, CliError> {
    let queries: Vec<NormQuery> = regions
        .iter()
        .map(|&region| NormQuery {
            map,
            quantity,
            transform,
            region,
            settings: quad,
        })
        .collect();
    Ok(shell_profile_union(&queries, plan.ratio, plan.shells)?)
}

/// Finiteness of the leading-order radial integral for a cusp power claim.
fn reduced_oracle(
    map: &MapFamily,
    quantity: Quantity,
    transform: Transform,
    regions: &[RegionSpec],
) -> Option<bool> {
    let params = cusp_params(map)?;
    let q = match transform {
        Transform::Raw => 1.0,
        Transform::Power { p } => p,
        _ => return None,
    };
    let mut finite = true;
    for r in regions {
        let side = match r.branch() {
            Branch::Cusp(side) => side,
            _ => return None,
        };
        finite &= cusp::power_integral_finite(&params, side, quantity, q)?;
    }
    Some(finite)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Convergent => "convergent",
        Verdict::Divergent => "divergent",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn profile_detail(
    v: &ConvergenceVerdict,
    plan: ShellPlan,
    expected: Option<Verdict>,
    oracle: Option<bool>,
) -> Value {
    json!({
        "verdict": v.verdict,
        "verdict_basis": v.verdict_basis,
        "measure": "partial sum over the shells; tolerance is the relative tail allowed for a geometric verdict",
        "slope_margin": SLOPE_MARGIN,
        "expected": expected,
        "reduced_integral_finite": oracle,
        "model": v.model,
        "log_exponent": v.log_exponent,
        "geometric_ratio": v.geometric_ratio,
        "relative_tail": v.relative_tail,
        "ln_partial_value": v.ln_partial_value,
        "shell_ratio": plan.ratio,
        "shells": plan.shells,
        "last_ln_shell": v.ln_shell_contributions.last(),
    })
}

/// Pass when the verdict matches the expectation and the reduced integral;
/// an undecided profile is inconclusive, and no expectation means exploration.
fn profile_status(v: Verdict, expected: Option<Verdict>, oracle: Option<bool>) -> Status {
    if v == Verdict::Inconclusive {
        return Status::Inconclusive;
    }
    if let Some(finite) = oracle {
        if finite != (v == Verdict::Convergent) {
            return Status::Fail;
        }
    }
    match expected {
        Some(e) => Status::from_bool(e == v),
        None => Status::Pass,
    }
}

struct Claim<'a> {
    name: String,
    quantity: Quantity,
    transform: Transform,
    regions: &'a [RegionSpec],
    plan: ShellPlan,
    expected: Option<Verdict>,
}

fn run_claim(
    runner: &mut Runner,
    map: &MapFamily,
    quad: QuadSettings,
    c: Claim,
) -> Result<Verdict, CliError> {
    let mut verdict = Verdict::Inconclusive;
    runner.run(|| {
        let v = profile(map, c.quantity, c.transform, c.regions, quad, c.plan)?;
        let oracle = reduced_oracle(map, c.quantity, c.transform, c.regions);
        verdict = v.verdict;
        let mut check = Check::new(&c.name, profile_status(v.verdict, c.expected, oracle))
            .tolerance(TAIL_FRACTION)
            .detail(profile_detail(&v, c.plan, c.expected, oracle));
        check.samples =
            (c.plan.shells * quad.cells_per_shell * quad.order * quad.order * c.regions.len())
                as u64;
        if v.partial_value.is_finite() {
            check = check.value(v.partial_value);
        }
        Ok(check)
    })?;
    Ok(verdict)
}

/// `|f| >= M` inside the witness radius for each level; unsupported when the
/// map is continuous at the origin.
fn unbounded(runner: &mut Runner, map: &MapFamily, name: &str, seed: u64) -> Result<(), CliError> {
    runner.run(|| {
        let mut reports = Vec::new();
        for m in BLOWUP_LEVELS {
            match blowup_check(map, m, BLOWUP_SAMPLES, seed) {
                Ok(r) => reports.push(r),
                Err(CheckError::Unsupported(reason)) => {
                    return Ok(
                        Check::new(name, Status::Unsupported).detail(json!({ "reason": reason }))
                    )
                }
                Err(e) => return Err(e.into()),
            }
        }
        let worst = reports
            .iter()
            .map(|r| r.min_abs_f / r.m)
            .fold(f64::INFINITY, f64::min);
        Ok(Check::new(name, Status::from_bool(worst >= 1.0))
            .value(worst)
            .tolerance(1.0)
            .samples(BLOWUP_SAMPLES * reports.len())
            .detail(
                json!({ "measure": "min |f| / M inside the witness radius", "levels": reports }),
            ))
    })?;
    Ok(())
}

pub fn verify(
    r: &Resolved,
    opts: &Options,
    runner: &mut Runner,
    settings: &mut Settings,
) -> Result<(), CliError> {
    let map = &r.map;
    let seed = opts.seed();
    let samples = opts.samples.unwrap_or(100_000);
    if samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    settings.insert("samples".into(), json!(samples));
    settings.insert("derivative_step".into(), json!(DERIVATIVE_STEP));
    settings.insert("interface_offset".into(), json!(INTERFACE_OFFSET));
    let sites = sample_sites(map, samples, seed);

    runner.run(|| {
        let s = inclusion_batch(map, &sites, None)?;
        Ok(Check::new(
            "inclusion",
            Status::from_bool(s.max_scaled_residual <= INCLUSION_TOL),
        )
        .value(s.max_scaled_residual)
        .tolerance(INCLUSION_TOL)
        .samples(s.samples)
        .detail(
            json!({ "measure": "max (|Df|^2 - K J - Sigma) / (1 + |Df|^2)", "worst": s.worst }),
        ))
    })?;
    if let MapFamily::Cusp(_) = map {
        runner.run(|| {
            let s = inclusion_batch(map, &sites, None)?;
            Ok(Check::new(
                "inclusion_equality",
                Status::from_bool(s.max_abs_scaled_residual <= INCLUSION_TOL),
            )
            .value(s.max_abs_scaled_residual)
            .tolerance(INCLUSION_TOL)
            .samples(s.samples)
            .detail(json!({ "measure": "max | |Df|^2 - K J - Sigma | / (1 + |Df|^2)" })))
        })?;
    }

    let n_fd = samples.min(10_000);
    runner.run(|| {
        let s = derivative_batch(map, &sites[..n_fd], DERIVATIVE_STEP)?;
        Ok(Check::new(
            "derivatives",
            Status::from_bool(s.max_rel_error <= DERIVATIVE_TOL),
        )
        .value(s.max_rel_error)
        .tolerance(DERIVATIVE_TOL)
        .samples(s.samples)
        .detail(json!({
            "measure": "max relative Frobenius error, Richardson-extrapolated central differences",
            "plain_central_difference": s.max_rel_error_plain,
            "worst": s.worst,
        })))
    })?;

    if let MapFamily::TripleLog = map {
        runner.run(|| {
            let mut worst = 0.0f64;
            for s in &sites[..n_fd] {
                let (fd, _) = fd_jacobian_richardson(map, s.branch, s.point, DERIVATIVE_STEP)?;
                worst = worst.max(fd.det().abs());
            }
            Ok(Check::new("jacobian_fd", Status::from_bool(worst <= 1e-8))
                .value(worst)
                .tolerance(1e-8)
                .samples(n_fd)
                .detail(json!({ "measure": "max |det| of the difference Jacobian" })))
        })?;
    }

    let gaps = interface_batch(map, INTERFACE_SAMPLES, INTERFACE_OFFSET, seed)?;
    for g in gaps {
        let name = format!(
            "interface:{}",
            serde_json::to_value(g.interface)
                .unwrap()
                .as_str()
                .unwrap_or("?")
        );
        runner.run(|| {
            Ok(
                Check::new(name, Status::from_bool(g.max_gap <= INTERFACE_TOL))
                    .value(g.max_gap)
                    .tolerance(INTERFACE_TOL)
                    .samples(g.samples)
                    .detail(
                        json!({ "measure": "max two-sided |f| gap, extrapolated to zero offset" }),
                    ),
            )
        })?;
    }

    for m in BLOWUP_LEVELS {
        let name = format!("blowup:M={m}");
        runner.run(|| match blowup_check(map, m, BLOWUP_SAMPLES, seed) {
            Ok(rep) => Ok(Check::new(name, Status::from_bool(rep.min_abs_f >= m))
                .value(rep.min_abs_f)
                .tolerance(m)
                .samples(rep.samples)
                .detail(json!({ "measure": "min |f| inside the witness radius", "witness": rep.witness }))),
            Err(CheckError::Unsupported(reason)) => {
                Ok(Check::new(name, Status::Unsupported).detail(json!({ "reason": reason })))
            }
            Err(e) => Err(e.into()),
        })?;
    }
    Ok(())
}

pub fn norms(
    r: &Resolved,
    opts: &Options,
    runner: &mut Runner,
    settings: &mut Settings,
) -> Result<(), CliError> {
    let map = &r.map;
    let quad = quad_settings(opts)?;
    record_quad(settings, &quad);
    let regions = partition(map);
    let std_plan = STANDARD.overridden(opts);
    let seed = opts.seed();
    let claim = |name: String, quantity, transform, plan, expected| Claim {
        name,
        quantity,
        transform,
        regions: &regions,
        plan,
        expected: Some(expected),
    };
    let conv = Verdict::Convergent;
    match r.preset {
        Preset::CuspLpDuality => {
            let p = r.param("p");
            let q = opts.q.unwrap_or(p / (p - 1.0));
            settings.insert("q".into(), json!(q));
            run_claim(
                runner,
                map,
                quad,
                claim(
                    format!("K^{p}"),
                    Quantity::K,
                    Transform::Power { p },
                    std_plan,
                    conv,
                ),
            )?;
            let expected = if 1.0 / p + 1.0 / q >= 1.0 {
                conv
            } else {
                Verdict::Divergent
            };
            let c = claim(
                format!("(Sigma/K)^{q}"),
                Quantity::SigmaOverK,
                Transform::Power { p: q },
                std_plan,
                expected,
            );
            run_claim(runner, map, quad, c)?;
            unbounded(runner, map, "f_unbounded", seed)?;
        }
        Preset::CuspSigmaLs => {
            let p = r.param("p");
            let s = opts.s.unwrap_or(1.0 + 1.0 / p);
            settings.insert("s".into(), json!(s));
            run_claim(
                runner,
                map,
                quad,
                claim(
                    format!("K^{p}"),
                    Quantity::K,
                    Transform::Power { p },
                    std_plan,
                    conv,
                ),
            )?;
            let expected = if s <= 1.0 + 1.0 / p {
                conv
            } else {
                Verdict::Divergent
            };
            let c = claim(
                format!("Sigma^{s}"),
                Quantity::Sigma,
                Transform::Power { p: s },
                std_plan,
                expected,
            );
            run_claim(runner, map, quad, c)?;
            unbounded(runner, map, "f_unbounded", seed)?;
        }
        Preset::CuspExpK => {
            let mu = r.param("mu");
            let lambdas = opts.lambda.map_or(vec![1.0, 5.0, 25.0], |l| vec![l]);
            for lambda in lambdas {
                if !(lambda > 0.0) {
                    return Err(CliError::Usage(format!(
                        "--lambda {lambda} must be positive"
                    )));
                }
                // exp(lambda K) on side A decays like t^(-lambda e^-1 ...) only far out
                let plan = if lambda > 5.0 {
                    ShellPlan::new(4.0, 4000)
                } else {
                    STANDARD
                }
                .overridden(opts);
                let c = claim(
                    format!("exp({lambda} K)"),
                    Quantity::K,
                    Transform::Exp { lambda },
                    plan,
                    conv,
                );
                run_claim(runner, map, quad, c)?;
            }
            let plan = ShellPlan::new(2.0, 300).overridden(opts);
            let c = claim(
                format!("Sigma log^{mu}(e+Sigma)"),
                Quantity::Sigma,
                Transform::Zygmund { mu },
                plan,
                conv,
            );
            run_claim(runner, map, quad, c)?;
            unbounded(runner, map, "f1_unbounded", seed)?;
        }
        Preset::SpiralBoundedSigma => {
            let samples = opts.samples.unwrap_or(100_000);
            runner.run(|| {
                let sites = sample_sites(map, samples, seed);
                let mut sup = 0.0f64;
                for s in &sites {
                    sup = sup.max(
                        map.sample_on(s.branch, s.point)
                            .map_err(CheckError::from)?
                            .sigma,
                    );
                }
                Ok(
                    Check::new("sigma_sup", Status::from_bool(sup <= 9.0 * (1.0 + 1e-12)))
                        .value(sup)
                        .tolerance(9.0)
                        .samples(samples)
                        .detail(json!({ "measure": "max Sigma over interior samples" })),
                )
            })?;
            run_claim(
                runner,
                map,
                quad,
                claim("K".into(), Quantity::K, Transform::Raw, std_plan, conv),
            )?;
            let theta0 = match map {
                MapFamily::Spiral(s) => s.params.theta0,
                _ => unreachable!(),
            };
            runner.run(|| {
                let region = RegionSpec::spiral(SpiralRegion::A, theta0);
                let theta_sq = LogValues(|p: &QuadPoint| 2.0 * p.theta.ln());
                let v = profile_of(&theta_sq, &region, &quad, std_plan.shells)?;
                Ok(
                    Check::new("theta^2 on A", profile_status(v.verdict, Some(conv), None))
                        .value(v.partial_value)
                        .tolerance(TAIL_FRACTION)
                        .samples(std_plan.shells * quad.cells_per_shell * quad.order * quad.order)
                        .detail(profile_detail(&v, std_plan, Some(conv), None)),
                )
            })?;
            unbounded(runner, map, "im_f_unbounded", seed)?;
        }
        Preset::SpiralLp => {
            let p = r.param("p");
            let q = opts.q.unwrap_or(p / (p - 1.0));
            settings.insert("q".into(), json!(q));
            run_claim(
                runner,
                map,
                quad,
                claim(
                    format!("K^{p}"),
                    Quantity::K,
                    Transform::Power { p },
                    std_plan,
                    conv,
                ),
            )?;
            let expected = if 1.0 / p + 1.0 / q >= 1.0 {
                conv
            } else {
                Verdict::Divergent
            };
            let c = claim(
                format!("Sigma^{}", q / 2.0),
                Quantity::Sigma,
                Transform::Power { p: q / 2.0 },
                std_plan,
                expected,
            );
            run_claim(runner, map, quad, c)?;
            unbounded(runner, map, "im_f_unbounded", seed)?;
        }
        Preset::TripleLog => {
            let plan = ShellPlan {
                ratio: 0.5,
                shells: 1000,
            }
            .overridden(opts);
            let c = claim(
                "|Df|^2 log(e+|Df|^2)".into(),
                Quantity::DfOpnormSq,
                Transform::Zygmund { mu: 1.0 },
                plan,
                conv,
            );
            run_claim(runner, map, quad, c)?;
            unbounded(runner, map, "f_unbounded", seed)?;
        }
        Preset::PowerLog => {
            run_claim(
                runner,
                map,
                quad,
                claim(
                    "|Df|^2".into(),
                    Quantity::DfOpnormSq,
                    Transform::Raw,
                    std_plan,
                    conv,
                ),
            )?;
            unbounded(runner, map, "f_unbounded", seed)?;
        }
    }
    Ok(())
}

struct ScanSpec {
    label: &'static str,
    quantity: Quantity,
    /// Integrand exponent for a grid value.
    power: fn(f64) -> f64,
    side_b_only: bool,
    default_grid: Vec<f64>,
    /// Grid values at or below it are predicted convergent.
    boundary: f64,
}

pub fn scan(
    r: &Resolved,
    opts: &Options,
    runner: &mut Runner,
    settings: &mut Settings,
) -> Result<(), CliError> {
    let map = &r.map;
    let quad = quad_settings(opts)?;
    record_quad(settings, &quad);
    if opts.explore {
        return explore(r, opts, runner, settings, quad);
    }
    let plan = STANDARD.overridden(opts);
    let spec = match r.preset {
        Preset::CuspLpDuality => Some(ScanSpec {
            label: "(Sigma/K)^q",
            quantity: Quantity::SigmaOverK,
            power: |q| q,
            side_b_only: true,
            default_grid: vec![1.5, 2.0, 2.5, 3.0],
            boundary: r.param("p") / (r.param("p") - 1.0),
        }),
        Preset::CuspSigmaLs => Some(ScanSpec {
            label: "Sigma^s",
            quantity: Quantity::Sigma,
            power: |s| s,
            side_b_only: true,
            default_grid: vec![1.3, 1.4, 1.5, 1.6, 1.7],
            boundary: 1.0 + 1.0 / r.param("p"),
        }),
        Preset::SpiralLp => Some(ScanSpec {
            label: "Sigma^(q/2)",
            quantity: Quantity::Sigma,
            power: |q| q / 2.0,
            side_b_only: true,
            default_grid: vec![1.5, 1.8, 2.0, 2.2, 2.5],
            boundary: r.param("p") / (r.param("p") - 1.0),
        }),
        _ => None,
    };
    if let Preset::CuspExpK = r.preset {
        let grid = opts.grid.clone().unwrap_or_else(|| vec![1.0, 5.0, 25.0]);
        settings.insert("grid".into(), json!(grid));
        let regions = partition(map);
        for lambda in grid {
            let plan = if lambda > 5.0 {
                ShellPlan::new(4.0, 4000)
            } else {
                STANDARD
            }
            .overridden(opts);
            let c = Claim {
                name: format!("exp(lambda K) lambda={lambda}"),
                quantity: Quantity::K,
                transform: Transform::Exp { lambda },
                regions: &regions,
                plan,
                expected: Some(Verdict::Convergent),
            };
            run_claim(runner, map, quad, c)?;
        }
        return Ok(());
    }
    let Some(spec) = spec else {
        runner.run(|| {
            Ok(Check::new("scan", Status::Unsupported).detail(
                json!({ "reason": format!("no exponent family to scan for {}", r.preset.name()) }),
            ))
        })?;
        return Ok(());
    };
    let mut grid = opts.grid.clone().unwrap_or(spec.default_grid);
    grid.sort_by(f64::total_cmp);
    settings.insert("grid".into(), json!(grid));
    let all = partition(map);
    let regions = if spec.side_b_only {
        &all[1..]
    } else {
        &all[..]
    };
    let mut results = Vec::new();
    for &x in &grid {
        if !(x > 0.0) {
            return Err(CliError::Usage(format!("grid value {x} must be positive")));
        }
        let expected = if x <= spec.boundary {
            Verdict::Convergent
        } else {
            Verdict::Divergent
        };
        let c = Claim {
            name: format!("{} at {x}", spec.label),
            quantity: spec.quantity,
            transform: Transform::Power { p: (spec.power)(x) },
            regions,
            plan,
            expected: Some(expected),
        };
        results.push((x, run_claim(runner, map, quad, c)?));
    }
    boundary_check(runner, &results, spec.boundary)
}

/// Brackets the empirical boundary between the largest convergent and the
/// smallest divergent grid value.
fn boundary_check(
    runner: &mut Runner,
    results: &[(f64, Verdict)],
    predicted: f64,
) -> Result<(), CliError> {
    runner.run(|| {
        let last_conv = results
            .iter()
            .filter(|(_, v)| *v == Verdict::Convergent)
            .map(|r| r.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let first_div = results
            .iter()
            .filter(|(_, v)| *v == Verdict::Divergent)
            .map(|r| r.0)
            .fold(f64::INFINITY, f64::min);
        let monotone = last_conv < first_div;
        let undecided = results.iter().any(|(_, v)| *v == Verdict::Inconclusive);
        let status = if !monotone {
            Status::Fail
        } else if last_conv <= predicted && predicted < first_div {
            if undecided {
                Status::Inconclusive
            } else {
                Status::Pass
            }
        } else {
            Status::Fail
        };
        let mut check = Check::new("boundary", status)
            .tolerance(predicted)
            .samples(results.len())
            .detail(json!({
                "measure": "midpoint of the bracket; tolerance is the predicted boundary",
                "predicted_boundary": predicted,
                "largest_convergent": last_conv.is_finite().then_some(last_conv),
                "smallest_divergent": first_div.is_finite().then_some(first_div),
                "verdicts": results.iter().map(|(x, v)| json!([x, verdict_name(*v)])).collect::<Vec<_>>(),
            }));
        if last_conv.is_finite() && first_div.is_finite() {
            check = check.value(0.5 * (last_conv + first_div));
        }
        Ok(check)
    })?;
    Ok(())
}

/// Classifies `K^x` and `(Sigma/K)^x` for each grid value; no predictions.
fn explore(
    r: &Resolved,
    opts: &Options,
    runner: &mut Runner,
    settings: &mut Settings,
    quad: QuadSettings,
) -> Result<(), CliError> {
    let grid = opts
        .grid
        .clone()
        .unwrap_or_else(|| vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    settings.insert("grid".into(), json!(grid));
    settings.insert("explore".into(), json!(true));
    let regions = partition(&r.map);
    let plan = STANDARD.overridden(opts);
    for (label, quantity) in [("K", Quantity::K), ("Sigma/K", Quantity::SigmaOverK)] {
        for &x in &grid {
            let c = Claim {
                name: format!("explore {label}^{x}"),
                quantity,
                transform: Transform::Power { p: x },
                regions: &regions,
                plan,
                expected: None,
            };
            run_claim(runner, &r.map, quad, c)?;
        }
    }
    Ok(())
}

pub fn modulus(
    r: &Resolved,
    _opts: &Options,
    runner: &mut Runner,
    settings: &mut Settings,
) -> Result<(), CliError> {
    let map = &r.map;
    let radii: Vec<f64> = (0..12)
        .map(|i| (-(5.0 + 35.0 * f64::from(i) / 11.0)).exp())
        .collect();
    settings.insert("log_inv_radii".into(), json!([5.0, 40.0]));
    settings.insert("radii".into(), json!(radii.len()));
    runner.run(|| {
        let samples = match modulus_samples(map, [0.0, 0.0], &radii) {
            Ok(s) => s,
            Err(CheckError::Discontinuous) => {
                return Ok(Check::new("alpha_hat", Status::Unsupported)
                    .detail(json!({ "reason": "the map is not continuous at the origin" })))
            }
            Err(e) => return Err(e.into()),
        };
        let data: Vec<(f64, f64)> = samples.iter().map(|s| (s.r, s.omega)).collect();
        let fit = fit_log_exponent(&data)?;
        let refined: Vec<(f64, f64)> = samples.iter().map(|s| (s.r, s.omega_refined)).collect();
        let fit_refined = fit_log_exponent(&refined)?;
        let alpha = r.parameters.get("alpha").copied();
        let (status, tol) = match alpha {
            Some(a) => {
                let tol = 0.05 * a;
                (
                    Status::from_bool((fit.alpha_hat - a).abs() <= tol),
                    Some(tol),
                )
            }
            None => (Status::Pass, None),
        };
        let mut check = Check::new("alpha_hat", status)
            .value(fit.alpha_hat)
            .samples(samples.len())
            .detail(json!({
                "measure": "fitted alpha in omega(r) ~ C log^-alpha(1/r); tolerance is 5% of alpha",
                "alpha": alpha,
                "stderr": fit.stderr,
                "alpha_hat_refined": fit_refined.alpha_hat,
                "samples": samples,
            }));
        if let Some(t) = tol {
            check = check.tolerance(t);
        }
        Ok(check)
    })?;
    runner.run(|| {
        let data: Vec<(f64, f64)> = (5..=40)
            .map(|k| ((-f64::from(k)).exp(), 1.0 / f64::from(k)))
            .collect();
        let fit = fit_log_exponent(&data)?;
        Ok(Check::new(
            "fit_fixture:log",
            Status::from_bool((fit.alpha_hat - 1.0).abs() <= 1e-3),
        )
        .value(fit.alpha_hat)
        .tolerance(1e-3)
        .samples(data.len())
        .detail(json!({ "measure": "|alpha_hat - 1| for omega = 1/log(1/r)" })))
    })?;
    runner.run(|| {
        let data: Vec<(f64, f64)> = (5..=40).map(|k| ((-f64::from(k)).exp(), 3.0)).collect();
        let fit = fit_log_exponent(&data)?;
        Ok(Check::new(
            "fit_fixture:constant",
            Status::from_bool(fit.alpha_hat.abs() <= 1e-12),
        )
        .value(fit.alpha_hat.abs())
        .tolerance(1e-12)
        .samples(data.len())
        .detail(json!({ "measure": "|alpha_hat| for constant omega" })))
    })?;
    Ok(())
}

pub fn lemmas(
    opts: &Options,
    runner: &mut Runner,
    settings: &mut Settings,
) -> Result<(), CliError> {
    let seed = opts.seed();
    let young_cases = opts.samples.unwrap_or(100_000);
    let instances = 20;
    let grid = 200;
    settings.insert("young_cases".into(), json!(young_cases));
    settings.insert("diff_ineq_instances".into(), json!(instances));
    settings.insert("diff_ineq_grid".into(), json!(grid));

    runner.run(|| {
        let s = exp_young_suite(young_cases, seed);
        Ok(
            Check::new("exp_young", Status::from_bool(s.violations == 0))
                .value(s.worst_log_margin)
                .tolerance(0.0)
                .samples(s.cases)
                .detail(json!({
                    "measure": "max log(lhs / rhs); must stay below 0",
                    "violations": s.violations,
                    "worst_case": s.worst_case,
                })),
        )
    })?;

    runner.run(|| {
        let s = diff_ineq_suite(instances, seed, grid)?;
        let worst_margin = s
            .reports
            .iter()
            .map(|(_, rep)| rep.max_excess.max(rep.max_excess_factored) - rep.tolerance)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Check::new("diff_ineq", Status::from_bool(s.failures == 0))
            .value(worst_margin)
            .tolerance(0.0)
            .samples(s.instances * grid)
            .detail(json!({
                "measure": "max over instances of (excess - tolerance)",
                "failures": s.failures,
                "worst_excess": s.worst_excess,
                "recipes": s.reports.iter().map(|(r, _)| r).collect::<Vec<_>>(),
            })))
    })?;

    runner.run(|| {
        let (a, s) = (1.7, 2.0);
        let inst = DiffIneqInstance {
            a,
            big_r: 1.0,
            s,
            phi: Box::new(move |r| s * r.powf(1.0 / a)),
            phi_prime: Box::new(move |r| s / a * r.powf(1.0 / a - 1.0)),
            psi: Box::new(|r| r),
            psi_prime: Box::new(|_| 1.0),
            gamma: Box::new(|_| 0.0),
            gamma_prime: Box::new(|_| 0.0),
        };
        let rep = check_diff_ineq(&inst, grid, 1e-6)?;
        Ok(Check::new(
            "diff_ineq:equality",
            Status::from_bool(rep.holds && rep.max_excess.abs() <= 1e-12),
        )
        .value(rep.max_excess.abs())
        .tolerance(1e-12)
        .samples(grid)
        .detail(
            json!({ "measure": "|excess| for Phi = S (r/R)^(1/A), where the bound is attained" }),
        ))
    })?;

    let jensen_cases = [
        (
            "triple_jensen:constant",
            TripleJensenInstance {
                n: 2,
                lambda: 1.0,
                profile: RadialProfile::Constant { value: 1.0 },
                domain_radius: 1.0,
                big_r: 0.9,
                r: 1e-3,
            },
        ),
        (
            "triple_jensen:constant_n3",
            TripleJensenInstance {
                n: 3,
                lambda: 1.0,
                profile: RadialProfile::Constant { value: 2.0 },
                domain_radius: 1.0,
                big_r: 0.5,
                r: 1e-6,
            },
        ),
        (
            "triple_jensen:log",
            TripleJensenInstance {
                n: 2,
                lambda: 1.0,
                profile: RadialProfile::LogInverse,
                domain_radius: (-1f64).exp(),
                big_r: 0.3,
                r: 1e-9,
            },
        ),
        (
            "triple_jensen:log_window_edge",
            TripleJensenInstance {
                n: 2,
                lambda: 1.0,
                profile: RadialProfile::LogInverse,
                domain_radius: (-1f64).exp(),
                big_r: 0.3,
                r: 0.3 / E.powi(3) * 0.999,
            },
        ),
    ];
    for (name, inst) in jensen_cases {
        runner.run(|| {
            let rep = triple_jensen_check(&inst)?;
            Ok(Check::new(name, Status::from_bool(rep.margin >= -1e-6))
                .value(rep.margin)
                .tolerance(-1e-6)
                .samples(1)
                .detail(json!({ "measure": "lhs - rhs", "instance": inst, "report": rep })))
        })?;
    }

    runner.run(|| {
        let map = MapFamily::Cusp(
            CuspParams::lp_duality(2.0, 0.5).map_err(|e| CliError::Internal(e.to_string()))?,
        );
        let cubes: Vec<Cube> = (0..8)
            .map(|i| {
                let th = f64::from(i) * PI / 4.0 + 0.1;
                Cube {
                    center: [0.03 * th.cos(), 0.03 * th.sin()],
                    half_width: 0.004,
                }
            })
            .collect();
        let coarse = reverse_holder_ratio(&map, &cubes, 4)?;
        let fine = reverse_holder_ratio(&map, &cubes, 8)?;
        let drift = coarse
            .ratios
            .iter()
            .zip(&fine.ratios)
            .map(|(c, f)| {
                if *f > 0.0 {
                    (c - f).abs() / f
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        Ok(
            Check::new("reverse_holder:refinement", Status::from_bool(drift <= 0.1))
                .value(drift)
                .tolerance(0.1)
                .samples(cubes.len())
                .detail(json!({
                    "measure": "max relative change of the ratio from 4x4 to 8x8 cells per cube",
                    "map": "cusp-lp-duality p=2 eps=0.5",
                    "coarse": coarse.ratios,
                    "fine": fine.ratios,
                })),
        )
    })?;

    runner.run(|| {
        let cubes = [Cube {
            center: [0.2, 0.1],
            half_width: 0.05,
        }];
        let rep = reverse_holder_ratio(&MapFamily::Linear(Mat2::IDENTITY), &cubes, 1)?;
        Ok(Check::new(
            "reverse_holder:identity",
            Status::from_bool((rep.max_ratio - 1.0).abs() <= 1e-12),
        )
        .value(rep.max_ratio)
        .tolerance(1e-12)
        .samples(1)
        .detail(json!({ "measure": "ratio for the identity map, which is exactly 1" })))
    })?;

    runner.run(|| {
        let data: Vec<(f64, f64)> = (5..=40)
            .map(|k| ((-f64::from(k)).exp(), 1.0 / f64::from(k)))
            .collect();
        let fit = fit_log_exponent(&data)?;
        Ok(Check::new(
            "log_exponent_fit",
            Status::from_bool((fit.alpha_hat - 1.0).abs() <= 1e-3),
        )
        .value(fit.alpha_hat)
        .tolerance(1e-3)
        .samples(data.len())
        .detail(json!({ "measure": "alpha_hat for omega = 1/log(1/r)" })))
    })?;
    Ok(())
}
