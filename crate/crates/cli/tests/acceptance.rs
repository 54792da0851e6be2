//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.
//!
//! Most criteria drive the `distlab` binary and read its JSON report; the
//! special-function and quadrature criteria call the library directly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::Instant;

use distortion_lab::cusp::Side;
use distortion_lab::family::{MapFamily, Quantity};
use distortion_lab::quadrature::{
    integrate, norm_value, NormQuery, QuadPoint, QuadSettings, RegionSpec, Transform, Values,
};
use distortion_lab::special_fn::{lambert_w, lambert_w_prime, SolverSettings};
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

struct Run {
    code: i32,
    stdout: Vec<u8>,
    report: Value,
}

fn distlab(args: &[&str]) -> Result<Run, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_distlab"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot run distlab: {e}"))?;
    let code = out.status.code().unwrap_or(-1);
    let report = serde_json::from_slice(&out.stdout).map_err(|e| {
        format!(
            "distlab {}: exit {code}, bad JSON ({e}): {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })?;
    Ok(Run {
        code,
        stdout: out.stdout,
        report,
    })
}

fn check<'a>(report: &'a Value, name: &str) -> Result<&'a Value, String> {
    report["checks"]
        .as_array()
        .and_then(|cs| cs.iter().find(|c| c["name"] == name))
        .ok_or_else(|| {
            format!(
                "{} {}: no check {name:?}",
                report["command"], report["preset"]
            )
        })
}

fn status<'a>(report: &'a Value, name: &str) -> Result<&'a str, String> {
    Ok(check(report, name)?["status"].as_str().unwrap_or("?"))
}

fn expect(report: &Value, name: &str, want: &str) -> Result<(), String> {
    let got = status(report, name)?;
    if got == want {
        Ok(())
    } else {
        let c = check(report, name)?;
        Err(format!(
            "{} {}: {name} is {got}, expected {want} (value {}, detail {})",
            report["command"], report["preset"], c["value"], c["detail"]
        ))
    }
}

fn verdict(report: &Value, name: &str) -> Result<String, String> {
    Ok(check(report, name)?["detail"]["verdict"]
        .as_str()
        .unwrap_or("?")
        .to_string())
}

fn exit_ok(run: &Run) -> Result<(), String> {
    if run.code == 0 {
        Ok(())
    } else {
        Err(format!(
            "{} {} exited with {}",
            run.report["command"], run.report["preset"], run.code
        ))
    }
}

const COUNTEREXAMPLES: [&str; 5] = [
    "cusp-lp-duality",
    "cusp-sigma-ls",
    "cusp-exp-k",
    "spiral-bounded-sigma",
    "spiral-lp",
];
const ALL: [&str; 7] = [
    "cusp-lp-duality",
    "cusp-sigma-ls",
    "cusp-exp-k",
    "spiral-bounded-sigma",
    "spiral-lp",
    "triple-log",
    "power-log",
];

fn verify(preset: &str) -> Result<Run, String> {
    distlab(&[
        "verify",
        "--preset",
        preset,
        "--samples",
        "100000",
        "--seed",
        "42",
    ])
}

fn inclusion() -> Outcome {
    let mut worst = 0.0f64;
    for preset in COUNTEREXAMPLES {
        let run = verify(preset)?;
        expect(&run.report, "inclusion", "pass")?;
        if preset.starts_with("cusp") {
            expect(&run.report, "inclusion_equality", "pass")?;
        }
        let c = check(&run.report, "inclusion")?;
        if c["samples"] != 100_000 {
            return Err(format!("{preset}: {} samples", c["samples"]));
        }
        worst = worst.max(c["value"].as_f64().unwrap_or(f64::NAN));
    }
    Ok(format!(
        "worst scaled residual {worst:.2e} over 5 presets x 1e5 samples"
    ))
}

fn derivatives() -> Outcome {
    let mut worst = 0.0f64;
    for preset in ALL {
        let run = verify(preset)?;
        expect(&run.report, "derivatives", "pass")?;
        let c = check(&run.report, "derivatives")?;
        if c["samples"] != 10_000 {
            return Err(format!("{preset}: {} samples", c["samples"]));
        }
        worst = worst.max(c["value"].as_f64().unwrap_or(f64::NAN));
    }
    Ok(format!(
        "worst relative error {worst:.2e} over 7 presets x 1e4 samples"
    ))
}

fn continuity() -> Outcome {
    let mut curves = 0;
    let mut worst = 0.0f64;
    for preset in ALL {
        let run = verify(preset)?;
        exit_ok(&run)?;
        for c in run.report["checks"].as_array().unwrap() {
            let name = c["name"].as_str().unwrap_or("");
            if name.starts_with("interface:") {
                expect(&run.report, name, "pass")?;
                if c["samples"] != 1000 {
                    return Err(format!("{preset} {name}: {} samples", c["samples"]));
                }
                curves += 1;
                worst = worst.max(c["value"].as_f64().unwrap_or(f64::NAN));
            }
        }
        let want = if preset == "power-log" {
            "unsupported"
        } else {
            "pass"
        };
        for m in ["1", "2", "4"] {
            expect(&run.report, &format!("blowup:M={m}"), want)?;
        }
    }
    if curves != 16 {
        return Err(format!("expected 16 interface curves, saw {curves}"));
    }
    Ok(format!(
        "{curves} interface curves, worst gap {worst:.2e}; blow-up M = 1, 2, 4 confirmed"
    ))
}

fn lambert() -> Outcome {
    let s = SolverSettings::default();
    let w = |t: f64| lambert_w(t, &s).map_err(|e| format!("W({t}): {e}"));
    let inv_e = (-1f64).exp();

    // offsets from the branch point, log-spaced
    let n = 1_000_000;
    let (lo, hi) = (1e-9f64.ln(), (1e12 + inv_e).ln());
    let mut worst_identity = 0.0f64;
    for i in 0..n {
        let t = -inv_e + (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
        let v = w(t)?;
        let r = (v * v.exp() - t).abs() / t.abs().max(1.0);
        if !(r <= 1e-12) {
            return Err(format!("identity residual {r:e} at t = {t}"));
        }
        worst_identity = worst_identity.max(r);
    }

    let m = 100_000;
    let (lo, hi) = (inv_e.ln(), 1e12f64.ln());
    let mut worst_log = 0.0f64;
    for i in 0..m {
        let t = (lo + (hi - lo) * i as f64 / (m - 1) as f64)
            .exp()
            .max(inv_e);
        let e = (w(t * t.ln())? - t.ln()).abs();
        if !(e <= 1e-10) {
            return Err(format!("W(t log t) off by {e:e} at t = {t}"));
        }
        worst_log = worst_log.max(e);
    }

    let k = 10_000;
    let (lo, hi) = (1e-2f64.ln(), 1e12f64.ln());
    let mut worst_fd = 0.0f64;
    for i in 0..k {
        let t = -inv_e + (lo + (hi - lo) * i as f64 / (k - 1) as f64).exp();
        let h = 1e-5 * t.abs().max(1e-2);
        let fd = (w(t + h)? - w(t - h)?) / (2.0 * h);
        let exact = lambert_w_prime(t, &s).map_err(|e| e.to_string())?;
        let e = (fd - exact).abs() / exact.abs();
        if !(e <= 1e-6) {
            return Err(format!("W' differs from differences by {e:e} at t = {t}"));
        }
        worst_fd = worst_fd.max(e);
    }
    Ok(format!(
        "identity {worst_identity:.1e} on 1e6 points, W(t log t) {worst_log:.1e}, W' vs differences {worst_fd:.1e}"
    ))
}

fn lp_duality() -> Outcome {
    let norms = distlab(&[
        "norms",
        "--preset",
        "cusp-lp-duality",
        "--p",
        "2",
        "--eps",
        "0.5",
    ])?;
    exit_ok(&norms)?;
    expect(&norms.report, "K^2", "pass")?;
    let scan = distlab(&[
        "scan",
        "--preset",
        "cusp-lp-duality",
        "--p",
        "2",
        "--eps",
        "0.5",
        "--grid",
        "1.5,2,2.5,3",
    ])?;
    exit_ok(&scan)?;
    let mut cases = vec![(check(&norms.report, "K^2")?, "convergent")];
    for (q, want) in [
        ("1.5", "convergent"),
        ("2", "convergent"),
        ("2.5", "divergent"),
        ("3", "divergent"),
    ] {
        cases.push((check(&scan.report, &format!("(Sigma/K)^q at {q}"))?, want));
    }
    for (c, want) in &cases {
        let got = c["detail"]["verdict"].as_str().unwrap_or("?");
        let oracle = c["detail"]["reduced_integral_finite"].as_bool();
        if got != *want {
            return Err(format!("{}: {got}, expected {want}", c["name"]));
        }
        if oracle != Some(got == "convergent") {
            return Err(format!(
                "{}: verdict {got} but reduced integral finite = {oracle:?}",
                c["name"]
            ));
        }
    }
    Ok("K^2 convergent; (Sigma/K)^q conv, conv, div, div at q = 1.5, 2, 2.5, 3; 1D oracle agrees in 5/5".into())
}

fn sigma_ls() -> Outcome {
    let scan = distlab(&[
        "scan",
        "--preset",
        "cusp-sigma-ls",
        "--p",
        "2",
        "--grid",
        "1.4,1.5,1.7",
    ])?;
    if verdict(&scan.report, "Sigma^s at 1.4")? != "convergent" {
        return Err(format!(
            "s = 1.4: {}",
            verdict(&scan.report, "Sigma^s at 1.4")?
        ));
    }
    if verdict(&scan.report, "Sigma^s at 1.7")? != "divergent" {
        return Err(format!(
            "s = 1.7: {}",
            verdict(&scan.report, "Sigma^s at 1.7")?
        ));
    }
    let mid = check(&scan.report, "Sigma^s at 1.5")?;
    let basis = mid["detail"]["verdict_basis"].as_str().unwrap_or("");
    if !basis.contains("exponent") || !mid["detail"]["log_exponent"].is_number() {
        return Err(format!("s = 1.5 basis lacks the log exponent: {basis:?}"));
    }
    Ok(format!(
        "s = 1.4 convergent, s = 1.7 divergent, s = 1.5 {} ({basis})",
        verdict(&scan.report, "Sigma^s at 1.5")?
    ))
}

fn exp_k() -> Outcome {
    let run = distlab(&[
        "norms",
        "--preset",
        "cusp-exp-k",
        "--mu",
        "1.5",
        "--nu",
        "1.75",
    ])?;
    exit_ok(&run)?;
    for name in [
        "exp(1 K)",
        "exp(5 K)",
        "exp(25 K)",
        "Sigma log^1.5(e+Sigma)",
        "f1_unbounded",
    ] {
        expect(&run.report, name, "pass")?;
    }
    Ok("exp(lambda K) convergent for lambda = 1, 5, 25; Sigma log^1.5(e+Sigma) convergent; f1 unbounded".into())
}

fn bounded_sigma() -> Outcome {
    let run = distlab(&[
        "norms",
        "--preset",
        "spiral-bounded-sigma",
        "--samples",
        "100000",
    ])?;
    exit_ok(&run)?;
    for name in ["sigma_sup", "K", "theta^2 on A", "im_f_unbounded"] {
        expect(&run.report, name, "pass")?;
    }
    let sup = check(&run.report, "sigma_sup")?["value"]
        .as_f64()
        .unwrap_or(f64::NAN);
    if !((sup - 9.0).abs() <= 1e-9) {
        return Err(format!("sup Sigma = {sup}, expected 9"));
    }
    Ok(format!(
        "sup Sigma = {sup}; K and theta^2 on A convergent; Im f unbounded"
    ))
}

fn triple_log() -> Outcome {
    let v = verify("triple-log")?;
    expect(&v.report, "jacobian_fd", "pass")?;
    let n = distlab(&["norms", "--preset", "triple-log"])?;
    exit_ok(&n)?;
    expect(&n.report, "|Df|^2 log(e+|Df|^2)", "pass")?;
    expect(&n.report, "f_unbounded", "pass")?;
    let j = check(&v.report, "jacobian_fd")?["value"]
        .as_f64()
        .unwrap_or(f64::NAN);
    Ok(format!(
        "difference Jacobian max {j:.1e}; |Df|^2 log(e+|Df|^2) convergent; |f| unbounded"
    ))
}

fn lemmas() -> Outcome {
    let run = distlab(&["lemmas", "--samples", "100000", "--seed", "42"])?;
    exit_ok(&run)?;
    let young = check(&run.report, "exp_young")?;
    if young["samples"] != 100_000 || young["detail"]["violations"] != 0 {
        return Err(format!("exp-Young: {young}"));
    }
    let diff = check(&run.report, "diff_ineq")?;
    if run.report["settings"]["diff_ineq_instances"] != 20 || diff["detail"]["failures"] != 0 {
        return Err(format!(
            "differential inequality: {}",
            diff["detail"]["failures"]
        ));
    }
    for name in [
        "exp_young",
        "diff_ineq",
        "triple_jensen:constant",
        "triple_jensen:constant_n3",
        "triple_jensen:log",
        "triple_jensen:log_window_edge",
        "reverse_holder:refinement",
    ] {
        expect(&run.report, name, "pass")?;
    }
    let drift = check(&run.report, "reverse_holder:refinement")?["value"]
        .as_f64()
        .unwrap_or(f64::NAN);
    Ok(format!(
        "Young 0/1e5 violations; 20 integrated bounds hold; radial bounds hold; reverse Hoelder drift {:.2}%",
        100.0 * drift
    ))
}

fn modulus() -> Outcome {
    let mut fits = Vec::new();
    for alpha in ["0.5", "1", "2"] {
        let run = distlab(&["modulus", "--preset", "power-log", "--alpha", alpha])?;
        exit_ok(&run)?;
        expect(&run.report, "alpha_hat", "pass")?;
        let a = check(&run.report, "alpha_hat")?["value"]
            .as_f64()
            .unwrap_or(f64::NAN);
        fits.push(format!("{alpha} -> {a:.4}"));
    }
    Ok(format!("alpha_hat {}", fits.join(", ")))
}

fn strip_environment(bytes: &[u8]) -> Result<Value, String> {
    let mut v: Value = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    v.as_object_mut()
        .ok_or("report is not an object")?
        .remove("environment");
    Ok(v)
}

fn infrastructure() -> Outcome {
    let map = MapFamily::Cusp(
        distortion_lab::cusp::CuspParams::lp_duality(2.0, 0.5).map_err(|e| e.to_string())?,
    );
    let params = match &map {
        MapFamily::Cusp(p) => *p,
        _ => unreachable!(),
    };
    let run = |workers| {
        norm_value(&NormQuery {
            map: &map,
            quantity: Quantity::K,
            transform: Transform::Power { p: 2.0 },
            region: RegionSpec::cusp(Side::B, params),
            settings: QuadSettings {
                workers: Some(workers),
                ..QuadSettings::default()
            },
        })
        .map_err(|e| e.to_string())
    };
    let one = run(1)?;
    for w in [2, 4, 7] {
        let other = run(w)?;
        if one.value.to_bits() != other.value.to_bits()
            || one.error_estimate.to_bits() != other.error_estimate.to_bits()
        {
            return Err(format!("{w} workers: {} vs {}", other.value, one.value));
        }
    }

    let unit = Values(|_: &QuadPoint| 1.0);
    let area = integrate(&unit, &RegionSpec::disk(1.0), &QuadSettings::default())
        .map_err(|e| e.to_string())?;
    if !((area.value - PI).abs() <= 1e-8) {
        return Err(format!("unit disk area {}", area.value));
    }

    for args in [
        &[
            "verify",
            "--preset",
            "spiral-lp",
            "--samples",
            "20000",
            "--seed",
            "9",
        ][..],
        &["scan", "--preset", "cusp-sigma-ls", "--seed", "9"][..],
        &["lemmas", "--samples", "20000", "--seed", "9"][..],
    ] {
        let a = distlab(args)?;
        let b = distlab(args)?;
        if strip_environment(&a.stdout)? != strip_environment(&b.stdout)? {
            return Err(format!("distlab {} differs between runs", args.join(" ")));
        }
        let (ta, tb) = (
            String::from_utf8_lossy(&a.stdout),
            String::from_utf8_lossy(&b.stdout),
        );
        let cut = |t: &str| t.split("\"environment\"").next().unwrap_or("").to_string();
        if cut(&ta) != cut(&tb) {
            return Err(format!(
                "distlab {} is not byte-identical before the environment block",
                args.join(" ")
            ));
        }
    }
    Ok(format!(
        "bit-identical over 1, 2, 4, 7 workers; disk area error {:.1e}; reports reproducible",
        (area.value - PI).abs()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        (1, "differential inclusion", inclusion),
        (2, "derivative correctness", derivatives),
        (3, "continuity off the origin", continuity),
        (4, "Lambert W", lambert),
        (5, "lp-duality thresholds", lp_duality),
        (6, "Sigma in L^s boundary", sigma_ls),
        (7, "exponential distortion", exp_k),
        (8, "bounded Sigma spiral", bounded_sigma),
        (9, "triple-log map", triple_log),
        (10, "lemma oracles", lemmas),
        (11, "modulus exponent", modulus),
        (12, "infrastructure", infrastructure),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (n, title, f) in criteria {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n:>2} PASS  {title}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {title}: {msg} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {} of 12 criteria passed in {:.1}s",
        12 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
