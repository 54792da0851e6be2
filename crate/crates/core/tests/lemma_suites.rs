use std::f64::consts::{E, PI};

use distortion_lab::cusp::CuspParams;
use distortion_lab::family::MapFamily;
use distortion_lab::fields::modulus_samples;
use distortion_lab::lemmas::*;

#[test]
fn young_inequality_on_random_cases() {
    let suite = exp_young_suite(100_000, 2024);
    assert_eq!(suite.violations, 0, "{suite:?}");
    assert!(suite.worst_log_margin < 0.0);
}

#[test]
fn integrated_bound_on_random_instances() {
    let suite = diff_ineq_suite(20, 5, 200).unwrap();
    assert_eq!(suite.failures, 0);
    for (recipe, rep) in &suite.reports {
        assert!(rep.max_excess <= rep.tolerance, "{recipe:?} {rep:?}");
        assert!(
            rep.max_excess_factored <= rep.tolerance,
            "{recipe:?} {rep:?}"
        );
    }
}

#[test]
fn log_profile_up_to_the_window_edge() {
    let (rho, big_r) = ((-1f64).exp(), 0.3);
    for frac in [0.999, 0.5, 1e-3, 1e-9, 1e-100] {
        let r = big_r / E.powi(3) * frac;
        let inst = TripleJensenInstance {
            n: 2,
            lambda: 1.0,
            profile: RadialProfile::LogInverse,
            domain_radius: rho,
            big_r,
            r,
        };
        let rep = triple_jensen_check(&inst).unwrap();
        // C = 1/e, so R0 = 1
        assert!((rep.r0 - 1.0).abs() < 1e-12);
        let exact = (-r.ln()).ln() - (-big_r.ln()).ln();
        assert!((rep.lhs - exact).abs() < 1e-9, "{rep:?}");
        assert!(rep.margin > 0.0, "{frac}: {rep:?}");
    }
}

#[test]
fn higher_dimensional_constant_profile() {
    // n = 3, K = 2 >= (n - 2) / lambda: LHS = log(R/r) / 2
    let inst = TripleJensenInstance {
        n: 3,
        lambda: 1.0,
        profile: RadialProfile::Constant { value: 2.0 },
        domain_radius: 1.0,
        big_r: 0.5,
        r: 1e-6,
    };
    let rep = triple_jensen_check(&inst).unwrap();
    assert!((rep.c - E * E / 3.0).abs() < 1e-12);
    assert!((rep.lhs - 0.5 * (0.5f64 / 1e-6).ln()).abs() < 1e-10);
    assert!(rep.margin > 0.0);
}

#[test]
fn reverse_holder_ratio_is_stable_under_refinement() {
    let map = MapFamily::Cusp(CuspParams::lp_duality(2.0, 0.5).unwrap());
    let cubes: Vec<Cube> = (0..8)
        .map(|i| {
            let th = f64::from(i) * PI / 4.0 + 0.1;
            Cube {
                center: [0.03 * th.cos(), 0.03 * th.sin()],
                half_width: 0.004,
            }
        })
        .collect();
    let coarse = reverse_holder_ratio(&map, &cubes, 4).unwrap();
    let fine = reverse_holder_ratio(&map, &cubes, 8).unwrap();
    for (c, f) in coarse.ratios.iter().zip(&fine.ratios) {
        assert!(*c > 0.0 && (c - f).abs() <= 0.1 * f, "{c} vs {f}");
    }
}

#[test]
fn modulus_exponent_of_the_power_log_map() {
    for alpha in [0.5, 1.0, 2.0] {
        let map = MapFamily::PowerLog { alpha };
        let radii: Vec<f64> = (0..12)
            .map(|i| (-(5.0 + 35.0 * f64::from(i) / 11.0)).exp())
            .collect();
        let samples = modulus_samples(&map, [0.0, 0.0], &radii).unwrap();
        let data: Vec<(f64, f64)> = samples.iter().map(|s| (s.r, s.omega)).collect();
        let fit = fit_log_exponent(&data).unwrap();
        assert!((fit.alpha_hat - alpha).abs() < 1e-6, "{alpha}: {fit:?}");
    }
}

#[test]
fn fit_rejects_short_spans() {
    let data: Vec<(f64, f64)> = (0..10).map(|i| (1e-3 * 0.5f64.powi(i), 1.0)).collect();
    assert!(matches!(
        fit_log_exponent(&data),
        Err(LemmaError::InsufficientSpan { .. })
    ));
    assert!(matches!(
        fit_log_exponent(&data[..5]),
        Err(LemmaError::TooFewSamples { .. })
    ));
}
