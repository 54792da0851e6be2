use std::f64::consts::PI;

use distortion_lab::cusp::{CuspParams, Side};
use distortion_lab::family::{MapFamily, Quantity};
use distortion_lab::quadrature::*;

#[test]
fn cusp_region_areas_against_radial_integral() {
    let params = CuspParams::lp_duality(2.0, 0.5).unwrap();
    let one = Values(|_: &QuadPoint| 1.0);
    let settings = QuadSettings::default();
    let t0 = params.t0();
    // both lobes of the thin side have angular width 2 gamma; r dr = e^-2t dt
    let lobe = |t: f64| (-2.0 * t).exp() * params.gamma((-t).exp());
    let mut thin = 0.0;
    let mut a = t0;
    while a < t0 + 60.0 {
        thin += adaptive(lobe, a, a + 2.0, 1e-18, 1e-13).value;
        a += 2.0;
    }
    thin *= 4.0;
    let b = integrate(&one, &RegionSpec::cusp(Side::B, params), &settings).unwrap();
    assert!(
        (b.value - thin).abs() < 1e-9 * thin,
        "{} vs {}",
        b.value,
        thin
    );
    let a_side = integrate(&one, &RegionSpec::cusp(Side::A, params), &settings).unwrap();
    let disk = PI * params.r0 * params.r0;
    assert!((a_side.value + b.value - disk).abs() < 1e-9 * disk);
}

#[test]
fn radial_power_on_an_annulus() {
    let r3 = Values(|p: &QuadPoint| p.r * p.r);
    let got = integrate(
        &r3,
        &RegionSpec::annulus(0.1, 0.8),
        &QuadSettings::default(),
    )
    .unwrap();
    let exact = 2.0 * PI * (0.8f64.powi(4) - 0.1f64.powi(4)) / 4.0;
    assert!((got.value - exact).abs() < 1e-12 * exact);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let map = MapFamily::Cusp(CuspParams::lp_duality(2.0, 0.5).unwrap());
    let params = match &map {
        MapFamily::Cusp(p) => *p,
        _ => unreachable!(),
    };
    let run = |workers| {
        let q = NormQuery {
            map: &map,
            quantity: Quantity::K,
            transform: Transform::Power { p: 2.0 },
            region: RegionSpec::cusp(Side::A, params),
            settings: QuadSettings {
                workers: Some(workers),
                ..QuadSettings::default()
            },
        };
        norm_value(&q).unwrap()
    };
    let one = run(1);
    for w in [2, 3, 8] {
        let other = run(w);
        assert_eq!(one.value.to_bits(), other.value.to_bits());
        assert_eq!(one.error_estimate.to_bits(), other.error_estimate.to_bits());
    }
}
