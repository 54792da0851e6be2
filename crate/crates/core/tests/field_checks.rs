use distortion_lab::cusp::CuspParams;
use distortion_lab::family::MapFamily;
use distortion_lab::fields::*;
use distortion_lab::spiral::SpiralMap;

fn presets() -> Vec<MapFamily> {
    vec![
        MapFamily::Cusp(CuspParams::lp_duality(2.0, 0.5).unwrap()),
        MapFamily::Cusp(CuspParams::sigma_ls(2.0).unwrap()),
        MapFamily::Cusp(CuspParams::exp_k(1.5, Some(1.75)).unwrap()),
        MapFamily::Spiral(SpiralMap::bounded_sigma()),
        MapFamily::Spiral(SpiralMap::lp(2.0).unwrap()),
        MapFamily::TripleLog,
        MapFamily::PowerLog { alpha: 1.0 },
    ]
}

#[test]
fn inclusion_holds_on_every_preset() {
    for map in presets() {
        let sites = sample_sites(&map, 20_000, 3);
        let s = inclusion_batch(&map, &sites, None).unwrap();
        assert!(s.max_scaled_residual <= 1e-9, "{}: {s:?}", map.name());
    }
}

#[test]
fn cusp_pieces_are_extremal() {
    // the cusp fields are built so the inclusion is an equality
    let map = MapFamily::Cusp(CuspParams::lp_duality(2.0, 0.5).unwrap());
    let sites = sample_sites(&map, 4_000, 5);
    let s = inclusion_batch(&map, &sites, None).unwrap();
    assert!(s.max_abs_scaled_residual < 1e-9, "{s:?}");
}

#[test]
fn analytic_derivatives_match_differences() {
    for map in presets() {
        let sites = sample_sites(&map, 2_000, 11);
        let d = derivative_batch(&map, &sites, 1e-2).unwrap();
        assert!(d.max_rel_error < 1e-6, "{}: {d:?}", map.name());
    }
}

#[test]
fn pieces_agree_on_interfaces() {
    for map in presets() {
        for gap in interface_batch(&map, 500, 1e-5, 9).unwrap() {
            assert!(gap.max_gap <= 1e-8, "{}: {gap:?}", map.name());
        }
    }
}

#[test]
fn witness_radius_forces_large_values() {
    for map in presets() {
        for m in [1.0, 2.0, 4.0] {
            match blowup_check(&map, m, 1_000, 13) {
                Ok(rep) => assert!(rep.min_abs_f >= m, "{}: {rep:?}", map.name()),
                Err(CheckError::Unsupported(_)) => assert!(map.continuous_at_origin()),
                Err(e) => panic!("{}: {e}", map.name()),
            }
        }
    }
}

#[test]
fn discontinuous_maps_have_no_modulus() {
    let map = MapFamily::TripleLog;
    assert!(matches!(
        modulus_samples(&map, [0.0, 0.0], &[1e-3]),
        Err(CheckError::Discontinuous)
    ));
}
