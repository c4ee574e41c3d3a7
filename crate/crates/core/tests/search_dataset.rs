use airylab::codebook::{make_codeword, BeamParams, Codebook, CodebookSpec};
use airylab::dataset::{self, ReceiverSampling};
use airylab::field::{ApertureField, Propagator};
use airylab::scenario::{build_grid, Obstacle, Region, ScenarioConfig};
use airylab::search;

fn toy(obstacles: Vec<Obstacle>) -> (Propagator, Codebook, CodebookSpec) {
    let config = ScenarioConfig::free_space(100e9, 33, Region { x_min: 0.0, x_max: 0.8, y_min: -0.3, y_max: 0.3 })
        .with_obstacles(obstacles);
    let grid = build_grid(&config).unwrap();
    let prop = Propagator::new(&config, &grid).unwrap();
    let spec = CodebookSpec::over_standard_ranges(24, 4, 9);
    let cb = Codebook::new(&spec, 33, config.wavenumber(), config.antenna_spacing()).unwrap();
    (prop, cb, spec)
}

#[test]
fn stored_labels_and_gains_survive_re_evaluation() {
    let (prop, cb, spec) = toy(vec![Obstacle::new((0.3, 0.05), (0.06, 0.1), 0.0)]);
    let area = Region { x_min: 0.45, x_max: 0.75, y_min: -0.25, y_max: 0.25 };
    let rx = dataset::sample_receivers(&prop, &ReceiverSampling::Random { area, count: 14, seed: 4 }).unwrap();
    let (records, manifest) = dataset::generate_dataset(&prop, &cb, &spec, &rx, None, 4).unwrap();
    assert_eq!(manifest.record_count, records.len());
    for rec in &records {
        let field = prop.probes(&ApertureField::from(cb.codeword(rec.labels).as_ref()), &[rec.receiver]).unwrap()[0];
        assert!((field.norm_sqr() - rec.gain).abs() <= 1e-9 * rec.gain);
        let best = search::exhaustive_sweep(&prop, &cb, rec.receiver).unwrap();
        assert_eq!(best.index, rec.labels);
    }
    let mut bytes = Vec::new();
    dataset::write_records(&mut bytes, &manifest, &records).unwrap();
    let (_, back) = dataset::read_records(bytes.as_slice()).unwrap();
    let report = dataset::audit(&prop, &cb, &manifest, &back, 1.0, 0).unwrap();
    assert_eq!(report.checked, records.len());
    assert!(report.mismatches.is_empty());
}

#[test]
fn free_space_optimum_sits_on_the_zero_curvature_plateau() {
    // a beam focused on the receiver is as good as anything the codebook
    // offers, and adding curvature to it gains next to nothing
    let (prop, cb, _) = toy(vec![]);
    let config = prop.config();
    for rx in [(0.5, 0.0), (0.6, 0.12), (0.7, -0.2), (0.4, 0.05)] {
        let rx = prop.grid().snap(rx.0, rx.1).unwrap();
        let (theta, r) = (rx.1.atan2(rx.0), rx.0.hypot(rx.1));
        let gain = |c: f64| {
            let w = make_codeword(BeamParams::new(theta, r, c), 33, config.wavenumber(), config.antenna_spacing()).unwrap();
            prop.probes(&ApertureField::from(&w), &[rx]).unwrap()[0].norm_sqr()
        };
        let matched = gain(0.0);
        let best_c = (-50..=50).map(|k| gain(0.1 * k as f64)).fold(0.0, f64::max);
        assert!(best_c <= 1.01 * matched, "{rx:?}: curvature lifts {matched} to {best_c}");
        let all = search::exhaustive_sweep(&prop, &cb, rx).unwrap();
        assert!(all.gain <= 1.01 * matched, "{rx:?}: codebook {} beats matched focus {matched}", all.gain);
        let hier = search::hierarchical_search(&prop, &cb, rx).unwrap();
        assert!(hier.gain <= all.gain);
    }
}

#[test]
fn blocked_receivers_gain_from_curvature() {
    let (prop, cb, _) = toy(vec![Obstacle::new((0.3, 0.0), (0.1, 0.12), 0.0)]);
    let rx = prop.grid().snap(0.7, 0.0).unwrap();
    let all = search::exhaustive_sweep(&prop, &cb, rx).unwrap();
    let flat = search::sweep_indices(&prop, &cb, &search::focusing_indices(&cb).unwrap(), rx).unwrap();
    assert!(all.gain > flat.gain);
    assert!(all.params.c != 0.0);
}
