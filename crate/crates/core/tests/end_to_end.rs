use proptest::prelude::*;
use terraphd::eval::{evaluate, summarize};
use terraphd::io;
use terraphd::phd::{filter_step, particle_count, PhdParticleSet};
use terraphd::pipeline::{run_phd, simulate_run, to_tracks};
use terraphd::scenario::{genmap, VehicleScript};
use terraphd::sensing::sample_report;
use terraphd::{
    FilterOutput, FilterParams, GmmConfig, NoiseSpec, Report, Scenario, Stream, TargetState,
    TerrainClass, TerrainMap, TerrainMode,
};

fn small_scenario() -> Scenario {
    Scenario {
        dt: 5.0,
        steps: 40,
        p_fn: 0.2,
        sigma_r: NoiseSpec::REPORT,
        vehicles: vec![
            VehicleScript {
                id: 0,
                appear_step: 0,
                disappear_step: 40,
                waypoints: vec![(500.0, 1000.0), (2500.0, 1000.0)],
                mean_speed: 8.3,
                speed_std: 0.1,
            },
            VehicleScript {
                id: 1,
                appear_step: 5,
                disappear_step: 35,
                waypoints: vec![(1500.0, 2500.0), (1500.0, 500.0)],
                mean_speed: 8.3,
                speed_std: 0.1,
            },
        ],
    }
}

fn small_map() -> TerrainMap {
    genmap(120, 120, 25.0, &Stream::new(5).derive("map")).unwrap()
}

fn run_in_pool(threads: usize, map: &TerrainMap, reports: &[Vec<Report>]) -> Vec<FilterOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let params = FilterParams::with_p_fn(0.2).unwrap();
    let mut outputs = pool
        .install(|| run_phd(map, reports, &params, &GmmConfig::default(), 8, |_| Ok(())))
        .unwrap();
    for o in &mut outputs {
        o.timings = Default::default();
    }
    outputs
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let map = small_map();
    let (_, reports) = simulate_run(&small_scenario(), 0.2, 8).unwrap();
    let one = run_in_pool(1, &map, &reports);
    let many = run_in_pool(4, &map, &reports);
    assert_eq!(one, many);
}

#[test]
fn csv_round_trip_preserves_a_run() {
    let (truth, reports) = simulate_run(&small_scenario(), 0.2, 2).unwrap();
    let mut buf = Vec::new();
    io::write_reports(&reports, &mut buf).unwrap();
    let back = io::read_reports(buf.as_slice(), truth.steps()).unwrap();
    assert_eq!(back.len(), reports.len());
    for (a, b) in reports.iter().zip(&back) {
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.iter().zip(b) {
            assert_eq!(ra.observed, rb.observed);
            assert_eq!(ra.noise, rb.noise);
        }
    }

    let mut buf = Vec::new();
    io::write_truth(&truth, &mut buf).unwrap();
    let back = io::read_truth(buf.as_slice()).unwrap();
    for step in 0..truth.steps() {
        assert_eq!(truth.at(step), back.at(step));
    }
}

#[test]
fn two_vehicles_are_tracked_at_low_miss_rate() {
    let map = TerrainMap::uniform(120, 120, 25.0, (0.0, 0.0), TerrainClass::Road).unwrap();
    let (truth, reports) = simulate_run(&small_scenario(), 0.1, 6).unwrap();
    let params = FilterParams::with_p_fn(0.1).unwrap();
    let outputs = run_phd(
        &map,
        &reports,
        &params,
        &GmmConfig::default(),
        6,
        |_| Ok(()),
    )
    .unwrap();
    let summary = summarize(&evaluate(&truth, &to_tracks(&outputs)));
    assert!(summary.median_error.unwrap() < 100.0, "{summary:?}");
    assert!(summary.cardinality_fraction > 0.8, "{summary:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn posterior_respects_cap_and_particle_budget(
        p_fn in 0.05f64..0.95,
        counts in proptest::collection::vec(0usize..6, 1..8),
        reweight in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let map = small_map();
        let mode = if reweight { TerrainMode::Reweight } else { TerrainMode::Resample };
        let params = FilterParams::new(200, p_fn, 0.01, NoiseSpec::PROCESS, 5.0, 5.0).unwrap().with_terrain_mode(mode);
        let root = Stream::new(seed);
        let mut rng = root.derive("reports");
        let mut state = PhdParticleSet::empty(0);
        let mut prev: Vec<Report> = Vec::new();
        for (step, &n) in counts.iter().enumerate() {
            let batch: Vec<Report> = (0..n)
                .map(|i| {
                    let s = TargetState::new(600.0 + 400.0 * i as f64, 1500.0, 8.0, 0.0);
                    sample_report(&s, &NoiseSpec::REPORT, step, &mut rng)
                })
                .collect();
            let (next, out) = filter_step(&state, &prev, &batch, &params, &map, step, &root.substream(step as u64)).unwrap();
            prop_assert!(out.expected_count <= params.max_count() + 1e-12);
            prop_assert!(out.expected_count <= out.pre_clamp_count + 1e-12);
            prop_assert!((next.cloud().mass() - out.expected_count).abs() <= 1e-9 * out.expected_count.max(1.0));
            prop_assert_eq!(next.len(), particle_count(out.expected_count, params.n_per_unit()));
            prop_assert!(next.cloud().weights().iter().all(|w| w.is_finite() && *w >= 0.0));
            state = next;
            prev = batch;
        }
    }
}
