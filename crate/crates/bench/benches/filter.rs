use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use terraphd::gmm::{detect_peaks, fit};
use terraphd::phd::{filter_step, PhdParticleSet};
use terraphd::scenario::{genmap, BUNDLED_MAP};
use terraphd::sensing::sample_report;
use terraphd::{FilterParams, GmmConfig, NoiseSpec, Report, Stream, TargetState, TerrainMap};

fn bundled_map() -> TerrainMap {
    let (w, h, cell) = BUNDLED_MAP;
    genmap(w, h, cell, &Stream::new(0).derive("map")).unwrap()
}

/// Three straight-moving targets, one report each per step.
fn reports(step: usize, rng: &mut Stream) -> Vec<Report> {
    let t = step as f64 * 5.0 * 8.0;
    [
        TargetState::new(2000.0 + t, 2000.0, 8.0, 0.0),
        TargetState::new(5000.0, 3000.0 + t, 8.0, std::f64::consts::FRAC_PI_2),
        TargetState::new(8000.0 - t, 7000.0, 8.0, std::f64::consts::PI),
    ]
    .iter()
    .map(|s| sample_report(s, &NoiseSpec::REPORT, step, rng))
    .collect()
}

/// Filter state after a few steps, with the reports of its last step.
fn warm_state(
    map: &TerrainMap,
    params: &FilterParams,
    steps: usize,
) -> (PhdParticleSet, Vec<Report>) {
    let root = Stream::new(1);
    let mut rng = root.derive("reports");
    let mut state = PhdParticleSet::empty(0);
    let mut prev = Vec::new();
    for step in 0..steps {
        let batch = reports(step, &mut rng);
        state = filter_step(
            &state,
            &prev,
            &batch,
            params,
            map,
            step,
            &root.substream(step as u64),
        )
        .unwrap()
        .0;
        prev = batch;
    }
    (state, prev)
}

fn bench_filter_step(c: &mut Criterion) {
    let map = bundled_map();
    let mut group = c.benchmark_group("filter_step");
    for n in [250, 1000, 4000] {
        let params = FilterParams::new(n, 0.1, 0.01, NoiseSpec::PROCESS, 5.0, 5.0).unwrap();
        let (state, prev) = warm_state(&map, &params, 10);
        let next = reports(10, &mut Stream::new(2));
        let stream = Stream::new(3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                filter_step(black_box(&state), &prev, &next, &params, &map, 10, &stream).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_mixture(c: &mut Criterion) {
    let map = bundled_map();
    let params = FilterParams::with_p_fn(0.1).unwrap();
    let (state, _) = warm_state(&map, &params, 10);
    let config = GmmConfig::default();
    c.bench_function("gmm_fit_k3", |b| {
        b.iter(|| fit(black_box(state.cloud()), 3, &mut Stream::new(4), &config).unwrap())
    });
    c.bench_function("detect_peaks", |b| {
        b.iter(|| {
            detect_peaks(
                black_box(state.cloud()),
                state.expected_count(),
                &mut Stream::new(4),
                &config,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_filter_step, bench_mixture);
criterion_main!(benches);
