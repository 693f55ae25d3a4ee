//! End-to-end runs: scenario simulation, filtering and peak extraction with
//! one seed fanned out to named substreams.

use std::time::Instant;

use crate::bootstrap::{BootstrapConfig, BootstrapFilter};
use crate::dynamics::WeightedCloud;
use crate::error::{Error, Result};
use crate::eval::TrackStep;
use crate::gmm::{detect_peaks, GaussianMixture, GmmConfig, Peak};
use crate::phd::{FilterOutput, PhdFilter, PhdParticleSet};
use crate::rng::Stream;
use crate::scenario::{generate_reports, simulate, GroundTruth, Scenario};
use crate::terrain::TerrainMap;
use crate::types::{FilterParams, Report};

/// Named substreams of one run seed. The truth does not depend on `p_fn`,
/// and the reports do not depend on filter settings.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub scenario: Stream,
    pub reports: Stream,
    pub filter: Stream,
    pub gmm: Stream,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let root = Stream::new(seed);
        Self {
            scenario: root.derive("scenario"),
            reports: root.derive("reports"),
            filter: root.derive("filter"),
            gmm: root.derive("gmm"),
        }
    }
}

/// Simulate ground truth and reports for a scenario with the given miss probability.
pub fn simulate_run(
    scenario: &Scenario,
    p_fn: f64,
    seed: u64,
) -> Result<(GroundTruth, Vec<Vec<Report>>)> {
    let streams = RunStreams::new(seed);
    let truth = simulate(
        &scenario.vehicles,
        scenario.dt,
        scenario.steps,
        &streams.scenario,
    )?;
    let reports = generate_reports(&truth, p_fn, &scenario.sigma_r, &streams.reports)?;
    Ok((truth, reports))
}

/// What a PHD step exposes to observers.
pub struct StepView<'a> {
    pub output: &'a FilterOutput,
    pub posterior: &'a PhdParticleSet,
    pub mixture: Option<&'a GaussianMixture>,
}

/// Run the PHD filter over all steps, extracting peaks after each update.
///
/// `observer` sees every step after peak extraction, for dumps.
pub fn run_phd(
    map: &TerrainMap,
    reports: &[Vec<Report>],
    params: &FilterParams,
    gmm: &GmmConfig,
    seed: u64,
    mut observer: impl FnMut(&StepView<'_>) -> Result<()>,
) -> Result<Vec<FilterOutput>> {
    let streams = RunStreams::new(seed);
    let mut filter = PhdFilter::new(params.clone(), map, streams.filter.clone());
    let mut outputs = Vec::with_capacity(reports.len());
    for (step, batch) in reports.iter().enumerate() {
        let mut output = filter.step(batch).map_err(Error::at_step(step))?;
        let start = Instant::now();
        let (mixture, peaks) = detect_peaks(
            filter.posterior().cloud(),
            output.expected_count,
            &mut streams.gmm.substream(step as u64),
            gmm,
        )
        .map_err(Error::at_step(step))?;
        output.timings.gmm_fit = start.elapsed();
        output.peaks = peaks;
        observer(&StepView {
            output: &output,
            posterior: filter.posterior(),
            mixture: mixture.as_ref(),
        })?;
        outputs.push(output);
    }
    Ok(outputs)
}

/// Single-target tracks from the bootstrap filter: one peak at the posterior
/// mean once the first report has arrived.
///
/// `observer` receives the step and the posterior cloud, when there is one.
pub fn run_bootstrap(
    map: &TerrainMap,
    reports: &[Vec<Report>],
    config: &BootstrapConfig,
    seed: u64,
    mut observer: impl FnMut(usize, &WeightedCloud) -> Result<()>,
) -> Result<Vec<TrackStep>> {
    let streams = RunStreams::new(seed);
    let mut filter = BootstrapFilter::new(config.clone(), map, streams.filter.clone());
    reports
        .iter()
        .enumerate()
        .map(|(step, batch)| {
            let track = match filter.step(batch).map_err(Error::at_step(step))? {
                Some(cloud) => {
                    observer(step, &cloud)?;
                    let (x, y) = cloud.mean_position().unwrap_or((f64::NAN, f64::NAN));
                    TrackStep {
                        step,
                        n_hat: 1.0,
                        peaks: vec![Peak::new(x, y, 1.0)],
                    }
                }
                None => TrackStep {
                    step,
                    n_hat: 0.0,
                    peaks: Vec::new(),
                },
            };
            Ok(track)
        })
        .collect()
}

pub fn to_tracks(outputs: &[FilterOutput]) -> Vec<TrackStep> {
    outputs
        .iter()
        .map(|o| TrackStep {
            step: o.step,
            n_hat: o.expected_count,
            peaks: o.peaks.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::VehicleScript;
    use crate::terrain::TerrainClass;
    use crate::types::NoiseSpec;

    fn straight() -> Scenario {
        Scenario {
            dt: 5.0,
            steps: 20,
            p_fn: 0.1,
            sigma_r: NoiseSpec::REPORT,
            vehicles: vec![VehicleScript {
                id: 0,
                appear_step: 0,
                disappear_step: 20,
                waypoints: vec![(1000.0, 2500.0), (4000.0, 2500.0)],
                mean_speed: 8.3,
                speed_std: 0.5,
            }],
        }
    }

    #[test]
    fn truth_is_independent_of_miss_probability() {
        let (a, ra) = simulate_run(&straight(), 0.1, 3).unwrap();
        let (b, rb) = simulate_run(&straight(), 0.9, 3).unwrap();
        assert_eq!(a, b);
        let na: usize = ra.iter().map(Vec::len).sum();
        let nb: usize = rb.iter().map(Vec::len).sum();
        assert!(na > nb);
    }

    #[test]
    fn phd_and_bootstrap_follow_one_vehicle() {
        let map = TerrainMap::uniform(200, 200, 25.0, (0.0, 0.0), TerrainClass::Road).unwrap();
        let (truth, reports) = simulate_run(&straight(), 0.1, 9).unwrap();
        let params = FilterParams::with_p_fn(0.1).unwrap();
        let mut seen = 0;
        let out = run_phd(&map, &reports, &params, &GmmConfig::default(), 9, |v| {
            seen += 1;
            assert_eq!(v.output.particles, v.posterior.len());
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 20);
        let last = out.last().unwrap();
        let s = truth.at(19)[0].1;
        let p = last.peaks[0];
        assert!((p.x - s.x).hypot(p.y - s.y) < 150.0, "{p:?} vs {s:?}");

        let tracks = run_bootstrap(
            &map,
            &reports,
            &BootstrapConfig::default(),
            9,
            |_, _| Ok(()),
        )
        .unwrap();
        let p = tracks[19].peaks[0];
        assert!((p.x - s.x).hypot(p.y - s.y) < 150.0, "{p:?} vs {s:?}");
    }
}
