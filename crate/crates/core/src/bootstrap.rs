//! Single-target bootstrap particle filter built from the same motion,
//! observation and resampling kernels as the PHD filter.

use rayon::prelude::*;

use crate::dynamics::{propagate_cloud, TerrainMode, WeightedCloud, PAR_MIN_LEN};
use crate::error::{Error, Result};
use crate::resampling::{resample_indices, ResampleScheme};
use crate::rng::Stream;
use crate::sensing::{invert_observation, ReportKernel};
use crate::terrain::TerrainMap;
use crate::types::{NoiseSpec, Report, TargetState};

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub sigma_w: NoiseSpec,
    pub terrain_mode: TerrainMode,
    pub scheme: ResampleScheme,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            dt: 5.0,
            sigma_w: NoiseSpec::PROCESS,
            terrain_mode: TerrainMode::Resample,
            scheme: ResampleScheme::Multinomial,
        }
    }
}

/// Result of one predict, weight, resample cycle.
#[derive(Debug, Clone)]
pub struct BootstrapOutput {
    /// Propagated particles with likelihood weights normalized to one.
    pub weighted: WeightedCloud,
    /// `n_particles` equally weighted particles drawn from `weighted`.
    pub posterior: WeightedCloud,
}

impl BootstrapOutput {
    /// Posterior mean position, computed from the weighted set.
    pub fn mean_position(&self) -> (f64, f64) {
        self.weighted
            .mean_position()
            .unwrap_or((f64::NAN, f64::NAN))
    }
}

/// Propagate the cloud through the motion model only (a step without a report).
pub fn bootstrap_predict(
    cloud: &WeightedCloud,
    config: &BootstrapConfig,
    map: &TerrainMap,
    stream: &Stream,
) -> Result<WeightedCloud> {
    propagate_cloud(
        cloud,
        config.dt,
        &config.sigma_w,
        map,
        &stream.derive("motion"),
        config.terrain_mode,
    )
}

/// Propagate, weight by the report likelihood, normalize, resample.
pub fn bootstrap_step(
    cloud: &WeightedCloud,
    report: &Report,
    config: &BootstrapConfig,
    map: &TerrainMap,
    stream: &Stream,
) -> Result<BootstrapOutput> {
    let predicted = bootstrap_predict(cloud, config, map, stream)?;
    let kernel = ReportKernel::new(report);
    let raw: Vec<f64> = predicted
        .states()
        .par_iter()
        .with_min_len(PAR_MIN_LEN)
        .zip(predicted.weights().par_iter())
        .map(|(s, w)| w * kernel.density(s))
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::ZeroWeight(
            "report likelihood; no particle explains the report",
        ));
    }
    let weights: Vec<f64> = raw.into_iter().map(|w| w / total).collect();
    let (states, _) = predicted.into_parts();
    let weighted = WeightedCloud::from_parts_unchecked(states, weights);

    let idx = resample_indices(
        weighted.weights(),
        config.n_particles,
        config.scheme,
        &mut stream.derive("resample"),
    )?;
    let resampled = idx.into_iter().map(|i| weighted.states()[i]).collect();
    Ok(BootstrapOutput {
        weighted,
        posterior: WeightedCloud::uniform(resampled, 1.0),
    })
}

/// Initial cloud drawn around a report.
pub fn initial_cloud(report: &Report, n_particles: usize, stream: &Stream) -> WeightedCloud {
    let states: Vec<TargetState> = (0..n_particles)
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|i| invert_observation(report, &mut stream.substream(i as u64)))
        .collect();
    WeightedCloud::uniform(states, 1.0)
}

/// Stateful single-target tracker.
///
/// The cloud is seeded from the first report. Later steps with a report run
/// [`bootstrap_step`]; steps without one only predict. With several reports in
/// one step the first is used.
#[derive(Debug, Clone)]
pub struct BootstrapFilter<'a> {
    config: BootstrapConfig,
    map: &'a TerrainMap,
    stream: Stream,
    cloud: Option<WeightedCloud>,
    next_step: usize,
}

impl<'a> BootstrapFilter<'a> {
    pub fn new(config: BootstrapConfig, map: &'a TerrainMap, stream: Stream) -> Self {
        Self {
            config,
            map,
            stream,
            cloud: None,
            next_step: 0,
        }
    }

    pub fn cloud(&self) -> Option<&WeightedCloud> {
        self.cloud.as_ref()
    }

    /// Returns the current posterior estimate, or `None` before the first report.
    pub fn step(&mut self, reports: &[Report]) -> Result<Option<WeightedCloud>> {
        let step_stream = self.stream.substream(self.next_step as u64);
        self.next_step += 1;
        let report = reports.first();
        let next = match (&self.cloud, report) {
            (None, None) => return Ok(None),
            (None, Some(r)) => {
                initial_cloud(r, self.config.n_particles, &step_stream.derive("init"))
            }
            (Some(c), None) => bootstrap_predict(c, &self.config, self.map, &step_stream)?,
            (Some(c), Some(r)) => {
                bootstrap_step(c, r, &self.config, self.map, &step_stream)?.posterior
            }
        };
        self.cloud = Some(next.clone());
        Ok(Some(next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::TerrainClass;

    fn tiny() -> NoiseSpec {
        NoiseSpec::new(1e-9, 1e-9, 1e-9, 1e-9).unwrap()
    }

    fn map() -> TerrainMap {
        TerrainMap::uniform(100, 100, 100.0, (-5000.0, -5000.0), TerrainClass::Road).unwrap()
    }

    #[test]
    fn noiseless_posterior_collapses_on_truth() {
        let config = BootstrapConfig {
            n_particles: 200,
            dt: 5.0,
            sigma_w: tiny(),
            terrain_mode: TerrainMode::Reweight,
            scheme: ResampleScheme::Multinomial,
        };
        let truth = TargetState::new(0.0, 0.0, 8.3, 0.0);
        let cloud = WeightedCloud::uniform(vec![truth; 200], 1.0);
        let report = Report::new(1, TargetState::new(41.5, 0.0, 8.3, 0.0), tiny());
        let out = bootstrap_step(&cloud, &report, &config, &map(), &Stream::new(0)).unwrap();
        assert_eq!(out.posterior.len(), 200);
        for s in out.posterior.states() {
            assert!((s.x - 41.5).abs() < 1e-6 && s.y.abs() < 1e-6);
        }
        let sum: f64 = out.weighted.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(out.posterior.weights().iter().all(|&w| w == 1.0 / 200.0));
    }

    #[test]
    fn unexplained_report_is_an_error() {
        let config = BootstrapConfig::default();
        let cloud = WeightedCloud::uniform(vec![TargetState::default(); 10], 1.0);
        let report = Report::new(1, TargetState::new(1e7, 0.0, 0.0, 0.0), NoiseSpec::REPORT);
        assert!(matches!(
            bootstrap_step(&cloud, &report, &config, &map(), &Stream::new(0)),
            Err(Error::ZeroWeight(_))
        ));
    }

    #[test]
    fn repeated_report_does_not_widen_posterior() {
        // Stationary target, only the x component informative.
        let config = BootstrapConfig {
            n_particles: 20_000,
            dt: 1.0,
            sigma_w: NoiseSpec::new(1e-9, 1e-9, 1e-9, 1e-9).unwrap(),
            terrain_mode: TerrainMode::Reweight,
            scheme: ResampleScheme::Systematic,
        };
        let noise = NoiseSpec::new(1.0, 1e6, 1e6, 1e6).unwrap();
        let prior = initial_cloud(
            &Report::new(
                0,
                TargetState::default(),
                NoiseSpec::new(2.0, 1e-9, 1e-9, 1e-9).unwrap(),
            ),
            20_000,
            &Stream::new(1),
        );
        let report = Report::new(1, TargetState::new(0.5, 0.0, 0.0, 0.0), noise);
        let var = |c: &WeightedCloud| {
            let (m, _) = c.mean_position().unwrap();
            c.iter().map(|(s, w)| w * (s.x - m).powi(2)).sum::<f64>() / c.mass()
        };
        let first = bootstrap_step(&prior, &report, &config, &map(), &Stream::new(2)).unwrap();
        let second =
            bootstrap_step(&first.posterior, &report, &config, &map(), &Stream::new(3)).unwrap();
        let (v1, v2) = (var(&first.weighted), var(&second.weighted));
        // Conjugate values: 4/5 after one report, 4/9 after two.
        assert!((v1 - 0.8).abs() < 0.05, "v1 {v1}");
        assert!((v2 - 4.0 / 9.0).abs() < 0.05, "v2 {v2}");
        assert!(v2 <= v1);
    }

    #[test]
    fn filter_seeds_from_first_report_and_predicts_through_gaps() {
        let config = BootstrapConfig {
            n_particles: 500,
            ..Default::default()
        };
        let m = map();
        let mut f = BootstrapFilter::new(config, &m, Stream::new(4));
        assert!(f.step(&[]).unwrap().is_none());
        let r = Report::new(1, TargetState::new(0.0, 0.0, 8.3, 0.0), NoiseSpec::REPORT);
        assert_eq!(f.step(&[r]).unwrap().unwrap().len(), 500);
        let after_gap = f.step(&[]).unwrap().unwrap();
        let (x, _) = after_gap.mean_position().unwrap();
        assert!(x > 10.0, "cloud should drift east, mean x {x}");
        let r = Report::new(3, TargetState::new(83.0, 0.0, 8.3, 0.0), NoiseSpec::REPORT);
        assert!(f.step(&[r]).unwrap().is_some());
    }
}
