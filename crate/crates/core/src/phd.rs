//! Particle implementation of the probability hypothesis density (PHD) filter.
//!
//! The PHD is a density over single-target state space whose integral is the
//! expected number of targets. It is carried as a particle cloud whose total
//! weight is that expected count, with `n_per_unit` particles per unit mass
//! after resampling.
//!
//! One step runs:
//!
//! 1. **predict**: survivors of the previous posterior are moved through the
//!    motion model and scaled by `1 - p_D`; every report of the previous step
//!    spawns a birth block of `n_per_unit` particles with total mass `p_B`.
//! 2. **update**: each current report contributes a block normalized to unit
//!    mass, and the prior itself is kept with weight `p_FN`. All blocks share
//!    the prior's support, so instead of copying the prior once per report the
//!    weight of particle `s` is collapsed to
//!    `w_s * (p_FN + Σ_i L_i(s) / C_i)` with `C_i = Σ_s w_s L_i(s)`.
//! 3. **estimate** the expected count as the total weight, capped at
//!    `max_count`.
//! 4. **resample** `round(count * n_per_unit)` equally weighted particles.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dynamics::{apply_terrain, propagate_cloud, WeightedCloud, PAR_MIN_LEN};
use crate::error::Result;
use crate::gmm::Peak;
use crate::resampling::{resample_indices, ResampleScheme};
use crate::rng::Stream;
use crate::sensing::{birth_sample, invert_observation, ReportKernel};
use crate::terrain::TerrainMap;
use crate::types::{FilterParams, Report, TargetState};

/// Mass above which a cloud always keeps at least one particle.
const MIN_SURVIVING_MASS: f64 = 1e-3;

/// The posterior PHD after resampling.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhdParticleSet {
    cloud: WeightedCloud,
    step: usize,
}

impl PhdParticleSet {
    pub fn new(cloud: WeightedCloud, step: usize) -> Self {
        Self { cloud, step }
    }

    /// The filter's starting point: no particles, no expected targets.
    pub fn empty(step: usize) -> Self {
        Self {
            cloud: WeightedCloud::empty(),
            step,
        }
    }

    pub fn cloud(&self) -> &WeightedCloud {
        &self.cloud
    }

    pub fn into_cloud(self) -> WeightedCloud {
        self.cloud
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn expected_count(&self) -> f64 {
        self.cloud.mass()
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Result of the measurement update.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub cloud: WeightedCloud,
    /// Indices of reports whose normalizer was zero; their blocks are absent.
    pub unsupported: Vec<usize>,
}

/// Wall-clock time spent in each phase of a step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub predict: Duration,
    pub update: Duration,
    pub resample: Duration,
    pub gmm_fit: Duration,
}

impl PhaseTimings {
    pub fn filter_total(&self) -> Duration {
        self.predict + self.update + self.resample
    }

    pub fn total(&self) -> Duration {
        self.filter_total() + self.gmm_fit
    }
}

/// Per-step record of what the filter did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutput {
    pub step: usize,
    /// Expected target count after the cap.
    pub expected_count: f64,
    /// Total posterior weight before the cap was applied.
    pub pre_clamp_count: f64,
    /// Total weight of the predicted (prior) PHD.
    pub prior_count: f64,
    pub n_reports: usize,
    /// Reports that no prior particle could explain. Each is given its own
    /// unit-mass block drawn around the report instead of being dropped.
    pub unsupported_reports: Vec<usize>,
    pub particles: usize,
    /// Detected maxima; left empty by the filter and filled by peak extraction.
    pub peaks: Vec<Peak>,
    pub timings: PhaseTimings,
}

/// Predicted PHD: moved survivors plus one birth block per previous report.
pub fn predict(
    posterior_prev: &PhdParticleSet,
    reports_prev: &[Report],
    params: &FilterParams,
    map: &TerrainMap,
    stream: &Stream,
) -> Result<WeightedCloud> {
    let mut prior = if posterior_prev.is_empty() {
        WeightedCloud::empty()
    } else {
        let mut survivors = propagate_cloud(
            posterior_prev.cloud(),
            params.dt(),
            params.sigma_w(),
            map,
            &stream.derive("survivors"),
            params.terrain_mode(),
        )?;
        survivors.scale(1.0 - params.p_d());
        survivors
    };

    let births = stream.derive("births");
    for (i, report) in reports_prev.iter().enumerate() {
        let block_stream = births.substream(i as u64);
        let draws = block_stream.derive("draw");
        let states: Vec<TargetState> = (0..params.n_per_unit())
            .into_par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|j| {
                birth_sample(
                    report,
                    params.dt(),
                    params.sigma_w(),
                    &mut draws.substream(j as u64),
                )
            })
            .collect();
        let block = WeightedCloud::uniform(states, params.p_b());
        let block = apply_terrain(
            block,
            map,
            &mut block_stream.derive("terrain"),
            params.terrain_mode(),
        )?;
        prior.extend(block);
    }
    Ok(prior)
}

/// Measurement update with the copies of the prior collapsed into one weight
/// per particle.
///
/// A report whose normalizer is zero (no particle can explain it) is listed in
/// [`UpdateOutcome::unsupported`] and contributes nothing.
pub fn update(prior: &WeightedCloud, reports_t: &[Report], params: &FilterParams) -> UpdateOutcome {
    let p_fn = params.p_fn();
    let mut weights: Vec<f64> = prior.weights().iter().map(|w| w * p_fn).collect();
    let mut unsupported = Vec::new();

    for (i, report) in reports_t.iter().enumerate() {
        let kernel = ReportKernel::new(report);
        let joint: Vec<f64> = prior
            .states()
            .par_iter()
            .with_min_len(PAR_MIN_LEN)
            .zip(prior.weights().par_iter())
            .map(|(s, w)| w * kernel.density(s))
            .collect();
        let normalizer: f64 = joint.iter().sum();
        if !(normalizer > 0.0 && normalizer.is_finite()) {
            unsupported.push(i);
            continue;
        }
        let inv = 1.0 / normalizer;
        for (w, j) in weights.iter_mut().zip(&joint) {
            *w += j * inv;
        }
    }

    UpdateOutcome {
        cloud: WeightedCloud::from_parts_unchecked(prior.states().to_vec(), weights),
        unsupported,
    }
}

/// Expected target count, capped at `max_count`. A capped cloud is rescaled so
/// its mass equals the returned count.
pub fn estimate_count(posterior: &mut WeightedCloud, params: &FilterParams) -> f64 {
    let mass = posterior.mass();
    if mass > params.max_count() {
        posterior.scale(params.max_count() / mass);
        return params.max_count();
    }
    mass
}

/// Number of particles that represent `mass` at `n_per_unit` per unit mass.
pub fn particle_count(mass: f64, n_per_unit: usize) -> usize {
    if !(mass > 0.0) {
        return 0;
    }
    let n = (mass * n_per_unit as f64).round() as usize;
    if n == 0 && mass > MIN_SURVIVING_MASS {
        1
    } else {
        n
    }
}

/// Draw an equally weighted particle set carrying the same mass.
pub fn resample(
    posterior: &WeightedCloud,
    n_per_unit: usize,
    scheme: ResampleScheme,
    step: usize,
    rng: &mut Stream,
) -> Result<PhdParticleSet> {
    let mass = posterior.mass();
    let count = particle_count(mass, n_per_unit);
    if count == 0 {
        // Validate weights even when nothing is drawn.
        resample_indices(posterior.weights(), 0, scheme, rng)?;
        return Ok(PhdParticleSet::empty(step));
    }
    let idx = resample_indices(posterior.weights(), count, scheme, rng)?;
    let states = idx.into_iter().map(|i| posterior.states()[i]).collect();
    Ok(PhdParticleSet::new(
        WeightedCloud::uniform(states, mass),
        step,
    ))
}

/// Unit-mass cloud drawn around a report that the prior cannot explain.
fn report_block(
    report: &Report,
    params: &FilterParams,
    map: &TerrainMap,
    stream: &Stream,
) -> Result<WeightedCloud> {
    let draws = stream.derive("draw");
    let states: Vec<TargetState> = (0..params.n_per_unit())
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|j| invert_observation(report, &mut draws.substream(j as u64)))
        .collect();
    apply_terrain(
        WeightedCloud::uniform(states, 1.0),
        map,
        &mut stream.derive("terrain"),
        params.terrain_mode(),
    )
}

/// One full predict, update, estimate and resample cycle.
///
/// `reports_prev` must be the report set that was passed as `reports_t` on the
/// previous call; it drives the birth model. `stream` should be unique to the
/// step (for example `root.substream(step)`).
pub fn filter_step(
    state: &PhdParticleSet,
    reports_prev: &[Report],
    reports_t: &[Report],
    params: &FilterParams,
    map: &TerrainMap,
    step: usize,
    stream: &Stream,
) -> Result<(PhdParticleSet, FilterOutput)> {
    let mut timings = PhaseTimings::default();

    let start = Instant::now();
    let prior = predict(state, reports_prev, params, map, &stream.derive("predict"))?;
    timings.predict = start.elapsed();

    let start = Instant::now();
    let prior_count = prior.mass();
    let UpdateOutcome {
        mut cloud,
        unsupported,
    } = update(&prior, reports_t, params);
    let seeds = stream.derive("unsupported");
    for &i in &unsupported {
        cloud.extend(report_block(
            &reports_t[i],
            params,
            map,
            &seeds.substream(i as u64),
        )?);
    }
    let pre_clamp_count = cloud.mass();
    let expected_count = estimate_count(&mut cloud, params);
    timings.update = start.elapsed();

    let start = Instant::now();
    let posterior = resample(
        &cloud,
        params.n_per_unit(),
        params.scheme(),
        step,
        &mut stream.derive("resample"),
    )?;
    timings.resample = start.elapsed();

    let output = FilterOutput {
        step,
        expected_count,
        pre_clamp_count,
        prior_count,
        n_reports: reports_t.len(),
        unsupported_reports: unsupported,
        particles: posterior.len(),
        peaks: Vec::new(),
        timings,
    };
    Ok((posterior, output))
}

/// Stateful driver that remembers the previous posterior and report set.
#[derive(Debug, Clone)]
pub struct PhdFilter<'a> {
    params: FilterParams,
    map: &'a TerrainMap,
    stream: Stream,
    posterior: PhdParticleSet,
    reports_prev: Vec<Report>,
    next_step: usize,
}

impl<'a> PhdFilter<'a> {
    /// A filter with an empty initial PHD. Births start one step after the
    /// first reports arrive.
    pub fn new(params: FilterParams, map: &'a TerrainMap, stream: Stream) -> Self {
        Self {
            params,
            map,
            stream,
            posterior: PhdParticleSet::empty(0),
            reports_prev: Vec::new(),
            next_step: 0,
        }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn posterior(&self) -> &PhdParticleSet {
        &self.posterior
    }

    pub fn next_step(&self) -> usize {
        self.next_step
    }

    /// Process the reports of the next time step.
    pub fn step(&mut self, reports_t: &[Report]) -> Result<FilterOutput> {
        let step = self.next_step;
        let (posterior, output) = filter_step(
            &self.posterior,
            &self.reports_prev,
            reports_t,
            &self.params,
            self.map,
            step,
            &self.stream.substream(step as u64),
        )?;
        self.posterior = posterior;
        self.reports_prev = reports_t.to_vec();
        self.next_step += 1;
        Ok(output)
    }
}
