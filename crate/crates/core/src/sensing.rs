//! Observer reports: the additive Gaussian observation model, its likelihood,
//! report synthesis, and the inverse map used to seed births from reports.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::kinematic_step;
use crate::types::{wrap_angle, NoiseSpec, Report, TargetState};

/// Precomputed Gaussian kernel of one report.
#[derive(Debug, Clone, Copy)]
pub struct ReportKernel {
    observed: [f64; 4],
    inv_sigma: [f64; 4],
    log_norm: f64,
}

impl ReportKernel {
    pub fn new(report: &Report) -> Self {
        let sigma = report.noise.as_array();
        let log_norm = -sigma.iter().map(|s| s.ln()).sum::<f64>() - 2.0 * (2.0 * PI).ln();
        Self {
            observed: report.observed.as_array(),
            inv_sigma: sigma.map(|s| 1.0 / s),
            log_norm,
        }
    }

    #[inline]
    pub fn log_density(&self, state: &TargetState) -> f64 {
        let r = [
            (self.observed[0] - state.x) * self.inv_sigma[0],
            (self.observed[1] - state.y) * self.inv_sigma[1],
            (self.observed[2] - state.speed) * self.inv_sigma[2],
            wrap_angle(self.observed[3] - state.heading) * self.inv_sigma[3],
        ];
        self.log_norm - 0.5 * (r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + r[3] * r[3])
    }

    #[inline]
    pub fn density(&self, state: &TargetState) -> f64 {
        self.log_density(state).exp()
    }
}

/// Density of `report` given that the true state is `state`.
///
/// Product of four independent Gaussians with the report's own standard
/// deviations; the heading residual is wrapped before it is evaluated.
pub fn likelihood(report: &Report, state: &TargetState) -> f64 {
    ReportKernel::new(report).density(state)
}

/// Draw a noisy report of `true_state`.
pub fn sample_report<R: Rng + ?Sized>(
    true_state: &TargetState,
    noise: &NoiseSpec,
    step: usize,
    rng: &mut R,
) -> Report {
    let [sx, sy, ss, sh] = noise.as_array();
    let mut n = || -> f64 { rng.sample(StandardNormal) };
    let observed = TargetState::new(
        true_state.x + sx * n(),
        true_state.y + sy * n(),
        true_state.speed + ss * n(),
        true_state.heading + sh * n(),
    );
    Report::new(step, observed, *noise)
}

/// Draw a state consistent with a report: `observed - v`, `v` the report noise.
pub fn invert_observation<R: Rng + ?Sized>(report: &Report, rng: &mut R) -> TargetState {
    let [sx, sy, ss, sh] = report.noise.as_array();
    let z = &report.observed;
    let mut n = || -> f64 { rng.sample(StandardNormal) };
    TargetState::new(
        z.x - sx * n(),
        z.y - sy * n(),
        z.speed - ss * n(),
        z.heading - sh * n(),
    )
}

/// One draw from the birth density of a previous-step report: invert the
/// observation, then advance one motion step. Terrain is left to the caller.
pub fn birth_sample<R: Rng + ?Sized>(
    report: &Report,
    dt: f64,
    sigma_w: &NoiseSpec,
    rng: &mut R,
) -> TargetState {
    let seed_state = invert_observation(report, rng);
    kinematic_step(&seed_state, dt, sigma_w, rng)
}
