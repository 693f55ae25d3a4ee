//! Domain value types shared by every module.

use std::f64::consts::PI;

use crate::dynamics::TerrainMode;
use crate::error::{Error, Result};
use crate::resampling::ResampleScheme;

const TWO_PI: f64 = 2.0 * PI;

/// Kinematic state of one ground vehicle.
///
/// Position is in meters (x east, y north), speed in m/s and heading in
/// radians counter-clockwise from east. Headings are kept in `[-π, π)` and
/// speeds are non-negative; use [`TargetState::new`] to enforce both.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
}

impl TargetState {
    pub fn new(x: f64, y: f64, speed: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            speed: speed.max(0.0),
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub(crate) fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.speed, self.heading]
    }
}

/// Per-component standard deviations `[x, y, speed, heading]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma: [f64; 4],
}

impl NoiseSpec {
    /// Standard deviation of a human observer report: 50 m, 50 m, 1 m/s, π/8.
    pub const REPORT: NoiseSpec = NoiseSpec {
        sigma: [50.0, 50.0, 1.0, PI / 8.0],
    };

    /// Process noise of the vehicle motion model: 10 m, 10 m, 2 m/s, π/4.
    pub const PROCESS: NoiseSpec = NoiseSpec {
        sigma: [10.0, 10.0, 2.0, PI / 4.0],
    };

    pub fn new(sigma_x: f64, sigma_y: f64, sigma_speed: f64, sigma_heading: f64) -> Result<Self> {
        let sigma = [sigma_x, sigma_y, sigma_speed, sigma_heading];
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid(format!(
                "noise standard deviations must be finite and positive, got {sigma:?}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn from_array(sigma: [f64; 4]) -> Result<Self> {
        Self::new(sigma[0], sigma[1], sigma[2], sigma[3])
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma[0]
    }
    pub fn sigma_y(&self) -> f64 {
        self.sigma[1]
    }
    pub fn sigma_speed(&self) -> f64 {
        self.sigma[2]
    }
    pub fn sigma_heading(&self) -> f64 {
        self.sigma[3]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.sigma
    }
}

/// One observer report: a noisy state together with the stated uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub step: usize,
    pub observed: TargetState,
    pub noise: NoiseSpec,
}

impl Report {
    pub fn new(step: usize, observed: TargetState, noise: NoiseSpec) -> Self {
        Self {
            step,
            observed,
            noise,
        }
    }
}

/// Parameters of the PHD particle filter.
///
/// Birth and death probabilities are derived from `p_fn` and the constant
/// `k_const` on construction and are never set independently.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    n_per_unit: usize,
    p_fn: f64,
    k_const: f64,
    p_b: f64,
    p_d: f64,
    sigma_w: NoiseSpec,
    max_count: f64,
    dt: f64,
    scheme: ResampleScheme,
    terrain_mode: TerrainMode,
}

impl FilterParams {
    pub const DEFAULT_PARTICLES: usize = 1000;
    pub const DEFAULT_K: f64 = 0.01;
    pub const DEFAULT_MAX_COUNT: f64 = 5.0;
    pub const DEFAULT_DT: f64 = 5.0;

    pub fn new(
        n_per_unit: usize,
        p_fn: f64,
        k_const: f64,
        sigma_w: NoiseSpec,
        max_count: f64,
        dt: f64,
    ) -> Result<Self> {
        let (p_b, p_d) = birth_death_rates(p_fn, k_const)?;
        if n_per_unit == 0 {
            return Err(Error::invalid("particles per unit mass must be at least 1"));
        }
        if !(max_count.is_finite() && max_count > 0.0) {
            return Err(Error::invalid(format!(
                "max_count must be positive, got {max_count}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            n_per_unit,
            p_fn,
            k_const,
            p_b,
            p_d,
            sigma_w,
            max_count,
            dt,
            scheme: ResampleScheme::default(),
            terrain_mode: TerrainMode::default(),
        })
    }

    /// Default settings for a given miss probability: 1000 particles per
    /// unit mass, K = 0.01, at most five targets, five-second steps.
    pub fn with_p_fn(p_fn: f64) -> Result<Self> {
        Self::new(
            Self::DEFAULT_PARTICLES,
            p_fn,
            Self::DEFAULT_K,
            NoiseSpec::PROCESS,
            Self::DEFAULT_MAX_COUNT,
            Self::DEFAULT_DT,
        )
    }

    pub fn with_scheme(mut self, scheme: ResampleScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_terrain_mode(mut self, mode: TerrainMode) -> Self {
        self.terrain_mode = mode;
        self
    }

    pub fn n_per_unit(&self) -> usize {
        self.n_per_unit
    }
    pub fn p_fn(&self) -> f64 {
        self.p_fn
    }
    pub fn k_const(&self) -> f64 {
        self.k_const
    }
    pub fn p_b(&self) -> f64 {
        self.p_b
    }
    pub fn p_d(&self) -> f64 {
        self.p_d
    }
    pub fn sigma_w(&self) -> &NoiseSpec {
        &self.sigma_w
    }
    pub fn max_count(&self) -> f64 {
        self.max_count
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn scheme(&self) -> ResampleScheme {
        self.scheme
    }
    pub fn terrain_mode(&self) -> TerrainMode {
        self.terrain_mode
    }
}

/// Wrap an angle into `[-π, π)`; `π` maps to `-π`.
pub fn wrap_heading(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("heading"));
    }
    Ok(wrap_angle(theta))
}

/// Infallible variant of [`wrap_heading`] for finite inputs.
#[inline]
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let mut r = (theta + PI).rem_euclid(TWO_PI) - PI;
    // rem_euclid may round up to the modulus itself.
    if r >= PI {
        r -= TWO_PI;
    }
    if r < -PI {
        r = -PI;
    }
    r
}

/// Birth and death probabilities `(K^(1 - p_fn), K)`.
///
/// More missed detections mean more steps pass before a new target is
/// confirmed, so the birth probability grows with `p_fn`.
pub fn birth_death_rates(p_fn: f64, k_const: f64) -> Result<(f64, f64)> {
    let open_unit = |v: f64| v > 0.0 && v < 1.0;
    if !open_unit(p_fn) {
        return Err(Error::invalid(format!(
            "p_fn must lie in (0, 1), got {p_fn}"
        )));
    }
    if !open_unit(k_const) {
        return Err(Error::invalid(format!(
            "K must lie in (0, 1), got {k_const}"
        )));
    }
    Ok((k_const.powf(1.0 - p_fn), k_const))
}
