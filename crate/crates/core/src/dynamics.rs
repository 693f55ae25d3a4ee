//! Terrain-modulated vehicle motion.
//!
//! A particle moves by its own speed and heading over one time step, picks up
//! Gaussian process noise on every state component, and the resulting cloud is
//! then weighted (or resampled) by how likely a vehicle is to drive on the
//! terrain each particle landed on.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::resampling::{resample_indices, ResampleScheme};
use crate::rng::Stream;
use crate::terrain::TerrainMap;
use crate::types::{wrap_angle, NoiseSpec, TargetState};

/// Below this many particles the parallel iterators run on the calling thread.
pub(crate) const PAR_MIN_LEN: usize = 512;

/// Particles with non-negative weights. The total weight is the cloud's mass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedCloud {
    states: Vec<TargetState>,
    weights: Vec<f64>,
}

impl WeightedCloud {
    pub fn new(states: Vec<TargetState>, weights: Vec<f64>) -> Result<Self> {
        if states.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} states but {} weights",
                states.len(),
                weights.len()
            )));
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite("particle weight"));
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight { index, weight: w });
            }
        }
        Ok(Self { states, weights })
    }

    /// Equal weights summing to `mass`.
    pub fn uniform(states: Vec<TargetState>, mass: f64) -> Self {
        let w = if states.is_empty() {
            0.0
        } else {
            mass / states.len() as f64
        };
        let weights = vec![w; states.len()];
        Self { states, weights }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub(crate) fn from_parts_unchecked(states: Vec<TargetState>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(states.len(), weights.len());
        Self { states, weights }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[TargetState] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of weights, accumulated in index order.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn into_parts(self) -> (Vec<TargetState>, Vec<f64>) {
        (self.states, self.weights)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TargetState, f64)> + '_ {
        self.states.iter().zip(self.weights.iter().copied())
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
    }

    /// Append another cloud's particles.
    pub fn extend(&mut self, other: WeightedCloud) {
        self.states.extend(other.states);
        self.weights.extend(other.weights);
    }

    /// Weighted mean position, or `None` for a massless cloud.
    pub fn mean_position(&self) -> Option<(f64, f64)> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return None;
        }
        let (sx, sy) = self
            .iter()
            .fold((0.0, 0.0), |(sx, sy), (s, w)| (sx + w * s.x, sy + w * s.y));
        Some((sx / mass, sy / mass))
    }
}

/// How terrain preference is imposed after kinematic propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerrainMode {
    /// Redraw particles in proportion to their terrain probability.
    #[default]
    Resample,
    /// Multiply weights by the terrain probability and rescale to the input mass.
    Reweight,
}

impl std::str::FromStr for TerrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resample" => Ok(Self::Resample),
            "reweight" => Ok(Self::Reweight),
            other => Err(Error::invalid(format!("unknown terrain mode {other:?}"))),
        }
    }
}

/// Distance covered in one step at the state's speed and heading.
#[inline]
pub fn displacement(state: &TargetState, dt: f64) -> (f64, f64) {
    let d = state.speed * dt;
    let (sin, cos) = state.heading.sin_cos();
    (d * cos, d * sin)
}

/// Move one state by its displacement plus independent Gaussian noise.
pub fn kinematic_step<R: Rng + ?Sized>(
    state: &TargetState,
    dt: f64,
    sigma: &NoiseSpec,
    rng: &mut R,
) -> TargetState {
    let (dx, dy) = displacement(state, dt);
    let [sx, sy, ss, sh] = sigma.as_array();
    let mut n = || -> f64 { rng.sample(StandardNormal) };
    TargetState {
        x: state.x + dx + sx * n(),
        y: state.y + dy + sy * n(),
        speed: (state.speed + ss * n()).max(0.0),
        heading: wrap_angle(state.heading + sh * n()),
    }
}

/// Propagate every particle through the motion model, then apply terrain.
///
/// Particle `i` draws its noise from `stream.derive("motion").substream(i)`,
/// so the result does not depend on the thread pool.
pub fn propagate_cloud(
    cloud: &WeightedCloud,
    dt: f64,
    sigma_w: &NoiseSpec,
    map: &TerrainMap,
    stream: &Stream,
    mode: TerrainMode,
) -> Result<WeightedCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let motion = stream.derive("motion");
    let moved: Vec<TargetState> = cloud
        .states
        .par_iter()
        .with_min_len(PAR_MIN_LEN)
        .enumerate()
        .map(|(i, s)| kinematic_step(s, dt, sigma_w, &mut motion.substream(i as u64)))
        .collect();
    let moved = WeightedCloud::from_parts_unchecked(moved, cloud.weights.clone());
    apply_terrain(moved, map, &mut stream.derive("terrain"), mode)
}

/// Impose terrain preference on a cloud while preserving its mass.
pub fn apply_terrain(
    cloud: WeightedCloud,
    map: &TerrainMap,
    rng: &mut Stream,
    mode: TerrainMode,
) -> Result<WeightedCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mass_in = cloud.mass();
    let terrain: Vec<f64> = cloud
        .states
        .par_iter()
        .with_min_len(PAR_MIN_LEN)
        .zip(cloud.weights.par_iter())
        .map(|(s, w)| w * map.terrain_weight(s.x, s.y))
        .collect();
    let total: f64 = terrain.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight("terrain"));
    }
    match mode {
        TerrainMode::Reweight => {
            let factor = mass_in / total;
            let weights = terrain.into_iter().map(|w| w * factor).collect();
            Ok(WeightedCloud::from_parts_unchecked(cloud.states, weights))
        }
        TerrainMode::Resample => {
            let n = cloud.len();
            let idx = resample_indices(&terrain, n, ResampleScheme::Multinomial, rng)?;
            let states = idx.into_iter().map(|i| cloud.states[i]).collect();
            Ok(WeightedCloud::from_parts_unchecked(
                states,
                vec![mass_in / n as f64; n],
            ))
        }
    }
}
