//! Terrain-aware multi-target tracking with a particle PHD filter.
//!
//! The filter carries the first-moment density of the multi-target state as a
//! weighted particle cloud whose total weight is the expected number of
//! targets. Vehicles move with a near-constant-velocity model thinned by a
//! terrain map, observers report noisy full states with a miss probability,
//! and target positions are read off as peaks of a Gaussian mixture fitted to
//! the particles.
//!
//! ```
//! use terraphd::{FilterParams, PhdFilter, Stream, TerrainClass, TerrainMap};
//!
//! let map = TerrainMap::uniform(100, 100, 50.0, (0.0, 0.0), TerrainClass::Road).unwrap();
//! let mut filter = PhdFilter::new(FilterParams::with_p_fn(0.1).unwrap(), &map, Stream::new(7));
//! let out = filter.step(&[]).unwrap();
//! assert_eq!(out.expected_count, 0.0);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod io;
pub mod phd;
pub mod pipeline;
pub mod resampling;
pub mod rng;
pub mod scenario;
pub mod sensing;
pub mod terrain;
pub mod types;

pub use bootstrap::{bootstrap_step, BootstrapConfig, BootstrapFilter};
pub use dynamics::{TerrainMode, WeightedCloud};
pub use error::{Error, Result};
pub use eval::{position_errors, summarize, StepMetrics, Summary, TrackStep};
pub use gmm::{detect_peaks, GaussianMixture, GmmConfig, Peak};
pub use phd::{filter_step, FilterOutput, PhaseTimings, PhdFilter, PhdParticleSet};
pub use resampling::ResampleScheme;
pub use rng::Stream;
pub use scenario::{GroundTruth, Scenario};
pub use terrain::{TerrainClass, TerrainMap, TerrainProbabilities};
pub use types::{FilterParams, NoiseSpec, Report, TargetState};
