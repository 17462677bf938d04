//! Deterministic 3D simulator in which point agents learn, via tabular
//! Q-learning over scalar-field observations, to reach moving targets while
//! avoiding spherical obstacles.
//!
//! The crate is organised around six subsystems:
//!
//! - [`field`] — pure scalar-field math: per-source Gaussian density, analytic
//!   gradients, inverse-square aggregation, and heatmap grid sampling.
//! - [`env`] — the 50-unit cube world: target cells, obstacles, movement
//!   resolution, confined target motion, and sensing.
//! - [`agent`] — observation discretization, the three macro-actions,
//!   epsilon-greedy selection, the Q-update, and the reward function.
//! - [`engine`] — episode and training orchestration plus metric collection.
//! - [`config`] — the flat JSON run configuration with validation.
//! - [`io`] — byte-stable CSV/JSON/text writers and their parsers.
//!
//! Every stochastic subsystem draws from an independently seeded ChaCha8
//! stream derived from one master seed (see [`rng`]), so a fixed seed and
//! config reproduce a run bit-for-bit.

pub mod agent;
pub mod config;
pub mod engine;
pub mod env;
pub mod error;
pub mod field;
pub mod io;
pub mod rng;
pub mod vec3;

pub use config::SimConfig;
pub use error::SimError;
pub use vec3::Vec3;
