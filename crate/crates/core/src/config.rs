//! Run configuration: a flat JSON document with strict validation.
//!
//! Unknown keys are rejected, omitted keys take the documented defaults, and
//! every numeric field is range-checked with an error that names the key.

use crate::error::SimError;
use crate::field::FieldModel;
use serde::{Deserialize, Serialize};

/// How the approach-shaping reward term is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// +1 per unit of distance reduction toward the nearest source.
    #[default]
    Proportional,
    /// Flat +1 for any step that reduces that distance.
    Flat,
}

/// Full simulation configuration.
///
/// Serialized as flat JSON; `parse_config` fills defaults for omitted keys
/// and rejects anything unknown or out of range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Cube edge length in simulation units.
    pub side: f64,
    pub cell_count: usize,
    pub obstacle_count: usize,
    /// Uniform sampling range `[min, max]` for obstacle radii.
    pub obstacle_radius_range: [f64; 2],
    pub field_model: FieldModel,
    /// Gaussian spread of every source.
    pub sigma: f64,
    /// Peak concentration of every source (also its inverse-square strength).
    pub peak: f64,
    /// Distance clamp removing the inverse-square singularity.
    pub d_min: f64,
    /// Radius within which a robot senses cell direction directly.
    pub sensing_radius: f64,
    /// Robot displacement per step.
    pub step_size: f64,
    /// Robot-cell distance at or below which a cell counts as reached.
    pub capture_threshold: f64,
    pub max_steps: u32,
    pub episodes: u32,
    /// Q-learning rate, in (0, 1].
    pub alpha: f64,
    /// Discount factor, in [0, 1].
    pub gamma: f64,
    /// Initial exploration rate.
    pub epsilon0: f64,
    /// Per-episode multiplicative epsilon decay, in (0, 1].
    pub decay: f64,
    /// Exploration floor.
    pub epsilon_min: f64,
    pub seed: u64,
    pub robot_count: usize,
    /// One Q-table shared by all robots, or one private table each.
    pub shared_qtable: bool,
    pub reward_mode: RewardMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            side: 50.0,
            cell_count: 1,
            obstacle_count: 5,
            obstacle_radius_range: [2.0, 4.0],
            field_model: FieldModel::Gaussian,
            sigma: 15.0,
            peak: 1.0,
            d_min: 1e-3,
            sensing_radius: 15.0,
            step_size: 0.5,
            capture_threshold: 0.5,
            max_steps: 2000,
            episodes: 300,
            alpha: 0.1,
            gamma: 0.9,
            epsilon0: 1.0,
            decay: 0.995,
            epsilon_min: 0.05,
            seed: 0,
            robot_count: 1,
            shared_qtable: true,
            reward_mode: RewardMode::Proportional,
        }
    }
}

impl SimConfig {
    /// Range-check every field, naming the offending key on failure.
    pub fn validate(&self) -> Result<(), SimError> {
        fn positive(key: &str, v: f64) -> Result<(), SimError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::config(key, format!("must be positive and finite, got {v}")))
            }
        }
        fn non_negative(key: &str, v: f64) -> Result<(), SimError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(SimError::config(key, format!("must be non-negative and finite, got {v}")))
            }
        }
        fn in_unit(key: &str, v: f64) -> Result<(), SimError> {
            if v.is_finite() && (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SimError::config(key, format!("must lie in [0, 1], got {v}")))
            }
        }

        positive("side", self.side)?;
        let [lo, hi] = self.obstacle_radius_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(SimError::config(
                "obstacle_radius_range",
                format!("must satisfy 0 < min <= max, got [{lo}, {hi}]"),
            ));
        }
        positive("sigma", self.sigma)?;
        non_negative("peak", self.peak)?;
        positive("d_min", self.d_min)?;
        non_negative("sensing_radius", self.sensing_radius)?;
        positive("step_size", self.step_size)?;
        non_negative("capture_threshold", self.capture_threshold)?;
        in_unit("alpha", self.alpha)?;
        if self.alpha == 0.0 {
            return Err(SimError::config("alpha", "must be strictly positive"));
        }
        in_unit("gamma", self.gamma)?;
        in_unit("epsilon0", self.epsilon0)?;
        in_unit("decay", self.decay)?;
        if self.decay == 0.0 {
            return Err(SimError::config("decay", "must be strictly positive"));
        }
        in_unit("epsilon_min", self.epsilon_min)?;
        if self.robot_count == 0 {
            return Err(SimError::config("robot_count", "must be at least 1"));
        }
        Ok(())
    }
}

/// Parse and validate a flat JSON config document. `{}` yields all defaults.
pub fn parse_config(text: &str) -> Result<SimConfig, SimError> {
    let config: SimConfig =
        serde_json::from_str(text).map_err(|e| SimError::ConfigParse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Serialize the effective config (every key present, defaults filled).
pub fn emit_config(config: &SimConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serialization cannot fail")
}
