//! The learner: observation discretization, the three macro-actions,
//! epsilon-greedy selection with decay, the Q-update, and the reward function.

use crate::config::{RewardMode, SimConfig};
use crate::env::Observation;
use crate::rng::unit_vector;
use crate::vec3::Vec3;
use rand::Rng;
use std::collections::HashMap;

/// Number of logarithmic concentration bins.
pub const CONCENTRATION_BINS: usize = 8;
/// Decades below the reference concentration spanned by the bins.
pub const CONCENTRATION_DECADES: f64 = 4.0;
/// Gradient norms below this count as "no gradient" (octant code 8).
pub const GRADIENT_EPS: f64 = 1e-12;
/// Obstacle surface distance below which the obstacle-near flag is set.
pub const OBSTACLE_ALERT_RADIUS: f64 = 3.0;

/// Binning parameters turning an [`Observation`] into a [`StateId`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizationParams {
    pub concentration_bins: usize,
    pub decades: f64,
    /// Reference concentration anchoring the top bin (the configured peak).
    pub c_ref: f64,
    pub gradient_eps: f64,
    pub obstacle_alert_radius: f64,
}

impl DiscretizationParams {
    pub fn from_config(config: &SimConfig) -> Self {
        DiscretizationParams {
            concentration_bins: CONCENTRATION_BINS,
            decades: CONCENTRATION_DECADES,
            c_ref: if config.peak > 0.0 { config.peak } else { 1.0 },
            gradient_eps: GRADIENT_EPS,
            obstacle_alert_radius: OBSTACLE_ALERT_RADIUS,
        }
    }
}

/// Discrete state: concentration bin, gradient sign-octant (8 = no gradient),
/// obstacle-near flag, cell-in-range flag. With 8 bins this is
/// 8 x 9 x 2 x 2 = 288 states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId {
    pub concentration_bin: u8,
    pub gradient_octant: u8,
    pub obstacle_near: bool,
    pub cell_in_range: bool,
}

impl StateId {
    /// Compact integer code, stable across runs; used by the text format.
    pub fn code(self) -> u16 {
        let mut code = self.concentration_bin as u16;
        code = code * 9 + self.gradient_octant as u16;
        code = code * 2 + self.obstacle_near as u16;
        code * 2 + self.cell_in_range as u16
    }

    pub fn from_code(code: u16) -> StateId {
        let cell_in_range = code & 1 == 1;
        let rest = code >> 1;
        let obstacle_near = rest & 1 == 1;
        let rest = rest >> 1;
        StateId {
            concentration_bin: (rest / 9) as u8,
            gradient_octant: (rest % 9) as u8,
            obstacle_near,
            cell_in_range,
        }
    }
}

/// The three macro-actions. Enum order is the argmax tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    TowardBiomarker,
    TowardCell,
    AvoidObstacle,
}

pub const ACTIONS: [Action; 3] = [Action::TowardBiomarker, Action::TowardCell, Action::AvoidObstacle];

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::TowardBiomarker => 0,
            Action::TowardCell => 1,
            Action::AvoidObstacle => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        ACTIONS.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::TowardBiomarker => "toward_biomarker",
            Action::TowardCell => "toward_cell",
            Action::AvoidObstacle => "avoid_obstacle",
        }
    }
}

/// Map an observation to its discrete state.
///
/// The concentration bin is logarithmic: `bins` bins spanning `decades`
/// decades below `c_ref`, with zero (and anything 4+ decades down) in bin 0
/// and anything at or above `c_ref` in the top bin. The octant encodes the
/// sign pattern of the gradient, bit 2 = x, bit 1 = y, bit 0 = z, set when
/// the component is negative; code 8 means the gradient norm is below
/// `gradient_eps`.
pub fn discretize(obs: &Observation, params: &DiscretizationParams) -> StateId {
    let bins = params.concentration_bins as i64;
    let concentration_bin = if obs.concentration <= 0.0 {
        0
    } else {
        let per_decade = params.concentration_bins as f64 / params.decades;
        let raw = (obs.concentration / params.c_ref).log10() * per_decade;
        (bins + raw.floor() as i64).clamp(0, bins - 1) as u8
    };

    let g = obs.gradient;
    let gradient_octant = if g.norm() < params.gradient_eps {
        8
    } else {
        (u8::from(g.x < 0.0) << 2) | (u8::from(g.y < 0.0) << 1) | u8::from(g.z < 0.0)
    };

    StateId {
        concentration_bin,
        gradient_octant,
        obstacle_near: obs.nearest_obstacle_distance < params.obstacle_alert_radius,
        cell_in_range: obs.nearest_cell_distance.is_finite(),
    }
}

/// Displacement a macro-action produces from an observation.
///
/// - `TowardBiomarker`: a full step along the normalized gradient, or a
///   random unit direction from the policy stream when the gradient is null.
/// - `TowardCell`: a full step toward the sensed cell, falling back to
///   `TowardBiomarker` behavior when no cell is in range.
/// - `AvoidObstacle`: a full step along the gradient projected onto the
///   plane perpendicular to the obstacle direction (a deterministic
///   perpendicular when the projection is null). With no obstacle in view
///   the step is perpendicular to the gradient itself, keeping the action
///   distinct from the approach actions.
pub fn action_to_displacement<R: Rng>(
    action: Action,
    obs: &Observation,
    step_size: f64,
    gradient_eps: f64,
    rng: &mut R,
) -> Vec3 {
    let gradient_dir = if obs.gradient.norm() >= gradient_eps {
        obs.gradient.normalized()
    } else {
        None
    };
    let toward_biomarker = |rng: &mut R| match gradient_dir {
        Some(dir) => dir * step_size,
        None => unit_vector(rng) * step_size,
    };

    match action {
        Action::TowardBiomarker => toward_biomarker(rng),
        Action::TowardCell => match obs.nearest_cell_direction {
            Some(dir) => dir * step_size,
            None => toward_biomarker(rng),
        },
        Action::AvoidObstacle => match obs.nearest_obstacle_direction {
            Some(normal) => {
                let tangent = match gradient_dir {
                    Some(g) => {
                        let projected = g - normal * g.dot(normal);
                        projected.normalized()
                    }
                    None => None,
                };
                let dir = tangent
                    .or_else(|| normal.any_perpendicular())
                    .unwrap_or(Vec3::new(1.0, 0.0, 0.0));
                dir * step_size
            }
            None => match gradient_dir.and_then(Vec3::any_perpendicular) {
                Some(dir) => dir * step_size,
                None => unit_vector(rng) * step_size,
            },
        },
    }
}

/// The learned action-value table. Absent entries read as 0; rows are
/// materialized lazily on first update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    rows: HashMap<StateId, QRow>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct QRow {
    values: [f64; 3],
    visits: [u64; 3],
}

impl QTable {
    pub fn new() -> Self {
        QTable::default()
    }

    pub fn value(&self, s: StateId, a: Action) -> f64 {
        self.rows.get(&s).map_or(0.0, |r| r.values[a.index()])
    }

    pub fn visits(&self, s: StateId, a: Action) -> u64 {
        self.rows.get(&s).map_or(0, |r| r.visits[a.index()])
    }

    /// Max action value in a state (0 for unseen states).
    pub fn row_max(&self, s: StateId) -> f64 {
        self.rows
            .get(&s)
            .map_or(0.0, |r| r.values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Greedy action with ties broken by enum order.
    pub fn greedy(&self, s: StateId) -> Action {
        let mut best = Action::TowardBiomarker;
        let mut best_v = self.value(s, best);
        for &a in &ACTIONS[1..] {
            let v = self.value(s, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    /// Number of materialized states.
    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    /// Flat text form: one `state_code,action_code,value,visits` line per
    /// entry of every materialized row, sorted lexicographically. Values use
    /// the shortest decimal form that round-trips, so parse(write(q)) == q
    /// exactly.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<String> = self
            .rows
            .iter()
            .flat_map(|(s, row)| {
                let code = s.code();
                ACTIONS.map(|a| {
                    format!("{},{},{},{}", code, a.index(), row.values[a.index()], row.visits[a.index()])
                })
            })
            .collect();
        lines.sort();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }

    /// Parse the flat text form. Lines must have exactly four comma-separated
    /// fields; errors carry the 1-based line number.
    pub fn from_text(text: &str) -> Result<QTable, (usize, String)> {
        let mut table = QTable::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err((idx + 1, format!("expected 4 fields, got {}", parts.len())));
            }
            let code: u16 =
                parts[0].parse().map_err(|e| (idx + 1, format!("bad state code: {e}")))?;
            let action_idx: usize =
                parts[1].parse().map_err(|e| (idx + 1, format!("bad action code: {e}")))?;
            let action = Action::from_index(action_idx)
                .ok_or((idx + 1, format!("action code {action_idx} out of range")))?;
            let value: f64 =
                parts[2].parse().map_err(|e| (idx + 1, format!("bad value: {e}")))?;
            let visits: u64 =
                parts[3].parse().map_err(|e| (idx + 1, format!("bad visit count: {e}")))?;
            if !value.is_finite() {
                return Err((idx + 1, format!("non-finite value {value}")));
            }
            let row = table.rows.entry(StateId::from_code(code)).or_default();
            row.values[action.index()] = value;
            row.visits[action.index()] = visits;
        }
        Ok(table)
    }
}

/// Learning rate and discount factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
}

/// One tabular Q-learning update:
/// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
pub fn update_q(
    q: &mut QTable,
    s: StateId,
    a: Action,
    reward: f64,
    s_next: StateId,
    params: &LearningParams,
) {
    let max_next = q.row_max(s_next);
    let row = q.rows.entry(s).or_default();
    let i = a.index();
    let old = row.values[i];
    row.values[i] = old + params.alpha * (reward + params.gamma * max_next - old);
    row.visits[i] += 1;
}

/// Epsilon-greedy selection over the three actions.
pub fn select_action<R: Rng>(q: &QTable, s: StateId, epsilon: f64, rng: &mut R) -> Action {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        ACTIONS[rng.gen_range(0..3u32) as usize]
    } else {
        q.greedy(s)
    }
}

/// Exponentially decaying exploration schedule with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub epsilon0: f64,
    pub decay: f64,
    pub epsilon_min: f64,
}

impl EpsilonSchedule {
    pub fn from_config(config: &SimConfig) -> Self {
        EpsilonSchedule {
            epsilon0: config.epsilon0,
            decay: config.decay,
            epsilon_min: config.epsilon_min,
        }
    }
}

/// `max(epsilon_min, epsilon0 * decay^episode_index)`.
///
/// The power is taken by repeated multiplication (with early exit once the
/// floor is reached) so the schedule is identical on every platform.
pub fn decay_epsilon(schedule: &EpsilonSchedule, episode_index: u64) -> f64 {
    let mut value = schedule.epsilon0;
    if schedule.decay < 1.0 {
        for _ in 0..episode_index {
            value *= schedule.decay;
            if value <= schedule.epsilon_min {
                break;
            }
        }
    }
    value.max(schedule.epsilon_min)
}

/// Events of one robot-step feeding the reward function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub captured: bool,
    pub obstacle_hit: bool,
    /// Reduction of the distance to the nearest biomarker source over the
    /// step (previous minus current).
    pub delta_toward_biomarker: f64,
}

/// Reward: +10 on capture, -1 on obstacle hit, plus approach shaping.
///
/// Proportional mode pays +1 per unit of distance reduction (floored at 0,
/// moving away is never punished); flat mode pays +1 for any strictly
/// improving step. At most one of captured/obstacle_hit may be set.
pub fn compute_reward(transition: &Transition, mode: RewardMode) -> f64 {
    debug_assert!(
        !(transition.captured && transition.obstacle_hit),
        "capture and obstacle hit must not co-occur in one step"
    );
    let mut r = 0.0;
    if transition.captured {
        r += 10.0;
    }
    if transition.obstacle_hit {
        r -= 1.0;
    }
    match mode {
        RewardMode::Proportional => r += transition.delta_toward_biomarker.max(0.0),
        RewardMode::Flat => {
            if transition.delta_toward_biomarker > 0.0 {
                r += 1.0;
            }
        }
    }
    r
}
