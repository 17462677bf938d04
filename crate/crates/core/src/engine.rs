//! Episode and training orchestration: the step loop tying environment,
//! field, and agent together, plus metric collection.
//!
//! Step order within an episode: each robot (in fixed index order) senses,
//! captures any cell already within the capture threshold, selects an action,
//! and moves; then all cells take their confined random step; then per-robot
//! rewards are computed against the post-move geometry and, in training mode,
//! Q-updates applied. Capture is tested against the sensed (step-start)
//! distance, which is exactly the distance the trace records, so a trace
//! reports a capture at step t iff its recorded distance at t is within the
//! threshold.

use crate::agent::{
    action_to_displacement, compute_reward, decay_epsilon, discretize, select_action, update_q,
    Action, DiscretizationParams, EpsilonSchedule, LearningParams, QTable, Transition,
};
use crate::config::{RewardMode, SimConfig};
use crate::env::{Environment, MoveOutcome};
use crate::error::SimError;
use crate::rng::{episode_seed, stream_rng, STREAM_POLICY};
use crate::vec3::Vec3;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Parameters of the episode loop, independent of world geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeParams {
    pub sensing_radius: f64,
    pub step_size: f64,
    pub capture_threshold: f64,
    pub max_steps: u32,
    pub learning: LearningParams,
    pub reward_mode: RewardMode,
    pub discretization: DiscretizationParams,
}

impl EpisodeParams {
    pub fn from_config(config: &SimConfig) -> Self {
        EpisodeParams {
            sensing_radius: config.sensing_radius,
            step_size: config.step_size,
            capture_threshold: config.capture_threshold,
            max_steps: config.max_steps,
            learning: LearningParams { alpha: config.alpha, gamma: config.gamma },
            reward_mode: config.reward_mode,
            discretization: DiscretizationParams::from_config(config),
        }
    }
}

/// Train (apply Q-updates with the given exploration rate) or evaluate
/// (greedy, no updates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { epsilon: f64 },
    Eval,
}

impl Mode {
    fn epsilon(self) -> f64 {
        match self {
            Mode::Train { epsilon } => epsilon,
            Mode::Eval => 0.0,
        }
    }

    fn is_train(self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

/// One or more Q-tables, shared by all robots or private per robot.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTables {
    pub shared: bool,
    pub tables: Vec<QTable>,
}

impl PolicyTables {
    pub fn new(robot_count: usize, shared: bool) -> Self {
        let n = if shared { 1 } else { robot_count.max(1) };
        PolicyTables { shared, tables: vec![QTable::new(); n] }
    }

    /// Evaluation-only wrapper around one table used by every robot.
    pub fn shared_from(table: QTable) -> Self {
        PolicyTables { shared: true, tables: vec![table] }
    }

    pub fn table(&self, robot: usize) -> &QTable {
        if self.shared {
            &self.tables[0]
        } else {
            &self.tables[robot]
        }
    }

    fn table_mut(&mut self, robot: usize) -> &mut QTable {
        if self.shared {
            &mut self.tables[0]
        } else {
            &mut self.tables[robot]
        }
    }
}

/// One per-robot row of the episode trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u32,
    pub robot_id: u32,
    /// Robot position at sense time (before this step's move).
    pub position: Vec3,
    /// Sensed concentration at that position.
    pub concentration: f64,
    /// Distance to the nearest live cell at sense time.
    pub distance_to_cell: f64,
    pub action: Action,
    pub reward: f64,
    pub cumulative_reward: f64,
    /// Cells captured by this robot this step.
    pub captures: u32,
    pub obstacle_hit: bool,
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalStatus {
    AllCaptured,
    StepLimit,
}

impl TerminalStatus {
    pub fn name(self) -> &'static str {
        match self {
            TerminalStatus::AllCaptured => "all_captured",
            TerminalStatus::StepLimit => "step_limit",
        }
    }
}

/// Full per-step record of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub records: Vec<StepRecord>,
    pub status: TerminalStatus,
}

/// Episode summary statistics.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpisodeMetrics {
    pub total_steps: u32,
    pub final_distance: f64,
    pub average_distance: f64,
    #[serde(rename = "average_biomarker_concentration")]
    pub average_concentration: f64,
    pub wall_clock_seconds: f64,
    pub captures: u32,
    pub obstacle_hits: u32,
    /// Set when the trace had no records (all statistics are zeros).
    pub empty_trace: bool,
}

/// Aggregate of a whole training run.
#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub episode_metrics: Vec<EpisodeMetrics>,
    /// Exploration rate used by each episode.
    pub epsilon: Vec<f64>,
    /// Steps to capture per episode; episodes that hit the step limit report
    /// `max_steps` (a censored value).
    pub steps_to_capture: Vec<u32>,
    pub shared_qtable: bool,
    pub qtables: Vec<QTable>,
    pub last_trace: Option<EpisodeTrace>,
}

/// Run one episode to capture-of-all-cells or the step limit.
pub fn run_episode(
    env: &mut Environment,
    policy: &mut PolicyTables,
    params: &EpisodeParams,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> (EpisodeTrace, EpisodeMetrics) {
    let started = Instant::now();
    let epsilon = mode.epsilon();
    let robot_count = env.robot_spawns.len();
    let mut positions = env.robot_spawns.clone();
    let mut cumulative = vec![0.0f64; robot_count];
    let mut records = Vec::new();
    let mut status = TerminalStatus::StepLimit;

    for step in 0..params.max_steps {
        if env.alive_cell_count() == 0 {
            status = TerminalStatus::AllCaptured;
            break;
        }

        let mut staged = Vec::with_capacity(robot_count);
        for (robot, pos) in positions.iter_mut().enumerate() {
            let obs = env.sense(*pos, params.sensing_radius);
            let captured = env.capture_cells_within(*pos, params.capture_threshold);
            let state = discretize(&obs, &params.discretization);
            let action = select_action(policy.table(robot), state, epsilon, rng);
            let displacement = action_to_displacement(
                action,
                &obs,
                params.step_size,
                params.discretization.gradient_eps,
                rng,
            );
            let outcome = env.attempt_move(*pos, displacement);
            let obstacle_hit = outcome == MoveOutcome::ObstacleHit;
            *pos = outcome.resolve(*pos);
            staged.push((obs, state, action, captured, obstacle_hit));
        }

        env.move_cancer_cells();

        for (robot, (obs, state, action, captured, obstacle_hit)) in
            staged.into_iter().enumerate()
        {
            let post_distance = env.nearest_alive_source_distance(positions[robot]);
            let delta = if obs.nearest_source_distance.is_finite() && post_distance.is_finite() {
                obs.nearest_source_distance - post_distance
            } else {
                0.0
            };
            // capture dominates: never report a hit in a capturing step, the
            // reward contract allows at most one event
            let transition = Transition {
                captured: captured > 0,
                obstacle_hit: obstacle_hit && captured == 0,
                delta_toward_biomarker: delta,
            };
            let reward = compute_reward(&transition, params.reward_mode);
            cumulative[robot] += reward;
            records.push(StepRecord {
                step,
                robot_id: robot as u32,
                position: obs.position,
                concentration: obs.concentration,
                distance_to_cell: obs.nearest_source_distance,
                action,
                reward,
                cumulative_reward: cumulative[robot],
                captures: captured,
                obstacle_hit: transition.obstacle_hit,
            });

            if mode.is_train() {
                let next_obs = env.sense(positions[robot], params.sensing_radius);
                let next_state = discretize(&next_obs, &params.discretization);
                update_q(
                    policy.table_mut(robot),
                    state,
                    action,
                    reward,
                    next_state,
                    &params.learning,
                );
            }
        }

        if env.alive_cell_count() == 0 {
            status = TerminalStatus::AllCaptured;
            break;
        }
    }

    let trace = EpisodeTrace { records, status };
    let metrics = collect_metrics(&trace, started.elapsed().as_secs_f64());
    (trace, metrics)
}

/// Summarize a trace. An empty trace yields zeros with the `empty_trace`
/// flag set.
///
/// Distance statistics run over records that still had a live target (a
/// robot sensing after the last cell fell records the infinity sentinel,
/// which has no place in a mean or a JSON file); they are zeros if no record
/// ever saw a cell.
pub fn collect_metrics(trace: &EpisodeTrace, wall_clock_seconds: f64) -> EpisodeMetrics {
    if trace.records.is_empty() {
        return EpisodeMetrics {
            total_steps: 0,
            final_distance: 0.0,
            average_distance: 0.0,
            average_concentration: 0.0,
            wall_clock_seconds,
            captures: 0,
            obstacle_hits: 0,
            empty_trace: true,
        };
    }
    let n = trace.records.len() as f64;
    let last = trace.records.last().expect("non-empty");
    let mut distance_sum = 0.0;
    let mut distance_count = 0usize;
    let mut final_distance = 0.0;
    for r in &trace.records {
        if r.distance_to_cell.is_finite() {
            distance_sum += r.distance_to_cell;
            distance_count += 1;
            final_distance = r.distance_to_cell;
        }
    }
    EpisodeMetrics {
        total_steps: last.step + 1,
        final_distance,
        average_distance: if distance_count == 0 { 0.0 } else { distance_sum / distance_count as f64 },
        average_concentration: trace.records.iter().map(|r| r.concentration).sum::<f64>() / n,
        wall_clock_seconds,
        captures: trace.records.iter().map(|r| r.captures).sum(),
        obstacle_hits: trace.records.iter().filter(|r| r.obstacle_hit).count() as u32,
        empty_trace: false,
    }
}

/// Run the configured number of training episodes; the Q-table persists
/// across episodes while world placement and spawns are refreshed per episode
/// from the master seed.
pub fn run_training(config: &SimConfig) -> Result<TrainingReport, SimError> {
    run_training_with(config, |_, _| {})
}

/// [`run_training`] with a per-episode observer (used for progress output).
pub fn run_training_with(
    config: &SimConfig,
    mut on_episode: impl FnMut(u32, &EpisodeMetrics),
) -> Result<TrainingReport, SimError> {
    let params = EpisodeParams::from_config(config);
    let schedule = EpsilonSchedule::from_config(config);
    let mut policy = PolicyTables::new(config.robot_count, config.shared_qtable);

    let mut report = TrainingReport {
        episode_metrics: Vec::with_capacity(config.episodes as usize),
        epsilon: Vec::with_capacity(config.episodes as usize),
        steps_to_capture: Vec::with_capacity(config.episodes as usize),
        shared_qtable: config.shared_qtable,
        qtables: Vec::new(),
        last_trace: None,
    };

    for episode in 0..config.episodes {
        let epsilon = decay_epsilon(&schedule, u64::from(episode));
        let seed = episode_seed(config.seed, u64::from(episode));
        let mut env = Environment::new(config, seed)?;
        let mut rng = stream_rng(seed, STREAM_POLICY);
        let (trace, metrics) =
            run_episode(&mut env, &mut policy, &params, Mode::Train { epsilon }, &mut rng);

        report.epsilon.push(epsilon);
        report.steps_to_capture.push(match trace.status {
            TerminalStatus::AllCaptured => metrics.total_steps,
            TerminalStatus::StepLimit => config.max_steps,
        });
        on_episode(episode, &metrics);
        report.episode_metrics.push(metrics);
        if episode + 1 == config.episodes {
            report.last_trace = Some(trace);
        }
    }

    report.qtables = policy.tables;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CancerCell, Obstacle, DEFAULT_CELL_STEP};
    use crate::field::{BiomarkerSource, FieldModel};

    fn cell_at(pos: Vec3, confinement: f64) -> CancerCell {
        CancerCell::new(pos, confinement, 50.0, BiomarkerSource::new(pos, 1.0, 15.0, 1.0))
    }

    fn simple_env(cell: Vec3, spawn: Vec3, obstacles: Vec<Obstacle>, seed: u64) -> Environment {
        Environment::from_parts(
            50.0,
            vec![cell_at(cell, 0.0)],
            obstacles,
            vec![spawn],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            seed,
        )
    }

    fn default_params() -> EpisodeParams {
        EpisodeParams::from_config(&SimConfig::default())
    }

    #[test]
    fn immediate_capture_terminates_at_step_zero() {
        let mut env = simple_env(
            Vec3::new(25.0, 25.0, 25.0),
            Vec3::new(25.3, 25.0, 25.0),
            vec![],
            1,
        );
        let mut policy = PolicyTables::new(1, true);
        let mut rng = stream_rng(1, STREAM_POLICY);
        let (trace, metrics) =
            run_episode(&mut env, &mut policy, &default_params(), Mode::Eval, &mut rng);
        assert_eq!(trace.status, TerminalStatus::AllCaptured);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].step, 0);
        assert_eq!(metrics.captures, 1);
        assert!(trace.records[0].reward >= 10.0);
    }

    #[test]
    fn zero_step_limit_gives_empty_trace() {
        let mut env = simple_env(Vec3::new(25.0, 25.0, 25.0), Vec3::new(5.0, 5.0, 5.0), vec![], 1);
        let mut policy = PolicyTables::new(1, true);
        let mut rng = stream_rng(1, STREAM_POLICY);
        let params = EpisodeParams { max_steps: 0, ..default_params() };
        let (trace, metrics) = run_episode(&mut env, &mut policy, &params, Mode::Eval, &mut rng);
        assert_eq!(trace.status, TerminalStatus::StepLimit);
        assert!(trace.records.is_empty());
        assert!(metrics.empty_trace);
        assert_eq!(metrics.total_steps, 0);
    }

    #[test]
    fn fixed_seed_episodes_are_bit_identical() {
        let config = SimConfig { episodes: 3, max_steps: 400, ..SimConfig::default() };
        let run = || {
            let mut env = Environment::new(&config, 11).unwrap();
            let mut policy = PolicyTables::new(1, true);
            let mut rng = stream_rng(11, STREAM_POLICY);
            let params = EpisodeParams::from_config(&config);
            run_episode(&mut env, &mut policy, &params, Mode::Train { epsilon: 0.5 }, &mut rng).0
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn eval_with_fixed_table_is_reproducible() {
        let config = SimConfig { max_steps: 500, obstacle_count: 3, ..SimConfig::default() };
        let table = {
            let mut policy = PolicyTables::new(1, true);
            let mut env = Environment::new(&config, 3).unwrap();
            let mut rng = stream_rng(3, STREAM_POLICY);
            run_episode(
                &mut env,
                &mut policy,
                &EpisodeParams::from_config(&config),
                Mode::Train { epsilon: 0.7 },
                &mut rng,
            );
            policy.tables.remove(0)
        };
        let eval = || {
            let mut env = Environment::new(&config, 4).unwrap();
            let mut policy = PolicyTables::shared_from(table.clone());
            let mut rng = stream_rng(4, STREAM_POLICY);
            run_episode(&mut env, &mut policy, &EpisodeParams::from_config(&config), Mode::Eval, &mut rng).0
        };
        assert_eq!(eval(), eval());
    }

    #[test]
    fn cumulative_reward_equals_running_sum() {
        let config = SimConfig { max_steps: 600, robot_count: 2, ..SimConfig::default() };
        let mut env = Environment::new(&config, 21).unwrap();
        let mut policy = PolicyTables::new(2, false);
        let mut rng = stream_rng(21, STREAM_POLICY);
        let (trace, _) = run_episode(
            &mut env,
            &mut policy,
            &EpisodeParams::from_config(&config),
            Mode::Train { epsilon: 0.8 },
            &mut rng,
        );
        let mut sums = std::collections::HashMap::new();
        for r in &trace.records {
            let sum = sums.entry(r.robot_id).or_insert(0.0f64);
            *sum += r.reward;
            assert_eq!(*sum, r.cumulative_reward, "cumulative drifted at step {}", r.step);
        }
    }

    #[test]
    fn capture_iff_recorded_distance_within_threshold() {
        let config = SimConfig { max_steps: 1500, ..SimConfig::default() };
        let params = EpisodeParams::from_config(&config);
        for seed in [5u64, 6, 7] {
            let mut env = Environment::new(&config, seed).unwrap();
            let mut policy = PolicyTables::new(1, true);
            let mut rng = stream_rng(seed, STREAM_POLICY);
            let (trace, _) =
                run_episode(&mut env, &mut policy, &params, Mode::Train { epsilon: 0.4 }, &mut rng);
            for r in &trace.records {
                assert_eq!(
                    r.captures > 0,
                    r.distance_to_cell <= params.capture_threshold,
                    "capture flag contradicts recorded distance at step {}",
                    r.step
                );
            }
        }
    }

    #[test]
    fn recorded_distances_are_bounded_by_cube_diagonal() {
        let config = SimConfig { max_steps: 800, cell_count: 2, ..SimConfig::default() };
        let mut env = Environment::new(&config, 8).unwrap();
        let mut policy = PolicyTables::new(1, true);
        let mut rng = stream_rng(8, STREAM_POLICY);
        let (trace, _) = run_episode(
            &mut env,
            &mut policy,
            &EpisodeParams::from_config(&config),
            Mode::Train { epsilon: 0.5 },
            &mut rng,
        );
        let diagonal = 3.0f64.sqrt() * config.side;
        for r in &trace.records {
            assert!(r.distance_to_cell <= diagonal);
        }
    }

    #[test]
    fn gradient_follow_baseline_monotone() {
        // no obstacles, one static cell, greedy on a zero table = pure
        // gradient following; distance must never increase nor concentration
        // decrease along the trace
        let mut env = simple_env(
            Vec3::new(30.0, 28.0, 26.0),
            Vec3::new(4.0, 6.0, 5.0),
            vec![],
            2,
        );
        let mut policy = PolicyTables::new(1, true);
        let mut rng = stream_rng(2, STREAM_POLICY);
        let (trace, _) =
            run_episode(&mut env, &mut policy, &default_params(), Mode::Eval, &mut rng);
        assert_eq!(trace.status, TerminalStatus::AllCaptured);
        for pair in trace.records.windows(2) {
            assert!(pair[1].distance_to_cell <= pair[0].distance_to_cell + 1e-12);
            assert!(pair[1].concentration >= pair[0].concentration - 1e-12);
        }
    }

    #[test]
    fn collect_metrics_hand_arithmetic() {
        let rec = |step: u32, d: f64| StepRecord {
            step,
            robot_id: 0,
            position: Vec3::ZERO,
            concentration: 0.0,
            distance_to_cell: d,
            action: Action::TowardBiomarker,
            reward: 0.0,
            cumulative_reward: 0.0,
            captures: 0,
            obstacle_hit: false,
        };
        let trace = EpisodeTrace {
            records: vec![rec(0, 4.0), rec(1, 2.0), rec(2, 0.0)],
            status: TerminalStatus::AllCaptured,
        };
        let m = collect_metrics(&trace, 0.0);
        assert_eq!(m.total_steps, 3);
        assert_eq!(m.average_distance, 2.0);
        assert_eq!(m.final_distance, 0.0);
        assert_eq!(m.average_concentration, 0.0);
        assert!(!m.empty_trace);

        let single = EpisodeTrace { records: vec![rec(0, 7.0)], status: TerminalStatus::StepLimit };
        let m = collect_metrics(&single, 0.0);
        assert_eq!(m.total_steps, 1);
        assert_eq!(m.final_distance, m.average_distance);
    }

    #[test]
    fn collect_metrics_skips_targetless_records() {
        // a second robot sensing after the last cell fell records the
        // infinity sentinel; distance statistics must stay finite
        let rec = |robot: u32, d: f64| StepRecord {
            step: 0,
            robot_id: robot,
            position: Vec3::ZERO,
            concentration: 0.0,
            distance_to_cell: d,
            action: Action::TowardBiomarker,
            reward: 0.0,
            cumulative_reward: 0.0,
            captures: u32::from(robot == 0),
            obstacle_hit: false,
        };
        let trace = EpisodeTrace {
            records: vec![rec(0, 0.4), rec(1, f64::INFINITY)],
            status: TerminalStatus::AllCaptured,
        };
        let m = collect_metrics(&trace, 0.0);
        assert_eq!(m.final_distance, 0.4);
        assert_eq!(m.average_distance, 0.4);
        assert_eq!(m.captures, 1);

        let no_cells = EpisodeTrace {
            records: vec![rec(0, f64::INFINITY)],
            status: TerminalStatus::StepLimit,
        };
        let m = collect_metrics(&no_cells, 0.0);
        assert_eq!(m.final_distance, 0.0);
        assert_eq!(m.average_distance, 0.0);
    }

    #[test]
    fn multi_robot_episode_metrics_serialize_finite() {
        let config = SimConfig {
            robot_count: 2,
            cell_count: 2,
            episodes: 1,
            max_steps: 1500,
            seed: 42,
            ..SimConfig::default()
        };
        let mut env = Environment::new(&config, 9).unwrap();
        let mut policy = PolicyTables::new(2, true);
        let mut rng = stream_rng(9, STREAM_POLICY);
        let (_, metrics) = run_episode(
            &mut env,
            &mut policy,
            &EpisodeParams::from_config(&config),
            Mode::Train { epsilon: 0.5 },
            &mut rng,
        );
        assert!(metrics.final_distance.is_finite());
        assert!(metrics.average_distance.is_finite());
        let json = serde_json::to_string(&metrics).unwrap();
        assert!(!json.contains("null"), "metrics JSON must not contain null: {json}");
    }

    #[test]
    fn training_single_episode_report_shape() {
        let config = SimConfig { episodes: 1, max_steps: 300, ..SimConfig::default() };
        let report = run_training(&config).unwrap();
        assert_eq!(report.episode_metrics.len(), 1);
        assert_eq!(report.epsilon.len(), 1);
        assert_eq!(report.steps_to_capture.len(), 1);
        assert!(report.last_trace.is_some());
        assert_eq!(report.qtables.len(), 1);
    }

    #[test]
    fn training_epsilon_series_matches_schedule() {
        let config = SimConfig { episodes: 20, max_steps: 100, ..SimConfig::default() };
        let report = run_training(&config).unwrap();
        let schedule = EpsilonSchedule::from_config(&config);
        for (k, &eps) in report.epsilon.iter().enumerate() {
            assert_eq!(eps, decay_epsilon(&schedule, k as u64));
        }
        for pair in report.epsilon.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn robots_avoid_obstacles_over_whole_episode() {
        let obstacle = Obstacle { center: Vec3::new(15.0, 25.0, 25.0), radius: 3.0 };
        let mut env = simple_env(
            Vec3::new(25.0, 25.0, 25.0),
            Vec3::new(5.0, 25.0, 25.0),
            vec![obstacle],
            9,
        );
        let mut policy = PolicyTables::new(1, true);
        let mut rng = stream_rng(9, STREAM_POLICY);
        let (trace, _) = run_episode(
            &mut env,
            &mut policy,
            &default_params(),
            Mode::Train { epsilon: 0.3 },
            &mut rng,
        );
        for r in &trace.records {
            assert!(!obstacle.contains(r.position));
        }
    }
}
