//! The 3D world: cube bounds, randomly placed cancer cells carrying biomarker
//! sources, spherical obstacles, movement resolution, confined target motion,
//! and the agent-facing observation.

use crate::config::SimConfig;
use crate::error::SimError;
use crate::field::{total_field, BiomarkerSource, FieldModel};
use crate::rng::{in_ball, stream_rng, STREAM_CELL_MOTION, STREAM_PLACEMENT};
use crate::vec3::Vec3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Displacement radius of one cell motion step.
pub const DEFAULT_CELL_STEP: f64 = 0.25;
/// Radius of the ball each cell's random walk is confined to.
pub const DEFAULT_CONFINEMENT_RADIUS: f64 = 5.0;
/// Total rejection-sampling attempts before placement gives up.
pub const PLACEMENT_ATTEMPTS: usize = 10_000;

/// A target cell carrying a biomarker source that tracks its position.
#[derive(Debug, Clone, PartialEq)]
pub struct CancerCell {
    pub position: Vec3,
    pub confinement_center: Vec3,
    pub confinement_radius: f64,
    pub source: BiomarkerSource,
    pub alive: bool,
}

impl CancerCell {
    /// A cell confined around its initial position. The requested confinement
    /// radius is shrunk to the distance to the nearest cube face so the cell
    /// can never wander outside the cube.
    pub fn new(position: Vec3, requested_radius: f64, side: f64, source: BiomarkerSource) -> Self {
        let wall = [
            position.x,
            side - position.x,
            position.y,
            side - position.y,
            position.z,
            side - position.z,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
        CancerCell {
            position,
            confinement_center: position,
            confinement_radius: requested_radius.min(wall),
            source: BiomarkerSource { position, ..source },
            alive: true,
        }
    }
}

/// A spherical barrier the robots must move around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Vec3,
    pub radius: f64,
}

impl Obstacle {
    pub fn contains(&self, p: Vec3) -> bool {
        (p - self.center).norm_squared() < self.radius * self.radius
    }
}

/// Result of resolving one attempted robot displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MoveOutcome {
    /// Move applied in full.
    Moved(Vec3),
    /// The path intersected an obstacle; position is unchanged.
    ObstacleHit,
    /// Endpoint clamped to the cube faces.
    BoundaryClamped(Vec3),
}

impl MoveOutcome {
    /// Position after the move, given the position before it.
    pub fn resolve(self, from: Vec3) -> Vec3 {
        match self {
            MoveOutcome::Moved(p) | MoveOutcome::BoundaryClamped(p) => p,
            MoveOutcome::ObstacleHit => from,
        }
    }
}

/// What a robot senses at a position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub position: Vec3,
    pub concentration: f64,
    pub gradient: Vec3,
    /// Surface distance to the nearest obstacle, `INFINITY` if none.
    pub nearest_obstacle_distance: f64,
    /// Unit vector toward the nearest obstacle center, if any obstacle exists.
    pub nearest_obstacle_direction: Option<Vec3>,
    /// Distance to the nearest live cell, `INFINITY` outside the sensing radius.
    pub nearest_cell_distance: f64,
    /// Unit vector toward that cell when within the sensing radius.
    pub nearest_cell_direction: Option<Vec3>,
    /// Distance to the nearest live source regardless of sensing radius,
    /// `INFINITY` when no source is live.
    pub nearest_source_distance: f64,
}

/// The simulation world for one episode.
#[derive(Debug, Clone)]
pub struct Environment {
    pub side: f64,
    pub cells: Vec<CancerCell>,
    pub obstacles: Vec<Obstacle>,
    /// Initial robot positions chosen at construction.
    pub robot_spawns: Vec<Vec3>,
    pub field_model: FieldModel,
    pub d_min: f64,
    pub cell_step: f64,
    pub rng_seed: u64,
    pub step_count: u64,
    motion_rng: ChaCha8Rng,
}

impl Environment {
    /// Build a world from a validated config and a seed.
    ///
    /// Cells and robot spawns are placed uniformly in the cube; obstacles are
    /// rejection-sampled so each sphere lies fully inside the cube, contains
    /// no robot spawn, and stays clear of every cell's confinement ball (a
    /// moving cell can therefore never enter an obstacle). Exhausting the
    /// attempt budget yields an infeasibility error.
    pub fn new(config: &SimConfig, seed: u64) -> Result<Self, SimError> {
        let side = config.side;
        let mut placement = stream_rng(seed, STREAM_PLACEMENT);
        let uniform_point = |rng: &mut ChaCha8Rng| {
            Vec3::new(
                rng.gen_range(0.0..side),
                rng.gen_range(0.0..side),
                rng.gen_range(0.0..side),
            )
        };

        let template = BiomarkerSource::new(Vec3::ZERO, config.peak, config.sigma, config.peak);
        let cells: Vec<CancerCell> = (0..config.cell_count)
            .map(|_| {
                let p = uniform_point(&mut placement);
                CancerCell::new(p, DEFAULT_CONFINEMENT_RADIUS, side, template)
            })
            .collect();

        let robot_spawns: Vec<Vec3> =
            (0..config.robot_count).map(|_| uniform_point(&mut placement)).collect();

        let [r_lo, r_hi] = config.obstacle_radius_range;
        let mut obstacles = Vec::with_capacity(config.obstacle_count);
        let mut attempts = 0usize;
        while obstacles.len() < config.obstacle_count {
            if attempts >= PLACEMENT_ATTEMPTS {
                return Err(SimError::InfeasiblePlacement(format!(
                    "placed {} of {} obstacles after {} attempts (side {}, radius range [{}, {}])",
                    obstacles.len(),
                    config.obstacle_count,
                    PLACEMENT_ATTEMPTS,
                    side,
                    r_lo,
                    r_hi
                )));
            }
            attempts += 1;
            let radius = if r_lo == r_hi { r_lo } else { placement.gen_range(r_lo..r_hi) };
            let center = uniform_point(&mut placement);
            let inside_cube = [center.x, center.y, center.z]
                .iter()
                .all(|&c| c >= radius && c <= side - radius);
            if !inside_cube {
                continue;
            }
            let clear_of_cells = cells.iter().all(|cell| {
                let keep_out = radius + cell.confinement_radius;
                (center - cell.confinement_center).norm_squared() > keep_out * keep_out
            });
            let clear_of_spawns = robot_spawns
                .iter()
                .all(|&p| (center - p).norm_squared() > radius * radius);
            if clear_of_cells && clear_of_spawns {
                obstacles.push(Obstacle { center, radius });
            }
        }

        Ok(Environment {
            side,
            cells,
            obstacles,
            robot_spawns,
            field_model: config.field_model,
            d_min: config.d_min,
            cell_step: DEFAULT_CELL_STEP,
            rng_seed: seed,
            step_count: 0,
            motion_rng: stream_rng(seed, STREAM_CELL_MOTION),
        })
    }

    /// Assemble a world from explicit parts (used by tests and scenarios that
    /// need hand-placed geometry).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        side: f64,
        cells: Vec<CancerCell>,
        obstacles: Vec<Obstacle>,
        robot_spawns: Vec<Vec3>,
        field_model: FieldModel,
        d_min: f64,
        cell_step: f64,
        seed: u64,
    ) -> Self {
        Environment {
            side,
            cells,
            obstacles,
            robot_spawns,
            field_model,
            d_min,
            cell_step,
            rng_seed: seed,
            step_count: 0,
            motion_rng: stream_rng(seed, STREAM_CELL_MOTION),
        }
    }

    pub fn alive_cell_count(&self) -> usize {
        self.cells.iter().filter(|c| c.alive).count()
    }

    /// Biomarker sources of the live cells.
    pub fn alive_sources(&self) -> Vec<BiomarkerSource> {
        self.cells.iter().filter(|c| c.alive).map(|c| c.source).collect()
    }

    /// Distance to the nearest live source, `INFINITY` if none.
    pub fn nearest_alive_source_distance(&self, p: Vec3) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.alive)
            .map(|c| (c.source.position - p).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Mark every live cell within `threshold` of `p` as captured; returns
    /// how many were captured.
    pub fn capture_cells_within(&mut self, p: Vec3, threshold: f64) -> u32 {
        let mut captured = 0;
        for cell in self.cells.iter_mut().filter(|c| c.alive) {
            if (cell.position - p).norm() <= threshold {
                cell.alive = false;
                captured += 1;
            }
        }
        captured
    }

    /// One confined random-walk step for every live cell.
    ///
    /// Displacement is uniform in a ball of radius `cell_step`; a step that
    /// exits the confinement ball has its radial excess reflected back
    /// inside. Source positions track cell positions exactly.
    pub fn move_cancer_cells(&mut self) {
        let step = self.cell_step;
        for cell in self.cells.iter_mut().filter(|c| c.alive) {
            let displaced = cell.position + in_ball(&mut self.motion_rng, step);
            let rel = displaced - cell.confinement_center;
            let dist = rel.norm();
            cell.position = if dist > cell.confinement_radius {
                // fold the radial excess back inside; degenerate balls pin
                // the cell to the center
                let folded = (2.0 * cell.confinement_radius - dist).clamp(0.0, cell.confinement_radius);
                cell.confinement_center + rel * (folded / dist)
            } else {
                displaced
            };
            cell.source.position = cell.position;
        }
        self.step_count += 1;
    }

    /// Resolve one attempted robot displacement.
    ///
    /// A path that intersects any obstacle sphere is rejected outright; the
    /// robot stays put. Otherwise the endpoint is clamped component-wise to
    /// the cube. The resulting position is never strictly inside an obstacle
    /// and never outside the cube.
    pub fn attempt_move(&self, from: Vec3, displacement: Vec3) -> MoveOutcome {
        let raw_end = from + displacement;
        if self.segment_hits_obstacle(from, raw_end) {
            return MoveOutcome::ObstacleHit;
        }
        let clamped = raw_end.clamp_to_cube(self.side);
        if clamped == raw_end {
            MoveOutcome::Moved(raw_end)
        } else if self.segment_hits_obstacle(from, clamped) {
            // the clamped path is the one actually taken; it must be clear too
            MoveOutcome::ObstacleHit
        } else {
            MoveOutcome::BoundaryClamped(clamped)
        }
    }

    fn segment_hits_obstacle(&self, a: Vec3, b: Vec3) -> bool {
        self.obstacles
            .iter()
            .any(|o| segment_point_distance_sq(a, b, o.center) < o.radius * o.radius)
    }

    /// Sense field and geometry at a position.
    pub fn sense(&self, position: Vec3, sensing_radius: f64) -> Observation {
        let sources = self.alive_sources();
        let (concentration, gradient) =
            total_field(position, &sources, self.field_model, self.d_min);

        let mut nearest_obstacle_distance = f64::INFINITY;
        let mut nearest_obstacle_direction = None;
        for o in &self.obstacles {
            let to_center = o.center - position;
            let surface = (to_center.norm() - o.radius).max(0.0);
            if surface < nearest_obstacle_distance {
                nearest_obstacle_distance = surface;
                nearest_obstacle_direction = to_center.normalized();
            }
        }

        let mut nearest_source_distance = f64::INFINITY;
        let mut nearest_cell: Option<Vec3> = None;
        for cell in self.cells.iter().filter(|c| c.alive) {
            let d = (cell.position - position).norm();
            if d < nearest_source_distance {
                nearest_source_distance = d;
                nearest_cell = Some(cell.position);
            }
        }
        let (nearest_cell_distance, nearest_cell_direction) = match nearest_cell {
            Some(cell_pos) if nearest_source_distance <= sensing_radius => (
                nearest_source_distance,
                (cell_pos - position).normalized(),
            ),
            _ => (f64::INFINITY, None),
        };

        Observation {
            position,
            concentration,
            gradient,
            nearest_obstacle_distance,
            nearest_obstacle_direction,
            nearest_cell_distance,
            nearest_cell_direction,
            nearest_source_distance,
        }
    }
}

/// Squared distance from point `p` to the segment `a`-`b`.
fn segment_point_distance_sq(a: Vec3, b: Vec3, p: Vec3) -> f64 {
    let ab = b - a;
    let denom = ab.norm_squared();
    let t = if denom > 0.0 { ((p - a).dot(ab) / denom).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t - p).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::unit_vector;
    use rand::Rng;

    fn static_cell(pos: Vec3, side: f64) -> CancerCell {
        let source = BiomarkerSource::new(pos, 1.0, 15.0, 1.0);
        CancerCell::new(pos, 0.0, side, source)
    }

    /// Independent closed-form segment/sphere intersection: solves the
    /// quadratic |a + t(b-a) - c|^2 = r^2 and checks for a root in [0, 1].
    fn segment_hits_sphere_quadratic(a: Vec3, b: Vec3, center: Vec3, radius: f64) -> bool {
        let d = b - a;
        let m = a - center;
        let qa = d.norm_squared();
        let qb = 2.0 * m.dot(d);
        let qc = m.norm_squared() - radius * radius;
        if qa == 0.0 {
            return qc < 0.0;
        }
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return false;
        }
        let sqrt_disc = disc.sqrt();
        let t1 = (-qb - sqrt_disc) / (2.0 * qa);
        let t2 = (-qb + sqrt_disc) / (2.0 * qa);
        // the open interval (t1, t2) is inside the sphere; it must overlap [0, 1]
        t1 < 1.0 && t2 > 0.0 && t2 > t1
    }

    #[test]
    fn construction_is_deterministic() {
        let config = SimConfig { cell_count: 3, obstacle_count: 4, ..SimConfig::default() };
        let a = Environment::new(&config, 42).unwrap();
        let b = Environment::new(&config, 42).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.obstacles, b.obstacles);
        assert_eq!(a.robot_spawns, b.robot_spawns);
        let c = Environment::new(&config, 43).unwrap();
        assert_ne!(a.cells[0].position, c.cells[0].position);
    }

    #[test]
    fn obstacles_fit_inside_cube() {
        let config = SimConfig { obstacle_count: 5, ..SimConfig::default() };
        let env = Environment::new(&config, 7).unwrap();
        assert_eq!(env.obstacles.len(), 5);
        for o in &env.obstacles {
            for c in [o.center.x, o.center.y, o.center.z] {
                assert!(c - o.radius >= 0.0 && c + o.radius <= config.side);
            }
        }
    }

    #[test]
    fn infeasible_radius_errors_out() {
        let config = SimConfig {
            obstacle_count: 10,
            obstacle_radius_range: [30.0, 30.0],
            ..SimConfig::default()
        };
        let err = Environment::new(&config, 1).unwrap_err();
        assert!(matches!(err, SimError::InfeasiblePlacement(_)), "got: {err}");
    }

    #[test]
    fn spawns_and_cells_clear_of_obstacles() {
        let config = SimConfig {
            cell_count: 4,
            robot_count: 3,
            obstacle_count: 8,
            ..SimConfig::default()
        };
        for seed in 0..20 {
            let env = Environment::new(&config, seed).unwrap();
            for o in &env.obstacles {
                for cell in &env.cells {
                    assert!(!o.contains(cell.position));
                }
                for &s in &env.robot_spawns {
                    assert!(!o.contains(s));
                }
            }
        }
    }

    #[test]
    fn zero_confinement_cell_never_moves() {
        let cell = static_cell(Vec3::new(25.0, 25.0, 25.0), 50.0);
        let mut env = Environment::from_parts(
            50.0,
            vec![cell],
            vec![],
            vec![Vec3::ZERO],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            5,
        );
        for _ in 0..200 {
            env.move_cancer_cells();
        }
        assert_eq!(env.cells[0].position, Vec3::new(25.0, 25.0, 25.0));
    }

    #[test]
    fn cells_respect_confinement_over_many_steps() {
        let config = SimConfig { cell_count: 3, obstacle_count: 0, ..SimConfig::default() };
        let mut env = Environment::new(&config, 99).unwrap();
        for _ in 0..10_000 {
            env.move_cancer_cells();
            for cell in &env.cells {
                let d = (cell.position - cell.confinement_center).norm();
                assert!(
                    d <= cell.confinement_radius + 1e-9,
                    "cell escaped: {d} > {}",
                    cell.confinement_radius
                );
                assert_eq!(cell.source.position, cell.position);
            }
        }
    }

    #[test]
    fn cell_motion_is_deterministic() {
        let config = SimConfig { cell_count: 2, obstacle_count: 0, ..SimConfig::default() };
        let mut a = Environment::new(&config, 5).unwrap();
        let mut b = Environment::new(&config, 5).unwrap();
        for _ in 0..500 {
            a.move_cancer_cells();
            b.move_cancer_cells();
        }
        assert_eq!(a.cells, b.cells);
    }

    #[test]
    fn null_move_is_moved_in_place() {
        let env = Environment::from_parts(
            50.0,
            vec![],
            vec![],
            vec![],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            0,
        );
        let from = Vec3::new(10.0, 10.0, 10.0);
        assert_eq!(env.attempt_move(from, Vec3::ZERO), MoveOutcome::Moved(from));
    }

    #[test]
    fn head_on_obstacle_blocks_move() {
        let env = Environment::from_parts(
            50.0,
            vec![],
            vec![Obstacle { center: Vec3::new(3.0, 0.0, 0.0), radius: 1.0 }],
            vec![],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            0,
        );
        let from = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(env.attempt_move(from, Vec3::new(4.0, 0.0, 0.0)), MoveOutcome::ObstacleHit);
        // a move stopping short of the sphere is fine
        assert_eq!(
            env.attempt_move(from, Vec3::new(0.5, 0.0, 0.0)),
            MoveOutcome::Moved(Vec3::new(1.5, 0.0, 0.0))
        );
    }

    #[test]
    fn boundary_clamps_to_face() {
        let env = Environment::from_parts(
            50.0,
            vec![],
            vec![],
            vec![],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            0,
        );
        let outcome = env.attempt_move(Vec3::new(49.0, 0.0, 0.0), Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(outcome, MoveOutcome::BoundaryClamped(Vec3::new(50.0, 0.0, 0.0)));
    }

    #[test]
    fn segment_test_matches_quadratic_oracle() {
        let mut rng = stream_rng(31, STREAM_PLACEMENT);
        let mut hits = 0;
        for _ in 0..5000 {
            let a = Vec3::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
            let b = a + unit_vector(&mut rng) * rng.gen_range(0.0..6.0);
            let center = Vec3::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
            let radius = rng.gen_range(0.2..3.0);
            let via_distance = segment_point_distance_sq(a, b, center) < radius * radius;
            let via_quadratic = segment_hits_sphere_quadratic(a, b, center, radius);
            assert_eq!(via_distance, via_quadratic, "a={a:?} b={b:?} c={center:?} r={radius}");
            if via_distance {
                hits += 1;
            }
        }
        assert!(hits > 100, "oracle comparison barely exercised: {hits} hits");
    }

    #[test]
    fn fuzzed_moves_never_violate_safety() {
        let config = SimConfig { cell_count: 1, obstacle_count: 6, ..SimConfig::default() };
        let env = Environment::new(&config, 2024).unwrap();
        let mut rng = stream_rng(2024, STREAM_POLICY_FUZZ);
        let mut pos = env.robot_spawns[0];
        for _ in 0..100_000 {
            let step = unit_vector(&mut rng) * rng.gen_range(0.0..2.0);
            pos = env.attempt_move(pos, step).resolve(pos);
            assert!(pos.clamp_to_cube(env.side) == pos, "left the cube: {pos:?}");
            for o in &env.obstacles {
                assert!(!o.contains(pos), "inside obstacle at {pos:?}");
            }
        }
    }

    const STREAM_POLICY_FUZZ: u64 = 77;

    #[test]
    fn sense_with_no_cells_is_zero_field() {
        let env = Environment::from_parts(
            50.0,
            vec![],
            vec![],
            vec![],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            0,
        );
        let obs = env.sense(Vec3::new(25.0, 25.0, 25.0), 15.0);
        assert_eq!(obs.concentration, 0.0);
        assert_eq!(obs.gradient, Vec3::ZERO);
        assert_eq!(obs.nearest_cell_distance, f64::INFINITY);
        assert_eq!(obs.nearest_source_distance, f64::INFINITY);
        assert_eq!(obs.nearest_obstacle_distance, f64::INFINITY);
        assert!(obs.nearest_cell_direction.is_none());
    }

    #[test]
    fn sense_cell_within_range() {
        let cell = static_cell(Vec3::new(28.0, 25.0, 25.0), 50.0);
        let env = Environment::from_parts(
            50.0,
            vec![cell],
            vec![],
            vec![],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            0,
        );
        let obs = env.sense(Vec3::new(25.0, 25.0, 25.0), 10.0);
        assert!((obs.nearest_cell_distance - 3.0).abs() < 1e-12);
        let dir = obs.nearest_cell_direction.unwrap();
        assert!((dir - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(obs.nearest_source_distance, obs.nearest_cell_distance);
    }

    #[test]
    fn sense_cell_out_of_range_uses_sentinel() {
        let cell = static_cell(Vec3::new(45.0, 25.0, 25.0), 50.0);
        let env = Environment::from_parts(
            50.0,
            vec![cell],
            vec![],
            vec![],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            0,
        );
        let obs = env.sense(Vec3::new(15.0, 25.0, 25.0), 10.0);
        assert_eq!(obs.nearest_cell_distance, f64::INFINITY);
        assert!(obs.nearest_cell_direction.is_none());
        assert!((obs.nearest_source_distance - 30.0).abs() < 1e-12);
    }

    #[test]
    fn dead_cells_do_not_emit() {
        let mut cell = static_cell(Vec3::new(25.0, 25.0, 25.0), 50.0);
        cell.alive = false;
        let env = Environment::from_parts(
            50.0,
            vec![cell],
            vec![],
            vec![],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            0,
        );
        let obs = env.sense(Vec3::new(20.0, 25.0, 25.0), 15.0);
        assert_eq!(obs.concentration, 0.0);
        assert_eq!(obs.nearest_source_distance, f64::INFINITY);
    }

    #[test]
    fn capture_marks_cells_dead() {
        let near = static_cell(Vec3::new(25.0, 25.0, 25.0), 50.0);
        let far = static_cell(Vec3::new(40.0, 40.0, 40.0), 50.0);
        let mut env = Environment::from_parts(
            50.0,
            vec![near, far],
            vec![],
            vec![],
            FieldModel::Gaussian,
            1e-3,
            DEFAULT_CELL_STEP,
            0,
        );
        let n = env.capture_cells_within(Vec3::new(25.2, 25.0, 25.0), 0.5);
        assert_eq!(n, 1);
        assert_eq!(env.alive_cell_count(), 1);
        assert!(!env.cells[0].alive);
        assert!(env.cells[1].alive);
    }
}
