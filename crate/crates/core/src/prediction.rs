//! Initial human paths handed to the joint optimizer.

use crate::config::{PlannerConfig, PredictorKind};
use crate::error::{Error, Result};
use crate::geometry::{distance_point_segment, distance_segment_segment, Pose2D, StaticObstacle, Vec2, Velocity2D};
use crate::gridplan::{plan_astar, OccupancyGrid, DEFAULT_COST_SCALE};

/// Below this speed a human counts as standing still.
pub const STATIONARY_SPEED: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedHuman {
    pub id: String,
    pub pose: Pose2D,
    pub velocity: Velocity2D,
    pub radius: f64,
    pub first_seen_pose: Pose2D,
    pub first_seen_velocity: Velocity2D,
    pub first_seen_robot_pose: Pose2D,
}

impl TrackedHuman {
    /// A human seen for the first time right now.
    pub fn new(id: impl Into<String>, pose: Pose2D, velocity: Velocity2D, radius: f64, robot: Pose2D) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config("human radius must be positive".into()));
        }
        if !(velocity.vx.is_finite() && velocity.vy.is_finite() && velocity.omega.is_finite()) || !pose.is_finite() {
            return Err(Error::NonFinite("tracked human state"));
        }
        Ok(Self {
            id: id.into(),
            pose,
            velocity,
            radius,
            first_seen_pose: pose,
            first_seen_velocity: velocity,
            first_seen_robot_pose: robot,
        })
    }

    pub fn position(&self) -> Vec2 {
        self.pose.position()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    ConstantVelocity,
    CorridorGoal,
    VelocityObstacle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedPath {
    pub points: Vec<Vec2>,
    pub nominal_speed: f64,
    pub source: PredictionSource,
    pub stationary: bool,
}

impl PredictedPath {
    fn stationary(at: Vec2, source: PredictionSource) -> Self {
        Self {
            points: vec![at, at],
            nominal_speed: 0.0,
            source,
            stationary: true,
        }
    }
}

fn extrapolate(p: Vec2, v: Vec2, horizon: f64, dt: f64, source: PredictionSource) -> PredictedPath {
    let steps = ((horizon / dt) + 1e-9).floor() as usize;
    let mut points: Vec<Vec2> = (1..=steps).map(|k| p + v * (k as f64 * dt)).collect();
    let covered = steps as f64 * dt;
    if horizon - covered > 1e-9 {
        points.push(p + v * horizon);
    }
    PredictedPath {
        points,
        nominal_speed: v.norm(),
        source,
        stationary: false,
    }
}

/// Straight-line extrapolation `p + v t` at `t = dt, 2 dt, …, horizon`.
pub fn predict_constant_velocity(h: &TrackedHuman, horizon: f64, dt: f64) -> Result<PredictedPath> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Config("prediction needs horizon > 0 and dt > 0".into()));
    }
    let v = h.velocity.linear();
    if v.norm() < STATIONARY_SPEED {
        return Ok(PredictedPath::stationary(h.position(), PredictionSource::ConstantVelocity));
    }
    Ok(extrapolate(h.position(), v, horizon, dt, PredictionSource::ConstantVelocity))
}

/// Imaginary goal `behind_distance` past where the robot stood when the
/// human was first seen, along the human's direction of travel.
pub fn infer_corridor_goal(h: &TrackedHuman, behind_distance: f64) -> Result<Vec2> {
    let first = h.first_seen_velocity.linear();
    let now = h.velocity.linear();
    let dir = if first.norm() >= STATIONARY_SPEED {
        first
    } else if now.norm() >= STATIONARY_SPEED {
        now
    } else {
        return Err(Error::UndefinedDirection);
    };
    Ok(h.first_seen_robot_pose.position() + dir.normalize() * behind_distance)
}

/// Grid path from the human to `goal`, walked at the larger of the current
/// and the configured nominal speed.
pub fn predict_goal_directed(
    h: &TrackedHuman,
    goal: &Vec2,
    grid: &OccupancyGrid,
    nominal_speed: f64,
) -> Result<PredictedPath> {
    let points = plan_astar(grid, &h.position(), goal, DEFAULT_COST_SCALE)?;
    Ok(PredictedPath {
        points,
        nominal_speed: h.velocity.speed().max(nominal_speed),
        source: PredictionSource::CorridorGoal,
        stationary: false,
    })
}

/// Candidate velocities: 7 speeds from 0 to the current speed times 13
/// headings within ±60° of the current heading.
pub fn vo_candidates(current: &Vec2) -> Vec<Vec2> {
    let speed = current.norm();
    let heading = current.y.atan2(current.x);
    let mut out = Vec::with_capacity(7 * 13);
    for k in (0..=6).rev() {
        let s = speed * k as f64 / 6.0;
        for m in 0..13 {
            let a = heading + ((m as f64 - 6.0) * 10.0).to_radians();
            out.push(Vec2::new(a.cos(), a.sin()) * s);
        }
    }
    out
}

/// Distance between the segment swept by a point moving from `a` to `b`
/// and the obstacle; negative inside a polygon.
fn swept_clearance(o: &StaticObstacle, a: &Vec2, b: &Vec2) -> f64 {
    match o {
        StaticObstacle::Point(p) => distance_point_segment(p, a, b),
        StaticObstacle::Segment(c, d) => distance_segment_segment(a, b, c, d),
        StaticObstacle::Polygon(poly) => {
            if poly.contains(a) || poly.contains(b) {
                return -1.0;
            }
            poly.edges()
                .map(|(c, d)| distance_segment_segment(a, b, &c, &d))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// True if moving at `v` from `p` keeps a disc of `radius` clear of every
/// obstacle over `horizon`.
pub fn velocity_is_free(p: &Vec2, v: &Vec2, radius: f64, obstacles: &[StaticObstacle], horizon: f64) -> bool {
    let end = p + v * horizon;
    obstacles.iter().all(|o| swept_clearance(o, p, &end) > radius)
}

/// Short-term path from the admissible sampled velocity closest to the
/// current one.
pub fn predict_short_term_vo(
    h: &TrackedHuman,
    obstacles: &[StaticObstacle],
    horizon: f64,
    dt: f64,
) -> Result<PredictedPath> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Config("prediction needs horizon > 0 and dt > 0".into()));
    }
    let current = h.velocity.linear();
    let p = h.position();
    if current.norm() < STATIONARY_SPEED {
        return Ok(PredictedPath::stationary(p, PredictionSource::VelocityObstacle));
    }
    let mut best: Option<(f64, Vec2)> = None;
    for cand in vo_candidates(&current) {
        if !velocity_is_free(&p, &cand, h.radius, obstacles, horizon) {
            continue;
        }
        let dev = (cand - current).norm();
        if best.map_or(true, |(d, _)| dev < d - 1e-12) {
            best = Some((dev, cand));
        }
    }
    match best {
        Some((_, v)) if v.norm() >= STATIONARY_SPEED => Ok(extrapolate(p, v, horizon, dt, PredictionSource::VelocityObstacle)),
        _ => Ok(PredictedPath::stationary(p, PredictionSource::VelocityObstacle)),
    }
}

/// Configured predictor with fallback to constant velocity; never fails.
pub fn predict(
    h: &TrackedHuman,
    config: &PlannerConfig,
    grid: Option<&OccupancyGrid>,
    obstacles: &[StaticObstacle],
) -> PredictedPath {
    let dt = config.dt_ref;
    let cv = || {
        predict_constant_velocity(h, config.horizon, dt)
            .unwrap_or_else(|_| PredictedPath::stationary(h.position(), PredictionSource::ConstantVelocity))
    };
    match config.predictor {
        PredictorKind::ConstantVelocity => cv(),
        PredictorKind::CorridorGoal => {
            let Some(grid) = grid else {
                return cv();
            };
            infer_corridor_goal(h, config.behind_distance)
                .and_then(|goal| predict_goal_directed(h, &goal, grid, config.human_limits.nominal_speed))
                .unwrap_or_else(|_| cv())
        }
        PredictorKind::VelocityObstacle => {
            predict_short_term_vo(h, obstacles, config.vo_horizon, dt).unwrap_or_else(|_| cv())
        }
    }
}
