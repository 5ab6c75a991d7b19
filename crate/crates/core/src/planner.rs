//! One planning cycle: local goal, band seeding, prediction, joint
//! optimization and command extraction.

use std::sync::Arc;

use crate::band::{clip_polyline, init_from_path, resample_polyline, trim_passed, AgentBand, AgentKind, TimedBand};
use crate::config::PlannerConfig;
use crate::constraints::KinodynamicLimits;
use crate::error::{Error, Result};
use crate::geometry::{closest_point_on_segment, wrap, Pose2D, StaticObstacle, Vec2};
use crate::gridplan::{plan_astar, OccupancyGrid, DEFAULT_COST_SCALE};
use crate::optimizer::{optimize, Diagnostics};
use crate::prediction::{predict, TrackedHuman};

/// Humans farther than this multiple of the local area radius are ignored.
pub const HUMAN_GATE_FACTOR: f64 = 1.5;
/// A warm-started band whose end is farther than this from the new local
/// goal is rebuilt from the path.
const WARM_START_GOAL_JUMP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub time: f64,
    pub robot_pose: Pose2D,
    /// Measured `(v, ω)`.
    pub robot_velocity: (f64, f64),
    pub robot_radius: f64,
    pub global_path: Vec<Vec2>,
    pub humans: Vec<TrackedHuman>,
    pub obstacles: Vec<StaticObstacle>,
    pub grid: Option<Arc<OccupancyGrid>>,
}

impl WorldState {
    pub fn goal(&self) -> Option<Vec2> {
        self.global_path.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub robot: TimedBand,
    /// Proposed trajectory for every human that took part in the cycle.
    pub humans: Vec<AgentBand>,
    pub command: (f64, f64),
    pub local_goal: Vec2,
    /// Set when the local goal could not be found on the old global path.
    pub replanned_path: Option<Vec<Vec2>>,
    pub diagnostics: Diagnostics,
    pub degraded: bool,
}

fn circle_crossing(a: &Vec2, b: &Vec2, c: &Vec2, r: f64, exiting: bool) -> Option<f64> {
    let d = b - a;
    let f = a - c;
    let qa = d.norm_squared();
    if qa <= 0.0 {
        return None;
    }
    let qb = 2.0 * f.dot(&d);
    let qc = f.norm_squared() - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t = if exiting { (-qb + s) / (2.0 * qa) } else { (-qb - s) / (2.0 * qa) };
    (0.0..=1.0).contains(&t).then_some(t)
}

/// Projection of `p` onto the polyline: segment index and parameter.
fn project(path: &[Vec2], p: &Vec2) -> (usize, Vec2) {
    let mut best = (f64::INFINITY, 0, path[0]);
    for k in 0..path.len().saturating_sub(1) {
        let (q, _) = closest_point_on_segment(p, &path[k], &path[k + 1]);
        let d = (q - p).norm();
        if d < best.0 - 1e-12 {
            best = (d, k, q);
        }
    }
    (best.1, best.2)
}

/// Where the path, walked forward from the robot's projection onto it,
/// first leaves the circle of radius `radius` about the robot. Returns the
/// goal when the rest of the path stays inside.
pub fn select_local_goal(global_path: &[Vec2], robot: &Vec2, radius: f64) -> Result<Vec2> {
    if global_path.is_empty() {
        return Err(Error::PathTooShort);
    }
    if global_path.len() == 1 {
        return if (global_path[0] - robot).norm() <= radius {
            Ok(global_path[0])
        } else {
            Err(Error::PathOutsideArea)
        };
    }
    let (k, q) = project(global_path, robot);
    let mut walk = vec![q];
    walk.extend_from_slice(&global_path[k + 1..]);
    let inside = |p: &Vec2| (p - robot).norm() <= radius;
    let mut entered = inside(&walk[0]);
    for w in walk.windows(2) {
        if !entered {
            if inside(&w[1]) {
                entered = true;
            } else if let Some(t) = circle_crossing(&w[0], &w[1], robot, radius, false) {
                // passes through the circle within this segment
                entered = true;
                let e = w[0] + (w[1] - w[0]) * t;
                if let Some(t2) = circle_crossing(&e, &w[1], robot, radius, true) {
                    if t2 > 0.0 {
                        return Ok(e + (w[1] - e) * t2);
                    }
                }
                continue;
            } else {
                continue;
            }
        }
        if !inside(&w[1]) {
            if let Some(t) = circle_crossing(&w[0], &w[1], robot, radius, true) {
                return Ok(w[0] + (w[1] - w[0]) * t);
            }
        }
    }
    if entered {
        Ok(*walk.last().unwrap())
    } else {
        Err(Error::PathOutsideArea)
    }
}

/// The stretch of the global path from the robot's projection to `goal`.
fn local_path(global_path: &[Vec2], robot: &Vec2, goal: &Vec2) -> Vec<Vec2> {
    let (k, q) = if global_path.len() > 1 { project(global_path, robot) } else { (0, global_path[0]) };
    let mut out = vec![*robot, q];
    for w in global_path[k..].windows(2) {
        let (_, t) = closest_point_on_segment(goal, &w[0], &w[1]);
        let on = w[0] + (w[1] - w[0]) * t;
        if (on - goal).norm() < 1e-9 {
            break;
        }
        out.push(w[1]);
    }
    out.push(*goal);
    out
}

/// `(v, ω)` realizing the band's first segment, clamped to the limits.
pub fn extract_command(band: &TimedBand, robot_heading: f64, limits: &KinodynamicLimits) -> (f64, f64) {
    if band.len() < 2 {
        return (0.0, 0.0);
    }
    let (p0, p1) = (&band.poses[0], &band.poses[1]);
    let dt = band.deltas[0];
    let d = p1.position() - p0.position();
    let heading = Vec2::new(robot_heading.cos(), robot_heading.sin());
    let mut v = d.norm() / dt;
    if d.dot(&heading) < 0.0 {
        v = -v;
    }
    let omega = wrap(p1.theta - p0.theta) / dt;
    (v.clamp(-limits.v_max_backwards, limits.v_max), omega.clamp(-limits.omega_max, limits.omega_max))
}

fn path_heading_at_end(path: &[Vec2], fallback: f64) -> f64 {
    path.windows(2)
        .rev()
        .map(|w| w[1] - w[0])
        .find(|d| d.norm() > 1e-9)
        .map_or(fallback, |d| d.y.atan2(d.x))
}

fn seed_robot_band(
    state: &WorldState,
    previous: Option<&PlanResult>,
    path: &[Vec2],
    local_goal: &Vec2,
    config: &PlannerConfig,
) -> Result<TimedBand> {
    let goal_heading = path_heading_at_end(path, state.robot_pose.theta);
    if let Some(prev) = previous.filter(|p| !p.degraded && p.robot.len() >= 2) {
        let mut band = trim_passed(&prev.robot, &state.robot_pose);
        if (band.last().position() - local_goal).norm() <= WARM_START_GOAL_JUMP {
            *band.poses.last_mut().unwrap() = Pose2D::new(local_goal.x, local_goal.y, goal_heading);
            band.start_fixed = true;
            band.goal_fixed = true;
            if band.len() >= 2 {
                return Ok(band);
            }
        }
    }
    let spacing = config.robot_limits.nominal_speed * config.dt_ref;
    let pts = resample_polyline(path, spacing);
    match init_from_path(&pts, state.robot_pose.theta, config.robot_limits.nominal_speed) {
        Ok(mut band) => {
            band.poses[0] = state.robot_pose;
            Ok(band)
        }
        // already at the local goal: hold position
        Err(Error::PathTooShort) => {
            let mut band = TimedBand::stationary(state.robot_pose, config.dt_ref, 1);
            band.poses[1] = Pose2D::new(local_goal.x, local_goal.y, state.robot_pose.theta);
            Ok(band)
        }
        Err(e) => Err(e),
    }
}

/// Prediction-seeded band for one human: first pose at the observation,
/// last pose at the prediction end within the horizon.
pub fn seed_human_band(
    h: &TrackedHuman,
    config: &PlannerConfig,
    grid: Option<&OccupancyGrid>,
    obstacles: &[StaticObstacle],
) -> AgentBand {
    let pred = predict(h, config, grid, obstacles);
    let intervals = (config.horizon / config.dt_ref).ceil().max(1.0) as usize;
    let band = if pred.stationary || pred.nominal_speed <= 0.0 {
        None
    } else {
        let mut pts = vec![h.position()];
        pts.extend_from_slice(&pred.points);
        let pts = clip_polyline(&pts, pred.nominal_speed * config.horizon);
        let pts = resample_polyline(&pts, pred.nominal_speed * config.dt_ref);
        init_from_path(&pts, h.pose.theta, pred.nominal_speed).ok()
    };
    let mut band = band.unwrap_or_else(|| TimedBand::stationary(h.pose, config.dt_ref, intervals));
    band.poses[0] = h.pose;
    band.start_fixed = true;
    band.goal_fixed = true;
    AgentBand {
        agent_id: h.id.clone(),
        kind: AgentKind::Human,
        band,
        footprint_radius: h.radius,
        nominal_speed: Some(pred.nominal_speed),
    }
}

/// Initial robot and human bands for one cycle, before optimization.
/// `replanned` replaces the state's global path when set.
pub fn seed_problem(
    state: &WorldState,
    previous: Option<&PlanResult>,
    replanned: Option<&[Vec2]>,
    local_goal: &Vec2,
    config: &PlannerConfig,
) -> Result<(AgentBand, Vec<AgentBand>)> {
    let robot_p = state.robot_pose.position();
    let global = replanned.unwrap_or(&state.global_path);
    let path = local_path(global, &robot_p, local_goal);
    let robot_band = seed_robot_band(state, previous, &path, local_goal, config)?;
    let robot = AgentBand {
        agent_id: "robot".into(),
        kind: AgentKind::Robot,
        band: robot_band,
        footprint_radius: state.robot_radius,
        nominal_speed: None,
    };

    let gate = HUMAN_GATE_FACTOR * config.local_area_radius;
    let humans: Vec<AgentBand> = state
        .humans
        .iter()
        .filter(|h| (h.position() - robot_p).norm() <= gate)
        .map(|h| seed_human_band(h, config, state.grid.as_deref(), &state.obstacles))
        .collect();

    Ok((robot, humans))
}

/// Runs one full planning cycle. Pure in its inputs.
pub fn plan_once(state: &WorldState, previous: Option<&PlanResult>, config: &PlannerConfig) -> Result<PlanResult> {
    config.validate()?;
    if !state.robot_pose.is_finite() || !(state.robot_radius > 0.0) {
        return Err(Error::NonFinite("robot state"));
    }
    let robot_p = state.robot_pose.position();
    let mut replanned = None;
    let local_goal = match select_local_goal(&state.global_path, &robot_p, config.local_area_radius) {
        Ok(g) => g,
        Err(e) => {
            let (Some(grid), Some(goal)) = (state.grid.as_deref(), state.goal()) else {
                return Err(e);
            };
            let path = plan_astar(grid, &robot_p, &goal, DEFAULT_COST_SCALE)?;
            let g = select_local_goal(&path, &robot_p, config.local_area_radius)?;
            replanned = Some(path);
            g
        }
    };
    let (robot, humans) = seed_problem(state, previous, replanned.as_deref(), &local_goal, config)?;

    let cold;
    let solve_config = if previous.is_none() && config.lm.cold_start_outer_iterations > config.lm.outer_iterations {
        let mut c = config.clone();
        c.lm.outer_iterations = c.lm.cold_start_outer_iterations;
        cold = c;
        &cold
    } else {
        config
    };
    let out = optimize(&robot, &humans, &state.obstacles, solve_config, Some(state.robot_velocity))?;
    let degraded = out.diagnostics.degraded;
    let command = if degraded {
        previous
            .map(|p| extract_command(&trim_passed(&p.robot, &state.robot_pose), state.robot_pose.theta, &config.robot_limits))
            .unwrap_or((0.0, 0.0))
    } else {
        extract_command(&out.robot.band, state.robot_pose.theta, &config.robot_limits)
    };
    Ok(PlanResult {
        robot: out.robot.band,
        humans: out.humans,
        command,
        local_goal,
        replanned_path: replanned,
        diagnostics: out.diagnostics,
        degraded,
    })
}
