//! Deterministic closed-loop simulation: ground-truth world, unicycle robot,
//! scripted / cooperative / rejecting humans, and run metrics.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::band::{resample_polyline, AgentKind, TimedBand};
use crate::config::PlannerConfig;
use crate::constraints::{time_to_collision, KinodynamicLimits};
use crate::error::{Error, Result};
use crate::geometry::{closest_point_on_segment, wrap, Pose2D, StaticObstacle, Vec2, Velocity2D};
use crate::gridplan::{add_human_layer, inflate, plan_astar, rasterize_obstacles, HumanCostParams, OccupancyGrid};
use crate::gridplan::DEFAULT_COST_SCALE;
use crate::planner::{plan_once, PlanResult, WorldState, HUMAN_GATE_FACTOR};
use crate::prediction::TrackedHuman;

/// Distance at which an agent counts as arrived.
pub const GOAL_TOLERANCE: f64 = 0.2;
/// Consecutive degraded planning cycles before a run is aborted.
pub const MAX_DEGRADED_TICKS: usize = 5;
/// Lateral divergence of the proposal that triggers a rejecting human.
pub const REJECT_TRIGGER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HumanPolicy {
    ScriptedPath,
    CooperativeFollow,
    /// Walks its own path shifted by `offset` to `side` once the proposal
    /// diverges from it.
    RejectProposal { side: Side, offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub min: Vec2,
    pub max: Vec2,
    pub resolution: f64,
    pub obstacles: Vec<StaticObstacle>,
    /// Cost decay radius of the global map.
    pub inflation_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub start: Pose2D,
    pub goal: Vec2,
    pub radius: f64,
    pub limits: KinodynamicLimits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanSpec {
    pub id: String,
    pub start: Pose2D,
    pub goal: Vec2,
    pub path: Option<Vec<Vec2>>,
    pub radius: f64,
    pub speed: f64,
    pub policy: HumanPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub control_hz: f64,
    pub max_duration: f64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            control_hz: 10.0,
            max_duration: 30.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub world: World,
    pub robot: RobotSpec,
    pub humans: Vec<HumanSpec>,
    pub planner: PlannerConfig,
    pub sim: SimParams,
}

impl Scenario {
    /// Planner configuration with the robot's own limits substituted.
    pub fn effective_planner(&self) -> PlannerConfig {
        PlannerConfig {
            robot_limits: self.robot.limits,
            ..self.planner.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::scenario("sim", key, msg));
        if !(self.sim.control_hz > 0.0 && self.sim.control_hz.is_finite()) {
            return bad("control_hz", "must be positive");
        }
        if !(self.sim.max_duration >= 0.0 && self.sim.max_duration.is_finite()) {
            return bad("max_duration", "must be finite and non-negative");
        }
        let w = &self.world;
        if !(w.max.x > w.min.x && w.max.y > w.min.y) {
            return Err(Error::scenario("world", "max", "must exceed min"));
        }
        if !(w.resolution > 0.0) {
            return Err(Error::scenario("world", "resolution", "must be positive"));
        }
        if !(w.inflation_radius >= 0.0) {
            return Err(Error::scenario("world", "inflation", "must be non-negative"));
        }
        if w.obstacles.iter().any(|o| !o.is_finite()) {
            return Err(Error::scenario("world", "obstacles", "non-finite coordinates"));
        }
        self.robot.limits.validate().map_err(|e| Error::scenario("robot", "limits", e.to_string()))?;
        if !(self.robot.radius > 0.0) {
            return Err(Error::scenario("robot", "radius", "must be positive"));
        }
        self.effective_planner().validate().map_err(|e| Error::scenario("planner", "config", e.to_string()))?;
        let blocked = |p: &Vec2, r: f64| w.obstacles.iter().any(|o| o.signed_distance_to_circle(p, r) < 0.0);
        let outside = |p: &Vec2| p.x < w.min.x || p.y < w.min.y || p.x > w.max.x || p.y > w.max.y;
        let r = &self.robot;
        if outside(&r.start.position()) || blocked(&r.start.position(), r.radius) {
            return Err(Error::scenario("robot", "start", "outside the world or inside an obstacle"));
        }
        if outside(&r.goal) || blocked(&r.goal, r.radius) {
            return Err(Error::scenario("robot", "goal", "outside the world or inside an obstacle"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for h in &self.humans {
            let section = format!("human.{}", h.id);
            if !seen.insert(h.id.as_str()) || h.id == "robot" {
                return Err(Error::scenario(&section, "id", "duplicate or reserved id"));
            }
            if !(h.radius > 0.0) {
                return Err(Error::scenario(&section, "radius", "must be positive"));
            }
            if !(h.speed > 0.0 && h.speed.is_finite()) {
                return Err(Error::scenario(&section, "speed", "must be positive"));
            }
            if outside(&h.start.position()) || blocked(&h.start.position(), h.radius) {
                return Err(Error::scenario(&section, "start", "outside the world or inside an obstacle"));
            }
            if outside(&h.goal) || blocked(&h.goal, h.radius) {
                return Err(Error::scenario(&section, "goal", "outside the world or inside an obstacle"));
            }
            if let Some(p) = &h.path {
                if p.len() < 2 {
                    return Err(Error::scenario(&section, "path", "needs at least two points"));
                }
            }
            if let HumanPolicy::RejectProposal { offset, .. } = h.policy {
                if !(offset > 0.0) {
                    return Err(Error::scenario(&section, "offset", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Global cost map: obstacles, inflation by the robot radius, and
    /// proxemics around humans standing still.
    pub fn global_grid(&self, static_humans: &[Pose2D]) -> Result<OccupancyGrid> {
        let w = &self.world;
        let mut grid = OccupancyGrid::covering(w.min, w.max, w.resolution)?;
        rasterize_obstacles(&mut grid, &w.obstacles);
        inflate(&mut grid, self.robot.radius, w.inflation_radius.max(self.robot.radius))?;
        add_human_layer(&mut grid, static_humans, &HumanCostParams::default())?;
        Ok(grid)
    }
}

/// Unicycle Euler step.
pub fn integrate_unicycle(pose: &Pose2D, v: f64, omega: f64, dt: f64) -> Pose2D {
    Pose2D::new(
        pose.x + v * pose.theta.cos() * dt,
        pose.y + v * pose.theta.sin() * dt,
        pose.theta + omega * dt,
    )
}

/// Arc-length parameterized polyline.
#[derive(Debug, Clone, PartialEq)]
struct Track {
    points: Vec<Vec2>,
    arc: Vec<f64>,
}

impl Track {
    fn new(points: Vec<Vec2>) -> Self {
        let mut arc = vec![0.0];
        for w in points.windows(2) {
            arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self { points, arc }
    }

    fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    fn at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let k = self.arc.partition_point(|a| *a <= s).clamp(1, self.points.len() - 1) - 1;
        let len = self.arc[k + 1] - self.arc[k];
        let u = if len > 0.0 { (s - self.arc[k]) / len } else { 0.0 };
        self.points[k] + (self.points[k + 1] - self.points[k]) * u
    }

    /// Arc length of the closest point to `p`, not behind `from - 0.5`.
    fn project(&self, p: &Vec2, from: f64) -> f64 {
        let mut best = (f64::INFINITY, from);
        for k in 0..self.points.len() - 1 {
            if self.arc[k + 1] < from - 0.5 {
                continue;
            }
            let (q, t) = closest_point_on_segment(p, &self.points[k], &self.points[k + 1]);
            let d = (q - p).norm();
            if d < best.0 - 1e-12 {
                best = (d, self.arc[k] + t * (self.arc[k + 1] - self.arc[k]));
            }
        }
        best.1.max(from)
    }

    fn offset(&self, side: Side, by: f64) -> Track {
        let sign = if side == Side::Left { 1.0 } else { -1.0 };
        let n = self.points.len();
        let pts = (0..n)
            .map(|i| {
                let d = if i + 1 < n { self.points[i + 1] - self.points[i] } else { self.points[i] - self.points[i - 1] };
                let d = if d.norm() > 0.0 { d.normalize() } else { Vec2::new(1.0, 0.0) };
                self.points[i] + Vec2::new(-d.y, d.x) * (sign * by)
            })
            .collect();
        Track::new(pts)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HumanState {
    spec: HumanSpec,
    pose: Pose2D,
    velocity: Vec2,
    omega: f64,
    track: Track,
    progress: f64,
    rejecting: bool,
    arrived: bool,
    first_seen: Option<(Pose2D, Velocity2D, Pose2D)>,
}

impl HumanState {
    /// Step toward a lookahead point on the active track.
    fn advance_scripted(&mut self, dt: f64) -> Vec2 {
        let p = self.pose.position();
        let step = self.spec.speed * dt;
        self.progress = self.track.project(&p, self.progress);
        let end = self.track.at(self.track.length());
        if (end - p).norm() <= step {
            self.progress = self.track.length();
            return end;
        }
        let target = self.track.at(self.progress + step.max(0.5));
        let d = target - p;
        if d.norm() <= 1e-12 {
            return p;
        }
        p + d.normalize() * step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentMeta {
    pub id: String,
    pub kind: AgentKind,
    pub radius: f64,
    pub start: Vec2,
    pub goal: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub pose: Pose2D,
    /// Speed along the heading (signed for the robot).
    pub v: f64,
    pub omega: f64,
}

impl AgentState {
    pub fn velocity(&self) -> Vec2 {
        self.pose.heading() * self.v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSnapshot {
    /// `(agent id, band)`, robot first.
    pub bands: Vec<(String, TimedBand)>,
    pub command: (f64, f64),
    pub degraded: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub t: f64,
    /// Same order as [`RunLog::agents`].
    pub states: Vec<AgentState>,
    pub plan: Option<PlanSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    Timeout,
    Aborted,
    Collision,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Success => "success",
            RunStatus::Timeout => "timeout",
            RunStatus::Aborted => "aborted",
            RunStatus::Collision => "collision",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub agents: Vec<AgentMeta>,
    pub dt: f64,
    pub ticks: Vec<Tick>,
    pub status: RunStatus,
}

pub struct Simulation {
    scenario: Scenario,
    config: PlannerConfig,
    grid: Arc<OccupancyGrid>,
    global_path: Vec<Vec2>,
    robot: Pose2D,
    robot_cmd: (f64, f64),
    robot_arrived: bool,
    humans: Vec<HumanState>,
    previous: Option<PlanResult>,
    degraded_run: usize,
    tick: usize,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let config = scenario.effective_planner();
        let grid = scenario.global_grid(&[])?;
        let r = &scenario.robot;
        let global_path = plan_astar(&grid, &r.start.position(), &r.goal, DEFAULT_COST_SCALE)?;
        let global_path = resample_polyline(&global_path, config.robot_limits.nominal_speed * config.dt_ref);
        let mut humans = Vec::with_capacity(scenario.humans.len());
        for h in &scenario.humans {
            let pts = match &h.path {
                Some(p) => {
                    let mut pts = vec![h.start.position()];
                    pts.extend(p.iter().copied().filter(|q| (q - h.start.position()).norm() > 1e-9));
                    pts
                }
                None => plan_astar(&grid, &h.start.position(), &h.goal, DEFAULT_COST_SCALE)?,
            };
            let track = Track::new(pts);
            let dir = track.at(0.3) - track.at(0.0);
            let velocity = if dir.norm() > 0.0 { dir.normalize() * h.speed } else { Vec2::zeros() };
            humans.push(HumanState {
                spec: h.clone(),
                pose: h.start,
                velocity,
                omega: 0.0,
                track,
                progress: 0.0,
                rejecting: false,
                arrived: false,
                first_seen: None,
            });
        }
        Ok(Self {
            scenario: scenario.clone(),
            config,
            grid: Arc::new(grid),
            global_path,
            robot: r.start,
            robot_cmd: (0.0, 0.0),
            robot_arrived: false,
            humans,
            previous: None,
            degraded_run: 0,
            tick: 0,
        })
    }

    pub fn global_path(&self) -> &[Vec2] {
        &self.global_path
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 / self.scenario.sim.control_hz
    }

    fn dt(&self) -> f64 {
        1.0 / self.scenario.sim.control_hz
    }

    pub fn agents(&self) -> Vec<AgentMeta> {
        let r = &self.scenario.robot;
        let mut out = vec![AgentMeta {
            id: "robot".into(),
            kind: AgentKind::Robot,
            radius: r.radius,
            start: r.start.position(),
            goal: r.goal,
        }];
        out.extend(self.scenario.humans.iter().map(|h| AgentMeta {
            id: h.id.clone(),
            kind: AgentKind::Human,
            radius: h.radius,
            start: h.start.position(),
            goal: h.goal,
        }));
        out
    }

    pub fn states(&self) -> Vec<AgentState> {
        let mut out = vec![AgentState {
            pose: self.robot,
            v: self.robot_cmd.0,
            omega: self.robot_cmd.1,
        }];
        out.extend(self.humans.iter().map(|h| AgentState {
            pose: h.pose,
            v: h.velocity.norm(),
            omega: h.omega,
        }));
        out
    }

    /// Ground-truth planner input. Humans are tracked from the first tick
    /// they come within the planner's gating distance.
    pub fn world_state(&mut self) -> WorldState {
        let gate = HUMAN_GATE_FACTOR * self.config.local_area_radius;
        let robot = self.robot;
        let mut tracked = Vec::new();
        for h in &mut self.humans {
            let vel = Velocity2D::new(h.velocity.x, h.velocity.y, h.omega);
            if h.first_seen.is_none() && (h.pose.position() - robot.position()).norm() <= gate {
                h.first_seen = Some((h.pose, vel, robot));
            }
            let (fp, fv, fr) = h.first_seen.unwrap_or((h.pose, vel, robot));
            tracked.push(TrackedHuman {
                id: h.spec.id.clone(),
                pose: h.pose,
                velocity: vel,
                radius: h.spec.radius,
                first_seen_pose: fp,
                first_seen_velocity: fv,
                first_seen_robot_pose: fr,
            });
        }
        WorldState {
            time: self.time(),
            robot_pose: robot,
            robot_velocity: self.robot_cmd,
            robot_radius: self.scenario.robot.radius,
            global_path: self.global_path.clone(),
            humans: tracked,
            obstacles: self.scenario.world.obstacles.clone(),
            grid: Some(self.grid.clone()),
        }
    }

    fn done(&self) -> bool {
        self.robot_arrived && self.humans.iter().all(|h| h.arrived)
    }

    fn collided(&self) -> bool {
        let r = self.scenario.robot.radius;
        self.humans
            .iter()
            .any(|h| (h.pose.position() - self.robot.position()).norm() - r - h.spec.radius < 0.0)
    }

    /// One control cycle; returns the planning snapshot it acted on.
    pub fn step(&mut self) -> PlanSnapshot {
        let dt = self.dt();
        let state = self.world_state();
        let planned = plan_once(&state, self.previous.as_ref(), &self.config);
        let (snapshot, proposal) = match planned {
            Ok(res) => {
                self.degraded_run = if res.degraded { self.degraded_run + 1 } else { 0 };
                if let Some(p) = &res.replanned_path {
                    self.global_path = p.clone();
                }
                let mut bands = vec![("robot".to_string(), res.robot.clone())];
                bands.extend(res.humans.iter().map(|h| (h.agent_id.clone(), h.band.clone())));
                let snap = PlanSnapshot {
                    bands,
                    command: res.command,
                    degraded: res.degraded,
                    cost: res.diagnostics.final_cost,
                };
                let humans: BTreeMap<String, TimedBand> =
                    res.humans.iter().map(|h| (h.agent_id.clone(), h.band.clone())).collect();
                self.previous = Some(res);
                (snap, humans)
            }
            Err(_) => {
                self.degraded_run += 1;
                self.previous = None;
                let snap = PlanSnapshot {
                    bands: Vec::new(),
                    command: (0.0, 0.0),
                    degraded: true,
                    cost: f64::NAN,
                };
                (snap, BTreeMap::new())
            }
        };

        // robot: acceleration-limited actuator, then unicycle integration
        let lim = &self.config.robot_limits;
        let (mut v, mut w) = if self.robot_arrived { (0.0, 0.0) } else { snapshot.command };
        let (v0, w0) = self.robot_cmd;
        v = v.clamp(v0 - lim.a_max * dt, v0 + lim.a_max * dt);
        w = w.clamp(w0 - lim.a_rot_max * dt, w0 + lim.a_rot_max * dt);
        if self.robot_arrived {
            (v, w) = (0.0, 0.0);
        }
        self.robot = integrate_unicycle(&self.robot, v, w, dt);
        self.robot_cmd = (v, w);
        if (self.robot.position() - self.scenario.robot.goal).norm() <= GOAL_TOLERANCE {
            self.robot_arrived = true;
        }

        for h in &mut self.humans {
            let before = h.pose;
            let next = if h.arrived {
                before.position()
            } else {
                match h.spec.policy {
                    HumanPolicy::ScriptedPath => h.advance_scripted(dt),
                    HumanPolicy::CooperativeFollow => match proposal.get(&h.spec.id) {
                        Some(band) => band.pose_at_time(dt).position(),
                        None => h.advance_scripted(dt),
                    },
                    HumanPolicy::RejectProposal { side, offset } => {
                        if !h.rejecting {
                            if let Some(band) = proposal.get(&h.spec.id) {
                                let diverged = band.poses.iter().any(|p| {
                                    let s = h.track.project(&p.position(), 0.0);
                                    (h.track.at(s) - p.position()).norm() >= REJECT_TRIGGER
                                });
                                if diverged {
                                    h.rejecting = true;
                                    h.track = h.track.offset(side, offset);
                                    h.progress = h.track.project(&before.position(), 0.0);
                                }
                            }
                        }
                        h.advance_scripted(dt)
                    }
                }
            };
            let d = next - before.position();
            let theta = if d.norm() > 1e-9 { d.y.atan2(d.x) } else { before.theta };
            h.velocity = d / dt;
            h.omega = wrap(theta - before.theta) / dt;
            h.pose = Pose2D::new(next.x, next.y, theta);
            if (next - h.spec.goal).norm() <= GOAL_TOLERANCE {
                h.arrived = true;
            }
        }
        self.tick += 1;
        snapshot
    }

    /// Steps until success, timeout, collision or abort.
    pub fn run(mut self) -> RunLog {
        let agents = self.agents();
        let dt = self.dt();
        let mut log = RunLog {
            agents,
            dt,
            ticks: Vec::new(),
            status: RunStatus::Timeout,
        };
        if self.scenario.sim.max_duration <= 0.0 {
            return log;
        }
        let max_ticks = (self.scenario.sim.max_duration * self.scenario.sim.control_hz + 1e-9).floor() as usize;
        loop {
            let t = self.time();
            let states = self.states();
            if self.collided() {
                log.ticks.push(Tick { t, states, plan: None });
                log.status = RunStatus::Collision;
                break;
            }
            if self.done() {
                log.ticks.push(Tick { t, states, plan: None });
                log.status = RunStatus::Success;
                break;
            }
            if self.tick >= max_ticks {
                log.ticks.push(Tick { t, states, plan: None });
                break;
            }
            let snap = self.step();
            log.ticks.push(Tick {
                t,
                states,
                plan: Some(snap),
            });
            if self.degraded_run >= MAX_DEGRADED_TICKS {
                let states = self.states();
                log.ticks.push(Tick {
                    t: self.time(),
                    states,
                    plan: None,
                });
                log.status = RunStatus::Aborted;
                break;
            }
        }
        log
    }
}

pub fn run(scenario: &Scenario) -> Result<(RunLog, Metrics)> {
    let log = Simulation::new(scenario)?.run();
    let metrics = compute_metrics(&log);
    Ok((log, metrics))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentMetrics {
    pub id: String,
    pub time_to_goal: Option<f64>,
    pub path_length: f64,
    pub mean_speed: f64,
    pub max_speed: f64,
    pub max_lateral_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub min_edge_distance: f64,
    pub min_ttc: f64,
    pub duration: f64,
    pub robot: AgentMetrics,
    pub humans: Vec<AgentMetrics>,
    pub collision: bool,
    pub success: bool,
}

fn lateral(p: &Vec2, from: &Vec2, to: &Vec2) -> f64 {
    let d = to - from;
    if d.norm() < 1e-12 {
        return (p - from).norm();
    }
    let u = d.normalize();
    let r = p - from;
    (u.x * r.y - u.y * r.x).abs()
}

fn agent_metrics(log: &RunLog, k: usize) -> AgentMetrics {
    let meta = &log.agents[k];
    let mut m = AgentMetrics {
        id: meta.id.clone(),
        time_to_goal: None,
        path_length: 0.0,
        mean_speed: 0.0,
        max_speed: 0.0,
        max_lateral_deviation: 0.0,
    };
    let mut prev: Option<Vec2> = None;
    let mut speed_sum = 0.0;
    for tick in &log.ticks {
        let p = tick.states[k].pose.position();
        if let Some(q) = prev {
            m.path_length += (p - q).norm();
        }
        prev = Some(p);
        let s = tick.states[k].v.abs();
        speed_sum += s;
        m.max_speed = m.max_speed.max(s);
        m.max_lateral_deviation = m.max_lateral_deviation.max(lateral(&p, &meta.start, &meta.goal));
        if m.time_to_goal.is_none() && (p - meta.goal).norm() <= GOAL_TOLERANCE {
            m.time_to_goal = Some(tick.t);
        }
    }
    if !log.ticks.is_empty() {
        m.mean_speed = speed_sum / log.ticks.len() as f64;
    }
    m
}

/// Robot-human outer distance and time-to-collision at one tick.
pub fn robot_human_interaction(log: &RunLog, tick: &Tick, human: usize) -> (f64, f64) {
    let r = &tick.states[0];
    let h = &tick.states[human];
    let (rr, hr) = (log.agents[0].radius, log.agents[human].radius);
    let d = (h.pose.position() - r.pose.position()).norm() - rr - hr;
    let ttc = time_to_collision(&r.pose.position(), &r.velocity(), rr, &h.pose.position(), &h.velocity(), hr);
    (d, ttc)
}

pub fn compute_metrics(log: &RunLog) -> Metrics {
    let mut min_d = f64::INFINITY;
    let mut min_ttc = f64::INFINITY;
    for tick in &log.ticks {
        for k in 1..log.agents.len() {
            let (d, ttc) = robot_human_interaction(log, tick, k);
            min_d = min_d.min(d);
            min_ttc = min_ttc.min(ttc);
        }
    }
    let robot = if log.agents.is_empty() {
        AgentMetrics {
            id: "robot".into(),
            time_to_goal: None,
            path_length: 0.0,
            mean_speed: 0.0,
            max_speed: 0.0,
            max_lateral_deviation: 0.0,
        }
    } else {
        agent_metrics(log, 0)
    };
    let humans: Vec<AgentMetrics> = (1..log.agents.len()).map(|k| agent_metrics(log, k)).collect();
    let collision = min_d < 0.0;
    let success = !log.ticks.is_empty()
        && !collision
        && log.ticks.last().is_some_and(|t| {
            t.states
                .iter()
                .zip(&log.agents)
                .all(|(s, a)| (s.pose.position() - a.goal).norm() <= GOAL_TOLERANCE)
        });
    Metrics {
        min_edge_distance: min_d,
        min_ttc,
        duration: log.ticks.last().map_or(0.0, |t| t.t),
        robot,
        humans,
        collision,
        success,
    }
}
