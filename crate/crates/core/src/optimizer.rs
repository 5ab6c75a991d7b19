//! Hyper-graph of band variables and residual edges, and the
//! Levenberg-Marquardt solver that deforms it.
//!
//! Pose nodes carry `(x, y, θ)` (humans only `(x, y)`), time-diff nodes a
//! single interval, obstacle nodes are fixed geometry. Edges link 1–6 nodes
//! and contribute `γ·r²` per residual component. The normal equations are
//! assembled from per-edge sparse Jacobian blocks and solved densely per
//! connected component of the free variables.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::band::{autoresize, restore_tail, synchronize, AgentBand, AgentKind, TimedBand, MIN_DT};
use crate::config::{LmConfig, PlannerConfig};
use crate::constraints::{
    self, c_dir, f_dir, f_obs, f_safety, f_ttc, DirectionalParams, KinodynamicLimits, ObstacleParams,
    SafetyParams, TtcParams,
};
use crate::error::{Error, Result};
use crate::geometry::{Pose2D, StaticObstacle, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Holonomic poses optimize position only.
    Pose { holonomic: bool },
    TimeDiff,
    Obstacle(StaticObstacle),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub fixed: bool,
    offset: usize,
}

impl Node {
    fn dim(&self) -> usize {
        match self.kind {
            NodeKind::Pose { .. } => 3,
            NodeKind::TimeDiff => 1,
            NodeKind::Obstacle(_) => 0,
        }
    }

    fn free_dim(&self) -> usize {
        if self.fixed {
            return 0;
        }
        match self.kind {
            NodeKind::Pose { holonomic: true } => 2,
            NodeKind::Pose { holonomic: false } => 3,
            NodeKind::TimeDiff => 1,
            NodeKind::Obstacle(_) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeFamily {
    Kinematics,
    Velocity,
    Acceleration,
    TimeOptimality,
    NominalSpeed,
    Obstacle,
    Safety,
    Separation,
    Ttc,
    Directional,
    Spring,
}

impl EdgeFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeFamily::Kinematics => "kinematics",
            EdgeFamily::Velocity => "velocity",
            EdgeFamily::Acceleration => "acceleration",
            EdgeFamily::TimeOptimality => "time_optimality",
            EdgeFamily::NominalSpeed => "nominal_speed",
            EdgeFamily::Obstacle => "obstacle",
            EdgeFamily::Safety => "safety",
            EdgeFamily::Separation => "separation",
            EdgeFamily::Ttc => "ttc",
            EdgeFamily::Directional => "directional",
            EdgeFamily::Spring => "spring",
        }
    }
}

impl fmt::Display for EdgeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EdgeKind {
    /// `[pose_i, pose_j]`
    Kinematics,
    /// `[pose_i, pose_j, dt]`; humans only get the translational part.
    Velocity { limits: KinodynamicLimits, holonomic: bool },
    /// `[pose_i, pose_j, pose_k, dt_ij, dt_jk]`
    Acceleration { limits: KinodynamicLimits, holonomic: bool },
    /// `[pose_0, pose_1, dt_0]` against the measured `(v, ω)`.
    StartAcceleration { limits: KinodynamicLimits, current: (f64, f64) },
    /// `[dt]`
    TimeOptimality,
    /// `[pose_i, pose_j, dt]`
    NominalSpeed { nominal: f64 },
    /// `[pose, obstacle]`
    Obstacle { params: ObstacleParams, radius: f64 },
    /// `[robot_pose, human_pose]`
    Safety { params: SafetyParams, radii: (f64, f64) },
    /// `[human_a_pose, human_b_pose]`
    Separation { params: SafetyParams, radii: (f64, f64) },
    /// `[r_i, r_i+1, r_dt, h_i, h_i+1, h_dt]`
    Ttc { params: TtcParams, radii: (f64, f64) },
    /// `[r_i, r_i+1, r_dt, h_i, h_i+1, h_dt]`
    Directional { params: DirectionalParams },
    /// `[pose_i, pose_j]`: quadratic tie `p_j - p_i - rest`.
    Spring { rest: Vec2 },
}

impl EdgeKind {
    pub fn family(&self) -> EdgeFamily {
        match self {
            EdgeKind::Kinematics => EdgeFamily::Kinematics,
            EdgeKind::Velocity { .. } => EdgeFamily::Velocity,
            EdgeKind::Acceleration { .. } | EdgeKind::StartAcceleration { .. } => EdgeFamily::Acceleration,
            EdgeKind::TimeOptimality => EdgeFamily::TimeOptimality,
            EdgeKind::NominalSpeed { .. } => EdgeFamily::NominalSpeed,
            EdgeKind::Obstacle { .. } => EdgeFamily::Obstacle,
            EdgeKind::Safety { .. } => EdgeFamily::Safety,
            EdgeKind::Separation { .. } => EdgeFamily::Separation,
            EdgeKind::Ttc { .. } => EdgeFamily::Ttc,
            EdgeKind::Directional { .. } => EdgeFamily::Directional,
            EdgeKind::Spring { .. } => EdgeFamily::Spring,
        }
    }

    fn arity(&self) -> usize {
        match self {
            EdgeKind::TimeOptimality => 1,
            EdgeKind::Kinematics
            | EdgeKind::Obstacle { .. }
            | EdgeKind::Safety { .. }
            | EdgeKind::Separation { .. }
            | EdgeKind::Spring { .. } => 2,
            EdgeKind::Velocity { .. } | EdgeKind::NominalSpeed { .. } | EdgeKind::StartAcceleration { .. } => 3,
            EdgeKind::Acceleration { .. } => 5,
            EdgeKind::Ttc { .. } | EdgeKind::Directional { .. } => 6,
        }
    }

    /// Whether a residual component may switch to exactly zero (hinge), in
    /// which case the zero side supplies the derivative.
    fn is_hinge(&self) -> bool {
        !matches!(self, EdgeKind::Kinematics | EdgeKind::NominalSpeed { .. } | EdgeKind::Spring { .. } | EdgeKind::TimeOptimality)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub kind: EdgeKind,
    pub nodes: Vec<NodeId>,
    pub weight: f64,
}

/// Up to two residual components.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Res {
    r: [f64; 2],
    n: usize,
}

impl Res {
    fn one(a: f64) -> Self {
        Self { r: [a, 0.0], n: 1 }
    }
    fn two(a: f64, b: f64) -> Self {
        Self { r: [a, b], n: 2 }
    }
    fn sq(&self) -> f64 {
        self.r[..self.n].iter().map(|v| v * v).sum()
    }
}

/// Node ids belonging to one agent's band.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNodes {
    pub agent_id: String,
    pub kind: AgentKind,
    pub radius: f64,
    pub poses: Vec<NodeId>,
    pub deltas: Vec<NodeId>,
    start_fixed: bool,
    goal_fixed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub agents: Vec<AgentNodes>,
    values: Vec<f64>,
}

impl ConstraintGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_pose(&mut self, pose: Pose2D, fixed: bool, holonomic: bool) -> NodeId {
        let offset = self.values.len();
        self.values.extend_from_slice(&[pose.x, pose.y, pose.theta]);
        self.nodes.push(Node {
            kind: NodeKind::Pose { holonomic },
            fixed,
            offset,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_time_diff(&mut self, dt: f64, fixed: bool) -> NodeId {
        let offset = self.values.len();
        self.values.push(dt.max(MIN_DT));
        self.nodes.push(Node {
            kind: NodeKind::TimeDiff,
            fixed,
            offset,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_obstacle(&mut self, obstacle: StaticObstacle) -> NodeId {
        self.nodes.push(Node {
            kind: NodeKind::Obstacle(obstacle),
            fixed: true,
            offset: self.values.len(),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_edge(&mut self, kind: EdgeKind, nodes: Vec<NodeId>, weight: f64) -> Result<()> {
        if nodes.len() != kind.arity() {
            return Err(Error::Config(format!(
                "{} edge expects {} nodes, got {}",
                kind.family(),
                kind.arity(),
                nodes.len()
            )));
        }
        if let Some(bad) = nodes.iter().find(|n| n.0 >= self.nodes.len()) {
            return Err(Error::Config(format!("edge references missing node {}", bad.0)));
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::Config("edge weight must be finite and non-negative".into()));
        }
        self.edges.push(Edge { kind, nodes, weight });
        Ok(())
    }

    pub fn pose(&self, id: NodeId) -> Pose2D {
        pose_from(&self.values, self.nodes[id.0].offset)
    }

    pub fn time_diff(&self, id: NodeId) -> f64 {
        self.values[self.nodes[id.0].offset]
    }

    fn obstacle(&self, id: NodeId) -> &StaticObstacle {
        match &self.nodes[id.0].kind {
            NodeKind::Obstacle(o) => o,
            _ => unreachable!("edge arity checked at insertion"),
        }
    }

    pub fn count_edges(&self, family: EdgeFamily) -> usize {
        self.edges.iter().filter(|e| e.kind.family() == family).count()
    }

    /// Reassembles one agent's band from the current node values.
    pub fn band(&self, agent: usize) -> TimedBand {
        let a = &self.agents[agent];
        let mut poses: Vec<Pose2D> = a
            .poses
            .iter()
            .map(|id| {
                let p = self.pose(*id);
                Pose2D::new(p.x, p.y, p.theta)
            })
            .collect();
        if a.kind == AgentKind::Human {
            face_motion(&mut poses, a.start_fixed, a.goal_fixed);
        }
        TimedBand {
            poses,
            deltas: a.deltas.iter().map(|id| self.time_diff(*id)).collect(),
            start_fixed: a.start_fixed,
            goal_fixed: a.goal_fixed,
        }
    }

    fn residual(&self, edge: &Edge, vals: &[f64]) -> Res {
        let pose = |k: usize| pose_from(vals, self.nodes[edge.nodes[k].0].offset);
        let dt = |k: usize| vals[self.nodes[edge.nodes[k].0].offset];
        match &edge.kind {
            EdgeKind::Kinematics => {
                let (a, b) = (pose(0), pose(1));
                let d = b.position() - a.position();
                let (sa, ca) = a.theta.sin_cos();
                let (sb, cb) = b.theta.sin_cos();
                // signed form keeps the squared cost smooth through zero
                Res::one((ca + cb) * d.y - (sa + sb) * d.x)
            }
            EdgeKind::Velocity { limits, holonomic } => {
                let (a, b, t) = (pose(0), pose(1), dt(2));
                if *holonomic {
                    let v = (b.position() - a.position()).norm() / t;
                    Res::one((v - limits.v_max).max(0.0))
                } else {
                    let (tr, rot) = constraints::velocity_residual(&a, &b, t, limits);
                    Res::two(tr, rot)
                }
            }
            EdgeKind::Acceleration { limits, holonomic } => {
                let (a, b, c, t1, t2) = (pose(0), pose(1), pose(2), dt(3), dt(4));
                if *holonomic {
                    let v1 = (b.position() - a.position()).norm() / t1;
                    let v2 = (c.position() - b.position()).norm() / t2;
                    let acc = (v2 - v1) / (0.5 * (t1 + t2));
                    Res::one((acc.abs() - limits.a_max).max(0.0))
                } else {
                    let (tr, rot) = constraints::acceleration_residual(&a, &b, &c, t1, t2, limits);
                    Res::two(tr, rot)
                }
            }
            EdgeKind::StartAcceleration { limits, current } => {
                let (tr, rot) = constraints::start_acceleration_residual(&pose(0), &pose(1), dt(2), *current, limits);
                Res::two(tr, rot)
            }
            EdgeKind::TimeOptimality => Res::one(constraints::time_optimality_residual(dt(0))),
            EdgeKind::NominalSpeed { nominal } => {
                let (a, b, t) = (pose(0), pose(1), dt(2));
                Res::one((b.position() - a.position()).norm() / t - nominal)
            }
            EdgeKind::Obstacle { params, radius } => {
                let p = pose(0).position();
                let d = self.obstacle(edge.nodes[1]).signed_distance_to_circle(&p, *radius);
                Res::one(f_obs(d, params))
            }
            EdgeKind::Safety { params, radii } | EdgeKind::Separation { params, radii } => {
                let d = (pose(0).position() - pose(1).position()).norm() - radii.0 - radii.1;
                Res::one(f_safety(d, params))
            }
            EdgeKind::Ttc { params, radii } => {
                let (pr, vr, ph, vh) = coupled_state(&pose(0), &pose(1), dt(2), &pose(3), &pose(4), dt(5));
                let ttc = constraints::time_to_collision(&pr, &vr, radii.0, &ph, &vh, radii.1);
                // inside contact ttc is already 0; clamping there keeps the residual bounded
                let contact = radii.0 + radii.1;
                let c_sq = (ph - pr).norm_squared().max(contact * contact).max(MIN_C_SQ);
                Res::one(f_ttc(ttc, c_sq, params).unwrap_or(0.0))
            }
            EdgeKind::Directional { params } => {
                let (pr, vr, ph, vh) = coupled_state(&pose(0), &pose(1), dt(2), &pose(3), &pose(4), dt(5));
                let c = if (ph - pr).norm_squared() < MIN_C_SQ {
                    (vr - vh).norm() / MIN_C_SQ.sqrt()
                } else {
                    c_dir(&pr, &vr, &ph, &vh).unwrap_or(0.0)
                };
                Res::one(f_dir(c, params))
            }
            EdgeKind::Spring { rest } => {
                let d = pose(1).position() - pose(0).position() - rest;
                Res::two(d.x, d.y)
            }
        }
    }

    /// Value-array indices and variable columns of an edge's free scalars.
    fn edge_free_scalars(&self, edge: &Edge, var_of: &[Option<usize>]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for id in &edge.nodes {
            let node = &self.nodes[id.0];
            for k in 0..node.dim() {
                let idx = node.offset + k;
                if let Some(col) = var_of[idx] {
                    out.push((idx, col));
                }
            }
        }
        out
    }

    /// Map from value index to variable column, in node order.
    fn variable_map(&self) -> (Vec<Option<usize>>, usize) {
        let mut var_of = vec![None; self.values.len()];
        let mut n = 0;
        for node in &self.nodes {
            for k in 0..node.free_dim() {
                var_of[node.offset + k] = Some(n);
                n += 1;
            }
        }
        (var_of, n)
    }

    pub fn free_variable_count(&self) -> usize {
        self.nodes.iter().map(|n| n.free_dim()).sum()
    }

    /// Finite-difference Jacobian of one edge, unweighted, as
    /// `(column, [d r0, d r1])` pairs.
    pub fn edge_jacobian(&self, edge_index: usize, step: f64) -> Vec<(usize, [f64; 2])> {
        let (var_of, _) = self.variable_map();
        let mut scratch = self.values.clone();
        let edge = &self.edges[edge_index];
        let base = self.residual(edge, &scratch);
        self.jacobian_columns(edge, &var_of, &mut scratch, &base, step)
    }

    /// Unweighted residual components of one edge.
    pub fn edge_residual(&self, edge_index: usize) -> Vec<f64> {
        let r = self.residual(&self.edges[edge_index], &self.values);
        r.r[..r.n].to_vec()
    }

    fn jacobian_columns(
        &self,
        edge: &Edge,
        var_of: &[Option<usize>],
        scratch: &mut [f64],
        base: &Res,
        h: f64,
    ) -> Vec<(usize, [f64; 2])> {
        let hinge = edge.kind.is_hinge();
        let mut cols = Vec::new();
        for (idx, col) in self.edge_free_scalars(edge, var_of) {
            let orig = scratch[idx];
            // time differences must stay positive under the probe
            let down = if matches!(self.nodes_at(idx), NodeKind::TimeDiff) { h.min(orig * 0.5) } else { h };
            scratch[idx] = orig + h;
            let plus = self.residual(edge, scratch);
            scratch[idx] = orig - down;
            let minus = self.residual(edge, scratch);
            scratch[idx] = orig;
            let mut d = [0.0; 2];
            for c in 0..base.n {
                let (r0, rp, rm) = (base.r[c], plus.r[c], minus.r[c]);
                d[c] = if !hinge {
                    (rp - rm) / (h + down)
                } else if r0 == 0.0 {
                    0.0
                } else if rp == 0.0 {
                    (r0 - rm) / down
                } else if rm == 0.0 {
                    (rp - r0) / h
                } else {
                    (rp - rm) / (h + down)
                };
            }
            cols.push((col, d));
        }
        cols
    }

    fn nodes_at(&self, value_index: usize) -> &NodeKind {
        // nodes are stored in offset order
        let pos = self.nodes.partition_point(|n| n.offset + n.dim() <= value_index);
        &self.nodes[pos].kind
    }

    fn edge_cost(&self, edge: &Edge, vals: &[f64]) -> f64 {
        if edge.weight == 0.0 {
            return 0.0;
        }
        edge.weight * self.residual(edge, vals).sq()
    }
}

const MIN_C_SQ: f64 = 1e-4;

fn pose_from(vals: &[f64], offset: usize) -> Pose2D {
    Pose2D {
        x: vals[offset],
        y: vals[offset + 1],
        theta: vals[offset + 2],
    }
}

fn coupled_state(r0: &Pose2D, r1: &Pose2D, rdt: f64, h0: &Pose2D, h1: &Pose2D, hdt: f64) -> (Vec2, Vec2, Vec2, Vec2) {
    let pr = r0.position();
    let ph = h0.position();
    (pr, (r1.position() - pr) / rdt, ph, (h1.position() - ph) / hdt)
}

/// Sets holonomic headings to the direction of travel, leaving fixed ends.
pub(crate) fn face_motion(poses: &mut [Pose2D], start_fixed: bool, goal_fixed: bool) {
    let n = poses.len();
    let mut last = poses[0].theta;
    for i in 0..n {
        if (i == 0 && start_fixed) || (i + 1 == n && goal_fixed) {
            continue;
        }
        let d = if i + 1 < n {
            poses[i + 1].position() - poses[i].position()
        } else {
            Vec2::zeros()
        };
        if d.norm() > 1e-6 {
            last = d.y.atan2(d.x);
        }
        poses[i].theta = last;
    }
}

/// Weighted-sum objective `Σ γ r²`.
pub fn total_cost(graph: &ConstraintGraph) -> f64 {
    graph.edges.iter().map(|e| graph.edge_cost(e, &graph.values)).sum()
}

pub fn cost_breakdown(graph: &ConstraintGraph) -> BTreeMap<EdgeFamily, f64> {
    let mut out = BTreeMap::new();
    for e in &graph.edges {
        *out.entry(e.kind.family()).or_insert(0.0) += graph.edge_cost(e, &graph.values);
    }
    out
}

fn synchronized(reference: &TimedBand, other: &TimedBand) -> bool {
    let rt = reference.timestamps();
    let ot = other.timestamps();
    ot.len() <= rt.len() && ot.iter().zip(&rt).all(|(a, b)| (a - b).abs() <= 1e-9)
}

/// Builds the joint graph. Zero-weight edges are left out so that disabled
/// families do not couple otherwise independent bands.
pub fn build_graph(
    robot: &AgentBand,
    humans: &[AgentBand],
    obstacles: &[StaticObstacle],
    config: &PlannerConfig,
    robot_velocity: Option<(f64, f64)>,
) -> Result<ConstraintGraph> {
    for h in humans {
        if !synchronized(&robot.band, &h.band) {
            return Err(Error::Unsynchronized(h.agent_id.clone()));
        }
    }
    let w = &config.weights;
    let hs = w.human_scale;
    let mut g = ConstraintGraph::new();
    let obstacle_ids: Vec<NodeId> = obstacles.iter().map(|o| g.add_obstacle(o.clone())).collect();

    let add = |g: &mut ConstraintGraph, kind: EdgeKind, nodes: Vec<NodeId>, weight: f64| -> Result<()> {
        if weight > 0.0 {
            g.add_edge(kind, nodes, weight)?;
        }
        Ok(())
    };

    let mut agent_nodes = Vec::with_capacity(humans.len() + 1);
    for (agent, is_robot) in std::iter::once((robot, true)).chain(humans.iter().map(|h| (h, false))) {
        let band = &agent.band;
        let n = band.len();
        let poses: Vec<NodeId> = band
            .poses
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let fixed = (i == 0 && band.start_fixed) || (i + 1 == n && band.goal_fixed);
                g.add_pose(*p, fixed, !is_robot)
            })
            .collect();
        let time_fixed = !is_robot && !config.human_time_free;
        let deltas: Vec<NodeId> = band.deltas.iter().map(|d| g.add_time_diff(*d, time_fixed)).collect();
        agent_nodes.push(AgentNodes {
            agent_id: agent.agent_id.clone(),
            kind: agent.kind,
            radius: agent.footprint_radius,
            poses,
            deltas,
            start_fixed: band.start_fixed,
            goal_fixed: band.goal_fixed,
        });
    }

    // per-band edges
    for (a, agent) in std::iter::once(robot).chain(humans.iter()).enumerate() {
        let nodes = agent_nodes[a].clone();
        let is_robot = a == 0;
        let limits = if is_robot { config.robot_limits } else { config.human_limits };
        let scale = if is_robot { 1.0 } else { hs };
        let (w_vel, w_acc, w_obs) = if is_robot {
            (w.velocity, w.acceleration, w.obstacle)
        } else {
            (w.human_velocity * hs, w.human_acceleration * hs, w.human_obstacle * hs)
        };
        let n = nodes.poses.len();
        for i in 0..n - 1 {
            let (p0, p1, dt) = (nodes.poses[i], nodes.poses[i + 1], nodes.deltas[i]);
            if is_robot {
                add(&mut g, EdgeKind::Kinematics, vec![p0, p1], w.kinematics)?;
                add(&mut g, EdgeKind::TimeOptimality, vec![dt], w.time_optimality)?;
            } else {
                add(
                    &mut g,
                    EdgeKind::NominalSpeed { nominal: agent.nominal_speed.unwrap_or(limits.nominal_speed) },
                    vec![p0, p1, dt],
                    w.human_nominal * scale,
                )?;
            }
            add(&mut g, EdgeKind::Velocity { limits, holonomic: !is_robot }, vec![p0, p1, dt], w_vel)?;
        }
        for i in 0..n.saturating_sub(2) {
            add(
                &mut g,
                EdgeKind::Acceleration { limits, holonomic: !is_robot },
                vec![nodes.poses[i], nodes.poses[i + 1], nodes.poses[i + 2], nodes.deltas[i], nodes.deltas[i + 1]],
                w_acc,
            )?;
        }
        if let (true, Some(current)) = (is_robot, robot_velocity) {
            add(
                &mut g,
                EdgeKind::StartAcceleration { limits, current },
                vec![nodes.poses[0], nodes.poses[1], nodes.deltas[0]],
                w_acc,
            )?;
        }
        if w_obs > 0.0 {
            let reach = config.obstacle.d_o + config.obstacle.epsilon + config.obstacle_margin;
            for (i, pid) in nodes.poses.iter().enumerate() {
                if g.nodes[pid.0].fixed && i > 0 {
                    continue;
                }
                let p = agent.band.poses[i].position();
                for (o, oid) in obstacles.iter().zip(&obstacle_ids) {
                    if o.signed_distance_to_circle(&p, agent.footprint_radius) < reach {
                        add(
                            &mut g,
                            EdgeKind::Obstacle { params: config.obstacle, radius: agent.footprint_radius },
                            vec![*pid, *oid],
                            w_obs,
                        )?;
                    }
                }
            }
        }
    }

    // robot-human coupling, gated by the local planning area around the robot
    let robot_nodes = agent_nodes[0].clone();
    let center = robot.band.first().position();
    for (k, human) in humans.iter().enumerate() {
        let hn = agent_nodes[k + 1].clone();
        let shared = hn.poses.len().min(robot_nodes.poses.len());
        let radii = (robot.footprint_radius, human.footprint_radius);
        for i in 0..shared {
            if (human.band.poses[i].position() - center).norm() > config.local_area_radius {
                continue;
            }
            add(
                &mut g,
                EdgeKind::Safety { params: config.safety, radii },
                vec![robot_nodes.poses[i], hn.poses[i]],
                w.safety,
            )?;
            if i + 1 < shared {
                let six = vec![
                    robot_nodes.poses[i],
                    robot_nodes.poses[i + 1],
                    robot_nodes.deltas[i],
                    hn.poses[i],
                    hn.poses[i + 1],
                    hn.deltas[i],
                ];
                add(&mut g, EdgeKind::Ttc { params: config.ttc, radii }, six.clone(), w.ttc)?;
                add(&mut g, EdgeKind::Directional { params: config.directional }, six, w.directional)?;
            }
        }
    }

    // human-human separation
    for a in 0..humans.len() {
        for b in (a + 1)..humans.len() {
            let (na, nb) = (&agent_nodes[a + 1], &agent_nodes[b + 1]);
            let radii = (humans[a].footprint_radius, humans[b].footprint_radius);
            let shared = na.poses.len().min(nb.poses.len());
            let pairs: Vec<(NodeId, NodeId)> = (0..shared).map(|i| (na.poses[i], nb.poses[i])).collect();
            for (pa, pb) in pairs {
                add(&mut g, EdgeKind::Separation { params: config.separation, radii }, vec![pa, pb], w.separation)?;
            }
        }
    }

    g.agents = agent_nodes;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    /// Total cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub degraded: bool,
}

/// Splits free variables into independent blocks connected by edges.
fn components(graph: &ConstraintGraph, var_of: &[Option<usize>], n: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let edge_vars: Vec<Vec<usize>> = graph
        .edges
        .iter()
        .map(|e| graph.edge_free_scalars(e, var_of).into_iter().map(|(_, c)| c).collect())
        .collect();
    for vars in &edge_vars {
        for w in vars.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut by_root: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        by_root.entry(r).or_default().0.push(v);
    }
    for (ei, vars) in edge_vars.iter().enumerate() {
        if let Some(v) = vars.first() {
            let r = find(&mut parent, *v);
            by_root.get_mut(&r).unwrap().1.push(ei);
        }
    }
    by_root.into_values().filter(|(_, e)| !e.is_empty()).collect()
}

/// Levenberg-Marquardt on the current graph structure.
pub fn solve_inner(graph: &mut ConstraintGraph, config: &LmConfig) -> Result<SolveReport> {
    config.validate()?;
    let (var_of, n) = graph.variable_map();
    let mut col_to_value = vec![0usize; n];
    for (idx, c) in var_of.iter().enumerate() {
        if let Some(c) = c {
            col_to_value[*c] = idx;
        }
    }
    let initial = total_cost(graph);
    let mut report = SolveReport {
        initial_cost: initial,
        final_cost: initial,
        iterations: 0,
        accepted_steps: 0,
        cost_history: vec![initial],
        degraded: false,
    };
    if n == 0 {
        return Ok(report);
    }
    let comps = components(graph, &var_of, n);
    let mut running = initial;
    let mut scratch = graph.values.clone();
    for (vars, edges) in comps {
        let mut local = vec![usize::MAX; n];
        for (i, v) in vars.iter().enumerate() {
            local[*v] = i;
        }
        let m = vars.len();
        let comp_cost = |g: &ConstraintGraph, vals: &[f64]| -> f64 { edges.iter().map(|e| g.edge_cost(&g.edges[*e], vals)).sum() };
        let mut cost = comp_cost(graph, &graph.values);
        let mut lambda = config.lambda_init;
        for _ in 0..config.inner_iterations {
            if cost == 0.0 {
                break;
            }
            report.iterations += 1;
            let mut h = DMatrix::<f64>::zeros(m, m);
            let mut grad = DVector::<f64>::zeros(m);
            scratch.copy_from_slice(&graph.values);
            for &ei in &edges {
                let edge = &graph.edges[ei];
                let base = graph.residual(edge, &scratch);
                if base.sq() == 0.0 && edge.kind.is_hinge() {
                    continue;
                }
                let sw = edge.weight.sqrt();
                let cols = graph.jacobian_columns(edge, &var_of, &mut scratch, &base, config.fd_step);
                for (ca, da) in &cols {
                    let la = local[*ca];
                    for c in 0..base.n {
                        grad[la] += sw * da[c] * sw * base.r[c];
                    }
                    for (cb, db) in &cols {
                        let lb = local[*cb];
                        let mut s = 0.0;
                        for c in 0..base.n {
                            s += da[c] * db[c];
                        }
                        h[(la, lb)] += edge.weight * s;
                    }
                }
            }
            let mut accepted = false;
            loop {
                let mut a = h.clone();
                for i in 0..m {
                    a[(i, i)] += lambda;
                }
                let Some(chol) = a.cholesky() else {
                    lambda *= config.lambda_up;
                    if lambda > config.lambda_max {
                        report.degraded = true;
                        break;
                    }
                    continue;
                };
                let mut step = chol.solve(&(-&grad));
                step.apply(|x| *x = x.clamp(-config.max_step, config.max_step));
                scratch.copy_from_slice(&graph.values);
                for (i, v) in vars.iter().enumerate() {
                    let idx = col_to_value[*v];
                    let mut x = scratch[idx] + step[i];
                    if matches!(graph.nodes_at(idx), NodeKind::TimeDiff) {
                        x = x.max(MIN_DT);
                    }
                    scratch[idx] = x;
                }
                let trial = comp_cost(graph, &scratch);
                if trial < cost {
                    graph.values.copy_from_slice(&scratch);
                    running += trial - cost;
                    cost = trial;
                    report.accepted_steps += 1;
                    report.cost_history.push(running.max(0.0));
                    lambda = (lambda * config.lambda_down).max(1e-12);
                    accepted = step.amax() >= config.step_tolerance;
                    break;
                }
                lambda *= config.lambda_up;
                if lambda > config.lambda_max {
                    break;
                }
            }
            if !accepted {
                break;
            }
        }
    }
    report.final_cost = total_cost(graph);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub cost_breakdown: BTreeMap<EdgeFamily, f64>,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub robot: AgentBand,
    pub humans: Vec<AgentBand>,
    pub diagnostics: Diagnostics,
}

/// One outer-loop preparation: resize every band, synchronize the humans
/// to the robot's time grid and build the graph.
pub fn prepare_graph(
    robot: &AgentBand,
    humans: &[AgentBand],
    obstacles: &[StaticObstacle],
    config: &PlannerConfig,
    robot_velocity: Option<(f64, f64)>,
) -> Result<ConstraintGraph> {
    let mut robot = robot.clone();
    robot.band = autoresize(&robot.band, config.dt_ref, config.dt_hysteresis);
    let resized: Vec<TimedBand> = humans
        .iter()
        .map(|h| autoresize(&h.band, config.dt_ref, config.dt_hysteresis))
        .collect();
    let mut humans = humans.to_vec();
    for (h, b) in humans.iter_mut().zip(synchronize(&robot.band, &resized)) {
        let mut b = b;
        face_motion(&mut b.poses, b.start_fixed, b.goal_fixed);
        h.band = b;
    }
    build_graph(&robot, &humans, obstacles, config, robot_velocity)
}

/// Outer loop: resize, synchronize, rebuild and solve, repeatedly.
pub fn optimize(
    robot: &AgentBand,
    humans: &[AgentBand],
    obstacles: &[StaticObstacle],
    config: &PlannerConfig,
    robot_velocity: Option<(f64, f64)>,
) -> Result<Optimized> {
    config.lm.validate()?;
    let mut robot = robot.clone();
    let mut humans: Vec<AgentBand> = humans.to_vec();
    let mut diag = Diagnostics {
        initial_cost: f64::NAN,
        final_cost: 0.0,
        cost_breakdown: BTreeMap::new(),
        inner_iterations: 0,
        outer_iterations: 0,
        degraded: false,
    };
    for _ in 0..config.lm.outer_iterations {
        let mut graph = prepare_graph(&robot, &humans, obstacles, config, robot_velocity)?;
        let report = solve_inner(&mut graph, &config.lm)?;
        if diag.initial_cost.is_nan() {
            diag.initial_cost = report.initial_cost;
        }
        diag.final_cost = report.final_cost;
        diag.inner_iterations += report.iterations;
        diag.outer_iterations += 1;
        diag.degraded |= report.degraded;
        diag.cost_breakdown = cost_breakdown(&graph);
        robot.band = graph.band(0);
        for (k, h) in humans.iter_mut().enumerate() {
            h.band = restore_tail(&graph.band(k + 1), &h.band);
        }
    }
    Ok(Optimized {
        robot,
        humans,
        diagnostics: diag,
    })
}

/// Largest perpendicular distance of any band pose from the line through
/// `from` and `to`.
pub fn max_lateral_deviation(band: &TimedBand, from: &Vec2, to: &Vec2) -> f64 {
    let dir = to - from;
    let len = dir.norm();
    if len < 1e-12 {
        return band.poses.iter().map(|p| (p.position() - from).norm()).fold(0.0, f64::max);
    }
    let u = dir / len;
    band.poses
        .iter()
        .map(|p| {
            let r = p.position() - from;
            (u.x * r.y - u.y * r.x).abs()
        })
        .fold(0.0, f64::max)
}
