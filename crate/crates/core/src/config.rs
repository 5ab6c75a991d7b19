//! Planner configuration: constraint weights, bounds, limits and solver
//! schedule. Every tunable lives here; nothing downstream hard-codes them.

use crate::constraints::{DirectionalParams, KinodynamicLimits, ObstacleParams, SafetyParams, TtcParams};
use crate::error::{Error, Result};

/// Weight of each edge family in the weighted-sum objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub kinematics: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub time_optimality: f64,
    pub obstacle: f64,
    pub human_velocity: f64,
    pub human_acceleration: f64,
    pub human_nominal: f64,
    pub human_obstacle: f64,
    pub safety: f64,
    pub ttc: f64,
    pub directional: f64,
    pub separation: f64,
    /// Multiplier applied to every human-band weight. Band tightness knob.
    pub human_scale: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            kinematics: 1000.0,
            velocity: 2.0,
            acceleration: 1.0,
            time_optimality: 1.0,
            obstacle: 50.0,
            human_velocity: 2.0,
            human_acceleration: 1.0,
            human_nominal: 2.0,
            human_obstacle: 50.0,
            safety: 10.0,
            ttc: 4.0,
            directional: 2.0,
            separation: 10.0,
            human_scale: 1.0,
        }
    }
}

impl Weights {
    fn all(&self) -> [f64; 14] {
        [
            self.kinematics,
            self.velocity,
            self.acceleration,
            self.time_optimality,
            self.obstacle,
            self.human_velocity,
            self.human_acceleration,
            self.human_nominal,
            self.human_obstacle,
            self.safety,
            self.ttc,
            self.directional,
            self.separation,
            self.human_scale,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    /// Outer iterations for a cycle without a previous plan to warm start from.
    pub cold_start_outer_iterations: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Damping beyond which a failing solve is declared degraded.
    pub lambda_max: f64,
    pub step_tolerance: f64,
    pub fd_step: f64,
    /// Largest change of any single variable in one iteration (m, rad, s).
    pub max_step: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            inner_iterations: 5,
            outer_iterations: 4,
            cold_start_outer_iterations: 12,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 1.0 / 3.0,
            lambda_max: 1e10,
            step_tolerance: 1e-9,
            fd_step: 1e-6,
            max_step: 0.1,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_iterations == 0 || self.outer_iterations == 0 || self.cold_start_outer_iterations == 0 {
            return Err(Error::Config("iteration counts must be at least 1".into()));
        }
        if !(self.lambda_init > 0.0) || !(self.lambda_up > 1.0) || !(self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return Err(Error::Config("invalid damping schedule".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::Config("fd_step must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Config("max_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    ConstantVelocity,
    CorridorGoal,
    VelocityObstacle,
}

impl PredictorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorKind::ConstantVelocity => "constant_velocity",
            PredictorKind::CorridorGoal => "corridor_goal",
            PredictorKind::VelocityObstacle => "velocity_obstacle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant_velocity" => Some(PredictorKind::ConstantVelocity),
            "corridor_goal" => Some(PredictorKind::CorridorGoal),
            "velocity_obstacle" => Some(PredictorKind::VelocityObstacle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub weights: Weights,
    pub obstacle: ObstacleParams,
    pub safety: SafetyParams,
    pub separation: SafetyParams,
    pub ttc: TtcParams,
    pub directional: DirectionalParams,
    pub robot_limits: KinodynamicLimits,
    pub human_limits: KinodynamicLimits,
    pub local_area_radius: f64,
    pub dt_ref: f64,
    pub dt_hysteresis: f64,
    /// Length of human predictions.
    pub horizon: f64,
    pub lm: LmConfig,
    pub predictor: PredictorKind,
    pub behind_distance: f64,
    pub vo_horizon: f64,
    /// Obstacles farther than the clearance bound plus this margin get no edge.
    pub obstacle_margin: f64,
    /// Let the solver move human time differences inside the inner loop.
    pub human_time_free: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            obstacle: ObstacleParams::default(),
            safety: SafetyParams::default(),
            separation: SafetyParams::default(),
            ttc: TtcParams::default(),
            directional: DirectionalParams::default(),
            robot_limits: KinodynamicLimits::robot_default(),
            human_limits: KinodynamicLimits::human_default(),
            local_area_radius: 3.0,
            dt_ref: 0.3,
            dt_hysteresis: 0.1,
            horizon: 4.0,
            lm: LmConfig::default(),
            predictor: PredictorKind::ConstantVelocity,
            behind_distance: 2.0,
            vo_horizon: 3.0,
            obstacle_margin: 0.5,
            human_time_free: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.all().iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("weights must be finite and non-negative".into()));
        }
        if !(self.dt_ref > self.dt_hysteresis && self.dt_hysteresis > 0.0) {
            return Err(Error::Config("need dt_ref > dt_hysteresis > 0".into()));
        }
        if !(self.horizon > self.dt_ref) {
            return Err(Error::Config("horizon must exceed dt_ref".into()));
        }
        if !(self.local_area_radius > 0.0) {
            return Err(Error::Config("local_area_radius must be positive".into()));
        }
        if !(self.obstacle.d_o > 0.0 && self.obstacle.epsilon >= 0.0 && self.obstacle.s >= 0.0) {
            return Err(Error::Config("invalid obstacle parameters".into()));
        }
        for s in [&self.safety, &self.separation] {
            if !(s.d_s > 0.0 && s.epsilon >= 0.0) {
                return Err(Error::Config("invalid safety parameters".into()));
            }
        }
        if !(self.ttc.tau > 0.0 && self.ttc.alpha > 0.0) {
            return Err(Error::Config("invalid time-to-collision parameters".into()));
        }
        if !(self.directional.zeta.is_finite() && self.directional.epsilon.is_finite()) {
            return Err(Error::Config("invalid directional parameters".into()));
        }
        self.robot_limits.validate()?;
        self.human_limits.validate()?;
        self.lm.validate()
    }
}
