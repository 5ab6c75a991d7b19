//! Scenario files: a TOML document with `[world]`, `[robot]`,
//! `[human.<id>]`, `[planner]` and `[sim]` sections.
//!
//! Unknown keys are rejected and every validation error names its section
//! and key. [`emit_scenario`] writes a document that parses back to the same
//! [`Scenario`].

use std::collections::BTreeSet;
use std::fmt::Write as _;

use toml::{Table, Value};

use crate::config::{PlannerConfig, PredictorKind};
use crate::constraints::KinodynamicLimits;
use crate::error::{Error, Result};
use crate::geometry::{PolygonFootprint, Pose2D, StaticObstacle, Vec2};
use crate::gridplan::DEFAULT_RESOLUTION;
use crate::sim::{HumanPolicy, HumanSpec, RobotSpec, Scenario, Side, SimParams, World};

const DEFAULT_RADIUS: f64 = 0.3;
const DEFAULT_INFLATION: f64 = 0.6;
const DEFAULT_HUMAN_SPEED: f64 = 1.3;
const DEFAULT_REJECT_OFFSET: f64 = 0.6;

struct Section<'a> {
    name: String,
    table: &'a Table,
    used: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(name: impl Into<String>, table: &'a Table) -> Self {
        Self {
            name: name.into(),
            table,
            used: BTreeSet::new(),
        }
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::scenario(&self.name, key, msg)
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a Value> {
        let v = self.table.get(key);
        if v.is_some() {
            self.used.insert(key);
        }
        v
    }

    fn number_of(&self, key: &str, v: &Value) -> Result<f64> {
        let x = match v {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            _ => return Err(self.err(key, "expected a number")),
        };
        if !x.is_finite() {
            return Err(self.err(key, "must be finite"));
        }
        Ok(x)
    }

    fn opt_f64(&mut self, key: &'a str) -> Result<Option<f64>> {
        match self.raw(key) {
            Some(v) => self.number_of(key, v).map(Some),
            None => Ok(None),
        }
    }

    fn f64_or(&mut self, key: &'a str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    fn usize_or(&mut self, key: &'a str, default: usize) -> Result<usize> {
        match self.raw(key) {
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(_) => Err(self.err(key, "expected a non-negative integer")),
            None => Ok(default),
        }
    }

    fn bool_or(&mut self, key: &'a str, default: bool) -> Result<bool> {
        match self.raw(key) {
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(self.err(key, "expected true or false")),
            None => Ok(default),
        }
    }

    fn opt_str(&mut self, key: &'a str) -> Result<Option<&'a str>> {
        match self.raw(key) {
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(self.err(key, "expected a string")),
            None => Ok(None),
        }
    }

    fn numbers(&self, key: &str, v: &Value, len: Option<usize>) -> Result<Vec<f64>> {
        let Value::Array(items) = v else {
            return Err(self.err(key, "expected an array of numbers"));
        };
        if let Some(n) = len {
            if items.len() != n {
                return Err(self.err(key, format!("expected {n} numbers")));
            }
        }
        items.iter().map(|x| self.number_of(key, x)).collect()
    }

    fn point_of(&self, key: &str, v: &Value) -> Result<Vec2> {
        let xs = self.numbers(key, v, Some(2))?;
        Ok(Vec2::new(xs[0], xs[1]))
    }

    fn req(&mut self, key: &'a str) -> Result<&'a Value> {
        self.raw(key).ok_or_else(|| self.err(key, "required key is missing"))
    }

    fn point(&mut self, key: &'a str) -> Result<Vec2> {
        let v = self.req(key)?;
        self.point_of(key, v)
    }

    fn pose(&mut self, key: &'a str) -> Result<Pose2D> {
        let v = self.req(key)?;
        let xs = self.numbers(key, v, None)?;
        match xs.len() {
            2 => Ok(Pose2D::new(xs[0], xs[1], 0.0)),
            3 => Ok(Pose2D::new(xs[0], xs[1], xs[2])),
            _ => Err(self.err(key, "expected [x, y] or [x, y, theta]")),
        }
    }

    fn list(&mut self, key: &'a str) -> Result<&'a [Value]> {
        match self.raw(key) {
            Some(Value::Array(a)) => Ok(a.as_slice()),
            Some(_) => Err(self.err(key, "expected an array")),
            None => Ok(&[]),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.table.keys().find(|k| !self.used.contains(k.as_str())) {
            return Err(self.err(k, "unknown key"));
        }
        Ok(())
    }
}

fn section_table<'a>(root: &'a Table, name: &str, required: bool) -> Result<Option<&'a Table>> {
    match root.get(name) {
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(Error::scenario(name, "", "expected a section")),
        None if required => Err(Error::scenario(name, "", "required section is missing")),
        None => Ok(None),
    }
}

fn parse_world(root: &Table) -> Result<World> {
    let t = section_table(root, "world", true)?.unwrap();
    let mut s = Section::new("world", t);
    let min = s.point("min")?;
    let max = s.point("max")?;
    let resolution = s.f64_or("resolution", DEFAULT_RESOLUTION)?;
    let inflation_radius = s.f64_or("inflation", DEFAULT_INFLATION)?;
    let mut obstacles = Vec::new();
    for v in s.list("points")? {
        obstacles.push(StaticObstacle::Point(s.point_of("points", v)?));
    }
    for v in s.list("segments")? {
        let xs = s.numbers("segments", v, Some(4))?;
        obstacles.push(StaticObstacle::Segment(Vec2::new(xs[0], xs[1]), Vec2::new(xs[2], xs[3])));
    }
    for v in s.list("polygons")? {
        let Value::Array(vs) = v else {
            return Err(s.err("polygons", "expected an array of [x, y] vertices"));
        };
        let verts = vs.iter().map(|p| s.point_of("polygons", p)).collect::<Result<Vec<_>>>()?;
        let poly = PolygonFootprint::new(verts).map_err(|e| s.err("polygons", e.to_string()))?;
        obstacles.push(StaticObstacle::Polygon(poly));
    }
    s.finish()?;
    Ok(World {
        min,
        max,
        resolution,
        obstacles,
        inflation_radius,
    })
}

fn parse_robot(root: &Table) -> Result<RobotSpec> {
    let t = section_table(root, "robot", true)?.unwrap();
    let mut s = Section::new("robot", t);
    let d = KinodynamicLimits::robot_default();
    let start = s.pose("start")?;
    let goal = s.point("goal")?;
    let radius = s.f64_or("radius", DEFAULT_RADIUS)?;
    let v_max = s.f64_or("v_max", d.v_max)?;
    let limits = KinodynamicLimits {
        v_max,
        v_max_backwards: s.f64_or("v_max_backwards", d.v_max_backwards.min(v_max))?,
        omega_max: s.f64_or("omega_max", d.omega_max)?,
        a_max: s.f64_or("a_max", d.a_max)?,
        a_rot_max: s.f64_or("a_rot_max", d.a_rot_max)?,
        nominal_speed: s.f64_or("nominal_speed", v_max)?,
    };
    s.finish()?;
    Ok(RobotSpec {
        start,
        goal,
        radius,
        limits,
    })
}

fn parse_humans(root: &Table) -> Result<Vec<HumanSpec>> {
    let Some(t) = section_table(root, "human", false)? else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (id, v) in t {
        let name = format!("human.{id}");
        let Value::Table(ht) = v else {
            return Err(Error::scenario("human", id, "expected a [human.<id>] section"));
        };
        let mut s = Section::new(name, ht);
        let start = s.pose("start")?;
        let goal = s.point("goal")?;
        let path = match s.raw("path") {
            Some(Value::Array(a)) => Some(a.iter().map(|p| s.point_of("path", p)).collect::<Result<Vec<_>>>()?),
            Some(_) => return Err(s.err("path", "expected an array of [x, y] points")),
            None => None,
        };
        let radius = s.f64_or("radius", DEFAULT_RADIUS)?;
        let speed = s.f64_or("speed", DEFAULT_HUMAN_SPEED)?;
        let policy_name = s.opt_str("policy")?.unwrap_or("scripted");
        let side = s.opt_str("side")?;
        let offset = s.opt_f64("offset")?;
        let policy = match policy_name {
            "scripted" => HumanPolicy::ScriptedPath,
            "follow" => HumanPolicy::CooperativeFollow,
            "reject" => {
                let side = match side {
                    Some("left") => Side::Left,
                    Some("right") => Side::Right,
                    Some(_) => return Err(s.err("side", "expected \"left\" or \"right\"")),
                    None => return Err(s.err("side", "required for policy \"reject\"")),
                };
                HumanPolicy::RejectProposal {
                    side,
                    offset: offset.unwrap_or(DEFAULT_REJECT_OFFSET),
                }
            }
            _ => return Err(s.err("policy", "expected \"scripted\", \"follow\" or \"reject\"")),
        };
        if !matches!(policy, HumanPolicy::RejectProposal { .. }) {
            if side.is_some() {
                return Err(s.err("side", "only valid with policy \"reject\""));
            }
            if offset.is_some() {
                return Err(s.err("offset", "only valid with policy \"reject\""));
            }
        }
        s.finish()?;
        out.push(HumanSpec {
            id: id.clone(),
            start,
            goal,
            path,
            radius,
            speed,
            policy,
        });
    }
    Ok(out)
}

/// Planner keys as `(name, accessor)`: one table drives parsing and emission.
fn planner_fields() -> Vec<(&'static str, fn(&mut PlannerConfig) -> &mut f64)> {
    vec![
        ("gamma_kinematics", |c| &mut c.weights.kinematics),
        ("gamma_velocity", |c| &mut c.weights.velocity),
        ("gamma_acceleration", |c| &mut c.weights.acceleration),
        ("gamma_time_optimality", |c| &mut c.weights.time_optimality),
        ("gamma_obstacle", |c| &mut c.weights.obstacle),
        ("gamma_human_velocity", |c| &mut c.weights.human_velocity),
        ("gamma_human_acceleration", |c| &mut c.weights.human_acceleration),
        ("gamma_human_nominal", |c| &mut c.weights.human_nominal),
        ("gamma_human_obstacle", |c| &mut c.weights.human_obstacle),
        ("gamma_safety", |c| &mut c.weights.safety),
        ("gamma_ttc", |c| &mut c.weights.ttc),
        ("gamma_directional", |c| &mut c.weights.directional),
        ("gamma_separation", |c| &mut c.weights.separation),
        ("human_weight_scale", |c| &mut c.weights.human_scale),
        ("d_o", |c| &mut c.obstacle.d_o),
        ("obstacle_epsilon", |c| &mut c.obstacle.epsilon),
        ("obstacle_s", |c| &mut c.obstacle.s),
        ("d_s", |c| &mut c.safety.d_s),
        ("safety_epsilon", |c| &mut c.safety.epsilon),
        ("d_sep", |c| &mut c.separation.d_s),
        ("separation_epsilon", |c| &mut c.separation.epsilon),
        ("tau", |c| &mut c.ttc.tau),
        ("ttc_epsilon", |c| &mut c.ttc.epsilon),
        ("alpha", |c| &mut c.ttc.alpha),
        ("zeta", |c| &mut c.directional.zeta),
        ("directional_epsilon", |c| &mut c.directional.epsilon),
        ("human_v_max", |c| &mut c.human_limits.v_max),
        ("human_omega_max", |c| &mut c.human_limits.omega_max),
        ("human_a_max", |c| &mut c.human_limits.a_max),
        ("human_a_rot_max", |c| &mut c.human_limits.a_rot_max),
        ("human_nominal_speed", |c| &mut c.human_limits.nominal_speed),
        ("local_area_radius", |c| &mut c.local_area_radius),
        ("dt_ref", |c| &mut c.dt_ref),
        ("dt_hysteresis", |c| &mut c.dt_hysteresis),
        ("horizon", |c| &mut c.horizon),
        ("lambda_init", |c| &mut c.lm.lambda_init),
        ("lambda_up", |c| &mut c.lm.lambda_up),
        ("lambda_down", |c| &mut c.lm.lambda_down),
        ("lambda_max", |c| &mut c.lm.lambda_max),
        ("step_tolerance", |c| &mut c.lm.step_tolerance),
        ("fd_step", |c| &mut c.lm.fd_step),
        ("max_step", |c| &mut c.lm.max_step),
        ("behind_distance", |c| &mut c.behind_distance),
        ("vo_horizon", |c| &mut c.vo_horizon),
        ("obstacle_margin", |c| &mut c.obstacle_margin),
    ]
}

fn parse_planner(root: &Table) -> Result<PlannerConfig> {
    let mut c = PlannerConfig::default();
    let Some(t) = section_table(root, "planner", false)? else {
        return Ok(c);
    };
    let mut s = Section::new("planner", t);
    for (key, field) in planner_fields() {
        if let Some(x) = s.opt_f64(key)? {
            *field(&mut c) = x;
        }
    }
    c.lm.inner_iterations = s.usize_or("inner_iterations", c.lm.inner_iterations)?;
    c.lm.outer_iterations = s.usize_or("outer_iterations", c.lm.outer_iterations)?;
    c.lm.cold_start_outer_iterations = s.usize_or("cold_start_outer_iterations", c.lm.cold_start_outer_iterations)?;
    c.human_time_free = s.bool_or("human_time_free", c.human_time_free)?;
    if let Some(p) = s.opt_str("predictor")? {
        c.predictor = PredictorKind::parse(p).ok_or_else(|| {
            s.err("predictor", "expected \"constant_velocity\", \"corridor_goal\" or \"velocity_obstacle\"")
        })?;
    }
    s.finish()?;
    Ok(c)
}

fn parse_sim(root: &Table) -> Result<(String, SimParams)> {
    let mut p = SimParams::default();
    let Some(t) = section_table(root, "sim", false)? else {
        return Ok(("scenario".into(), p));
    };
    let mut s = Section::new("sim", t);
    let name = s.opt_str("name")?.unwrap_or("scenario").to_string();
    p.control_hz = s.f64_or("control_hz", p.control_hz)?;
    p.max_duration = s.f64_or("max_duration", p.max_duration)?;
    p.seed = match s.raw("seed") {
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => return Err(s.err("seed", "expected a non-negative integer")),
        None => 0,
    };
    s.finish()?;
    Ok((name, p))
}

/// Turns a TOML syntax error into one naming the section and key of the
/// offending line.
fn syntax_error(text: &str, e: &toml::de::Error) -> Error {
    let msg = e.message().trim().to_string();
    let Some(span) = e.span() else {
        return Error::Parse(msg);
    };
    let upto = &text[..span.start.min(text.len())];
    let line_start = upto.rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[line_start..].find('\n').map_or(text.len(), |i| line_start + i);
    let line = text[line_start..line_end].trim();
    let section = upto
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    if line.starts_with('[') {
        let name = line.trim_matches(|c| c == '[' || c == ']').trim();
        return Error::scenario(name, "", msg);
    }
    match (section, line.split_once('=')) {
        (Some(sec), Some((key, _))) => Error::scenario(&sec, key.trim(), msg),
        (None, Some((key, _))) => Error::scenario("", key.trim(), msg),
        _ => Error::Parse(msg),
    }
}

fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| syntax_error(text, &e))
}

/// Applies `section.key=value` overrides; the key is split at the last dot.
pub fn apply_overrides(root: &mut Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (path, value) = o.split_once('=').ok_or_else(|| Error::Parse(format!("override `{o}` lacks `=`")))?;
        let (section, key) = path
            .trim()
            .rsplit_once('.')
            .ok_or_else(|| Error::Parse(format!("override `{path}` must be section.key")))?;
        let parsed: Table = format!("v = {}", value.trim())
            .parse()
            .or_else(|_| format!("v = \"{}\"", value.trim()).parse())
            .map_err(|_| Error::scenario(section, key, "unparseable override value"))?;
        let mut t = &mut *root;
        for part in section.split('.') {
            let entry = t.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
            t = entry.as_table_mut().ok_or_else(|| Error::scenario(section, key, "not a section"))?;
        }
        t.insert(key.to_string(), parsed["v"].clone());
    }
    Ok(())
}

pub fn parse_scenario_with(text: &str, overrides: &[String]) -> Result<Scenario> {
    let mut root = parse_table(text)?;
    apply_overrides(&mut root, overrides)?;
    for k in root.keys() {
        if !matches!(k.as_str(), "world" | "robot" | "human" | "planner" | "sim") {
            return Err(Error::scenario(k, "", "unknown section"));
        }
    }
    let (name, sim) = parse_sim(&root)?;
    let scenario = Scenario {
        name,
        world: parse_world(&root)?,
        robot: parse_robot(&root)?,
        humans: parse_humans(&root)?,
        planner: parse_planner(&root)?,
        sim,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_with(text, &[])
}

fn num(x: f64) -> String {
    // shortest round-trip form; integral values keep a decimal point
    let s = format!("{x:?}");
    if s.contains('e') && !s.contains('.') {
        s.replacen('e', ".0e", 1)
    } else {
        s
    }
}

fn pt(p: &Vec2) -> String {
    format!("[{}, {}]", num(p.x), num(p.y))
}

fn quote(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

/// Writes a complete scenario document with every key spelled out.
pub fn emit_scenario(s: &Scenario) -> String {
    let mut o = String::new();
    let w = &s.world;
    let _ = writeln!(o, "[world]");
    let _ = writeln!(o, "min = {}", pt(&w.min));
    let _ = writeln!(o, "max = {}", pt(&w.max));
    let _ = writeln!(o, "resolution = {}", num(w.resolution));
    let _ = writeln!(o, "inflation = {}", num(w.inflation_radius));
    let mut points = Vec::new();
    let mut segments = Vec::new();
    let mut polygons = Vec::new();
    for ob in &w.obstacles {
        match ob {
            StaticObstacle::Point(p) => points.push(pt(p)),
            StaticObstacle::Segment(a, b) => {
                segments.push(format!("[{}, {}, {}, {}]", num(a.x), num(a.y), num(b.x), num(b.y)))
            }
            StaticObstacle::Polygon(poly) => {
                let vs: Vec<String> = poly.vertices().iter().map(pt).collect();
                polygons.push(format!("[{}]", vs.join(", ")));
            }
        }
    }
    for (key, items) in [("points", &points), ("segments", &segments), ("polygons", &polygons)] {
        if !items.is_empty() {
            let _ = writeln!(o, "{key} = [");
            for it in items.iter() {
                let _ = writeln!(o, "  {it},");
            }
            let _ = writeln!(o, "]");
        }
    }

    let r = &s.robot;
    let _ = writeln!(o, "\n[robot]");
    let _ = writeln!(o, "start = [{}, {}, {}]", num(r.start.x), num(r.start.y), num(r.start.theta));
    let _ = writeln!(o, "goal = {}", pt(&r.goal));
    let _ = writeln!(o, "radius = {}", num(r.radius));
    let _ = writeln!(o, "v_max = {}", num(r.limits.v_max));
    let _ = writeln!(o, "v_max_backwards = {}", num(r.limits.v_max_backwards));
    let _ = writeln!(o, "omega_max = {}", num(r.limits.omega_max));
    let _ = writeln!(o, "a_max = {}", num(r.limits.a_max));
    let _ = writeln!(o, "a_rot_max = {}", num(r.limits.a_rot_max));
    let _ = writeln!(o, "nominal_speed = {}", num(r.limits.nominal_speed));

    let mut humans: Vec<&HumanSpec> = s.humans.iter().collect();
    humans.sort_by(|a, b| a.id.cmp(&b.id));
    for h in humans {
        let _ = writeln!(o, "\n[human.{}]", quote(&h.id));
        let _ = writeln!(o, "start = [{}, {}, {}]", num(h.start.x), num(h.start.y), num(h.start.theta));
        let _ = writeln!(o, "goal = {}", pt(&h.goal));
        if let Some(p) = &h.path {
            let pts: Vec<String> = p.iter().map(pt).collect();
            let _ = writeln!(o, "path = [{}]", pts.join(", "));
        }
        let _ = writeln!(o, "radius = {}", num(h.radius));
        let _ = writeln!(o, "speed = {}", num(h.speed));
        match h.policy {
            HumanPolicy::ScriptedPath => {
                let _ = writeln!(o, "policy = \"scripted\"");
            }
            HumanPolicy::CooperativeFollow => {
                let _ = writeln!(o, "policy = \"follow\"");
            }
            HumanPolicy::RejectProposal { side, offset } => {
                let _ = writeln!(o, "policy = \"reject\"");
                let _ = writeln!(o, "side = \"{}\"", side.as_str());
                let _ = writeln!(o, "offset = {}", num(offset));
            }
        }
    }

    let mut c = s.planner.clone();
    let _ = writeln!(o, "\n[planner]");
    for (key, field) in planner_fields() {
        let _ = writeln!(o, "{key} = {}", num(*field(&mut c)));
    }
    let _ = writeln!(o, "inner_iterations = {}", c.lm.inner_iterations);
    let _ = writeln!(o, "outer_iterations = {}", c.lm.outer_iterations);
    let _ = writeln!(o, "cold_start_outer_iterations = {}", c.lm.cold_start_outer_iterations);
    let _ = writeln!(o, "human_time_free = {}", c.human_time_free);
    let _ = writeln!(o, "predictor = \"{}\"", c.predictor.as_str());

    let _ = writeln!(o, "\n[sim]");
    let _ = writeln!(o, "name = {}", quote(&s.name));
    let _ = writeln!(o, "control_hz = {}", num(s.sim.control_hz));
    let _ = writeln!(o, "max_duration = {}", num(s.sim.max_duration));
    let _ = writeln!(o, "seed = {}", s.sim.seed);
    o
}

/// Scenarios shipped with the crate, as `(name, text)`.
pub const BUNDLED: [(&str, &str); 7] = [
    ("corridor_share", include_str!("../scenarios/corridor_share.scn")),
    ("corridor_narrow", include_str!("../scenarios/corridor_narrow.scn")),
    ("open_two_humans", include_str!("../scenarios/open_two_humans.scn")),
    ("door_crossing", include_str!("../scenarios/door_crossing.scn")),
    ("fig6_effort_a", include_str!("../scenarios/fig6_effort_a.scn")),
    ("fig6_effort_b", include_str!("../scenarios/fig6_effort_b.scn")),
    ("fig6_effort_c", include_str!("../scenarios/fig6_effort_c.scn")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[world]\nmin = [-1, -1]\nmax = [6, 1]\n\n[robot]\nstart = [0, 0, 0]\ngoal = [5, 0]\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.planner, PlannerConfig::default());
        assert_eq!(s.sim, SimParams::default());
        assert_eq!(s.robot.radius, DEFAULT_RADIUS);
        assert_eq!(s.robot.limits, KinodynamicLimits::robot_default());
        assert_eq!(s.world.resolution, DEFAULT_RESOLUTION);
        assert!(s.humans.is_empty());
        assert_eq!(s.robot.goal, Vec2::new(5.0, 0.0));
    }

    #[test]
    fn reject_policy_mapping() {
        let text = format!("{MINIMAL}\n[human.h1]\nstart = [4, 0, 3.14]\ngoal = [0, 0]\npolicy = \"reject\"\nside = \"left\"\n");
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.humans[0].policy, HumanPolicy::RejectProposal { side: Side::Left, offset: DEFAULT_REJECT_OFFSET });
        let bad = text.replace("side = \"left\"\n", "");
        assert_eq!(
            parse_scenario(&bad).unwrap_err(),
            Error::scenario("human.h1", "side", "required for policy \"reject\"")
        );
    }

    #[test]
    fn duplicate_section_is_named() {
        let text = format!("{MINIMAL}\n[robot]\nradius = 0.2\n");
        match parse_scenario(&text).unwrap_err() {
            Error::Scenario { section, .. } => assert_eq!(section, "robot"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn errors_name_section_and_key() {
        let unknown = MINIMAL.replace("goal = [5, 0]", "goal = [5, 0]\nwheels = 4");
        assert_eq!(parse_scenario(&unknown).unwrap_err(), Error::scenario("robot", "wheels", "unknown key"));
        let missing = MINIMAL.replace("goal = [5, 0]\n", "");
        assert_eq!(parse_scenario(&missing).unwrap_err(), Error::scenario("robot", "goal", "required key is missing"));
        let malformed = MINIMAL.replace("max = [6, 1]", "max = [6, 1]\nresolution = 0.0.5");
        match parse_scenario(&malformed).unwrap_err() {
            Error::Scenario { section, key, .. } => assert_eq!((section.as_str(), key.as_str()), ("world", "resolution")),
            e => panic!("unexpected {e}"),
        }
        let wrong_type = MINIMAL.replace("max = [6, 1]", "max = [6, 1]\nresolution = \"fine\"");
        assert_eq!(parse_scenario(&wrong_type).unwrap_err(), Error::scenario("world", "resolution", "expected a number"));
        let blocked = MINIMAL.replace("max = [6, 1]", "max = [6, 1]\npoints = [[5, 0.1]]");
        assert!(matches!(parse_scenario(&blocked).unwrap_err(), Error::Scenario { key, .. } if key == "goal"));
        let start_blocked = MINIMAL.replace("max = [6, 1]", "max = [6, 1]\nsegments = [[-0.5, 0.1, 0.5, 0.1]]");
        assert!(matches!(parse_scenario(&start_blocked).unwrap_err(), Error::Scenario { key, .. } if key == "start"));
        let section = format!("{MINIMAL}\n[weather]\nrain = true\n");
        assert_eq!(parse_scenario(&section).unwrap_err(), Error::scenario("weather", "", "unknown section"));
    }

    #[test]
    fn overrides_split_at_last_dot() {
        let text = format!("{MINIMAL}\n[human.h1]\nstart = [4, 0, 3.14]\ngoal = [0, 0]\n");
        let s = parse_scenario_with(
            &text,
            &["planner.gamma_ttc=0".into(), "human.h1.speed=0.9".into(), "planner.predictor=velocity_obstacle".into()],
        )
        .unwrap();
        assert_eq!(s.planner.weights.ttc, 0.0);
        assert_eq!(s.humans[0].speed, 0.9);
        assert_eq!(s.planner.predictor, PredictorKind::VelocityObstacle);
        assert!(parse_scenario_with(&text, &["planner.bogus=1".into()]).is_err());
        assert!(parse_scenario_with(&text, &["nodot=1".into()]).is_err());
    }

    #[test]
    fn emit_parse_round_trip() {
        for (name, text) in BUNDLED {
            let s = parse_scenario(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            let emitted = emit_scenario(&s);
            let again = parse_scenario(&emitted).unwrap_or_else(|e| panic!("{name}: {e}\n{emitted}"));
            assert_eq!(again, s, "{name}");
            assert_eq!(emit_scenario(&again), emitted, "{name}");
        }
    }

    #[test]
    fn odd_numbers_round_trip() {
        let mut s = parse_scenario(MINIMAL).unwrap();
        s.planner.lm.lambda_max = 1e22;
        s.planner.lm.step_tolerance = 1e-9;
        s.planner.weights.ttc = 0.1 + 0.2;
        s.robot.start.theta = -std::f64::consts::PI + 1e-15;
        let again = parse_scenario(&emit_scenario(&s)).unwrap();
        assert_eq!(again, s);
    }
}
