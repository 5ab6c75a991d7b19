//! Run artifacts: states and plans tables, the metrics document and an SVG
//! rendering of the executed and planned trajectories.
//!
//! All numbers are formatted with fixed precision and no locale, so the same
//! log always produces the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::band::AgentKind;
use crate::error::{Error, Result};
use crate::geometry::{Pose2D, StaticObstacle, Vec2};
use crate::sim::{AgentMeta, AgentMetrics, AgentState, Metrics, RunLog, RunStatus, Tick, World};

pub const STATES_HEADER: &str = "t,agent,kind,x,y,theta,v,omega";
pub const PLANS_HEADER: &str = "t,agent,idx,t_rel,x,y,theta";

fn kind_str(k: AgentKind) -> &'static str {
    match k {
        AgentKind::Robot => "robot",
        AgentKind::Human => "human",
    }
}

/// Fixed six-decimal form; never prints `-0.000000`.
fn f6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Agent indices in row order: sorted by id.
fn agent_order(agents: &[AgentMeta]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..agents.len()).collect();
    idx.sort_by(|a, b| agents[*a].id.cmp(&agents[*b].id));
    idx
}

pub fn emit_states_csv(log: &RunLog) -> String {
    let mut out = String::from(STATES_HEADER);
    out.push('\n');
    let order = agent_order(&log.agents);
    for tick in &log.ticks {
        for &k in &order {
            let (a, s) = (&log.agents[k], &tick.states[k]);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                f6(tick.t),
                a.id,
                kind_str(a.kind),
                f6(s.pose.x),
                f6(s.pose.y),
                f6(s.pose.theta),
                f6(s.v),
                f6(s.omega)
            );
        }
    }
    out
}

pub fn emit_plans_csv(log: &RunLog) -> String {
    let mut out = String::from(PLANS_HEADER);
    out.push('\n');
    for tick in &log.ticks {
        let Some(plan) = &tick.plan else { continue };
        let mut bands: Vec<_> = plan.bands.iter().collect();
        bands.sort_by(|a, b| a.0.cmp(&b.0));
        for (id, band) in bands {
            let mut t_rel = 0.0;
            for (i, p) in band.poses.iter().enumerate() {
                if i > 0 {
                    t_rel += band.deltas[i - 1];
                }
                let _ = writeln!(out, "{},{},{},{},{},{},{}", f6(tick.t), id, i, f6(t_rel), f6(p.x), f6(p.y), f6(p.theta));
            }
        }
    }
    out
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), f6)
}

fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        f6(x)
    }
}

fn agent_lines(out: &mut String, prefix: &str, m: &AgentMetrics) {
    let _ = writeln!(out, "{prefix}.time_to_goal = {}", opt(m.time_to_goal));
    let _ = writeln!(out, "{prefix}.path_length = {}", f6(m.path_length));
    let _ = writeln!(out, "{prefix}.mean_speed = {}", f6(m.mean_speed));
    let _ = writeln!(out, "{prefix}.max_speed = {}", f6(m.max_speed));
    let _ = writeln!(out, "{prefix}.max_lateral_deviation = {}", f6(m.max_lateral_deviation));
}

/// Flat `key = value` document.
pub fn emit_metrics(m: &Metrics, status: Option<RunStatus>) -> String {
    let mut out = String::new();
    if let Some(s) = status {
        let _ = writeln!(out, "status = {}", s.as_str());
    }
    let _ = writeln!(out, "success = {}", m.success);
    let _ = writeln!(out, "collision = {}", m.collision);
    let _ = writeln!(out, "duration = {}", f6(m.duration));
    let _ = writeln!(out, "min_edge_distance = {}", num(m.min_edge_distance));
    let _ = writeln!(out, "min_ttc = {}", num(m.min_ttc));
    agent_lines(&mut out, "robot", &m.robot);
    let mut humans: Vec<&AgentMetrics> = m.humans.iter().collect();
    humans.sort_by(|a, b| a.id.cmp(&b.id));
    for h in humans {
        agent_lines(&mut out, &format!("human.{}", h.id), h);
    }
    out
}

/// Rebuilds a log (without plans) from a states table. `agents` supplies
/// radii, starts and goals; rows for unknown agents are rejected.
pub fn read_states_csv(text: &str, agents: Vec<AgentMeta>, dt: f64) -> Result<RunLog> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(STATES_HEADER) {
        return Err(Error::Parse(format!("states table must start with `{STATES_HEADER}`")));
    }
    let index: BTreeMap<&str, usize> = agents.iter().enumerate().map(|(i, a)| (a.id.as_str(), i)).collect();
    let mut ticks: Vec<Tick> = Vec::new();
    let mut filled: Vec<Vec<bool>> = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse(format!("states line {}: {msg}", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let nums = [0usize, 3, 4, 5, 6, 7]
            .iter()
            .map(|&i| f[i].parse::<f64>().map_err(|_| bad("malformed number")))
            .collect::<Result<Vec<_>>>()?;
        let &k = index.get(f[1]).ok_or_else(|| bad("unknown agent"))?;
        let t = nums[0];
        if ticks.last().is_none_or(|last| (last.t - t).abs() > 1e-9) {
            if ticks.last().is_some_and(|last| t < last.t) {
                return Err(bad("rows out of time order"));
            }
            let blank = AgentState {
                pose: Pose2D::new(0.0, 0.0, 0.0),
                v: 0.0,
                omega: 0.0,
            };
            ticks.push(Tick {
                t,
                states: vec![blank; agents.len()],
                plan: None,
            });
            filled.push(vec![false; agents.len()]);
        }
        let last = ticks.len() - 1;
        ticks[last].states[k] = AgentState {
            pose: Pose2D::new(nums[1], nums[2], nums[3]),
            v: nums[4],
            omega: nums[5],
        };
        filled[last][k] = true;
    }
    if filled.iter().any(|row| row.iter().any(|f| !f)) {
        return Err(Error::Parse("states table misses an agent at some tick".into()));
    }
    Ok(RunLog {
        agents,
        dt,
        ticks,
        status: RunStatus::Timeout,
    })
}

const PX_PER_M: f64 = 50.0;
const MARGIN_PX: f64 = 20.0;

struct Canvas {
    min: Vec2,
    max: Vec2,
}

impl Canvas {
    fn x(&self, x: f64) -> String {
        format!("{:.2}", MARGIN_PX + (x - self.min.x) * PX_PER_M)
    }

    fn y(&self, y: f64) -> String {
        format!("{:.2}", MARGIN_PX + (self.max.y - y) * PX_PER_M)
    }

    fn points(&self, pts: impl Iterator<Item = Vec2>) -> String {
        pts.map(|p| format!("{},{}", self.x(p.x), self.y(p.y))).collect::<Vec<_>>().join(" ")
    }
}

/// Landmark color for whole second `k`; identical across agents.
pub fn landmark_color(k: usize) -> String {
    format!("hsl({},70%,45%)", (k * 47) % 360)
}

/// Ticks at which landmarks sit: the first tick at or after each whole
/// second of the run.
pub fn landmark_ticks(log: &RunLog) -> Vec<(usize, usize)> {
    let Some(last) = log.ticks.last() else {
        return Vec::new();
    };
    let seconds = (last.t + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(seconds + 1);
    let mut i = 0;
    for k in 0..=seconds {
        while i < log.ticks.len() && log.ticks[i].t < k as f64 - 1e-9 {
            i += 1;
        }
        out.push((k, i.min(log.ticks.len() - 1)));
    }
    out
}

pub fn emit_trajectory_svg(log: &RunLog, world: &World) -> String {
    let c = Canvas {
        min: world.min,
        max: world.max,
    };
    let w = (world.max.x - world.min.x) * PX_PER_M + 2.0 * MARGIN_PX;
    let h = (world.max.y - world.min.y) * PX_PER_M + 2.0 * MARGIN_PX;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r##"<g class="obstacles" fill="#555" stroke="#555" stroke-width="3">"##);
    for o in &world.obstacles {
        match o {
            StaticObstacle::Point(p) => {
                let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="3"/>"#, c.x(p.x), c.y(p.y));
            }
            StaticObstacle::Segment(a, b) => {
                let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, c.x(a.x), c.y(a.y), c.x(b.x), c.y(b.y));
            }
            StaticObstacle::Polygon(poly) => {
                let _ = writeln!(s, r#"<polygon points="{}"/>"#, c.points(poly.vertices().iter().copied()));
            }
        }
    }
    let _ = writeln!(s, "</g>");

    if let Some(plan) = log.ticks.iter().rev().find_map(|t| t.plan.as_ref()) {
        let _ = writeln!(s, r#"<g class="plans" fill="none" stroke-width="1.5" stroke-dasharray="4 3">"#);
        for (id, band) in &plan.bands {
            let color = if id == "robot" { "#e88" } else { "#88e" };
            let pts = c.points(band.poses.iter().map(|p| p.position()));
            let _ = writeln!(s, r#"<polyline data-agent="{id}" stroke="{color}" points="{pts}"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }

    let marks = landmark_ticks(log);
    for (k, a) in log.agents.iter().enumerate() {
        let color = if a.kind == AgentKind::Robot { "red" } else { "blue" };
        let _ = writeln!(s, r#"<g class="agent" data-agent="{}">"#, a.id);
        let pts = c.points(log.ticks.iter().map(|t| t.states[k].pose.position()));
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>"#);
        let r = a.radius * PX_PER_M * 0.5;
        for (sec, i) in &marks {
            let p = log.ticks[*i].states[k].pose;
            let _ = writeln!(
                s,
                r#"<circle class="landmark" data-t="{sec}" cx="{}" cy="{}" r="{r:.2}" fill="{}"/>"#,
                c.x(p.x),
                c.y(p.y),
                landmark_color(*sec)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::TimedBand;
    use crate::sim::PlanSnapshot;

    fn meta(id: &str, kind: AgentKind) -> AgentMeta {
        AgentMeta {
            id: id.into(),
            kind,
            radius: 0.3,
            start: Vec2::new(0.0, 0.0),
            goal: Vec2::new(1.0, 0.0),
        }
    }

    fn state(x: f64) -> AgentState {
        AgentState {
            pose: Pose2D::new(x, 0.0, 0.0),
            v: 0.5,
            omega: -0.0,
        }
    }

    fn log(ticks: usize) -> RunLog {
        RunLog {
            agents: vec![meta("robot", AgentKind::Robot), meta("h1", AgentKind::Human)],
            dt: 0.1,
            ticks: (0..ticks)
                .map(|i| Tick {
                    t: i as f64 * 0.1,
                    states: vec![state(0.05 * i as f64), state(3.0 - 0.1 * i as f64)],
                    plan: Some(PlanSnapshot {
                        bands: vec![
                            ("robot".into(), TimedBand::stationary(Pose2D::new(0.0, 0.0, 0.0), 0.3, 3)),
                            ("h1".into(), TimedBand::stationary(Pose2D::new(3.0, 0.0, 0.0), 0.3, 2)),
                        ],
                        command: (0.0, 0.0),
                        degraded: false,
                        cost: 0.0,
                    }),
                })
                .collect(),
            status: RunStatus::Timeout,
        }
    }

    fn world() -> World {
        World {
            min: Vec2::new(-1.0, -1.0),
            max: Vec2::new(4.0, 1.0),
            resolution: 0.05,
            obstacles: vec![StaticObstacle::Point(Vec2::new(2.0, 0.8))],
            inflation_radius: 0.6,
        }
    }

    #[test]
    fn empty_log_gives_headers_only() {
        let l = log(0);
        assert_eq!(emit_states_csv(&l), format!("{STATES_HEADER}\n"));
        assert_eq!(emit_plans_csv(&l), format!("{PLANS_HEADER}\n"));
        let svg = emit_trajectory_svg(&l, &world());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("class=\"landmark\"").count(), 0);
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn row_counts_and_order() {
        let l = log(2);
        let states = emit_states_csv(&l);
        let rows: Vec<&str> = states.lines().skip(1).collect();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].starts_with("0.000000,h1,human,3.000000,"));
        assert!(rows[1].starts_with("0.000000,robot,robot,0.000000,"));
        assert!(rows[1].ends_with(",0.500000,0.000000"));
        let plans = emit_plans_csv(&l);
        assert_eq!(plans.lines().count() - 1, 2 * (4 + 3));
        assert!(plans.lines().nth(1).unwrap().starts_with("0.000000,h1,0,0.000000,"));
        assert!(plans.contains("0.000000,robot,3,0.900000,"));
    }

    #[test]
    fn states_round_trip_through_reader() {
        let l = log(5);
        let text = emit_states_csv(&l);
        let back = read_states_csv(&text, l.agents.clone(), l.dt).unwrap();
        assert_eq!(back.ticks.len(), 5);
        assert_eq!(emit_states_csv(&back), text);
        assert!(read_states_csv("t,x\n", l.agents.clone(), 0.1).is_err());
        assert!(read_states_csv(&text.replace("h1,", "h9,"), l.agents, 0.1).is_err());
    }

    #[test]
    fn landmarks_per_second_share_colors() {
        // 2.5 s run: landmarks at 0, 1 and 2 s
        let l = log(26);
        let svg = emit_trajectory_svg(&l, &world());
        for agent in ["robot", "h1"] {
            let part = svg.split(&format!("class=\"agent\" data-agent=\"{agent}\"")).nth(1).unwrap();
            let part = &part[..part.find("</g>").unwrap()];
            assert_eq!(part.matches("class=\"landmark\"").count(), 3, "{agent}");
            for k in 0..3 {
                assert!(part.contains(&format!("data-t=\"{k}\"")));
                assert!(part.contains(&format!("fill=\"{}\"", landmark_color(k))));
            }
        }
        assert_eq!(landmark_ticks(&l), vec![(0, 0), (1, 10), (2, 20)]);
    }

    #[test]
    fn metrics_document_is_flat_and_stable() {
        let l = log(3);
        let m = crate::sim::compute_metrics(&l);
        let doc = emit_metrics(&m, Some(RunStatus::Timeout));
        assert!(doc.starts_with("status = timeout\nsuccess = false\n"));
        assert!(doc.lines().all(|line| line.split(" = ").count() == 2));
        assert!(doc.contains("human.h1.time_to_goal = none"));
        assert_eq!(doc, emit_metrics(&m, Some(RunStatus::Timeout)));
        assert_eq!(f6(-0.0000001), "0.000000");
        assert_eq!(num(f64::INFINITY), "inf");
    }
}
