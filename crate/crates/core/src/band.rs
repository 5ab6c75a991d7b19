//! Timed elastic band: poses plus strictly positive time differences.

use crate::error::{Error, Result};
use crate::geometry::{closest_point_on_segment, Pose2D, Vec2};

/// Smallest time difference a band may carry.
pub const MIN_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TimedBand {
    pub poses: Vec<Pose2D>,
    pub deltas: Vec<f64>,
    pub start_fixed: bool,
    pub goal_fixed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentKind {
    Robot,
    Human,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentBand {
    pub agent_id: String,
    pub kind: AgentKind,
    pub band: TimedBand,
    pub footprint_radius: f64,
    /// Preferred walking speed; `None` uses the configured limit.
    pub nominal_speed: Option<f64>,
}

impl TimedBand {
    pub fn new(poses: Vec<Pose2D>, deltas: Vec<f64>) -> Result<Self> {
        if poses.len() < 2 || deltas.len() + 1 != poses.len() {
            return Err(Error::Config(format!(
                "band needs n+1 poses for n deltas, got {} poses and {} deltas",
                poses.len(),
                deltas.len()
            )));
        }
        if deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::Config("band deltas must be finite and positive".into()));
        }
        Ok(Self {
            poses,
            deltas,
            start_fixed: true,
            goal_fixed: true,
        })
    }

    /// A band holding one position for `count` intervals of `dt`.
    pub fn stationary(pose: Pose2D, dt: f64, count: usize) -> Self {
        let count = count.max(1);
        Self {
            poses: vec![pose; count + 1],
            deltas: vec![dt.max(MIN_DT); count],
            start_fixed: true,
            goal_fixed: true,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.deltas.iter().sum()
    }

    /// Cumulative time of every pose, starting at 0.
    pub fn timestamps(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.poses.len());
        let mut t = 0.0;
        out.push(t);
        for d in &self.deltas {
            t += d;
            out.push(t);
        }
        out
    }

    pub fn first(&self) -> &Pose2D {
        &self.poses[0]
    }

    pub fn last(&self) -> &Pose2D {
        &self.poses[self.poses.len() - 1]
    }

    /// Pose at elapsed time `t`, clamped to the band's time span.
    pub fn pose_at_time(&self, t: f64) -> Pose2D {
        if t <= 0.0 {
            return self.poses[0];
        }
        let mut acc = 0.0;
        for (i, d) in self.deltas.iter().enumerate() {
            if t < acc + d {
                let s = (t - acc) / d;
                return self.poses[i].lerp(&self.poses[i + 1], s);
            }
            acc += d;
        }
        *self.last()
    }

    /// Finite-difference velocity of segment `i`.
    pub fn segment_velocity(&self, i: usize) -> Vec2 {
        (self.poses[i + 1].position() - self.poses[i].position()) / self.deltas[i]
    }

    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].position() - w[0].position()).norm())
            .sum()
    }
}

/// Builds a band along `path`, dropping zero-length segments.
///
/// Every pose except the first faces along its outgoing segment; the last
/// pose keeps the direction of the final segment.
pub fn init_from_path(path: &[Vec2], start_heading: f64, nominal_speed: f64) -> Result<TimedBand> {
    if !(nominal_speed > 0.0) {
        return Err(Error::Config("nominal speed must be positive".into()));
    }
    let mut pts: Vec<Vec2> = Vec::with_capacity(path.len());
    for p in path {
        if pts.last().map_or(true, |q: &Vec2| (p - q).norm() > 1e-9) {
            pts.push(*p);
        }
    }
    if pts.len() < 2 {
        return Err(Error::PathTooShort);
    }
    let n = pts.len();
    let seg_heading = |i: usize| {
        let d = pts[i + 1] - pts[i];
        d.y.atan2(d.x)
    };
    let mut poses = Vec::with_capacity(n);
    poses.push(Pose2D::new(pts[0].x, pts[0].y, start_heading));
    for i in 1..n {
        let theta = if i + 1 < n { seg_heading(i) } else { seg_heading(i - 1) };
        poses.push(Pose2D::new(pts[i].x, pts[i].y, theta));
    }
    let deltas = (0..n - 1)
        .map(|i| ((pts[i + 1] - pts[i]).norm() / nominal_speed).max(MIN_DT))
        .collect();
    TimedBand::new(poses, deltas)
}

/// Resamples a polyline at equal arc-length `spacing`, always keeping both ends.
pub fn resample_polyline(path: &[Vec2], spacing: f64) -> Vec<Vec2> {
    if path.len() < 2 || !(spacing > 0.0) {
        return path.to_vec();
    }
    let total: f64 = path.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if total <= 1e-9 {
        return vec![path[0], *path.last().unwrap()];
    }
    let count = (total / spacing).ceil().max(1.0) as usize;
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count + 1);
    out.push(path[0]);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 1..count {
        let s = step * k as f64;
        loop {
            let len = (path[seg + 1] - path[seg]).norm();
            if s <= seg_start + len || seg + 2 >= path.len() {
                let u = if len > 0.0 { ((s - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
                out.push(path[seg] + (path[seg + 1] - path[seg]) * u);
                break;
            }
            seg_start += len;
            seg += 1;
        }
    }
    out.push(*path.last().unwrap());
    out
}

/// Truncates a polyline at arc length `max_length`.
pub fn clip_polyline(path: &[Vec2], max_length: f64) -> Vec<Vec2> {
    let mut out = Vec::new();
    let Some(first) = path.first() else {
        return out;
    };
    out.push(*first);
    let mut acc = 0.0;
    for w in path.windows(2) {
        let len = (w[1] - w[0]).norm();
        if acc + len >= max_length {
            let u = if len > 0.0 { (max_length - acc) / len } else { 0.0 };
            out.push(w[0] + (w[1] - w[0]) * u.clamp(0.0, 1.0));
            return out;
        }
        acc += len;
        out.push(w[1]);
    }
    out
}

/// One structural maintenance pass.
///
/// Deltas above `dt_ref + dt_hysteresis` are halved by inserting the
/// interpolated midpoint pose. A run of deltas below `dt_ref - dt_hysteresis`
/// is merged forward into its successors until the accumulated interval
/// reaches the lower bound; a short final delta merges into its predecessor.
/// Only interior poses are ever removed.
pub fn autoresize(band: &TimedBand, dt_ref: f64, dt_hysteresis: f64) -> TimedBand {
    let upper = dt_ref + dt_hysteresis;
    let lower = dt_ref - dt_hysteresis;
    let n = band.deltas.len();
    let mut poses = Vec::with_capacity(band.poses.len() + 4);
    let mut deltas = Vec::with_capacity(n + 4);
    poses.push(band.poses[0]);
    let mut i = 0;
    while i < n {
        let d = band.deltas[i];
        if d > upper {
            let mid = band.poses[i].lerp(&band.poses[i + 1], 0.5);
            deltas.push(d * 0.5);
            poses.push(mid);
            deltas.push(d * 0.5);
            poses.push(band.poses[i + 1]);
            i += 1;
        } else if d < lower && i + 1 < n {
            let mut sum = d;
            let mut j = i + 1;
            while sum < lower && j < n {
                sum += band.deltas[j];
                j += 1;
            }
            if sum < lower && !deltas.is_empty() {
                sum += deltas.pop().unwrap();
                poses.pop();
            }
            deltas.push(sum);
            poses.push(band.poses[j]);
            i = j;
        } else if d < lower && !deltas.is_empty() {
            // last interval: fold into the predecessor, removing the pose between
            let prev = deltas.pop().unwrap();
            poses.pop();
            deltas.push(prev + d);
            poses.push(band.poses[i + 1]);
            i += 1;
        } else {
            deltas.push(d);
            poses.push(band.poses[i + 1]);
            i += 1;
        }
    }
    TimedBand {
        poses,
        deltas,
        start_fixed: band.start_fixed,
        goal_fixed: band.goal_fixed,
    }
}

/// Resamples every band in `others` onto the cumulative timestamps of
/// `reference`, up to the shorter of the two horizons.
pub fn synchronize(reference: &TimedBand, others: &[TimedBand]) -> Vec<TimedBand> {
    let ref_times = reference.timestamps();
    others
        .iter()
        .map(|other| resample_onto(other, &ref_times, &reference.deltas))
        .collect()
}

fn resample_onto(band: &TimedBand, ref_times: &[f64], ref_deltas: &[f64]) -> TimedBand {
    let own_times = band.timestamps();
    let horizon = *own_times.last().unwrap();
    let tol = 1e-9 * horizon.max(1.0);
    let mut k = ref_times.iter().take_while(|t| **t <= horizon + tol).count();
    // a band shorter than the first reference interval holds its final pose
    k = k.clamp(2, ref_times.len());
    let mut poses = Vec::with_capacity(k);
    let mut seg = 0;
    for &t in &ref_times[..k] {
        while seg + 1 < band.deltas.len() && own_times[seg + 1] <= t {
            seg += 1;
        }
        let pose = if t == own_times[seg] {
            band.poses[seg]
        } else if t >= horizon {
            *band.last()
        } else if t == own_times[seg + 1] {
            band.poses[seg + 1]
        } else {
            let s = (t - own_times[seg]) / band.deltas[seg];
            band.poses[seg].lerp(&band.poses[seg + 1], s.clamp(0.0, 1.0))
        };
        poses.push(pose);
    }
    TimedBand {
        poses,
        deltas: ref_deltas[..k - 1].to_vec(),
        start_fixed: band.start_fixed,
        goal_fixed: band.goal_fixed,
    }
}

/// Appends the part of `full` that lies beyond the horizon of `head`.
/// Keeps a synchronized band from losing time every outer iteration.
pub fn restore_tail(head: &TimedBand, full: &TimedBand) -> TimedBand {
    let horizon = head.duration();
    let tol = 1e-9 * horizon.max(1.0);
    let mut out = head.clone();
    let mut last_t = horizon;
    for (t, (p, k)) in full.timestamps().into_iter().zip(full.poses.iter().zip(0..)) {
        if k == 0 || t <= horizon + tol {
            continue;
        }
        out.deltas.push(t - last_t);
        out.poses.push(*p);
        last_t = t;
    }
    out
}

/// Drops the poses the agent has already passed and re-anchors the band at
/// `current`.
pub fn trim_passed(band: &TimedBand, current: &Pose2D) -> TimedBand {
    let p = current.position();
    let nseg = band.deltas.len();
    let mut best = (f64::INFINITY, 0usize, 0.0);
    for k in 0..nseg {
        let (q, u) = closest_point_on_segment(&p, &band.poses[k].position(), &band.poses[k + 1].position());
        let dist = (q - p).norm();
        if dist < best.0 - 1e-12 {
            best = (dist, k, u);
        }
    }
    let (_, mut k, mut u) = best;
    if u >= 1.0 - 1e-9 && k + 1 < nseg {
        k += 1;
        u = 0.0;
    }
    let mut poses = Vec::with_capacity(band.poses.len() - k);
    poses.push(*current);
    poses.extend_from_slice(&band.poses[k + 1..]);
    let mut deltas = Vec::with_capacity(nseg - k);
    deltas.push((band.deltas[k] * (1.0 - u)).max(MIN_DT));
    deltas.extend_from_slice(&band.deltas[k + 1..]);
    TimedBand {
        poses,
        deltas,
        start_fixed: true,
        goal_fixed: band.goal_fixed,
    }
}
