//! Global occupancy grid, cost layers and 8-connected A*.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, Pose2D, StaticObstacle, Vec2};

pub const LETHAL: u8 = 254;
pub const INSCRIBED: u8 = 253;
pub const DEFAULT_COST_SCALE: f64 = 0.01;
pub const DEFAULT_RESOLUTION: f64 = 0.05;
/// Humans slower than this get a proxemics layer in the global map.
pub const STATIC_HUMAN_SPEED: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: Vec2,
    width: usize,
    height: usize,
    cost: Vec<u8>,
}

impl OccupancyGrid {
    /// `origin` is the lower-left corner of cell `(0, 0)`.
    pub fn new(origin: Vec2, width: usize, height: usize, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Config("grid resolution must be positive".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::Config("grid needs at least one cell".into()));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::NonFinite("grid origin"));
        }
        Ok(Self {
            resolution,
            origin,
            width,
            height,
            cost: vec![0; width * height],
        })
    }

    /// Smallest grid covering the rectangle `[min, max]`.
    pub fn covering(min: Vec2, max: Vec2, resolution: f64) -> Result<Self> {
        if !(max.x > min.x && max.y > min.y) {
            return Err(Error::Config("grid bounds are empty".into()));
        }
        if !(resolution > 0.0) {
            return Err(Error::Config("grid resolution must be positive".into()));
        }
        let w = ((max.x - min.x) / resolution - 1e-9).ceil().max(1.0) as usize;
        let h = ((max.y - min.y) / resolution - 1e-9).ceil().max(1.0) as usize;
        Self::new(min, w, h, resolution)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cost[j * self.width + i]
    }

    pub fn set(&mut self, i: usize, j: usize, c: u8) {
        self.cost[j * self.width + i] = c;
    }

    pub fn cells(&self) -> &[u8] {
        &self.cost
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new((i as f64 + 0.5) * self.resolution, (j as f64 + 0.5) * self.resolution)
    }

    pub fn world_to_cell(&self, p: &Vec2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    /// Cost at a world point; points outside the grid read as lethal.
    pub fn cost_at(&self, p: &Vec2) -> u8 {
        self.world_to_cell(p).map_or(LETHAL, |(i, j)| self.get(i, j))
    }

    /// Clamped cell range covering the world box `[lo, hi]`.
    fn cell_range(&self, lo: Vec2, hi: Vec2) -> Option<(usize, usize, usize, usize)> {
        let to_i = |v: f64, o: f64, n: usize| (((v - o) / self.resolution).floor()).clamp(-1.0, n as f64) as i64;
        let (i0, i1) = (to_i(lo.x, self.origin.x, self.width), to_i(hi.x, self.origin.x, self.width));
        let (j0, j1) = (to_i(lo.y, self.origin.y, self.height), to_i(hi.y, self.origin.y, self.height));
        let (w, h) = (self.width as i64, self.height as i64);
        if i1 < 0 || j1 < 0 || i0 >= w || j0 >= h {
            return None;
        }
        Some((
            i0.max(0) as usize,
            i1.min(w - 1) as usize,
            j0.max(0) as usize,
            j1.min(h - 1) as usize,
        ))
    }

    fn cell_box(&self, i: usize, j: usize) -> (Vec2, Vec2) {
        let lo = self.origin + Vec2::new(i as f64 * self.resolution, j as f64 * self.resolution);
        (lo, lo + Vec2::new(self.resolution, self.resolution))
    }

    /// Debug dump: `W H RES OX OY`, then one row per `y` index from 0.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {} {} {}", self.width, self.height, self.resolution, self.origin.x, self.origin.y);
        for j in 0..self.height {
            let row: Vec<String> = (0..self.width).map(|i| self.get(i, j).to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Liang-Barsky test of segment `ab` against the closed box `[lo, hi]`.
fn segment_hits_box(a: &Vec2, b: &Vec2, lo: &Vec2, hi: &Vec2) -> bool {
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-d.x, a.x - lo.x),
        (d.x, hi.x - a.x),
        (-d.y, a.y - lo.y),
        (d.y, hi.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

fn mark_segment(grid: &mut OccupancyGrid, a: &Vec2, b: &Vec2) {
    let lo = Vec2::new(a.x.min(b.x), a.y.min(b.y));
    let hi = Vec2::new(a.x.max(b.x), a.y.max(b.y));
    let Some((i0, i1, j0, j1)) = grid.cell_range(lo, hi) else {
        return;
    };
    for j in j0..=j1 {
        for i in i0..=i1 {
            let (blo, bhi) = grid.cell_box(i, j);
            if segment_hits_box(a, b, &blo, &bhi) {
                grid.set(i, j, LETHAL);
            }
        }
    }
}

/// Marks every cell touching obstacle geometry as lethal; geometry outside
/// the grid is clipped.
pub fn rasterize_obstacles(grid: &mut OccupancyGrid, obstacles: &[StaticObstacle]) {
    for o in obstacles {
        match o {
            StaticObstacle::Point(p) => {
                if let Some((i, j)) = grid.world_to_cell(p) {
                    grid.set(i, j, LETHAL);
                }
            }
            StaticObstacle::Segment(a, b) => mark_segment(grid, a, b),
            StaticObstacle::Polygon(poly) => {
                for (a, b) in poly.edges() {
                    mark_segment(grid, &a, &b);
                }
                let (lo, hi) = o.bounds();
                let Some((i0, i1, j0, j1)) = grid.cell_range(lo, hi) else {
                    continue;
                };
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        if poly.contains(&grid.cell_center(i, j)) {
                            grid.set(i, j, LETHAL);
                        }
                    }
                }
            }
        }
    }
}

/// Inflation cost at distance `d` from the nearest lethal cell.
pub fn inflation_cost(d: f64, inscribed_radius: f64, decay_radius: f64) -> u8 {
    if d <= inscribed_radius {
        return INSCRIBED;
    }
    if d >= decay_radius {
        return 0;
    }
    let kappa = (f64::from(INSCRIBED - 1)).ln() / (decay_radius - inscribed_radius);
    (f64::from(INSCRIBED - 1) * (-kappa * (d - inscribed_radius)).exp()).floor() as u8
}

/// Distance from the center of cell `(di, dj)` away to the square of a lethal
/// cell at the origin, in meters.
fn cell_gap(di: i64, dj: i64, res: f64) -> f64 {
    let gx = (di.abs() as f64 - 0.5).max(0.0);
    let gy = (dj.abs() as f64 - 0.5).max(0.0);
    res * (gx * gx + gy * gy).sqrt()
}

/// Spreads cost around lethal cells. Never lowers a cell.
pub fn inflate(grid: &mut OccupancyGrid, inscribed_radius: f64, decay_radius: f64) -> Result<()> {
    if !(inscribed_radius >= 0.0 && decay_radius >= inscribed_radius) {
        return Err(Error::Config("inflation needs decay_radius >= inscribed_radius >= 0".into()));
    }
    let reach = (decay_radius / grid.resolution).ceil() as i64 + 1;
    let lethal: Vec<(i64, i64)> = (0..grid.height)
        .flat_map(|j| (0..grid.width).map(move |i| (i, j)))
        .filter(|(i, j)| grid.get(*i, *j) == LETHAL)
        .map(|(i, j)| (i as i64, j as i64))
        .collect();
    let mut out = grid.cost.clone();
    let (w, h) = (grid.width as i64, grid.height as i64);
    for (li, lj) in lethal {
        for dj in -reach..=reach {
            let j = lj + dj;
            if j < 0 || j >= h {
                continue;
            }
            for di in -reach..=reach {
                let i = li + di;
                if i < 0 || i >= w {
                    continue;
                }
                let c = inflation_cost(cell_gap(di, dj, grid.resolution), inscribed_radius, decay_radius);
                let cell = &mut out[(j * w + i) as usize];
                if c > *cell {
                    *cell = c;
                }
            }
        }
    }
    grid.cost = out;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanCostParams {
    pub amplitude: f64,
    pub sigma: f64,
    pub visibility_amplitude: f64,
    pub visibility_radius: f64,
    pub fov_half_angle: f64,
}

impl Default for HumanCostParams {
    fn default() -> Self {
        Self {
            amplitude: 200.0,
            sigma: 0.4,
            visibility_amplitude: 50.0,
            visibility_radius: 2.0,
            fov_half_angle: 100f64.to_radians(),
        }
    }
}

impl HumanCostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.amplitude >= 0.0 && self.amplitude < f64::from(LETHAL)) {
            return Err(Error::Config("human cost needs sigma > 0 and 0 <= amplitude < lethal".into()));
        }
        if !(self.visibility_amplitude >= 0.0 && self.visibility_radius >= 0.0 && self.fov_half_angle >= 0.0) {
            return Err(Error::Config("invalid visibility parameters".into()));
        }
        Ok(())
    }
}

/// Proxemics plus rear-visibility cost around each human. Sums saturate at
/// [`INSCRIBED`]; lethal cells are left alone.
pub fn add_human_layer(grid: &mut OccupancyGrid, humans: &[Pose2D], params: &HumanCostParams) -> Result<()> {
    params.validate()?;
    let support = (3.0 * params.sigma).max(params.visibility_radius);
    for h in humans {
        let c = h.position();
        let r = Vec2::new(support, support);
        let Some((i0, i1, j0, j1)) = grid.cell_range(c - r, c + r) else {
            continue;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = grid.cell_center(i, j);
                let d = (p - c).norm();
                let mut add = 0.0;
                if d <= 3.0 * params.sigma {
                    add += params.amplitude * (-d * d / (2.0 * params.sigma * params.sigma)).exp();
                }
                if d > 1e-9 && d <= params.visibility_radius {
                    let bearing = (p.y - c.y).atan2(p.x - c.x);
                    if angle_diff(bearing, h.theta).abs() > params.fov_half_angle {
                        add += params.visibility_amplitude;
                    }
                }
                let old = grid.get(i, j);
                if old >= INSCRIBED || add <= 0.0 {
                    continue;
                }
                let new = (f64::from(old) + add.round()).min(f64::from(INSCRIBED)) as u8;
                grid.set(i, j, new.max(old));
            }
        }
    }
    Ok(())
}

const LEN_STRAIGHT: u64 = 1000;
const LEN_DIAGONAL: u64 = 1414;

fn cell_weight(c: u8, cost_scale: f64) -> u64 {
    (1e4 * (1.0 + cost_scale * f64::from(c))).round() as u64
}

/// Fixed-point cost of stepping into a cell: length in thousandths of a
/// cell times the cell weight in ten-thousandths.
fn step_cost(diagonal: bool, c: u8, cost_scale: f64) -> u64 {
    (if diagonal { LEN_DIAGONAL } else { LEN_STRAIGHT }) * cell_weight(c, cost_scale)
}

fn octile(a: (usize, usize), b: (usize, usize), min_weight: u64) -> u64 {
    let dx = a.0.abs_diff(b.0) as u64;
    let dy = a.1.abs_diff(b.1) as u64;
    let (lo, hi) = (dx.min(dy), dx.max(dy));
    (LEN_DIAGONAL * lo + LEN_STRAIGHT * (hi - lo)) * min_weight
}

const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Successors of a cell: non-lethal, in bounds, no squeezing diagonally past
/// a lethal corner.
pub fn neighbors(grid: &OccupancyGrid, i: usize, j: usize) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
    let (w, h) = (grid.width as i64, grid.height as i64);
    NEIGHBORS.iter().filter_map(move |&(di, dj)| {
        let (ni, nj) = (i as i64 + di, j as i64 + dj);
        if ni < 0 || nj < 0 || ni >= w || nj >= h {
            return None;
        }
        let (ni, nj) = (ni as usize, nj as usize);
        if grid.get(ni, nj) >= LETHAL {
            return None;
        }
        let diagonal = di != 0 && dj != 0;
        if diagonal && (grid.get(ni, j) >= LETHAL || grid.get(i, nj) >= LETHAL) {
            return None;
        }
        Some((ni, nj, diagonal))
    })
}

/// Fixed-point cost of a cell path as minimized by [`plan_astar_cells`].
pub fn cell_path_cost(grid: &OccupancyGrid, cells: &[(usize, usize)], cost_scale: f64) -> u64 {
    cells
        .windows(2)
        .map(|w| {
            let diagonal = w[0].0 != w[1].0 && w[0].1 != w[1].1;
            step_cost(diagonal, grid.get(w[1].0, w[1].1), cost_scale)
        })
        .sum()
}

fn endpoint_cell(grid: &OccupancyGrid, p: &Vec2) -> Result<(usize, usize)> {
    let cell = grid.world_to_cell(p).ok_or(Error::PathOutsideArea)?;
    if grid.get(cell.0, cell.1) >= LETHAL {
        return Err(Error::BlockedCell((p.x, p.y)));
    }
    Ok(cell)
}

/// A* over cells; returns the cell sequence from start to goal.
pub fn plan_astar_cells(grid: &OccupancyGrid, start: &Vec2, goal: &Vec2, cost_scale: f64) -> Result<Vec<(usize, usize)>> {
    if !(cost_scale >= 0.0) {
        return Err(Error::Config("cost_scale must be non-negative".into()));
    }
    let s = endpoint_cell(grid, start)?;
    let g = endpoint_cell(grid, goal)?;
    let w = grid.width;
    let idx = |c: (usize, usize)| c.1 * w + c.0;
    let min_weight = cell_weight(0, cost_scale);
    let n = grid.width * grid.height;
    let mut best = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    best[idx(s)] = 0;
    open.push(Reverse((octile(s, g, min_weight), 0u64, idx(s))));
    while let Some(Reverse((_, cost, k))) = open.pop() {
        if closed[k] {
            continue;
        }
        closed[k] = true;
        let cell = (k % w, k / w);
        if cell == g {
            let mut path = vec![cell];
            let mut cur = k;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                path.push((cur % w, cur / w));
            }
            path.reverse();
            return Ok(path);
        }
        for (ni, nj, diagonal) in neighbors(grid, cell.0, cell.1) {
            let nk = idx((ni, nj));
            if closed[nk] {
                continue;
            }
            let nc = cost + step_cost(diagonal, grid.get(ni, nj), cost_scale);
            if nc < best[nk] {
                best[nk] = nc;
                parent[nk] = k;
                open.push(Reverse((nc + octile((ni, nj), g, min_weight), nc, nk)));
            }
        }
    }
    Err(Error::NoPath {
        from: (start.x, start.y),
        to: (goal.x, goal.y),
    })
}

/// World-frame A* path: `start`, the interior cell centers, then `goal`.
pub fn plan_astar(grid: &OccupancyGrid, start: &Vec2, goal: &Vec2, cost_scale: f64) -> Result<Vec<Vec2>> {
    let cells = plan_astar_cells(grid, start, goal, cost_scale)?;
    let mut out = Vec::with_capacity(cells.len() + 1);
    out.push(*start);
    if cells.len() > 2 {
        out.extend(cells[1..cells.len() - 1].iter().map(|c| grid.cell_center(c.0, c.1)));
    }
    out.push(*goal);
    Ok(out)
}
