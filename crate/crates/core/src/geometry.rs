//! Planar poses, footprints and the signed distance primitives used by the
//! obstacle and social residuals.
//!
//! Distances are signed: a negative value is a penetration depth.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(theta))
}

/// Infallible variant for values already known to be finite.
pub(crate) fn wrap(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    // rem_euclid lands in [0, 2π), so odd multiples of π map to +π
    let a = theta.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Shortest signed rotation taking `from` to `to`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap(to - from)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Linear interpolation of position, shortest-arc interpolation of heading.
    pub fn lerp(&self, other: &Pose2D, s: f64) -> Pose2D {
        let p = self.position() + (other.position() - self.position()) * s;
        Pose2D::new(p.x, p.y, self.theta + angle_diff(other.theta, self.theta) * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Velocity2D {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Velocity2D {
    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn linear(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFootprint {
    radius: f64,
}

impl CircleFootprint {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("footprint radius must be > 0, got {radius}")));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Simple counter-clockwise polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonFootprint {
    vertices: Vec<Vec2>,
}

impl PolygonFootprint {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon("fewer than 3 vertices"));
        }
        if vertices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite())) {
            return Err(Error::NonFinite("polygon vertex"));
        }
        let area = signed_area(&vertices);
        if area.abs() < 1e-12 {
            return Err(Error::DegeneratePolygon("zero area"));
        }
        if area < 0.0 {
            return Err(Error::DegeneratePolygon("vertices are clockwise"));
        }
        if self_intersects(&vertices) {
            return Err(Error::DegeneratePolygon("self-intersecting"));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Ray-casting containment test. Boundary points may land either way.
    pub fn contains(&self, p: &Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn boundary_distance(&self, p: &Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| distance_point_segment(p, &a, &b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segments_cross(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> bool {
    let d1 = cross(&(b - a), &(c - a));
    let d2 = cross(&(b - a), &(d - a));
    let d3 = cross(&(d - c), &(a - c));
    let d4 = cross(&(d - c), &(b - c));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn self_intersects(v: &[Vec2]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(&v[i], &v[(i + 1) % n], &v[j], &v[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
pub enum StaticObstacle {
    Point(Vec2),
    Segment(Vec2, Vec2),
    Polygon(PolygonFootprint),
}

impl StaticObstacle {
    /// Signed distance from the boundary of a disc to this obstacle.
    pub fn signed_distance_to_circle(&self, center: &Vec2, radius: f64) -> f64 {
        match self {
            StaticObstacle::Point(p) => (center - p).norm() - radius,
            StaticObstacle::Segment(a, b) => distance_point_segment(center, a, b) - radius,
            StaticObstacle::Polygon(poly) => signed_distance_polygon_circle(poly, center, radius),
        }
    }

    pub fn is_finite(&self) -> bool {
        let fin = |v: &Vec2| v.x.is_finite() && v.y.is_finite();
        match self {
            StaticObstacle::Point(p) => fin(p),
            StaticObstacle::Segment(a, b) => fin(a) && fin(b),
            StaticObstacle::Polygon(poly) => poly.vertices().iter().all(fin),
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let pts: Vec<Vec2> = match self {
            StaticObstacle::Point(p) => vec![*p],
            StaticObstacle::Segment(a, b) => vec![*a, *b],
            StaticObstacle::Polygon(poly) => poly.vertices().to_vec(),
        };
        let mut lo = pts[0];
        let mut hi = pts[0];
        for p in &pts[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

pub fn signed_distance_circle_circle(c1: &Vec2, r1: f64, c2: &Vec2, r2: f64) -> f64 {
    (c1 - c2).norm() - (r1 + r2)
}

/// Closest point on segment `ab` to `p`; a degenerate segment acts as a point.
pub fn closest_point_on_segment(p: &Vec2, a: &Vec2, b: &Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    if len_sq <= f64::EPSILON {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    (a + ab * t, t)
}

pub fn distance_point_segment(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let (q, _) = closest_point_on_segment(p, a, b);
    (p - q).norm()
}

/// Minimum distance between two segments.
pub fn distance_segment_segment(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> f64 {
    if segments_cross(a, b, c, d) {
        return 0.0;
    }
    [
        distance_point_segment(a, c, d),
        distance_point_segment(b, c, d),
        distance_point_segment(c, a, b),
        distance_point_segment(d, a, b),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// Outside: boundary distance minus `r`. Inside: negated boundary distance minus `r`.
pub fn signed_distance_polygon_circle(poly: &PolygonFootprint, c: &Vec2, r: f64) -> f64 {
    let d = poly.boundary_distance(c);
    if poly.contains(c) {
        -d - r
    } else {
        d - r
    }
}

/// 2D rotation of a vector.
pub fn rotate(v: &Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}
