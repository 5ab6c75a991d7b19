//! Residual functions for the joint band objective.
//!
//! Every residual is non-negative and exactly zero inside its satisfied
//! region. The solver squares them and scales by the edge weight.

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, Pose2D, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleParams {
    /// Minimum clearance.
    pub d_o: f64,
    pub epsilon: f64,
    /// Nonlinearity of the softened branch.
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyParams {
    pub d_s: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtcParams {
    pub tau: f64,
    pub epsilon: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalParams {
    pub zeta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinodynamicLimits {
    pub v_max: f64,
    /// Largest speed against the heading.
    pub v_max_backwards: f64,
    pub omega_max: f64,
    pub a_max: f64,
    pub a_rot_max: f64,
    /// Preferred walking speed; only meaningful for humans.
    pub nominal_speed: f64,
}

impl Default for ObstacleParams {
    fn default() -> Self {
        Self {
            d_o: 0.2,
            epsilon: 0.05,
            s: 10.0,
        }
    }
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            d_s: 0.4,
            epsilon: 0.05,
        }
    }
}

impl Default for TtcParams {
    fn default() -> Self {
        Self {
            tau: 8.0,
            epsilon: 0.05,
            alpha: 1.0,
        }
    }
}

impl Default for DirectionalParams {
    fn default() -> Self {
        Self {
            zeta: 0.2,
            epsilon: 0.05,
        }
    }
}

impl KinodynamicLimits {
    pub fn robot_default() -> Self {
        Self {
            v_max: 0.8,
            v_max_backwards: 0.05,
            omega_max: 1.0,
            a_max: 0.6,
            a_rot_max: 1.0,
            nominal_speed: 0.8,
        }
    }

    pub fn human_default() -> Self {
        Self {
            v_max: 2.0,
            v_max_backwards: 2.0,
            omega_max: 2.0,
            a_max: 1.5,
            a_rot_max: 2.0,
            nominal_speed: 1.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.v_max, self.omega_max, self.a_max, self.a_rot_max, self.nominal_speed];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("kinodynamic limits must be positive".into()));
        }
        if !(self.v_max_backwards >= 0.0 && self.v_max_backwards.is_finite()) {
            return Err(Error::Config("v_max_backwards must be non-negative".into()));
        }
        if self.nominal_speed > self.v_max {
            return Err(Error::Config("nominal speed exceeds v_max".into()));
        }
        Ok(())
    }
}

/// Obstacle clearance, softened between contact and the clearance bound and
/// linear under penetration.
pub fn f_obs(d: f64, params: &ObstacleParams) -> f64 {
    let bound = params.d_o + params.epsilon;
    if d >= bound {
        0.0
    } else if d >= 0.0 {
        let denom = params.s * d + 1.0;
        debug_assert!(denom > 0.0);
        (bound - d) / denom
    } else {
        bound - d
    }
}

pub fn f_safety(d: f64, params: &SafetyParams) -> f64 {
    (params.d_s + params.epsilon - d).max(0.0)
}

/// Time until two constant-velocity discs first touch.
///
/// Returns 0 when they already overlap and `+∞` when, under the relative
/// motion, they never meet in the future.
pub fn time_to_collision(p_r: &Vec2, v_r: &Vec2, r_r: f64, p_h: &Vec2, v_h: &Vec2, r_h: f64) -> f64 {
    time_to_contact(&(p_h - p_r), &(v_r - v_h), r_r + r_h)
}

/// `rel` points from robot to human, `closing` is the robot's velocity
/// relative to the human. Solves `|rel - closing t| = radius`.
pub(crate) fn time_to_contact(rel: &Vec2, closing: &Vec2, radius: f64) -> f64 {
    let c = rel.norm_squared() - radius * radius;
    if c <= 0.0 {
        return 0.0;
    }
    let a = closing.norm_squared();
    if a <= 1e-18 {
        return f64::INFINITY;
    }
    let b = rel.dot(closing);
    if b <= 0.0 {
        return f64::INFINITY;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    // c > 0 and b > 0 make both roots positive; use the stable form of the smaller one
    c / (b + disc.sqrt())
}

pub fn f_ttc(ttc: f64, c_sq: f64, params: &TtcParams) -> Result<f64> {
    if !(c_sq > 0.0) {
        return Err(Error::ZeroDistance);
    }
    let bound = params.tau + params.epsilon;
    if !ttc.is_finite() || ttc >= bound {
        return Ok(0.0);
    }
    Ok((bound - ttc) * params.alpha / c_sq)
}

/// Directional compatibility: positive and large for head-on approach,
/// zero for orthogonal or following motion, negative when separating.
pub fn c_dir(p_r: &Vec2, v_r: &Vec2, p_h: &Vec2, v_h: &Vec2) -> Result<f64> {
    let d = p_h - p_r;
    let c_sq = d.norm_squared();
    if c_sq <= 0.0 {
        return Err(Error::CoincidentPositions);
    }
    Ok((v_r.dot(&d) - v_h.dot(&d)) / c_sq)
}

/// Penalizes `c` above the threshold.
pub fn f_dir(c: f64, params: &DirectionalParams) -> f64 {
    (c - (params.zeta - params.epsilon)).max(0.0)
}

/// Signed translational speed of a pose pair. Negative when the
/// displacement opposes the first pose's heading.
pub fn signed_speed(p_i: &Pose2D, p_j: &Pose2D, dt: f64) -> f64 {
    let d = p_j.position() - p_i.position();
    let v = d.norm() / dt;
    if d.dot(&p_i.heading()) < 0.0 {
        -v
    } else {
        v
    }
}

pub fn angular_speed(p_i: &Pose2D, p_j: &Pose2D, dt: f64) -> f64 {
    angle_diff(p_j.theta, p_i.theta) / dt
}

/// `(translational, rotational)` excess over the velocity limits.
pub fn velocity_residual(p_i: &Pose2D, p_j: &Pose2D, dt: f64, limits: &KinodynamicLimits) -> (f64, f64) {
    let v = signed_speed(p_i, p_j, dt);
    let w = angular_speed(p_i, p_j, dt);
    let bound = if v < 0.0 { limits.v_max_backwards } else { limits.v_max };
    ((v.abs() - bound).max(0.0), (w.abs() - limits.omega_max).max(0.0))
}

/// `(translational, rotational)` excess over the acceleration limits for a
/// pose triplet.
pub fn acceleration_residual(
    p_i: &Pose2D,
    p_j: &Pose2D,
    p_k: &Pose2D,
    dt_ij: f64,
    dt_jk: f64,
    limits: &KinodynamicLimits,
) -> (f64, f64) {
    let mean_dt = 0.5 * (dt_ij + dt_jk);
    let a = (signed_speed(p_j, p_k, dt_jk) - signed_speed(p_i, p_j, dt_ij)) / mean_dt;
    let alpha = (angular_speed(p_j, p_k, dt_jk) - angular_speed(p_i, p_j, dt_ij)) / mean_dt;
    ((a.abs() - limits.a_max).max(0.0), (alpha.abs() - limits.a_rot_max).max(0.0))
}

/// Acceleration excess of the first segment relative to a known current
/// velocity `(v, omega)`.
pub fn start_acceleration_residual(
    p_0: &Pose2D,
    p_1: &Pose2D,
    dt: f64,
    current: (f64, f64),
    limits: &KinodynamicLimits,
) -> (f64, f64) {
    let a = (signed_speed(p_0, p_1, dt) - current.0) / dt;
    let alpha = (angular_speed(p_0, p_1, dt) - current.1) / dt;
    ((a.abs() - limits.a_max).max(0.0), (alpha.abs() - limits.a_rot_max).max(0.0))
}

/// Zero iff both headings make equal angles with the chord between the
/// poses, i.e. the poses lie on a common circular arc.
pub fn nonholonomic_residual(p_i: &Pose2D, p_j: &Pose2D) -> f64 {
    let d = p_j.position() - p_i.position();
    let (si, ci) = p_i.theta.sin_cos();
    let (sj, cj) = p_j.theta.sin_cos();
    ((ci + cj) * d.y - (si + sj) * d.x).abs()
}

pub fn time_optimality_residual(dt: f64) -> f64 {
    dt
}

pub fn nominal_speed_residual(p_i: &Pose2D, p_j: &Pose2D, dt: f64, nominal: f64) -> f64 {
    ((p_j.position() - p_i.position()).norm() / dt - nominal).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn obstacle_examples() {
        let p = ObstacleParams { d_o: 0.3, epsilon: 0.1, s: 10.0 };
        assert!((f_obs(0.2, &p) - 0.2 / 3.0).abs() < 1e-12);
        assert_eq!(f_obs(0.5, &p), 0.0);
        assert!((f_obs(-0.05, &p) - 0.45).abs() < 1e-12);
        assert_eq!(f_obs(0.4, &p), 0.0);
        // continuous at contact
        assert!((f_obs(0.0, &p) - f_obs(-1e-12, &p)).abs() < 1e-9);
    }

    #[test]
    fn safety_examples() {
        let p = SafetyParams { d_s: 0.5, epsilon: 0.1 };
        assert!((f_safety(0.4, &p) - 0.2).abs() < 1e-12);
        assert_eq!(f_safety(0.8, &p), 0.0);
        assert_eq!(f_safety(0.6, &p), 0.0);
    }

    #[test]
    fn ttc_examples() {
        let t = time_to_collision(&v(0.0, 0.0), &v(1.0, 0.0), 0.3, &v(4.0, 0.0), &v(-1.0, 0.0), 0.3);
        assert!((t - 1.7).abs() < 1e-12);
        let t = time_to_collision(&v(0.0, 0.0), &v(1.0, 0.5), 0.3, &v(4.0, 0.0), &v(1.0, 0.5), 0.3);
        assert_eq!(t, f64::INFINITY);
        let t = time_to_collision(&v(0.0, 0.0), &v(1.0, 0.0), 0.3, &v(0.5, 0.0), &v(0.0, 0.0), 0.3);
        assert_eq!(t, 0.0);
        // separating
        let t = time_to_collision(&v(0.0, 0.0), &v(-1.0, 0.0), 0.3, &v(4.0, 0.0), &v(1.0, 0.0), 0.3);
        assert_eq!(t, f64::INFINITY);
    }

    #[test]
    fn f_ttc_examples() {
        let p = TtcParams { tau: 8.0, epsilon: 0.0, alpha: 1.0 };
        assert!((f_ttc(1.7, 16.0, &p).unwrap() - 0.39375).abs() < 1e-12);
        assert_eq!(f_ttc(f64::INFINITY, 16.0, &p).unwrap(), 0.0);
        assert_eq!(f_ttc(9.0, 16.0, &p).unwrap(), 0.0);
        assert_eq!(f_ttc(1.0, 0.0, &p), Err(Error::ZeroDistance));
    }

    #[test]
    fn c_dir_examples() {
        assert!((c_dir(&v(0.0, 0.0), &v(1.0, 0.0), &v(2.0, 0.0), &v(-1.0, 0.0)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c_dir(&v(0.0, 0.0), &v(0.0, 0.0), &v(2.0, 0.0), &v(0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(c_dir(&v(0.0, 0.0), &v(1.0, 0.0), &v(2.0, 0.0), &v(1.0, 0.0)).unwrap(), 0.0);
        assert_eq!(c_dir(&v(1.0, 1.0), &v(1.0, 0.0), &v(1.0, 1.0), &v(1.0, 0.0)), Err(Error::CoincidentPositions));
    }

    #[test]
    fn f_dir_examples() {
        let p = DirectionalParams { zeta: 0.2, epsilon: 0.0 };
        assert!((f_dir(1.0, &p) - 0.8).abs() < 1e-12);
        assert_eq!(f_dir(0.0, &p), 0.0);
        assert_eq!(f_dir(-0.5, &p), 0.0);
    }

    #[test]
    fn velocity_examples() {
        let lim = KinodynamicLimits { v_max: 0.8, omega_max: 0.5, ..KinodynamicLimits::robot_default() };
        let (t, r) = velocity_residual(&Pose2D::new(0.0, 0.0, 0.0), &Pose2D::new(0.5, 0.0, 0.0), 0.5, &lim);
        assert!((t - 0.2).abs() < 1e-12);
        assert_eq!(r, 0.0);
        let p = Pose2D::new(1.0, 1.0, 0.3);
        assert_eq!(velocity_residual(&p, &p, 0.3, &lim), (0.0, 0.0));
        let (t, r) = velocity_residual(&Pose2D::new(0.0, 0.0, 0.0), &Pose2D::new(0.0, 0.0, 0.3), 0.3, &lim);
        assert_eq!(t, 0.0);
        assert!((r - 0.5).abs() < 1e-12);
        // backwards displacement is negative and bounded separately
        assert!(signed_speed(&Pose2D::new(0.0, 0.0, 0.0), &Pose2D::new(-0.5, 0.0, 0.0), 0.5) < 0.0);
        let (t, _) = velocity_residual(&Pose2D::new(0.0, 0.0, 0.0), &Pose2D::new(-0.25, 0.0, 0.0), 0.5, &lim);
        assert!((t - 0.45).abs() < 1e-12);
    }

    #[test]
    fn acceleration_examples() {
        let lim = KinodynamicLimits { a_max: 1.0, a_rot_max: 1.0, ..KinodynamicLimits::robot_default() };
        let p = |x: f64, th: f64| Pose2D::new(x, 0.0, th);
        assert_eq!(acceleration_residual(&p(0.0, 0.0), &p(0.3, 0.0), &p(0.6, 0.0), 0.3, 0.3, &lim), (0.0, 0.0));
        // 0 m/s then 1 m/s, mean dt 0.5
        let (a, _) = acceleration_residual(&p(0.0, 0.0), &p(0.0, 0.0), &p(0.5, 0.0), 0.5, 0.5, &lim);
        assert!((a - 1.0).abs() < 1e-12);
        // rotation ramp: 0 rad/s then 1 rad/s over mean dt 0.5 -> alpha 2, excess 1
        let (a, r) = acceleration_residual(&p(0.0, 0.0), &p(0.0, 0.0), &p(0.0, 0.5), 0.5, 0.5, &lim);
        assert_eq!(a, 0.0);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonholonomic_examples() {
        assert_eq!(nonholonomic_residual(&Pose2D::new(0.0, 0.0, 0.0), &Pose2D::new(1.0, 0.0, 0.0)), 0.0);
        assert!(nonholonomic_residual(&Pose2D::new(0.0, 0.0, 0.0), &Pose2D::new(1.0, 1.0, FRAC_PI_2)) < 1e-12);
        assert!((nonholonomic_residual(&Pose2D::new(0.0, 0.0, 0.0), &Pose2D::new(1.0, 0.0, FRAC_PI_2)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn time_and_nominal_examples() {
        assert_eq!(time_optimality_residual(0.3), 0.3);
        let a = Pose2D::new(0.0, 0.0, 0.0);
        assert!(nominal_speed_residual(&a, &Pose2D::new(1.3, 0.0, 0.0), 1.0, 1.3) < 1e-12);
        assert!((nominal_speed_residual(&a, &Pose2D::new(0.5, 0.0, 0.0), 0.5, 1.3) - 0.3).abs() < 1e-12);
        assert!((nominal_speed_residual(&a, &a, 0.5, 1.3) - 1.3).abs() < 1e-12);
    }

    /// Forward stepping at 1 ms until the discs touch.
    fn stepped_ttc(p_r: Vec2, v_r: Vec2, p_h: Vec2, v_h: Vec2, radius: f64, t_max: f64) -> f64 {
        let dt = 1e-3;
        let steps = (t_max / dt) as usize;
        for k in 0..=steps {
            let t = k as f64 * dt;
            if ((p_h + v_h * t) - (p_r + v_r * t)).norm() <= radius {
                return t;
            }
        }
        f64::INFINITY
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn ttc_matches_stepping(px in -5.0..5.0f64, py in -5.0..5.0f64, vx in -2.0..2.0f64, vy in -2.0..2.0f64,
                                hx in -5.0..5.0f64, hy in -5.0..5.0f64, ux in -2.0..2.0f64, uy in -2.0..2.0f64,
                                rr in 0.1..0.5f64, rh in 0.1..0.5f64) {
            let (pr, vr, ph, vh) = (v(px, py), v(vx, vy), v(hx, hy), v(ux, uy));
            let closed = time_to_collision(&pr, &vr, rr, &ph, &vh, rh);
            let stepped = stepped_ttc(pr, vr, ph, vh, rr + rh, 20.0);
            if closed.is_finite() && closed < 19.0 {
                prop_assert!((closed - stepped).abs() <= 2e-3, "closed {} stepped {}", closed, stepped);
            } else if closed.is_infinite() {
                prop_assert!(stepped.is_infinite());
            }
        }

        #[test]
        fn residuals_are_monotone(d1 in -1.0..2.0f64, d2 in -1.0..2.0f64, t1 in 0.0..12.0f64, t2 in 0.0..12.0f64,
                                  c1 in 0.01..20.0f64, c2 in 0.01..20.0f64) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let op = ObstacleParams::default();
            let sp = SafetyParams::default();
            prop_assert!(f_obs(lo, &op) >= f_obs(hi, &op));
            prop_assert!(f_safety(lo, &sp) >= f_safety(hi, &sp));
            prop_assert!(f_obs(lo, &op) >= 0.0 && f_safety(lo, &sp) >= 0.0);
            let tp = TtcParams::default();
            let (tl, th) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let (cl, ch) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            prop_assert!(f_ttc(tl, cl, &tp).unwrap() >= f_ttc(th, cl, &tp).unwrap());
            prop_assert!(f_ttc(tl, cl, &tp).unwrap() >= f_ttc(tl, ch, &tp).unwrap());
        }

        #[test]
        fn c_dir_invariances(px in -3.0..3.0f64, py in -3.0..3.0f64, hx in -3.0..3.0f64, hy in -3.0..3.0f64,
                             vx in -2.0..2.0f64, vy in -2.0..2.0f64, ux in -2.0..2.0f64, uy in -2.0..2.0f64,
                             rot in -PI..PI, tx in -5.0..5.0f64, ty in -5.0..5.0f64, k in 0.1..5.0f64) {
            let (pr, vr, ph, vh) = (v(px, py), v(vx, vy), v(hx, hy), v(ux, uy));
            prop_assume!((ph - pr).norm() > 0.1);
            let base = c_dir(&pr, &vr, &ph, &vh).unwrap();
            let rot_v = |a: Vec2| crate::geometry::rotate(&a, rot);
            let t = v(tx, ty);
            let moved = c_dir(&(rot_v(pr) + t), &rot_v(vr), &(rot_v(ph) + t), &rot_v(vh)).unwrap();
            prop_assert!((base - moved).abs() < 1e-9);
            let scaled = c_dir(&pr, &(vr * k), &ph, &(vh * k)).unwrap();
            prop_assert!((scaled - k * base).abs() < 1e-9 * (1.0 + base.abs() * k));
            let swapped = c_dir(&ph, &vh, &pr, &vr).unwrap();
            prop_assert!((swapped - base).abs() < 1e-12);
        }

        #[test]
        fn arc_poses_satisfy_nonholonomic(cx in -3.0..3.0f64, cy in -3.0..3.0f64, r in 0.2..5.0f64,
                                          a0 in -PI..PI, da in -1.5..1.5f64, ccw in proptest::bool::ANY) {
            let on_arc = |a: f64| {
                let pos = v(cx + r * a.cos(), cy + r * a.sin());
                let tangent = if ccw { a + FRAC_PI_2 } else { a - FRAC_PI_2 };
                Pose2D::new(pos.x, pos.y, tangent)
            };
            let res = nonholonomic_residual(&on_arc(a0), &on_arc(a0 + da));
            prop_assert!(res < 1e-9);
        }
    }
}
