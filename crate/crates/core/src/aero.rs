//! Slipstream volumes behind each rotor and the minimum distances between them.
//!
//! A volume is a solid of revolution about the thruster's wake axis
//! `x' = -F_hat`, bounded by flat caps at `x' = X_MIN` and `x' = X_MAX` and by
//! the lateral surface `rho = f(x')`, a cubic in `x'`.
//!
//! Distances are found by alternating exact projections between the two solids.
//! Each projection is solved in the meridian half-plane through the query point,
//! where the closest lateral point is a root of a degree-5 polynomial.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::params::ThrusterPose;

pub const X_MIN: f64 = -0.06;
pub const X_MAX: f64 = 0.91;
/// Coefficients of `f(x) = c0 x^3 + c1 x^2 + c2 x + c3`.
pub const RADIUS_COEFFS: [f64; 4] = [-1.1, 1.56, -0.3, 0.11];

const STEP_TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 200;
const SCAN_INTERVALS: usize = 96;
const RING_POINTS: usize = 5;

/// Slipstream radius at axial coordinate `x`.
pub fn radius(x: f64) -> f64 {
    let [a, b, c, d] = RADIUS_COEFFS;
    ((a * x + b) * x + c) * x + d
}

fn radius_slope(x: f64) -> f64 {
    let [a, b, c, _] = RADIUS_COEFFS;
    (3.0 * a * x + 2.0 * b) * x + c
}

fn radius_curvature(x: f64) -> f64 {
    let [a, b, _, _] = RADIUS_COEFFS;
    6.0 * a * x + 2.0 * b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipstreamVolume {
    pose: ThrusterPose,
    axis: Vec3,
    u: Vec3,
    v: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearanceResult {
    pub distance: f64,
    pub p_i: Vec3,
    pub p_j: Vec3,
    pub converged: bool,
}

/// Point in the meridian half-plane: axial coordinate and radial distance.
#[derive(Debug, Clone, Copy)]
struct Meridian {
    x: f64,
    rho: f64,
}

impl SlipstreamVolume {
    pub fn new(pose: ThrusterPose) -> Self {
        let axis = -pose.direction();
        let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = axis.cross(&helper).normalize();
        let v = axis.cross(&u);
        Self { pose, axis, u, v }
    }

    pub fn pose(&self) -> &ThrusterPose {
        &self.pose
    }

    /// Unit wake axis `x'` in the body frame.
    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    /// Coordinates `(x', y', z')` of a body-frame point in the thruster frame.
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let d = p - self.pose.position();
        Vec3::new(self.axis.dot(&d), self.u.dot(&d), self.v.dot(&d))
    }

    pub fn to_body(&self, local: &Vec3) -> Vec3 {
        self.pose.position() + local.x * self.axis + local.y * self.u + local.z * self.v
    }

    /// Point on the lateral surface at axial `x` and polar angle `angle`.
    pub fn surface_point(&self, x: f64, angle: f64) -> Vec3 {
        let r = radius(x);
        self.to_body(&Vec3::new(x, r * angle.cos(), r * angle.sin()))
    }

    /// Membership residuals `(x' - X_MAX, X_MIN - x', y'^2 + z'^2 - f(x')^2)`;
    /// the point is inside when all three are `<= 0`.
    pub fn contains(&self, p: &Vec3) -> [f64; 3] {
        let l = self.to_local(p);
        [
            l.x - X_MAX,
            X_MIN - l.x,
            l.y * l.y + l.z * l.z - radius(l.x).powi(2),
        ]
    }

    pub fn is_inside(&self, p: &Vec3) -> bool {
        self.contains(p).iter().all(|&g| g <= 0.0)
    }

    /// Closest point of the solid volume to `p` (`p` itself when inside).
    pub fn project(&self, p: &Vec3) -> Vec3 {
        if self.is_inside(p) {
            return *p;
        }
        let d = p - self.pose.position();
        let x = self.axis.dot(&d);
        let radial = d - x * self.axis;
        let rho = radial.norm();
        let e_rho = if rho > 1e-14 { radial / rho } else { self.u };
        let best = closest_meridian(Meridian { x, rho });
        self.pose.position() + best.x * self.axis + best.rho * e_rho
    }
}

fn meridian_dist2(a: Meridian, b: Meridian) -> f64 {
    (a.x - b.x).powi(2) + (a.rho - b.rho).powi(2)
}

/// Closest point of the meridian profile region to `q`, for `q` outside it.
fn closest_meridian(q: Meridian) -> Meridian {
    let mut best = Meridian { x: X_MIN, rho: 0.0 };
    let mut best_d = f64::INFINITY;
    let mut consider = |c: Meridian| {
        let d = meridian_dist2(c, q);
        if d < best_d {
            best_d = d;
            best = c;
        }
    };
    for cap in [X_MIN, X_MAX] {
        consider(Meridian {
            x: cap,
            rho: q.rho.clamp(0.0, radius(cap)),
        });
    }
    // stationary points of the squared distance to (x, f(x))
    let g = |x: f64| (x - q.x) + (radius(x) - q.rho) * radius_slope(x);
    let dg = |x: f64| 1.0 + radius_slope(x).powi(2) + (radius(x) - q.rho) * radius_curvature(x);
    let h = (X_MAX - X_MIN) / SCAN_INTERVALS as f64;
    let mut x0 = X_MIN;
    let mut g0 = g(x0);
    for k in 1..=SCAN_INTERVALS {
        let x1 = X_MIN + k as f64 * h;
        let g1 = g(x1);
        if g0 == 0.0 || g0.signum() != g1.signum() {
            let (mut lo, mut hi, mut glo) = (x0, x1, g0);
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm.signum() == glo.signum() && gm != 0.0 {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            let mut x = 0.5 * (lo + hi);
            for _ in 0..3 {
                let step = g(x) / dg(x);
                let next = x - step;
                if !(x0..=x1).contains(&next) {
                    break;
                }
                x = next;
            }
            consider(Meridian { x, rho: radius(x) });
        }
        x0 = x1;
        g0 = g1;
    }
    best
}

/// Minimum distance between two solid slipstream volumes.
///
/// Runs alternating projections from 26 deterministic starts: on each volume
/// the axis points at `X_MIN`, mid-span and `X_MAX`, five points on the `X_MAX`
/// rim and five on the mid-span surface, with the first ring point facing the
/// other volume.
pub fn pairwise_clearance(a: &SlipstreamVolume, b: &SlipstreamVolume) -> Result<ClearanceResult> {
    if let Some(p) = axis_overlap(a, b) {
        return Ok(ClearanceResult {
            distance: 0.0,
            p_i: p,
            p_j: p,
            converged: true,
        });
    }
    let mut best: Option<ClearanceResult> = None;
    let mut any_converged = false;
    for (from_a, start) in starts(a, b)
        .into_iter()
        .map(|s| (true, s))
        .chain(starts(b, a).into_iter().map(|s| (false, s)))
    {
        let (first, second) = if from_a { (a, b) } else { (b, a) };
        let (p_first, p_second, converged) = alternate(first, second, start);
        any_converged |= converged;
        let (p_i, p_j) = if from_a {
            (p_first, p_second)
        } else {
            (p_second, p_first)
        };
        let distance = (p_i - p_j).norm();
        if best.is_none_or(|r| distance < r.distance) {
            best = Some(ClearanceResult {
                distance,
                p_i,
                p_j,
                converged,
            });
        }
        if distance == 0.0 {
            break;
        }
    }
    match best {
        Some(r) if any_converged || r.distance == 0.0 => Ok(ClearanceResult {
            converged: true,
            ..r
        }),
        _ => Err(Error::NoConvergence),
    }
}

/// Distance from the effector sphere centre `r_e` to the volume. The sphere
/// radius is not subtracted; callers compare the distance against it.
pub fn effector_clearance(
    r_e: &Vec3,
    sphere_radius: f64,
    vol: &SlipstreamVolume,
) -> Result<ClearanceResult> {
    if !(sphere_radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "effector radius must be > 0, got {sphere_radius}"
        )));
    }
    let p = vol.project(r_e);
    Ok(ClearanceResult {
        distance: (p - r_e).norm(),
        p_i: p,
        p_j: *r_e,
        converged: true,
    })
}

/// Largest slipstream radius over the axial extent.
pub fn max_radius() -> f64 {
    // f' has its larger root inside the extent; check it against both caps
    let [a, b, c, _] = RADIUS_COEFFS;
    let disc = (4.0 * b * b - 12.0 * a * c).sqrt();
    let crit = [(-2.0 * b + disc) / (6.0 * a), (-2.0 * b - disc) / (6.0 * a)];
    crit.iter()
        .filter(|x| (X_MIN..=X_MAX).contains(*x))
        .chain([X_MIN, X_MAX].iter())
        .map(|&x| radius(x))
        .fold(f64::NEG_INFINITY, f64::max)
}

impl SlipstreamVolume {
    /// Body-frame end points of the axis segment, `(X_MIN, X_MAX)`.
    pub fn axis_segment(&self) -> (Vec3, Vec3) {
        (
            self.to_body(&Vec3::new(X_MIN, 0.0, 0.0)),
            self.to_body(&Vec3::new(X_MAX, 0.0, 0.0)),
        )
    }

    /// Distance from `p` to the boundary when `p` is inside, else 0.
    pub fn inside_depth(&self, p: &Vec3) -> f64 {
        if !self.is_inside(p) {
            return 0.0;
        }
        let l = self.to_local(p);
        let rho = (l.y * l.y + l.z * l.z).sqrt();
        (X_MAX - l.x).min(l.x - X_MIN).min(radius(l.x) - rho).max(0.0)
    }
}

/// Distance between the axis segments of two volumes.
pub fn axis_segment_distance(a: &SlipstreamVolume, b: &SlipstreamVolume) -> f64 {
    let (p0, p1) = a.axis_segment();
    let (q0, q1) = b.axis_segment();
    segment_distance(&p0, &p1, &q0, &q1)
}

fn segment_distance(p0: &Vec3, p1: &Vec3, q0: &Vec3, q1: &Vec3) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let (a, e, f) = (d1.dot(&d1), d2.dot(&d2), d2.dot(&r));
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-14 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    ((p0 + s * d1) - (q0 + t * d2)).norm()
}

/// A point of one volume's axis that lies inside the other volume, if any.
fn axis_overlap(a: &SlipstreamVolume, b: &SlipstreamVolume) -> Option<Vec3> {
    const SAMPLES: usize = 24;
    for (s, o) in [(a, b), (b, a)] {
        for k in 0..=SAMPLES {
            let x = X_MIN + (X_MAX - X_MIN) * k as f64 / SAMPLES as f64;
            let p = s.to_body(&Vec3::new(x, 0.0, 0.0));
            if o.is_inside(&p) {
                return Some(p);
            }
        }
    }
    None
}

fn starts(vol: &SlipstreamVolume, other: &SlipstreamVolume) -> Vec<Vec3> {
    let mid = 0.5 * (X_MIN + X_MAX);
    let toward = vol.to_local(&other.to_body(&Vec3::new(mid, 0.0, 0.0)));
    let phase = toward.z.atan2(toward.y);
    let mut out: Vec<Vec3> = [X_MIN, mid, X_MAX]
        .iter()
        .map(|&x| vol.to_body(&Vec3::new(x, 0.0, 0.0)))
        .collect();
    for x in [X_MAX, mid] {
        for k in 0..RING_POINTS {
            let angle = phase + std::f64::consts::TAU * k as f64 / RING_POINTS as f64;
            out.push(vol.surface_point(x, angle));
        }
    }
    out
}

/// Alternating projections starting from a point of `first`.
fn alternate(first: &SlipstreamVolume, second: &SlipstreamVolume, start: Vec3) -> (Vec3, Vec3, bool) {
    let mut p = start;
    let mut q = second.project(&p);
    for _ in 0..MAX_ITERATIONS {
        let p_next = first.project(&q);
        let q_next = second.project(&p_next);
        let step = (p_next - p).norm().max((q_next - q).norm());
        p = p_next;
        q = q_next;
        if step < STEP_TOLERANCE || (p - q).norm() == 0.0 {
            return (p, q, true);
        }
    }
    (p, q, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vol(r: [f64; 3], f: [f64; 3]) -> SlipstreamVolume {
        SlipstreamVolume::new(ThrusterPose::new(Vec3::from(r), Vec3::from(f)).unwrap())
    }

    fn random_vol(rng: &mut ChaCha8Rng, spread: f64) -> SlipstreamVolume {
        let r = Vec3::from_fn(|_, _| rng.random_range(-spread..spread));
        let f = loop {
            let f = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            if f.norm() > 0.2 {
                break f;
            }
        };
        SlipstreamVolume::new(ThrusterPose::new(r, f).unwrap())
    }

    /// Minimum over a dense grid of surface points of `a` of the projection distance to `b`.
    fn sampled_distance(a: &SlipstreamVolume, b: &SlipstreamVolume) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=200 {
            let x = X_MIN + (X_MAX - X_MIN) * i as f64 / 200.0;
            for k in 0..72 {
                let p = a.surface_point(x, std::f64::consts::TAU * k as f64 / 72.0);
                best = best.min((b.project(&p) - p).norm());
            }
        }
        best
    }

    #[test]
    fn profile_values() {
        assert_eq!(radius(0.0), 0.11);
        for k in 0..=1000 {
            let x = X_MIN + (X_MAX - X_MIN) * k as f64 / 1000.0;
            assert!(radius(x) > 0.09);
        }
    }

    #[test]
    fn max_radius_value() {
        let dense = (0..=100_000)
            .map(|k| radius(X_MIN + (X_MAX - X_MIN) * k as f64 / 100_000.0))
            .fold(0.0, f64::max);
        assert!((max_radius() - dense).abs() < 1e-9);
    }

    #[test]
    fn segment_distances() {
        let a = vol([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let b = vol([0.5, 0.0, 0.0], [0.0, 0.0, 1.0]);
        assert!((axis_segment_distance(&a, &b) - 0.5).abs() < 1e-12);
        let c = vol([0.0, 0.0, -3.0], [0.0, 0.0, 1.0]);
        assert!((axis_segment_distance(&a, &c) - (3.0 - 0.97)).abs() < 1e-12);
        let d = vol([0.0, 0.3, -0.5], [1.0, 0.0, 0.0]);
        assert!((axis_segment_distance(&a, &d) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn depth_inside() {
        let a = vol([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        assert!((a.inside_depth(&Vec3::new(0.0, 0.0, -0.5)) - radius(0.5)).abs() < 1e-12);
        assert_eq!(a.inside_depth(&Vec3::new(0.0, 0.0, 1.0)), 0.0);
    }

    #[test]
    fn membership_examples() {
        let v = vol([0.3, -0.2, 0.1], [0.0, 0.0, 1.0]);
        let g = v.contains(&Vec3::new(0.3, -0.2, 0.1));
        assert!(g.iter().all(|&r| r <= 0.0));
        assert!((g[2] + 0.11f64.powi(2)).abs() < 1e-15);
        let side = v.to_body(&Vec3::new(0.0, 0.2, 0.0));
        assert!(v.contains(&side)[2] > 0.0);
        let far = v.to_body(&Vec3::new(1.0, 0.0, 0.0));
        assert!(v.contains(&far)[0] > 0.0);
        // wake points opposite to the thrust
        assert!(v.is_inside(&Vec3::new(0.3, -0.2, -0.5)));
        assert!(!v.is_inside(&Vec3::new(0.3, -0.2, 0.5)));
    }

    #[test]
    fn identical_poses_touch() {
        let a = vol([0.1, 0.2, 0.3], [0.0, 1.0, 0.0]);
        assert_eq!(pairwise_clearance(&a, &a).unwrap().distance, 0.0);
    }

    #[test]
    fn coaxial_gap() {
        let a = vol([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let b = vol([0.0, 0.0, -2.0], [0.0, 0.0, 1.0]);
        let r = pairwise_clearance(&a, &b).unwrap();
        assert!((r.distance - 1.03).abs() < 1e-9, "{}", r.distance);
    }

    #[test]
    fn effector_examples() {
        let v = vol([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let inside = v.to_body(&Vec3::new(0.5, 0.0, 0.0));
        assert_eq!(effector_clearance(&inside, 0.01, &v).unwrap().distance, 0.0);
        let on_axis = v.to_body(&Vec3::new(2.0, 0.0, 0.0));
        let r = effector_clearance(&on_axis, 0.01, &v).unwrap();
        assert!((r.distance - 1.09).abs() < 1e-12);
        assert!(effector_clearance(&on_axis, 0.0, &v).is_err());
    }

    #[test]
    fn projection_lands_on_closest_boundary_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_vol(&mut rng, 0.5);
        for _ in 0..200 {
            let p = Vec3::from_fn(|_, _| rng.random_range(-1.5..1.5));
            let q = v.project(&p);
            assert!(v.contains(&q).iter().all(|&g| g <= 1e-12));
            let d = (q - p).norm();
            // no sampled surface point is closer
            for i in 0..=60 {
                let x = X_MIN + (X_MAX - X_MIN) * i as f64 / 60.0;
                for k in 0..24 {
                    let s = v.surface_point(x, std::f64::consts::TAU * k as f64 / 24.0);
                    assert!((s - p).norm() >= d - 1e-12);
                }
            }
        }
    }

    #[test]
    fn symmetric_and_rigid_motion_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = random_vol(&mut rng, 1.0);
            let b = random_vol(&mut rng, 1.0);
            let ab = pairwise_clearance(&a, &b).unwrap();
            let ba = pairwise_clearance(&b, &a).unwrap();
            assert!((ab.distance - ba.distance).abs() < 1e-6);

            let axis = Unit::new_normalize(Vec3::new(0.3, -0.8, 0.5));
            let rot = Rotation3::from_axis_angle(&axis, 1.1).into_inner();
            let shift = Vec3::new(2.0, -1.0, 0.4);
            let move_vol = |v: &SlipstreamVolume| SlipstreamVolume::new(v.pose().transformed(&rot, &shift));
            let moved = pairwise_clearance(&move_vol(&a), &move_vol(&b)).unwrap();
            assert!((moved.distance - ab.distance).abs() < 1e-6);
        }
    }

    #[test]
    fn witnesses_are_members_and_match_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let a = random_vol(&mut rng, 1.0);
            let b = random_vol(&mut rng, 1.0);
            let r = pairwise_clearance(&a, &b).unwrap();
            assert!(r.converged);
            assert!(a.contains(&r.p_i).iter().all(|&g| g <= 1e-8));
            assert!(b.contains(&r.p_j).iter().all(|&g| g <= 1e-8));
            assert!(((r.p_i - r.p_j).norm() - r.distance).abs() < 1e-12);
            let sampled = sampled_distance(&a, &b).min(sampled_distance(&b, &a));
            assert!(r.distance <= sampled + 1e-9);
            assert!(r.distance >= sampled - 0.005f64.max(0.02 * sampled));
        }
    }

    #[test]
    fn moving_apart_never_reduces_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut checked = 0;
        while checked < 5 {
            let a = random_vol(&mut rng, 1.0);
            let b = random_vol(&mut rng, 1.0);
            let r = pairwise_clearance(&a, &b).unwrap();
            if r.distance < 1e-6 {
                continue;
            }
            let dir = (r.p_j - r.p_i) / r.distance;
            let mut last = r.distance;
            for k in 1..=5 {
                let shifted = SlipstreamVolume::new(
                    ThrusterPose::new(b.pose().position() + 0.05 * k as f64 * dir, b.pose().direction()).unwrap(),
                );
                let d = pairwise_clearance(&a, &shifted).unwrap().distance;
                assert!(d >= last - 1e-9, "{d} < {last}");
                last = d;
            }
            checked += 1;
        }
    }
}
