//! Frames, Euler-angle kinematics and the end-effector Jacobian.
//!
//! Attitude is roll-pitch-yaw `(phi, theta, psi)`; [`translational_map`] is the
//! body-to-world rotation `Rz(psi) Ry(theta) Rx(phi)`. Twists are expressed in
//! the body frame.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;

/// World "up" axis.
pub const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Below this `|cos(theta)|` the Euler-rate map is refused.
pub const COS_THETA_GUARD: f64 = 1e-6;

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
#[inline]
pub fn skew(a: &Vec3) -> Mat3 {
    #[rustfmt::skip]
    let m = Mat3::new(
        0.0, -a.z, a.y,
        a.z, 0.0, -a.x,
        -a.y, a.x, 0.0,
    );
    m
}

/// Body-to-world rotation `J_t(Theta)`.
pub fn translational_map(angles: &Vec3) -> Mat3 {
    let (sf, cf) = angles.x.sin_cos();
    let (st, ct) = angles.y.sin_cos();
    let (sp, cp) = angles.z.sin_cos();
    #[rustfmt::skip]
    let m = Mat3::new(
        ct * cp, sf * st * cp - sp * cf, st * cf * cp + sf * sp,
        sp * ct, sf * st * sp + cf * cp, st * sp * cf - sf * cp,
        -st,     sf * ct,                cf * ct,
    );
    m
}

fn checked_cos_theta(theta: f64) -> Result<f64> {
    let ct = theta.cos();
    if ct.abs() < COS_THETA_GUARD {
        return Err(Error::NearSingular { cos_theta: ct });
    }
    Ok(ct)
}

/// Body rates to Euler-angle rates, `J_r(Theta)`.
pub fn rotational_map(angles: &Vec3) -> Result<Mat3> {
    let ct = checked_cos_theta(angles.y)?;
    let (sf, cf) = angles.x.sin_cos();
    let tt = angles.y.tan();
    #[rustfmt::skip]
    let m = Mat3::new(
        1.0, sf * tt, cf * tt,
        0.0, cf, -sf,
        0.0, sf / ct, cf / ct,
    );
    Ok(m)
}

/// Closed-form inverse of [`rotational_map`] (Euler rates to body rates).
/// Defined everywhere, including at `theta = pi/2`.
pub fn rotational_map_inverse(angles: &Vec3) -> Mat3 {
    let (sf, cf) = angles.x.sin_cos();
    let (st, ct) = angles.y.sin_cos();
    #[rustfmt::skip]
    let m = Mat3::new(
        1.0, 0.0, -st,
        0.0, cf, sf * ct,
        0.0, -sf, cf * ct,
    );
    m
}

/// Partial derivatives of `J_r` with respect to roll and pitch.
pub fn rotational_map_partials(angles: &Vec3) -> Result<(Mat3, Mat3)> {
    let ct = checked_cos_theta(angles.y)?;
    let (sf, cf) = angles.x.sin_cos();
    let st = angles.y.sin();
    let tt = st / ct;
    let sec2 = 1.0 / (ct * ct);
    #[rustfmt::skip]
    let d_phi = Mat3::new(
        0.0, cf * tt, -sf * tt,
        0.0, -sf, -cf,
        0.0, cf / ct, -sf / ct,
    );
    #[rustfmt::skip]
    let d_theta = Mat3::new(
        0.0, sf * sec2, cf * sec2,
        0.0, 0.0, 0.0,
        0.0, sf * st * sec2, cf * st * sec2,
    );
    Ok((d_phi, d_theta))
}

/// End-effector pose `xi_e`: world position of the end-effector plus attitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6 {
    pub position: Vec3,
    /// `(phi, theta, psi)` in radians.
    pub angles: Vec3,
}

impl Pose6 {
    pub fn new(position: Vec3, angles: Vec3) -> Self {
        Self { position, angles }
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Self {
            position: v.fixed_rows::<3>(0).into(),
            angles: v.fixed_rows::<3>(3).into(),
        }
    }

    pub fn to_vector(&self) -> Vec6 {
        let mut v = Vec6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.angles);
        v
    }

    pub fn pitch(&self) -> f64 {
        self.angles.y
    }
}

/// Body-frame twist `nu = (v, omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist6 {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist6 {
    pub fn new(linear: Vec3, angular: Vec3) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Self {
            linear: v.fixed_rows::<3>(0).into(),
            angular: v.fixed_rows::<3>(3).into(),
        }
    }

    pub fn to_vector(&self) -> Vec6 {
        let mut v = Vec6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.linear);
        v.fixed_rows_mut::<3>(3).copy_from(&self.angular);
        v
    }
}

fn assemble(top_left: &Mat3, top_right: &Mat3, bottom_right: &Mat3) -> Mat6 {
    let mut j = Mat6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(top_left);
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(top_right);
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(bottom_right);
    j
}

/// `J(xi_e)`, mapping the body twist to `(p_e_dot, Theta_dot)`.
///
/// Block form `[J_t, -J_t S(r_e); 0, J_r]`, with `det J = 1 / cos(theta)`.
pub fn system_jacobian(pose: &Pose6, r_e: &Vec3) -> Result<Mat6> {
    let jt = translational_map(&pose.angles);
    let jr = rotational_map(&pose.angles)?;
    Ok(assemble(&jt, &(-jt * skew(r_e)), &jr))
}

/// Closed-form inverse of [`system_jacobian`]: `[J_t^T, S(r_e) J_r^-1; 0, J_r^-1]`.
pub fn system_jacobian_inverse(pose: &Pose6, r_e: &Vec3) -> Result<Mat6> {
    checked_cos_theta(pose.angles.y)?;
    let jt = translational_map(&pose.angles);
    let jr_inv = rotational_map_inverse(&pose.angles);
    Ok(assemble(&jt.transpose(), &(skew(r_e) * jr_inv), &jr_inv))
}

/// Time derivative of `J(xi_e)` along the motion generated by `twist`.
///
/// Uses `d/dt J_t = J_t S(omega)` and
/// `d/dt J_r = dJ_r/dphi * phi_dot + dJ_r/dtheta * theta_dot`.
pub fn jacobian_dot(pose: &Pose6, twist: &Twist6, r_e: &Vec3) -> Result<Mat6> {
    let jt = translational_map(&pose.angles);
    let jr = rotational_map(&pose.angles)?;
    let (d_phi, d_theta) = rotational_map_partials(&pose.angles)?;
    let rates = jr * twist.angular;
    let jt_dot = jt * skew(&twist.angular);
    let jr_dot = d_phi * rates.x + d_theta * rates.y;
    Ok(assemble(&jt_dot, &(-jt_dot * skew(r_e)), &jr_dot))
}
