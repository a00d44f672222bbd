//! Rigid-body model of the vehicle and a fixed-step RK4 integrator.
//!
//! State is the end-effector pose `xi_e = (p_e, Theta)` and the body twist
//! `nu = (v, omega)`:
//!
//! ```text
//! xi_e_dot = J(xi_e) nu
//! nu_dot   = B(xi_e, nu) + N diag(theta*) lambda + d(xi_e, nu, t)
//! ```
//!
//! with `B = -M^-1 C(nu) nu + M^-1 g(Theta)` and `N = M^-1 [F; E + mu F]`.

use std::fmt;
use std::sync::Arc;

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::geometry::{
    skew, system_jacobian, translational_map, Mat3, Mat6, Pose6, Twist6, Vec3, Vec6, E3,
};
use crate::params::{RigidBodyParams, ThrusterLayout};

/// Runs abort once `|theta|` reaches this pitch.
pub const PITCH_LIMIT: f64 = std::f64::consts::FRAC_PI_2 - 0.01;

/// Admissible actuator effectiveness range.
pub const EFFECTIVENESS_BOUNDS: (f64, f64) = (0.1, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub pose: Pose6,
    pub twist: Twist6,
    pub t: f64,
}

impl SimState {
    pub fn new(pose: Pose6, twist: Twist6, t: f64) -> Self {
        Self { pose, twist, t }
    }

    /// Fails with [`Error::NearSingular`] once the pitch leaves the valid region.
    pub fn check_pitch(&self) -> Result<()> {
        let theta = self.pose.pitch();
        if !theta.is_finite() || theta.abs() >= PITCH_LIMIT {
            return Err(Error::NearSingular {
                cos_theta: theta.cos(),
            });
        }
        Ok(())
    }
}

/// Acceleration-level disturbance `d(xi_e, nu, t)`.
pub trait Disturbance: Send + Sync {
    fn eval(&self, pose: &Pose6, twist: &Twist6, t: f64) -> Vec6;
}

impl<F> Disturbance for F
where
    F: Fn(&Pose6, &Twist6, f64) -> Vec6 + Send + Sync,
{
    fn eval(&self, pose: &Pose6, twist: &Twist6, t: f64) -> Vec6 {
        self(pose, twist, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoDisturbance;

impl Disturbance for NoDisturbance {
    fn eval(&self, _: &Pose6, _: &Twist6, _: f64) -> Vec6 {
        Vec6::zeros()
    }
}

/// One channel `bias + a_sin sin(omega t) + a_cos cos(omega t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Harmonic {
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub a_sin: f64,
    #[serde(default)]
    pub a_cos: f64,
    #[serde(default)]
    pub omega: f64,
}

impl Harmonic {
    pub fn eval(&self, t: f64) -> f64 {
        let mut out = self.bias;
        if self.a_sin != 0.0 {
            out += self.a_sin * (self.omega * t).sin();
        }
        if self.a_cos != 0.0 {
            out += self.a_cos * (self.omega * t).cos();
        }
        out
    }
}

/// Time-only disturbance with one [`Harmonic`] per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicDisturbance(pub [Harmonic; 6]);

impl HarmonicDisturbance {
    /// `(0.5, 0.4 sin 2t, 0.4 cos t, 0.5, 0.5 cos 0.8t, 0.6 sin t)`.
    pub fn benchmark() -> Self {
        let h = |bias, a_sin, a_cos, omega| Harmonic {
            bias,
            a_sin,
            a_cos,
            omega,
        };
        Self([
            h(0.5, 0.0, 0.0, 0.0),
            h(0.0, 0.4, 0.0, 2.0),
            h(0.0, 0.0, 0.4, 1.0),
            h(0.5, 0.0, 0.0, 0.0),
            h(0.0, 0.0, 0.5, 0.8),
            h(0.0, 0.6, 0.0, 1.0),
        ])
    }
}

impl Disturbance for HarmonicDisturbance {
    fn eval(&self, _: &Pose6, _: &Twist6, t: f64) -> Vec6 {
        Vec6::from_fn(|i, _| self.0[i].eval(t))
    }
}

/// `M = [[m I, -m S(r_G)], [m S(r_G), I_B]]`.
pub fn inertia_matrix(body: &RigidBodyParams) -> Result<Mat6> {
    let m = body.mass;
    let s = skew(&body.r_g);
    let mut out = Mat6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&(m * Mat3::identity()));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-m * s));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(m * s));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&body.inertia_body());
    if Cholesky::new(out).is_none() {
        return Err(Error::NotPositiveDefinite("M"));
    }
    Ok(out)
}

/// Skew-symmetric Coriolis-centripetal matrix
/// `[[m S(w), -m S(w) S(r_G)], [m S(r_G) S(w), -S(I_B w)]]`.
pub fn coriolis_matrix(body: &RigidBodyParams, twist: &Twist6) -> Mat6 {
    let m = body.mass;
    let sw = skew(&twist.angular);
    let sg = skew(&body.r_g);
    let mut out = Mat6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&(m * sw));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-m * sw * sg));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(m * sg * sw));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(-skew(&(body.inertia_body() * twist.angular))));
    out
}

/// `[F; E + mu F]` over the primary thrusters.
pub fn thrust_map(layout: &ThrusterLayout) -> Result<Mat6> {
    if layout.primary.len() != 6 {
        return Err(Error::InvalidParameter(format!(
            "the dynamics use exactly 6 primary thrusters, got {}",
            layout.primary.len()
        )));
    }
    let mut out = Mat6::zeros();
    for (j, p) in layout.primary.iter().enumerate() {
        let f = p.direction();
        let t = p.position().cross(&f) + layout.torque_coeff * f;
        out.fixed_view_mut::<3, 1>(0, j).copy_from(&f);
        out.fixed_view_mut::<3, 1>(3, j).copy_from(&t);
    }
    Ok(out)
}

/// Gravity wrench `-m g [I; S(r_G)] J_t^T e_3`.
pub fn gravity_wrench(body: &RigidBodyParams, angles: &Vec3) -> Vec6 {
    let down = -body.mass * body.gravity * translational_map(angles).transpose() * E3;
    let torque = body.r_g.cross(&down);
    Vec6::new(down.x, down.y, down.z, torque.x, torque.y, torque.z)
}

/// Propulsion, reaction-torque and gravity wrench on the body.
pub fn body_wrench(
    pose: &Pose6,
    lambda: &Vec6,
    layout: &ThrusterLayout,
    body: &RigidBodyParams,
) -> Result<Vec6> {
    Ok(thrust_map(layout)? * lambda + gravity_wrench(body, &pose.angles))
}

/// Continuous-time plant. Immutable after construction.
#[derive(Clone)]
pub struct DynamicsModel {
    body: RigidBodyParams,
    layout: ThrusterLayout,
    inertia: Mat6,
    inertia_inv: Mat6,
    thrust_map: Mat6,
    n_map: Mat6,
    n_inv: Mat6,
    effectiveness: Vec6,
    disturbance: Arc<dyn Disturbance>,
}

impl fmt::Debug for DynamicsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicsModel")
            .field("body", &self.body)
            .field("layout", &self.layout)
            .field("effectiveness", &self.effectiveness)
            .finish_non_exhaustive()
    }
}

impl DynamicsModel {
    pub fn new(
        body: RigidBodyParams,
        layout: ThrusterLayout,
        effectiveness: Vec6,
        disturbance: Arc<dyn Disturbance>,
    ) -> Result<Self> {
        let (lo, hi) = EFFECTIVENESS_BOUNDS;
        if let Some((i, &v)) = effectiveness
            .iter()
            .enumerate()
            .find(|(_, v)| !(lo..=hi).contains(*v))
        {
            return Err(Error::InvalidParameter(format!(
                "effectiveness {i} = {v} outside [{lo}, {hi}]"
            )));
        }
        let inertia = inertia_matrix(&body)?;
        let inertia_inv = Cholesky::new(inertia)
            .ok_or(Error::NotPositiveDefinite("M"))?
            .inverse();
        let thrust_map = thrust_map(&layout)?;
        let n_map = inertia_inv * thrust_map;
        let n_inv = n_map
            .lu()
            .try_inverse()
            .ok_or(Error::RankDeficient { sigma_min: 0.0 })?;
        Ok(Self {
            body,
            layout,
            inertia,
            inertia_inv,
            thrust_map,
            n_map,
            n_inv,
            effectiveness,
            disturbance,
        })
    }

    /// Full effectiveness and no disturbance.
    pub fn nominal(body: RigidBodyParams, layout: ThrusterLayout) -> Result<Self> {
        Self::new(body, layout, Vec6::repeat(1.0), Arc::new(NoDisturbance))
    }

    pub fn body(&self) -> &RigidBodyParams {
        &self.body
    }

    pub fn layout(&self) -> &ThrusterLayout {
        &self.layout
    }

    pub fn inertia(&self) -> &Mat6 {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Mat6 {
        &self.inertia_inv
    }

    pub fn thrust_map(&self) -> &Mat6 {
        &self.thrust_map
    }

    /// `N = M^-1 [F; E + mu F]`.
    pub fn n_map(&self) -> &Mat6 {
        &self.n_map
    }

    pub fn n_inv(&self) -> &Mat6 {
        &self.n_inv
    }

    pub fn effectiveness(&self) -> &Vec6 {
        &self.effectiveness
    }

    pub fn disturbance(&self) -> &dyn Disturbance {
        self.disturbance.as_ref()
    }

    /// `B = -M^-1 C(nu) nu + M^-1 g(Theta)`.
    pub fn drift(&self, pose: &Pose6, twist: &Twist6) -> Vec6 {
        let nu = twist.to_vector();
        self.inertia_inv
            * (gravity_wrench(&self.body, &pose.angles) - coriolis_matrix(&self.body, twist) * nu)
    }

    /// `(xi_e_dot, nu_dot)` for thrusts `lambda` held over the step.
    pub fn state_derivative(&self, s: &SimState, lambda: &Vec6) -> Result<(Vec6, Vec6)> {
        let xi_dot = system_jacobian(&s.pose, &self.body.r_e)? * s.twist.to_vector();
        let nu_dot = self.drift(&s.pose, &s.twist)
            + self.n_map * self.effectiveness.component_mul(lambda)
            + self.disturbance.eval(&s.pose, &s.twist, s.t);
        Ok((xi_dot, nu_dot))
    }

    /// `1/2 nu^T M nu`.
    pub fn kinetic_energy(&self, twist: &Twist6) -> f64 {
        let nu = twist.to_vector();
        0.5 * nu.dot(&(self.inertia * nu))
    }

    /// Thrusts that hold the vehicle still at attitude `angles`.
    pub fn hover_thrust(&self, angles: &Vec3) -> Result<Vec6> {
        let lu = self.thrust_map.lu();
        lu.solve(&(-gravity_wrench(&self.body, angles)))
            .ok_or(Error::RankDeficient { sigma_min: 0.0 })
    }
}

/// One classical RK4 step with `lambda` held constant across the step.
pub fn step_rk4(s: &SimState, lambda: &Vec6, model: &DynamicsModel, dt: f64) -> Result<SimState> {
    let at = |base: &SimState, k: &(Vec6, Vec6), h: f64| SimState {
        pose: Pose6::from_vector(&(base.pose.to_vector() + h * k.0)),
        twist: Twist6::from_vector(&(base.twist.to_vector() + h * k.1)),
        t: base.t + h,
    };
    let k1 = model.state_derivative(s, lambda)?;
    let k2 = model.state_derivative(&at(s, &k1, 0.5 * dt), lambda)?;
    let k3 = model.state_derivative(&at(s, &k2, 0.5 * dt), lambda)?;
    let k4 = model.state_derivative(&at(s, &k3, dt), lambda)?;
    let xi = s.pose.to_vector() + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    let nu = s.twist.to_vector() + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    Ok(SimState {
        pose: Pose6::from_vector(&xi),
        twist: Twist6::from_vector(&nu),
        t: s.t + dt,
    })
}
