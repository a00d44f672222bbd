//! Adaptive backstepping tracking controller.
//!
//! Step 1 shapes the pose error `z1 = xi_e - xi_des` through the virtual twist
//! `nu_des = J^-1 (xi_dot_des - K1 z1)`. Step 2 drives `z2 = nu - nu_des` to zero
//! with
//!
//! ```text
//! lambda = theta_hat^-1 N^-1 (nu_dot_des - B - J^T z1 - sgn(z2) Delta_hat - K2 z2)
//! ```
//!
//! while `Delta_hat` (disturbance bounds, sigma-modified) and `theta_hat`
//! (actuator effectiveness, projected) adapt.

use std::path::Path;

use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsModel, SimState};
use crate::error::{Error, Result};
use crate::geometry::{jacobian_dot, system_jacobian, system_jacobian_inverse, Mat6, Vec3, Vec6};

/// Desired pose with its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSignal {
    pub pose: Vec6,
    pub velocity: Vec6,
    pub acceleration: Vec6,
}

impl ReferenceSignal {
    pub fn hold(pose: Vec6) -> Self {
        Self {
            pose,
            velocity: Vec6::zeros(),
            acceleration: Vec6::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignFunction {
    Exact,
    /// `tanh(z / width)`.
    Tanh(f64),
}

impl SignFunction {
    pub fn apply(&self, z: &Vec6) -> Vec6 {
        match *self {
            SignFunction::Exact => z.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }),
            SignFunction::Tanh(w) => z.map(|v| (v / w).tanh()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub k1: Mat6,
    pub k2: Mat6,
    pub gamma_delta: Vec6,
    pub gamma_theta: Vec6,
    pub sigma: f64,
    pub delta: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub sign: SignFunction,
}

/// On-disk gain file. Gains are diagonals; `Gamma_*` accept a scalar too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainFile {
    #[serde(rename = "K1")]
    pub k1: [f64; 6],
    #[serde(rename = "K2")]
    pub k2: [f64; 6],
    #[serde(rename = "Gamma_Delta")]
    pub gamma_delta: Diagonal,
    #[serde(rename = "Gamma_theta")]
    pub gamma_theta: Diagonal,
    pub sigma: f64,
    pub delta: f64,
    #[serde(default = "default_theta_bounds")]
    pub theta_bounds: [f64; 2],
    /// Boundary-layer width for `tanh` smoothing; absent or null means exact `sgn`.
    #[serde(default)]
    pub sign_smoothing: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Diagonal {
    Scalar(f64),
    Entries([f64; 6]),
}

impl Diagonal {
    pub fn to_vec(self) -> Vec6 {
        match self {
            Diagonal::Scalar(s) => Vec6::repeat(s),
            Diagonal::Entries(e) => Vec6::from(e),
        }
    }
}

fn default_theta_bounds() -> [f64; 2] {
    [0.1, 1.0]
}

fn check_spd(m: &Mat6, name: &'static str) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-12 {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    if Cholesky::new(*m).is_none() {
        return Err(Error::NotPositiveDefinite(name));
    }
    Ok(())
}

impl ControllerGains {
    pub fn new(
        k1: Mat6,
        k2: Mat6,
        gamma_delta: Vec6,
        gamma_theta: Vec6,
        sigma: f64,
        delta: f64,
        theta_bounds: (f64, f64),
        sign: SignFunction,
    ) -> Result<Self> {
        check_spd(&k1, "K1")?;
        check_spd(&k2, "K2")?;
        let positive = |v: &Vec6| v.iter().all(|&x| x > 0.0);
        if !positive(&gamma_delta) || !positive(&gamma_theta) {
            return Err(Error::InvalidParameter("adaptation gains must be > 0".into()));
        }
        let (theta_min, theta_max) = theta_bounds;
        if !(sigma > 0.0 && delta > 0.0 && theta_min - delta > 0.0 && theta_max > theta_min) {
            return Err(Error::InvalidParameter(format!(
                "need sigma > 0, delta > 0 and 0 < theta_min - delta < theta_max; got sigma={sigma}, delta={delta}, bounds=({theta_min}, {theta_max})"
            )));
        }
        if let SignFunction::Tanh(w) = sign {
            if !(w > 0.0) {
                return Err(Error::InvalidParameter("sign smoothing width must be > 0".into()));
            }
        }
        Ok(Self {
            k1,
            k2,
            gamma_delta,
            gamma_theta,
            sigma,
            delta,
            theta_min,
            theta_max,
            sign,
        })
    }

    /// Gains of the benchmark tracking scenario.
    pub fn benchmark() -> Self {
        Self::from_file(&GainFile::benchmark()).expect("benchmark gains are valid")
    }

    pub fn from_file(f: &GainFile) -> Result<Self> {
        Self::new(
            Mat6::from_diagonal(&Vec6::from(f.k1)),
            Mat6::from_diagonal(&Vec6::from(f.k2)),
            f.gamma_delta.to_vec(),
            f.gamma_theta.to_vec(),
            f.sigma,
            f.delta,
            (f.theta_bounds[0], f.theta_bounds[1]),
            f.sign_smoothing.map_or(SignFunction::Exact, SignFunction::Tanh),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GainFile =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        Self::from_file(&file)
    }

    /// Allowed range of each effectiveness estimate.
    pub fn estimate_band(&self) -> (f64, f64) {
        (self.theta_min - self.delta, self.theta_max + self.delta)
    }
}

impl GainFile {
    pub fn benchmark() -> Self {
        Self {
            k1: [1.0, 1.0, 1.0, 0.3, 0.3, 0.3],
            k2: [8.0; 6],
            gamma_delta: Diagonal::Scalar(13.0),
            gamma_theta: Diagonal::Scalar(0.1),
            sigma: 1.5,
            delta: 0.05,
            theta_bounds: default_theta_bounds(),
            sign_smoothing: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    /// Disturbance-bound estimates, kept `>= 0`.
    pub delta_hat: Vec6,
    /// Diagonal effectiveness estimates.
    pub theta_hat: Vec6,
}

impl EstimatorState {
    pub fn new(delta_hat: Vec6, theta_hat: Vec6) -> Self {
        Self {
            delta_hat,
            theta_hat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingErrors {
    pub z1: Vec6,
    pub z2: Vec6,
    pub nu_des: Vec6,
}

/// `z1 = xi_e - xi_des`, `nu_des = J^-1 (xi_dot_des - K1 z1)`, `z2 = nu - nu_des`.
pub fn tracking_errors(
    s: &SimState,
    reference: &ReferenceSignal,
    gains: &ControllerGains,
    r_e: &Vec3,
) -> Result<TrackingErrors> {
    let z1 = s.pose.to_vector() - reference.pose;
    let j_inv = system_jacobian_inverse(&s.pose, r_e)?;
    let nu_des = j_inv * (reference.velocity - gains.k1 * z1);
    Ok(TrackingErrors {
        z1,
        z2: s.twist.to_vector() - nu_des,
        nu_des,
    })
}

/// `nu_dot_des = J^-1 (xi_ddot_des - J_dot nu_des - K1 z1_dot)` with
/// `z1_dot = J nu - xi_dot_des`.
pub fn virtual_accel(
    s: &SimState,
    reference: &ReferenceSignal,
    errors: &TrackingErrors,
    gains: &ControllerGains,
    r_e: &Vec3,
) -> Result<Vec6> {
    let j = system_jacobian(&s.pose, r_e)?;
    let j_inv = system_jacobian_inverse(&s.pose, r_e)?;
    let j_dot = jacobian_dot(&s.pose, &s.twist, r_e)?;
    let z1_dot = j * s.twist.to_vector() - reference.velocity;
    Ok(j_inv * (reference.acceleration - j_dot * errors.nu_des - gains.k1 * z1_dot))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub lambda: Vec6,
    pub errors: TrackingErrors,
    pub nu_des_dot: Vec6,
    /// The bracketed term `N theta_hat lambda` must reproduce.
    pub demand: Vec6,
}

fn check_estimates(est: &EstimatorState, gains: &ControllerGains) -> Result<()> {
    let (lo, hi) = gains.estimate_band();
    for (index, &value) in est.theta_hat.iter().enumerate() {
        if !(value >= lo - 1e-12 && value <= hi + 1e-12) {
            return Err(Error::EstimateOutOfRange { index, value });
        }
    }
    Ok(())
}

/// Thrust command for the six primary thrusters.
pub fn control_law(
    s: &SimState,
    reference: &ReferenceSignal,
    est: &EstimatorState,
    gains: &ControllerGains,
    model: &DynamicsModel,
) -> Result<ControlOutput> {
    check_estimates(est, gains)?;
    let r_e = model.body().r_e;
    let errors = tracking_errors(s, reference, gains, &r_e)?;
    let nu_des_dot = virtual_accel(s, reference, &errors, gains, &r_e)?;
    let j = system_jacobian(&s.pose, &r_e)?;
    let demand = nu_des_dot
        - model.drift(&s.pose, &s.twist)
        - j.transpose() * errors.z1
        - gains.sign.apply(&errors.z2).component_mul(&est.delta_hat)
        - gains.k2 * errors.z2;
    let lambda = (model.n_inv() * demand).component_div(&est.theta_hat);
    Ok(ControlOutput {
        lambda,
        errors,
        nu_des_dot,
        demand,
    })
}

/// Projection of the drive `y` for an estimate `theta_hat` in `[lo, hi]`
/// widened by `delta`: unchanged inside `[lo, hi]` or when pointing inward,
/// linearly ramped to zero across the `delta` band when pointing outward.
pub fn projection(theta_hat: f64, y: f64, lo: f64, hi: f64, delta: f64) -> f64 {
    if theta_hat > hi && y > 0.0 {
        (1.0 + (hi - theta_hat) / delta).max(0.0) * y
    } else if theta_hat < lo && y < 0.0 {
        (1.0 + (theta_hat - lo) / delta).max(0.0) * y
    } else {
        y
    }
}

/// Continuous-time adaptation rates `(Delta_hat_dot, theta_hat_dot)`.
pub fn estimate_rates(
    est: &EstimatorState,
    z2: &Vec6,
    lambda: &Vec6,
    gains: &ControllerGains,
    model: &DynamicsModel,
) -> (Vec6, Vec6) {
    let drive = gains.sign.apply(z2).component_mul(z2) - gains.sigma * est.delta_hat;
    let delta_dot = gains.gamma_delta.component_mul(&drive);
    let y = (model.n_map().transpose() * z2).component_mul(lambda);
    let theta_dot = Vec6::from_fn(|i, _| {
        gains.gamma_theta[i]
            * projection(est.theta_hat[i], y[i], gains.theta_min, gains.theta_max, gains.delta)
    });
    (delta_dot, theta_dot)
}

/// One explicit-Euler adaptation step. `Delta_hat` is clamped at zero and
/// `theta_hat` to the projection band.
pub fn update_estimates(
    est: &EstimatorState,
    z2: &Vec6,
    lambda: &Vec6,
    gains: &ControllerGains,
    model: &DynamicsModel,
    dt: f64,
) -> EstimatorState {
    let (delta_dot, theta_dot) = estimate_rates(est, z2, lambda, gains, model);
    let (lo, hi) = gains.estimate_band();
    EstimatorState {
        delta_hat: (est.delta_hat + dt * delta_dot).map(|v| v.max(0.0)),
        theta_hat: (est.theta_hat + dt * theta_dot).map(|v| v.clamp(lo, hi)),
    }
}

/// `V2_dot` along the closed loop at `s`, for true disturbance bounds
/// `true_delta`:
/// `z1.z1_dot + z2.z2_dot + (Delta_hat - Delta) Gamma_Delta^-1 Delta_hat_dot
/// + (theta_hat - theta*) Gamma_theta^-1 theta_hat_dot`.
pub fn lyapunov_rate(
    s: &SimState,
    reference: &ReferenceSignal,
    est: &EstimatorState,
    gains: &ControllerGains,
    model: &DynamicsModel,
    true_delta: &Vec6,
) -> Result<f64> {
    let out = control_law(s, reference, est, gains, model)?;
    let (xi_dot, nu_dot) = model.state_derivative(s, &out.lambda)?;
    let z1_dot = xi_dot - reference.velocity;
    let z2_dot = nu_dot - out.nu_des_dot;
    let (delta_dot, theta_dot) = estimate_rates(est, &out.errors.z2, &out.lambda, gains, model);
    let delta_err = est.delta_hat - true_delta;
    let theta_err = est.theta_hat - model.effectiveness();
    Ok(out.errors.z1.dot(&z1_dot)
        + out.errors.z2.dot(&z2_dot)
        + delta_err.dot(&delta_dot.component_div(&gains.gamma_delta))
        + theta_err.dot(&theta_dot.component_div(&gains.gamma_theta)))
}

/// `-lambda_min(K1) |z1|^2 - lambda_min(K2) |z2|^2`.
pub fn lyapunov_bound(errors: &TrackingErrors, gains: &ControllerGains) -> f64 {
    let min_eig = |m: &Mat6| SymmetricEigen::new(*m).eigenvalues.min();
    -min_eig(&gains.k1) * errors.z1.norm_squared() - min_eig(&gains.k2) * errors.z2.norm_squared()
}

/// Controller plus its adaptive state.
#[derive(Debug, Clone)]
pub struct Controller {
    gains: ControllerGains,
    estimates: EstimatorState,
}

impl Controller {
    pub fn new(gains: ControllerGains, estimates: EstimatorState) -> Result<Self> {
        check_estimates(&estimates, &gains)?;
        Ok(Self { gains, estimates })
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn estimates(&self) -> &EstimatorState {
        &self.estimates
    }

    pub fn command(
        &self,
        s: &SimState,
        reference: &ReferenceSignal,
        model: &DynamicsModel,
    ) -> Result<ControlOutput> {
        control_law(s, reference, &self.estimates, &self.gains, model)
    }

    pub fn adapt(&mut self, out: &ControlOutput, model: &DynamicsModel, dt: f64) {
        self.estimates = update_estimates(
            &self.estimates,
            &out.errors.z2,
            &out.lambda,
            &self.gains,
            model,
            dt,
        );
    }
}
