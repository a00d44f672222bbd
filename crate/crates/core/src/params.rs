//! Vehicle parameters: the JSON parameter file, thruster layouts and rigid-body data.
//!
//! The bundled reference vehicle ([`ParameterFile::reference`]) is stored with the
//! decimal values exactly as published, including the oddities noted in the
//! guide (the `r_3` entry and the "structure volume" diagnostic). Printed thrust
//! directions are not exactly unit length; they are normalized when a
//! [`ThrusterLayout`] is built, and the raw values stay available on the file.

use std::path::Path;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{skew, Mat3, Vec3};

const REFERENCE_VEHICLE: &str = include_str!("../data/reference_vehicle.json");

/// Tolerance on `|F_hat| = 1` for a [`ThrusterPose`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// One thruster: position `r_i` and unit thrust direction `F_hat_i`, both in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrusterPose {
    position: Vec3,
    direction: Vec3,
}

impl ThrusterPose {
    /// Builds a pose, normalizing `direction`. Fails if the direction is
    /// (numerically) zero or not finite.
    pub fn new(position: Vec3, direction: Vec3) -> Result<Self> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > UNIT_TOLERANCE) || !position.iter().all(|x| x.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "thruster pose needs a finite position and non-zero direction, got r={position:?} F={direction:?}"
            )));
        }
        Ok(Self {
            position,
            direction: direction / norm,
        })
    }

    /// Builds a pose whose direction must already be unit length to [`UNIT_TOLERANCE`].
    pub fn from_unit(position: Vec3, direction: Vec3) -> Result<Self> {
        if (direction.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "direction {direction:?} is not unit length"
            )));
        }
        Self::new(position, direction)
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    /// The same pose after a rigid motion `p -> rotation * p + translation`.
    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> Self {
        Self {
            position: rotation * self.position + translation,
            direction: (rotation * self.direction).normalize(),
        }
    }
}

/// `n` primary thrusters plus the auxiliary thruster that makes every signed
/// thrust solution realizable with non-negative thrusts.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrusterLayout {
    pub primary: Vec<ThrusterPose>,
    pub auxiliary: ThrusterPose,
    /// `m_thr`, kg.
    pub thruster_mass: f64,
    /// `lambda_max`, N.
    pub max_thrust: f64,
    /// Reaction-torque coefficient `mu` (m).
    pub torque_coeff: f64,
}

impl ThrusterLayout {
    pub fn new(
        primary: Vec<ThrusterPose>,
        auxiliary: ThrusterPose,
        thruster_mass: f64,
        max_thrust: f64,
        torque_coeff: f64,
    ) -> Result<Self> {
        if primary.len() < 6 {
            return Err(Error::InvalidParameter(format!(
                "at least 6 primary thrusters are needed, got {}",
                primary.len()
            )));
        }
        if !(thruster_mass >= 0.0 && max_thrust > 0.0 && torque_coeff.is_finite()) {
            return Err(Error::InvalidParameter(
                "thruster mass must be >= 0 and max thrust > 0".into(),
            ));
        }
        Ok(Self {
            primary,
            auxiliary,
            thruster_mass,
            max_thrust,
            torque_coeff,
        })
    }

    /// Primary thrusters followed by the auxiliary one.
    pub fn all(&self) -> impl Iterator<Item = &ThrusterPose> {
        self.primary.iter().chain(std::iter::once(&self.auxiliary))
    }

    pub fn count(&self) -> usize {
        self.primary.len() + 1
    }

    /// Angle (rad) between the stored auxiliary direction and `-sum F_hat_i`.
    /// Zero for an exactly consistent layout.
    pub fn auxiliary_direction_error(&self) -> f64 {
        let sum: Vec3 = self.primary.iter().map(|p| p.direction()).sum();
        let ideal = -sum;
        if ideal.norm() < UNIT_TOLERANCE {
            return std::f64::consts::PI;
        }
        ideal.normalize().dot(&self.auxiliary.direction()).clamp(-1.0, 1.0).acos()
    }
}

/// Mass properties of the whole vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBodyParams {
    /// Total mass `m`, kg.
    pub mass: f64,
    /// Inertia about the centre of gravity, kg m^2.
    pub inertia_g: Mat3,
    /// Centre of gravity in the body frame.
    pub r_g: Vec3,
    /// Centre of gravity of the structure without the thrusters.
    pub r_s: Vec3,
    /// End-effector position in the body frame.
    pub r_e: Vec3,
    pub gravity: f64,
}

impl RigidBodyParams {
    pub fn new(
        mass: f64,
        inertia_g: Mat3,
        r_g: Vec3,
        r_s: Vec3,
        r_e: Vec3,
        gravity: f64,
    ) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass must be > 0, got {mass}")));
        }
        if (inertia_g - inertia_g.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter("inertia_G is not symmetric".into()));
        }
        if Cholesky::new(inertia_g).is_none() {
            return Err(Error::NotPositiveDefinite("inertia_G"));
        }
        let body = Self {
            mass,
            inertia_g,
            r_g,
            r_s,
            r_e,
            gravity,
        };
        if Cholesky::new(body.inertia_body()).is_none() {
            return Err(Error::NotPositiveDefinite("I_B"));
        }
        Ok(body)
    }

    /// Inertia about the body-frame origin, `I_B = I_G - m S(r_G) S(r_G)`.
    pub fn inertia_body(&self) -> Mat3 {
        let s = skew(&self.r_g);
        self.inertia_g - self.mass * s * s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrusterEntry {
    pub r: [f64; 3],
    #[serde(rename = "F_hat")]
    pub f_hat: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotorCoefficients {
    #[serde(rename = "C_lambda")]
    pub c_lambda: f64,
    #[serde(rename = "C_Q")]
    pub c_q: f64,
    pub radius_m: f64,
}

/// On-disk parameter document. Field names follow the JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterFile {
    #[serde(default = "default_version")]
    pub version: u32,
    pub mass_kg: f64,
    pub thruster_mass_kg: f64,
    #[serde(rename = "inertia_G")]
    pub inertia_g: [[f64; 3]; 3],
    #[serde(rename = "r_G")]
    pub r_g: [f64; 3],
    pub r_s: [f64; 3],
    pub r_e: [f64; 3],
    pub g: f64,
    /// Published scalar `J(r)`; kept as a diagnostic, not used in any model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure_volume: Option<f64>,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotor: Option<RotorCoefficients>,
    #[serde(rename = "lambda_max_N")]
    pub lambda_max_n: f64,
    #[serde(rename = "max_torque_Nm", default, skip_serializing_if = "Option::is_none")]
    pub max_torque_nm: Option<f64>,
    /// Primary thrusters first; the last entry is the auxiliary thruster.
    pub thrusters: Vec<ThrusterEntry>,
}

fn default_version() -> u32 {
    1
}

fn vec3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o.clone(),
    }
}

impl ParameterFile {
    /// The bundled reference vehicle.
    pub fn reference() -> Self {
        serde_json::from_str(REFERENCE_VEHICLE).expect("bundled parameter file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("parameter file", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("parameter file", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Returns a copy with `overrides` deep-merged on top. Objects merge key by
    /// key; any other value (arrays included) replaces the original.
    pub fn with_overrides(&self, overrides: &Value) -> Result<Self> {
        let mut doc = serde_json::to_value(self).map_err(|e| Error::json("parameter file", e))?;
        merge(&mut doc, overrides);
        serde_json::from_value(doc).map_err(|e| Error::json("parameter overrides", e))
    }

    /// Sum of the printed (unnormalized) primary directions.
    pub fn raw_primary_direction_sum(&self) -> Vec3 {
        let n = self.thrusters.len().saturating_sub(1);
        self.thrusters[..n].iter().map(|t| vec3(&t.f_hat)).sum()
    }

    pub fn layout(&self) -> Result<ThrusterLayout> {
        if self.thrusters.len() < 7 {
            return Err(Error::InvalidParameter(format!(
                "expected at least 6 primary thrusters and 1 auxiliary, got {} entries",
                self.thrusters.len()
            )));
        }
        let mut poses = self
            .thrusters
            .iter()
            .map(|t| ThrusterPose::new(vec3(&t.r), vec3(&t.f_hat)))
            .collect::<Result<Vec<_>>>()?;
        let auxiliary = poses.pop().expect("non-empty");
        ThrusterLayout::new(
            poses,
            auxiliary,
            self.thruster_mass_kg,
            self.lambda_max_n,
            self.mu,
        )
    }

    pub fn body(&self) -> Result<RigidBodyParams> {
        let i = &self.inertia_g;
        #[rustfmt::skip]
        let inertia = Mat3::new(
            i[0][0], i[0][1], i[0][2],
            i[1][0], i[1][1], i[1][2],
            i[2][0], i[2][1], i[2][2],
        );
        RigidBodyParams::new(
            self.mass_kg,
            inertia,
            vec3(&self.r_g),
            vec3(&self.r_s),
            vec3(&self.r_e),
            self.g,
        )
    }

    /// Replaces the thrusters and end-effector position with those of `layout` / `r_e`.
    pub fn with_geometry(&self, layout: &ThrusterLayout, r_e: &Vec3) -> Self {
        let mut out = self.clone();
        out.thrusters = layout
            .all()
            .map(|p| ThrusterEntry {
                r: p.position().into(),
                f_hat: p.direction().into(),
            })
            .collect();
        out.r_e = (*r_e).into();
        out.structure_volume = None;
        out
    }
}
