//! Thruster-geometry design, thrust allocation and adaptive tracking control for an
//! over-actuated aerial manipulator.

pub mod error;
pub mod geometry;
pub mod params;
pub mod allocation;
pub mod aero;
pub mod dynamics;
pub mod control;
pub mod sim;
pub mod design;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    mod kinematics {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/clearance.md")]
    mod clearance {}
    #[doc = include_str!("../../../book/src/design.md")]
    mod design {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
