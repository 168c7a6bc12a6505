//! Slave robot kinematics: four-strap translation stage, 4-dof wrist and the
//! probe/body contact law. Also the master haptic workspace box.

mod contact;
mod fk;
mod rig;
mod wrist;

use nalgebra::Vector3;
use thiserror::Error;

use crate::phantom::DomainError;

pub use contact::{contact_force, ContactModel};
pub use fk::{forward_kinematics, solve_lengths, FkOptions, FkSolution};
pub use rig::{inverse_kinematics, PlaneSurface, StrapLengths, StrapRig};
pub use wrist::{tangent_frame, wrist_forward, wrist_from_quaternion, WristLimits, WristState};

/// Half extents of the master device workspace (160 x 120 x 120 mm box).
pub const MASTER_WORKSPACE_HALF_EXTENTS_MM: [f64; 3] = [80.0, 60.0, 60.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("strap {strap} length {length_mm:.3} mm outside [{min_mm}, {max_mm}]")]
    WorkspaceExceeded {
        strap: usize,
        length_mm: f64,
        min_mm: f64,
        max_mm: f64,
    },
    #[error(
        "forward kinematics did not converge: residual {residual_mm2:.3e} mm^2 after {iterations} iterations"
    )]
    SolverFailed {
        residual_mm2: f64,
        iterations: usize,
        chart: (f64, f64),
    },
    #[error("wrist joint {joint} = {value:.4} outside +/-{limit:.4}")]
    JointLimit {
        joint: &'static str,
        value: f64,
        limit: f64,
    },
    #[error("invalid rig: {0}")]
    InvalidRig(String),
}

/// Component-wise clamp into the master workspace box.
pub fn clamp_master_workspace(p: &Vector3<f64>) -> Vector3<f64> {
    let [hx, hy, hz] = MASTER_WORKSPACE_HALF_EXTENTS_MM;
    Vector3::new(p.x.clamp(-hx, hx), p.y.clamp(-hy, hy), p.z.clamp(-hz, hz))
}
