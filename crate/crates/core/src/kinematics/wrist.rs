use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::KinematicsError;
use crate::phantom::ProbePose;

/// Wrist joint values: three rotations and the fine axial translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WristState {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub fine_d: f64,
}

/// Symmetric joint limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WristLimits {
    pub roll_rad: f64,
    pub pitch_rad: f64,
    pub yaw_rad: f64,
    pub fine_travel_mm: f64,
}

impl Default for WristLimits {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            roll_rad: PI / 2.0,
            pitch_rad: PI / 3.0,
            yaw_rad: PI,
            fine_travel_mm: 20.0,
        }
    }
}

impl WristLimits {
    pub fn check(&self, w: &WristState) -> Result<(), KinematicsError> {
        let joints = [
            ("roll", w.roll, self.roll_rad),
            ("pitch", w.pitch, self.pitch_rad),
            ("yaw", w.yaw, self.yaw_rad),
            ("fine_d", w.fine_d, self.fine_travel_mm),
        ];
        for (joint, value, limit) in joints {
            if !(value.abs() <= limit) {
                return Err(KinematicsError::JointLimit { joint, value, limit });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, w: &WristState) -> WristState {
        WristState {
            roll: w.roll.clamp(-self.roll_rad, self.roll_rad),
            pitch: w.pitch.clamp(-self.pitch_rad, self.pitch_rad),
            yaw: w.yaw.clamp(-self.yaw_rad, self.yaw_rad),
            fine_d: w.fine_d.clamp(-self.fine_travel_mm, self.fine_travel_mm),
        }
    }
}

/// Local frame at a surface point: `z` along the inward normal, `x` along the
/// projection of the body long axis onto the tangent plane, `y = z × x`.
pub fn tangent_frame(normal: &Vector3<f64>) -> Rotation3<f64> {
    let z = -normal.normalize();
    let mut x = Vector3::x() - z * z.x;
    if x.norm() < 1e-9 {
        x = Vector3::y() - z * z.y;
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
}

/// Probe pose carried by the wrist mounted at `base` with outward `normal`.
///
/// Orientation = tangent frame · Rz(yaw) · Ry(pitch) · Rx(roll); with all
/// angles zero the probe axis is the inward normal. The tip sits `fine_d`
/// along the probe axis from the base.
pub fn wrist_forward(
    base: &Vector3<f64>,
    normal: &Vector3<f64>,
    w: &WristState,
    limits: &WristLimits,
) -> Result<ProbePose, KinematicsError> {
    limits.check(w)?;
    let local = Rotation3::from_euler_angles(w.roll, w.pitch, w.yaw);
    let orientation = UnitQuaternion::from_rotation_matrix(&(tangent_frame(normal) * local));
    let axis = orientation * Vector3::z();
    Ok(ProbePose {
        tip: base + axis * w.fine_d,
        orientation,
        fine_d: w.fine_d,
    })
}

/// Decompose a wrist rotation (relative to the tangent frame) into joint angles.
pub fn wrist_from_quaternion(q: &UnitQuaternion<f64>, fine_d: f64) -> WristState {
    let (roll, pitch, yaw) = q.euler_angles();
    WristState {
        roll,
        pitch,
        yaw,
        fine_d,
    }
}
