use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::phantom::{BodySurface, ProbePose};

/// Linear spring with saturation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactModel {
    pub stiffness_n_per_mm: f64,
    pub max_force_n: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self {
            stiffness_n_per_mm: 0.5,
            max_force_n: 20.0,
        }
    }
}

impl ContactModel {
    pub fn is_valid(&self) -> bool {
        self.stiffness_n_per_mm > 0.0 && self.max_force_n > 0.0
    }

    /// Force magnitude for a penetration depth (zero for negative depth).
    pub fn magnitude(&self, depth_mm: f64) -> f64 {
        (self.stiffness_n_per_mm * depth_mm.max(0.0)).min(self.max_force_n)
    }
}

/// Reaction force of the body on the probe tip, along the outward normal at
/// the closest surface point.
pub fn contact_force(pose: &ProbePose, body: &BodySurface, t: f64, cm: &ContactModel) -> Vector3<f64> {
    let prox = body.signed_depth(&pose.tip, t);
    if prox.depth_mm <= 0.0 {
        return Vector3::zeros();
    }
    prox.normal * cm.magnitude(prox.depth_mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::ChartSurface;
    use nalgebra::UnitQuaternion;

    fn pose_at(tip: Vector3<f64>) -> ProbePose {
        ProbePose {
            tip,
            orientation: UnitQuaternion::identity(),
            fine_d: 0.0,
        }
    }

    fn still() -> BodySurface {
        BodySurface {
            breathing_amplitude: 0.0,
            ..BodySurface::default()
        }
    }

    #[test]
    fn outside_is_zero() {
        let f = contact_force(
            &pose_at(Vector3::new(0.0, 0.0, 130.0)),
            &still(),
            0.0,
            &ContactModel::default(),
        );
        assert_eq!(f, Vector3::zeros());
    }

    #[test]
    fn linear_law_along_normal() {
        let body = still();
        let (u, v) = (0.42, 0.6);
        let p = body.point(u, v, 0.0).unwrap();
        let n = body.normal(u, v, 0.0).unwrap();
        let f = contact_force(&pose_at(p - n * 4.0), &body, 0.0, &ContactModel::default());
        assert!((f.norm() - 2.0).abs() < 1e-9);
        assert!(f.normalize().cross(&n).norm() < 1e-9);
        assert!(f.dot(&n) > 0.0);
    }

    #[test]
    fn saturates() {
        let body = still();
        let f = contact_force(
            &pose_at(Vector3::new(0.0, 0.0, 10.0)),
            &body,
            0.0,
            &ContactModel::default(),
        );
        assert_eq!(f.norm(), 20.0);
    }

    #[test]
    fn magnitude_monotone_and_continuous() {
        let cm = ContactModel::default();
        let mut prev = cm.magnitude(-1.0);
        assert_eq!(prev, 0.0);
        for k in 0..10_000 {
            let m = cm.magnitude(k as f64 * 0.01);
            assert!(m >= prev && m - prev <= 0.5 * 0.01 + 1e-12);
            prev = m;
        }
        assert_eq!(cm.magnitude(40.0), 20.0);
        assert!((cm.magnitude(40.0 - 1e-9) - 20.0).abs() < 1e-8);
    }
}
