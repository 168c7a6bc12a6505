use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::KinematicsError;
use crate::phantom::{check_domain, ChartSurface, DomainError};

/// Four straps from fixed anchors to the end-effector ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrapRig {
    pub anchors_mm: [[f64; 3]; 4],
    /// Height of the strap attachment above the contact point, along the normal.
    #[serde(default)]
    pub attachment_offset_mm: f64,
    pub length_limits_mm: [f64; 2],
}

impl Default for StrapRig {
    fn default() -> Self {
        Self {
            anchors_mm: [
                [-220.0, -170.0, 150.0],
                [220.0, -170.0, 150.0],
                [-220.0, 170.0, 150.0],
                [220.0, 170.0, 150.0],
            ],
            attachment_offset_mm: 0.0,
            length_limits_mm: [50.0, 600.0],
        }
    }
}

impl StrapRig {
    pub fn anchor(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.anchors_mm[i])
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |m: &str| Err(KinematicsError::InvalidRig(m.into()));
        let [lo, hi] = self.length_limits_mm;
        if !(0.0 <= lo && lo < hi) {
            return bad("length limits must satisfy 0 <= min < max");
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                if (self.anchor(i) - self.anchor(j)).norm() == 0.0 {
                    return bad("anchors must be pairwise distinct");
                }
            }
        }
        let a0 = self.anchor(0);
        let span =
            (1..4).any(|i| (1..4).any(|j| (self.anchor(i) - a0).cross(&(self.anchor(j) - a0)).norm() > 1e-9));
        if !span {
            return bad("anchors must not be collinear");
        }
        Ok(())
    }

    /// Point where the straps attach for a given chart point.
    pub fn attachment<S: ChartSurface>(
        &self,
        surface: &S,
        u: f64,
        v: f64,
        t: f64,
    ) -> Result<Vector3<f64>, DomainError> {
        let p = surface.point(u, v, t)?;
        if self.attachment_offset_mm == 0.0 {
            Ok(p)
        } else {
            Ok(p + surface.normal(u, v, t)? * self.attachment_offset_mm)
        }
    }

    pub fn within_limits(&self, lengths: &StrapLengths) -> Result<(), KinematicsError> {
        let [min_mm, max_mm] = self.length_limits_mm;
        for (strap, &length_mm) in lengths.0.iter().enumerate() {
            if !(min_mm..=max_mm).contains(&length_mm) {
                return Err(KinematicsError::WorkspaceExceeded {
                    strap: strap + 1,
                    length_mm,
                    min_mm,
                    max_mm,
                });
            }
        }
        Ok(())
    }
}

/// Lengths `L1..L4` in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrapLengths(pub [f64; 4]);

/// Straight-line strap lengths to the attachment point of chart target `(u, v)`.
pub fn inverse_kinematics<S: ChartSurface>(
    target: (f64, f64),
    t: f64,
    rig: &StrapRig,
    surface: &S,
) -> Result<StrapLengths, KinematicsError> {
    let q = rig.attachment(surface, target.0, target.1, t)?;
    let lengths = StrapLengths(std::array::from_fn(|i| (rig.anchor(i) - q).norm()));
    rig.within_limits(&lengths)?;
    Ok(lengths)
}

/// Flat rectangular test surface in the plane `z = origin.z`, chart scaled by
/// `extent_mm` along x and y. Time-invariant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSurface {
    pub origin: Vector3<f64>,
    pub extent_mm: [f64; 2],
}

impl ChartSurface for PlaneSurface {
    fn point(&self, u: f64, v: f64, _t: f64) -> Result<Vector3<f64>, DomainError> {
        check_domain(u, v)?;
        Ok(self.origin + Vector3::new(u * self.extent_mm[0], v * self.extent_mm[1], 0.0))
    }

    fn tangents(&self, u: f64, v: f64, _t: f64) -> Result<(Vector3<f64>, Vector3<f64>), DomainError> {
        check_domain(u, v)?;
        Ok((
            Vector3::new(self.extent_mm[0], 0.0, 0.0),
            Vector3::new(0.0, self.extent_mm[1], 0.0),
        ))
    }

    fn normal(&self, u: f64, v: f64, _t: f64) -> Result<Vector3<f64>, DomainError> {
        check_domain(u, v)?;
        Ok(Vector3::z())
    }
}
