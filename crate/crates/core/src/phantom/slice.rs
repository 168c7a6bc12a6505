use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{spacing_to_um, BodyPhantom, ProbePose, UsFrame, CONTACT_TOLERANCE_MM};

/// Image raster: dimensions in pixels and isotropic spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameGeometry {
    pub width: u16,
    pub height: u16,
    pub spacing_mm: f64,
}

impl Default for FrameGeometry {
    fn default() -> Self {
        Self {
            width: 56,
            height: 70,
            spacing_mm: 1.0,
        }
    }
}

impl FrameGeometry {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Optional additive uniform noise on in-body pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceNoise {
    pub amplitude: u8,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SliceError {
    #[error("frame dimensions {width}x{height} below the 8x8 minimum")]
    TooSmall { width: u16, height: u16 },
    #[error("pixel spacing must be positive")]
    BadSpacing,
    #[error("probe tip {gap_mm:.2} mm from the body surface, no acoustic contact")]
    NoContact { gap_mm: f64, blank: UsFrame },
}

impl BodyPhantom {
    /// Cut an image through the probe tip.
    ///
    /// Rows follow the probe axis (row 0 shallowest), columns follow the probe
    /// lateral axis (column 0 on the negative side). Pixel `(col, row)` samples
    /// `tip + axis*(row+0.5)*h + lateral*(col+0.5-w/2)*h`.
    pub fn extract_slice(
        &self,
        pose: &ProbePose,
        geometry: FrameGeometry,
        t_us: u64,
    ) -> Result<UsFrame, SliceError> {
        let FrameGeometry {
            width,
            height,
            spacing_mm,
        } = geometry;
        if width < 8 || height < 8 {
            return Err(SliceError::TooSmall { width, height });
        }
        if !(spacing_mm.is_finite() && spacing_mm > 0.0) {
            return Err(SliceError::BadSpacing);
        }
        let t = t_us as f64 * 1e-6;
        let proximity = self.body.signed_depth(&pose.tip, t);
        if proximity.depth_mm.abs() > CONTACT_TOLERANCE_MM {
            return Err(SliceError::NoContact {
                gap_mm: proximity.depth_mm.abs(),
                blank: UsFrame::blank(width, height, spacing_mm, t_us),
            });
        }

        let axis = pose.axis();
        let lateral = pose.lateral();
        let half_w = 0.5 * width as f64;
        let mut pixels = Vec::with_capacity(geometry.pixel_count());
        for row in 0..height {
            let depth: Vector3<f64> = axis * ((row as f64 + 0.5) * spacing_mm);
            for col in 0..width {
                let p = pose.tip + depth + lateral * ((col as f64 + 0.5 - half_w) * spacing_mm);
                pixels.push(self.sample_volume(&p, t));
            }
        }

        if let Some(noise) = self.noise.filter(|n| n.amplitude > 0) {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ t_us.rotate_left(29));
            let amp = noise.amplitude as i16;
            for px in pixels.iter_mut().filter(|px| **px != 0) {
                // Zero stays reserved for "outside the body".
                let v = *px as i16 + rng.random_range(-amp..=amp);
                *px = v.clamp(1, 255) as u8;
            }
        }

        Ok(UsFrame {
            width,
            height,
            pixel_spacing_um: spacing_to_um(spacing_mm),
            pixels,
            acquisition_time_us: t_us,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{BodySurface, ChartSurface, VascularPhantom};
    use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

    // Probe pointing straight down at the apex, lateral along -y.
    fn apex_pose(body: &BodySurface, t: f64, press: f64) -> ProbePose {
        let base = body.point(0.5, 0.5, t).unwrap();
        let frame = Matrix3::from_columns(&[Vector3::x(), -Vector3::y(), -Vector3::z()]);
        let orientation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(frame));
        ProbePose {
            tip: base - Vector3::z() * press,
            orientation,
            fine_d: press,
        }
    }

    fn still() -> BodySurface {
        BodySurface {
            breathing_amplitude: 0.0,
            ..BodySurface::default()
        }
    }

    #[test]
    fn homogeneous_tissue() {
        // Vessel far away from the imaged region.
        let ph = BodyPhantom {
            body: still(),
            vessel: VascularPhantom {
                vessel_point_mm: [0.0, 0.0, -60.0],
                aneurysm_ap_diameter_mm: 20.0,
                ..VascularPhantom::default()
            },
            noise: None,
        };
        let pose = apex_pose(&ph.body, 0.0, 1.0);
        let geom = FrameGeometry {
            width: 32,
            height: 32,
            spacing_mm: 1.0,
        };
        let f = ph.extract_slice(&pose, geom, 0).unwrap();
        assert!(f.pixels.iter().all(|&p| p == ph.vessel.intensity_tissue));
    }

    #[test]
    fn transverse_vessel_disk_area() {
        // Straight vessel (no bulge) of radius 15 along x, 40 mm below the apex.
        let ph = BodyPhantom {
            body: still(),
            vessel: VascularPhantom {
                vessel_point_mm: [0.0, 0.0, 70.0],
                vessel_radius_mm: 15.0,
                aneurysm_ap_diameter_mm: 30.0,
                aneurysm_length_mm: 1.0,
                ..VascularPhantom::default()
            },
            noise: None,
        };
        let pose = apex_pose(&ph.body, 0.0, 0.0);
        let geom = FrameGeometry {
            width: 64,
            height: 60,
            spacing_mm: 1.0,
        };
        let f = ph.extract_slice(&pose, geom, 0).unwrap();
        let vessel = f
            .pixels
            .iter()
            .filter(|&&p| p == ph.vessel.intensity_vessel)
            .count();
        // Independent raster count of pixel centres within the disk.
        let mut oracle = 0;
        for row in 0..60 {
            for col in 0..64 {
                let dz = 40.0 - (row as f64 + 0.5);
                let dy = col as f64 + 0.5 - 32.0;
                if dz * dz + dy * dy <= 225.0 {
                    oracle += 1;
                }
            }
        }
        assert_eq!(vessel, oracle);
        let area = std::f64::consts::PI * 225.0;
        assert!((vessel as f64 - area).abs() <= 40.0, "{vessel} vs {area}");
    }

    #[test]
    fn deterministic_frames() {
        let mut ph = BodyPhantom::default();
        let pose = apex_pose(&ph.body, 0.37, 2.0);
        let geom = FrameGeometry::default();
        let a = ph.extract_slice(&pose, geom, 370_000).unwrap();
        let b = ph.extract_slice(&pose, geom, 370_000).unwrap();
        assert_eq!(a, b);
        ph.noise = Some(SliceNoise {
            amplitude: 10,
            seed: 3,
        });
        let c = ph.extract_slice(&pose, geom, 370_000).unwrap();
        let d = ph.extract_slice(&pose, geom, 370_000).unwrap();
        assert_eq!(c, d);
        assert_ne!(a, c);
    }

    #[test]
    fn no_contact_gives_blank_frame() {
        let ph = BodyPhantom::default();
        let mut pose = apex_pose(&ph.body, 0.0, 0.0);
        pose.tip.z += 20.0;
        match ph.extract_slice(&pose, FrameGeometry::default(), 0) {
            Err(SliceError::NoContact { gap_mm, blank }) => {
                assert!((gap_mm - 20.0).abs() < 1e-9);
                assert!(blank.pixels.iter().all(|&p| p == 0));
            }
            other => panic!("expected NoContact, got {other:?}"),
        }
    }

    #[test]
    fn rejects_tiny_frames() {
        let ph = BodyPhantom::default();
        let pose = apex_pose(&ph.body, 0.0, 0.0);
        let geom = FrameGeometry {
            width: 4,
            height: 64,
            spacing_mm: 1.0,
        };
        assert!(matches!(
            ph.extract_slice(&pose, geom, 0),
            Err(SliceError::TooSmall { .. })
        ));
    }
}
