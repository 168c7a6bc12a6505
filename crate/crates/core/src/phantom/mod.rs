//! Parametric patient body: a breathing ellipsoidal abdomen and a synthetic
//! vascular volume that ultrasound-like slices are cut from.
//!
//! Body frame: `x` runs head to foot along the long axis, `y` across the
//! patient, `z` is anterior (up, out of the abdomen). All lengths in mm.

mod ellipsoid;
pub mod pgm;
mod slice;

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ellipsoid::closest_point_on_ellipsoid;
pub use slice::{FrameGeometry, SliceError, SliceNoise};

/// Maximum distance between the probe tip and the body surface for image formation.
pub const CONTACT_TOLERANCE_MM: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("chart point ({u}, {v}) outside [0,1]^2")]
    OutOfDomain { u: f64, v: f64 },
    #[error("normal vector has length {norm}, expected 1")]
    NonUnitNormal { norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhantomError {
    #[error("invalid body surface: {0}")]
    InvalidSurface(String),
    #[error("invalid vascular phantom: {0}")]
    InvalidVessel(String),
}

/// A surface with a 2-D chart over `[0,1]^2` that may change with time.
pub trait ChartSurface {
    fn point(&self, u: f64, v: f64, t: f64) -> Result<Vector3<f64>, DomainError>;

    /// Partial derivatives of [`ChartSurface::point`] with respect to `u` and `v`.
    fn tangents(&self, u: f64, v: f64, t: f64) -> Result<(Vector3<f64>, Vector3<f64>), DomainError>;

    /// Outward unit normal.
    fn normal(&self, u: f64, v: f64, t: f64) -> Result<Vector3<f64>, DomainError>;
}

pub(crate) fn check_domain(u: f64, v: f64) -> Result<(), DomainError> {
    if (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(DomainError::OutOfDomain { u, v })
    }
}

/// Ellipsoidal abdomen whose anterior semi-axis breathes sinusoidally.
///
/// The chart is the spherical-angle parametrisation with its polar axis along
/// `x`, restricted to the anterior half:
///
/// ```text
/// theta = pi*u, phi = pi*v
/// p(u,v,t) = (-a cos theta, -b sin theta cos phi, c s(t) sin theta sin phi)
/// s(t)     = 1 + A sin(2 pi t / T)
/// ```
///
/// so `(0.5, 0.5)` is the apex `(0, 0, c s(t))` and the poles sit on the flanks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySurface {
    /// Semi-axes `[a, b, c]` along x, y and the anterior z axis.
    pub semi_axes_mm: [f64; 3],
    pub breathing_amplitude: f64,
    pub breathing_period_s: f64,
}

impl Default for BodySurface {
    fn default() -> Self {
        Self {
            semi_axes_mm: [160.0, 120.0, 110.0],
            breathing_amplitude: 0.02,
            breathing_period_s: 4.0,
        }
    }
}

impl BodySurface {
    pub fn validate(&self) -> Result<(), PhantomError> {
        if self.semi_axes_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(PhantomError::InvalidSurface("semi-axes must be positive".into()));
        }
        if !(0.0..0.2).contains(&self.breathing_amplitude) {
            return Err(PhantomError::InvalidSurface(
                "breathing amplitude must lie in [0, 0.2)".into(),
            ));
        }
        if !(self.breathing_period_s.is_finite() && self.breathing_period_s > 0.0) {
            return Err(PhantomError::InvalidSurface(
                "breathing period must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Anterior scale factor `s(t)`.
    pub fn breathing_scale(&self, t: f64) -> f64 {
        // Reduce the phase first so that t and t + T give the same float.
        let phase = (t / self.breathing_period_s).rem_euclid(1.0);
        1.0 + self.breathing_amplitude * (2.0 * PI * phase).sin()
    }

    /// Semi-axes at time `t`.
    pub fn axes_at(&self, t: f64) -> Vector3<f64> {
        let [a, b, c] = self.semi_axes_mm;
        Vector3::new(a, b, c * self.breathing_scale(t))
    }

    /// Implicit function value `x²/a² + y²/b² + z²/c(t)² - 1`.
    pub fn implicit(&self, p: &Vector3<f64>, t: f64) -> f64 {
        let e = self.axes_at(t);
        (p.x / e.x).powi(2) + (p.y / e.y).powi(2) + (p.z / e.z).powi(2) - 1.0
    }

    pub fn contains(&self, p: &Vector3<f64>, t: f64) -> bool {
        self.implicit(p, t) <= 0.0
    }

    /// Outward unit normal of the level set through `p` (implicit gradient).
    pub fn normal_at_point(&self, p: &Vector3<f64>, t: f64) -> Vector3<f64> {
        let e = self.axes_at(t);
        let g = Vector3::new(p.x / (e.x * e.x), p.y / (e.y * e.y), p.z / (e.z * e.z));
        let n = g.norm();
        if n > 0.0 {
            g / n
        } else {
            Vector3::z()
        }
    }

    /// Signed inward depth of `p` below the surface: positive inside, negative
    /// outside. Also returns the closest surface point and its outward normal.
    pub fn signed_depth(&self, p: &Vector3<f64>, t: f64) -> SurfaceProximity {
        let e = self.axes_at(t);
        let (closest, distance) = closest_point_on_ellipsoid([e.x, e.y, e.z], [p.x, p.y, p.z]);
        let closest = Vector3::from(closest);
        let depth = if self.contains(p, t) { distance } else { -distance };
        SurfaceProximity {
            depth_mm: depth,
            closest,
            normal: self.normal_at_point(&closest, t),
        }
    }

    /// Chart coordinates of the surface point radially closest to `p` in the
    /// normalised ellipsoid space. `None` for points on the posterior half or
    /// at the centre.
    pub fn chart_of(&self, p: &Vector3<f64>, t: f64) -> Option<(f64, f64)> {
        let e = self.axes_at(t);
        let q = Vector3::new(p.x / e.x, p.y / e.y, p.z / e.z);
        let rho = q.norm();
        if rho == 0.0 || q.z < 0.0 {
            return None;
        }
        let q = q / rho;
        let theta = (-q.x).clamp(-1.0, 1.0).acos();
        let phi = q.z.atan2(-q.y);
        Some((theta / PI, (phi / PI).clamp(0.0, 1.0)))
    }

    /// Surface point with breathing switched off.
    pub fn rest_point(&self, u: f64, v: f64) -> Result<Vector3<f64>, DomainError> {
        self.point(u, v, 0.0)
    }

    pub fn rest_chart_of(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        self.chart_of(p, 0.0)
    }
}

/// Result of projecting a point onto the body surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceProximity {
    pub depth_mm: f64,
    pub closest: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl ChartSurface for BodySurface {
    fn point(&self, u: f64, v: f64, t: f64) -> Result<Vector3<f64>, DomainError> {
        check_domain(u, v)?;
        let e = self.axes_at(t);
        let (st, ct) = (PI * u).sin_cos();
        let (sp, cp) = (PI * v).sin_cos();
        Ok(Vector3::new(-e.x * ct, -e.y * st * cp, e.z * st * sp))
    }

    fn tangents(&self, u: f64, v: f64, t: f64) -> Result<(Vector3<f64>, Vector3<f64>), DomainError> {
        check_domain(u, v)?;
        let e = self.axes_at(t);
        let (st, ct) = (PI * u).sin_cos();
        let (sp, cp) = (PI * v).sin_cos();
        let du = PI * Vector3::new(e.x * st, -e.y * ct * cp, e.z * ct * sp);
        let dv = PI * Vector3::new(0.0, e.y * st * sp, e.z * st * cp);
        Ok((du, dv))
    }

    /// The implicit gradient stays well defined at the chart poles, where it
    /// reduces to `(±1, 0, 0)`.
    fn normal(&self, u: f64, v: f64, t: f64) -> Result<Vector3<f64>, DomainError> {
        let p = self.point(u, v, t)?;
        Ok(self.normal_at_point(&p, t))
    }
}

/// Straight vessel with an ellipsoidal aneurysm bulge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VascularPhantom {
    pub vessel_point_mm: [f64; 3],
    pub vessel_direction: [f64; 3],
    pub vessel_radius_mm: f64,
    /// Position of the aneurysm centre along the axis, measured from `vessel_point_mm`.
    pub aneurysm_center_mm: f64,
    pub aneurysm_ap_diameter_mm: f64,
    pub aneurysm_length_mm: f64,
    pub intensity_vessel: u8,
    pub intensity_tissue: u8,
}

impl Default for VascularPhantom {
    fn default() -> Self {
        Self {
            vessel_point_mm: [0.0, 0.0, 75.0],
            vessel_direction: [1.0, 0.0, 0.0],
            vessel_radius_mm: 10.0,
            aneurysm_center_mm: 0.0,
            aneurysm_ap_diameter_mm: 50.0,
            aneurysm_length_mm: 80.0,
            intensity_vessel: 30,
            intensity_tissue: 150,
        }
    }
}

impl VascularPhantom {
    pub fn axis_direction(&self) -> Vector3<f64> {
        Vector3::from(self.vessel_direction).normalize()
    }

    pub fn aneurysm_center(&self) -> Vector3<f64> {
        Vector3::from(self.vessel_point_mm) + self.axis_direction() * self.aneurysm_center_mm
    }

    pub fn validate(&self, body: &BodySurface) -> Result<(), PhantomError> {
        let bad = |m: &str| Err(PhantomError::InvalidVessel(m.into()));
        let dir = Vector3::from(self.vessel_direction);
        if !(dir.norm() > 0.0) || dir.iter().any(|c| !c.is_finite()) {
            return bad("vessel direction must be a non-zero vector");
        }
        if !(self.vessel_radius_mm > 0.0) {
            return bad("vessel radius must be positive");
        }
        if self.aneurysm_ap_diameter_mm < 2.0 * self.vessel_radius_mm {
            return bad("aneurysm diameter must be at least the vessel diameter");
        }
        if !(self.aneurysm_length_mm > 0.0) {
            return bad("aneurysm length must be positive");
        }
        if self.intensity_vessel == self.intensity_tissue {
            return bad("vessel and tissue intensities must differ");
        }
        // Sample the bulge boundary and the vessel wall around it.
        let (e1, e2) = orthonormal_pair(&self.axis_direction());
        let center = self.aneurysm_center();
        let half_len = 0.5 * self.aneurysm_length_mm;
        let half_ap = 0.5 * self.aneurysm_ap_diameter_mm;
        for i in 0..=8 {
            let s = -1.0 + 2.0 * i as f64 / 8.0;
            let radial = half_ap * (1.0 - s * s).max(0.0).sqrt();
            let radial = radial.max(self.vessel_radius_mm);
            for k in 0..16 {
                let a = 2.0 * PI * k as f64 / 16.0;
                let p =
                    center + self.axis_direction() * (s * half_len) + (e1 * a.cos() + e2 * a.sin()) * radial;
                if body.implicit(&p, 0.0) >= 0.0 {
                    return bad("lumen must lie strictly inside the body at rest");
                }
            }
        }
        Ok(())
    }

    /// Lumen membership of a point expressed in the rest frame.
    fn in_lumen_rest(&self, p: &Vector3<f64>) -> bool {
        let dir = self.axis_direction();
        let rel_axis = p - Vector3::from(self.vessel_point_mm);
        let radial_axis = (rel_axis - dir * rel_axis.dot(&dir)).norm();
        if radial_axis <= self.vessel_radius_mm {
            return true;
        }
        let rel = p - self.aneurysm_center();
        let along = rel.dot(&dir);
        let radial = (rel - dir * along).norm();
        let half_len = 0.5 * self.aneurysm_length_mm;
        let half_ap = 0.5 * self.aneurysm_ap_diameter_mm;
        (along / half_len).powi(2) + (radial / half_ap).powi(2) <= 1.0
    }
}

/// Any unit vector pair completing `axis` to an orthonormal frame.
pub(crate) fn orthonormal_pair(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

/// Probe pose in the body frame.
///
/// The probe frame has its `z` axis along the beam (increasing depth) and its
/// `y` axis along the transducer array (image lateral direction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePose {
    pub tip: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    /// Fine axial translation applied by the wrist, positive into the body.
    pub fine_d: f64,
}

impl ProbePose {
    pub fn axis(&self) -> Vector3<f64> {
        self.orientation * Vector3::z()
    }

    pub fn lateral(&self) -> Vector3<f64> {
        self.orientation * Vector3::y()
    }

    pub fn within_travel(&self, limit_mm: f64) -> bool {
        self.fine_d.abs() <= limit_mm
    }
}

/// 8-bit grayscale ultrasound image, row-major, row 0 shallowest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsFrame {
    pub width: u16,
    pub height: u16,
    /// Stored as micrometres so frames stay `Eq`.
    pub pixel_spacing_um: u32,
    pub pixels: Vec<u8>,
    pub acquisition_time_us: u64,
}

impl UsFrame {
    pub fn blank(width: u16, height: u16, spacing_mm: f64, acquisition_time_us: u64) -> Self {
        Self {
            width,
            height,
            pixel_spacing_um: spacing_to_um(spacing_mm),
            pixels: vec![0; width as usize * height as usize],
            acquisition_time_us,
        }
    }

    pub fn pixel_spacing_mm(&self) -> f64 {
        self.pixel_spacing_um as f64 / 1000.0
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width as usize + col]
    }
}

pub(crate) fn spacing_to_um(spacing_mm: f64) -> u32 {
    (spacing_mm * 1000.0).round() as u32
}

/// Breathing body plus its vascular content.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyPhantom {
    #[serde(default)]
    pub body: BodySurface,
    #[serde(default)]
    pub vessel: VascularPhantom,
    #[serde(default)]
    pub noise: Option<SliceNoise>,
}

impl BodyPhantom {
    pub fn validate(&self) -> Result<(), PhantomError> {
        self.body.validate()?;
        self.vessel.validate(&self.body)
    }

    /// Rigid displacement of the lumen along `z` at time `t`: the lumen rides
    /// with the breathing scaling of its own centre but does not deform.
    pub fn lumen_offset(&self, t: f64) -> Vector3<f64> {
        let zc = self.vessel.aneurysm_center().z;
        Vector3::new(0.0, 0.0, zc * (self.body.breathing_scale(t) - 1.0))
    }

    pub fn in_lumen(&self, p: &Vector3<f64>, t: f64) -> bool {
        self.vessel.in_lumen_rest(&(p - self.lumen_offset(t)))
    }

    /// Intensity of the synthetic volume at `p`: vessel level inside the
    /// lumen, tissue level elsewhere in the body, zero outside.
    pub fn sample_volume(&self, p: &Vector3<f64>, t: f64) -> u8 {
        if !self.body.contains(p, t) {
            0
        } else if self.in_lumen(p, t) {
            self.vessel.intensity_vessel
        } else {
            self.vessel.intensity_tissue
        }
    }

    /// Maximal antero-posterior lumen extent, by construction of the phantom.
    pub fn ap_diameter_ground_truth(&self) -> f64 {
        ap_diameter_ground_truth(&self.vessel)
    }
}

pub fn ap_diameter_ground_truth(vessel: &VascularPhantom) -> f64 {
    vessel.aneurysm_ap_diameter_mm
}
