use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::wire::{flags, MotionOrder};

/// Incremental motion of the virtual probe requested by the operator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OperatorInput {
    /// Translation in the master box, mm.
    pub delta_mm: [f64; 3],
    /// Roll, pitch, yaw increments, rad.
    #[serde(default)]
    pub delta_wrist_rad: [f64; 3],
}

impl OperatorInput {
    pub fn is_zero(&self) -> bool {
        self.delta_mm
            .iter()
            .chain(&self.delta_wrist_rad)
            .all(|v| *v == 0.0)
    }

    /// Input carried by a console motion order. Only orders flagged `DELTA`
    /// are accepted: `tip_mm` is the box translation increment and
    /// `orientation` the wrist rotation increment.
    pub fn from_console_order(order: &MotionOrder) -> Option<Self> {
        if order.flags & flags::DELTA == 0 {
            return None;
        }
        let [w, x, y, z] = order.orientation.map(f64::from);
        let q = Quaternion::new(w, x, y, z);
        if !(q.norm().is_finite() && q.norm() > 0.0) || !order.tip_mm.iter().all(|v| v.is_finite()) {
            return None;
        }
        let (roll, pitch, yaw) = UnitQuaternion::from_quaternion(q).euler_angles();
        Some(Self {
            delta_mm: order.tip_mm.map(f64::from),
            delta_wrist_rad: [roll, pitch, yaw],
        })
    }

    pub fn accumulate(&mut self, other: &OperatorInput) {
        for i in 0..3 {
            self.delta_mm[i] += other.delta_mm[i];
            self.delta_wrist_rad[i] += other.delta_wrist_rad[i];
        }
    }
}

/// Target pose of the virtual probe at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t_s: f64,
    pub box_mm: [f64; 3],
    #[serde(default)]
    pub wrist_rad: [f64; 3],
}

/// Piecewise-linear operator trajectory. Before the first waypoint and after
/// the last one the pose is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedOperator {
    pub waypoints: Vec<Waypoint>,
}

impl ScriptedOperator {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, ConfigError> {
        let s = Self { waypoints };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.waypoints.is_empty() {
            return Err(ConfigError::Invalid("operator program has no waypoints".into()));
        }
        for w in &self.waypoints {
            let finite = w.t_s.is_finite() && w.box_mm.iter().chain(&w.wrist_rad).all(|v| v.is_finite());
            if !finite || w.t_s < 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "waypoint at t={} is not finite",
                    w.t_s
                )));
            }
        }
        if self.waypoints.windows(2).any(|p| p[1].t_s < p[0].t_s) {
            return Err(ConfigError::Invalid(
                "waypoint times must be non-decreasing".into(),
            ));
        }
        Ok(())
    }

    /// Box position and wrist angles at time `t_s`.
    pub fn pose_at(&self, t_s: f64) -> (Vector3<f64>, Vector3<f64>) {
        let w = &self.waypoints;
        let pick = |p: &Waypoint| (Vector3::from(p.box_mm), Vector3::from(p.wrist_rad));
        if t_s <= w[0].t_s {
            return pick(&w[0]);
        }
        for pair in w.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if t_s <= b.t_s {
                let span = b.t_s - a.t_s;
                let s = if span > 0.0 { (t_s - a.t_s) / span } else { 1.0 };
                let (pa, ra) = pick(a);
                let (pb, rb) = pick(b);
                return (pa + (pb - pa) * s, ra + (rb - ra) * s);
            }
        }
        pick(w.last().unwrap())
    }

    /// Same trajectory shifted by `offset_mm` in the box.
    pub fn shifted(&self, offset_mm: [f64; 3]) -> Self {
        let mut out = self.clone();
        for w in &mut out.waypoints {
            for (p, d) in w.box_mm.iter_mut().zip(offset_mm) {
                *p += d;
            }
        }
        out
    }
}
