use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{ContactModel, WristLimits};
use crate::phantom::FrameGeometry;
use crate::wire::{
    ChannelProfile, Direction, AUDIO_VIDEO, AV_PLACEHOLDER_BYTES, FORCE_SAMPLE_LEN, HAPTIC_ROBOT, HEADER_LEN,
    MOTION_ORDER_LEN, ROBOT_STATE_LEN, US_IMAGES,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} must be positive and finite, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("{field} = {value} Hz does not give a whole-microsecond period")]
    UnevenPeriod { field: &'static str, value: f64 },
    #[error("stream {stream} ({direction}) needs {needed_bps} bit/s but its budget is {budget_bps} bit/s")]
    OverBudget {
        stream: String,
        direction: &'static str,
        needed_bps: f64,
        budget_bps: u64,
    },
    #[error("profile lacks stream {0} in direction {1}")]
    MissingStream(String, &'static str),
    #[error("{0}")]
    Invalid(String),
}

/// Sub-rectangle of the body chart reached by the master box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartRect {
    pub u: [f64; 2],
    pub v: [f64; 2],
}

impl Default for ChartRect {
    fn default() -> Self {
        Self {
            u: [0.3, 0.7],
            v: [0.3, 0.7],
        }
    }
}

/// Rates, servo dynamics and safety parameters of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub motion_rate_hz: f64,
    pub frame_rate_hz: f64,
    /// Local refresh of the operator force display.
    pub force_display_rate_hz: f64,
    /// Rate of ForceSample messages on the link.
    pub force_rate_hz: f64,
    pub state_rate_hz: f64,
    pub heartbeat_rate_hz: f64,
    pub av_rate_hz: f64,
    pub servo_rate_hz: f64,
    pub watchdog_timeout_ms: f64,
    pub servo_time_constant_ms: f64,
    pub max_probe_speed_mm_s: f64,
    pub retract_speed_mm_s: f64,
    pub release_force_n: f64,
    pub frame: FrameGeometry,
    pub chart_rect: ChartRect,
    pub wrist_limits: WristLimits,
    pub contact: ContactModel,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            motion_rate_hz: 50.0,
            frame_rate_hz: 4.0,
            force_display_rate_hz: 100.0,
            force_rate_hz: 25.0,
            state_rate_hz: 10.0,
            heartbeat_rate_hz: 10.0,
            av_rate_hz: 1.0,
            servo_rate_hz: 1000.0,
            watchdog_timeout_ms: 200.0,
            servo_time_constant_ms: 80.0,
            max_probe_speed_mm_s: 50.0,
            retract_speed_mm_s: 5.0,
            release_force_n: 0.5,
            frame: FrameGeometry::default(),
            chart_rect: ChartRect::default(),
            wrist_limits: WristLimits::default(),
            contact: ContactModel::default(),
        }
    }
}

/// Timer period in microseconds for a rate in Hz.
pub fn period_us(rate_hz: f64) -> u64 {
    (1e6 / rate_hz).round() as u64
}

impl SessionConfig {
    fn rates(&self) -> [(&'static str, f64); 8] {
        [
            ("motion_rate_hz", self.motion_rate_hz),
            ("frame_rate_hz", self.frame_rate_hz),
            ("force_display_rate_hz", self.force_display_rate_hz),
            ("force_rate_hz", self.force_rate_hz),
            ("state_rate_hz", self.state_rate_hz),
            ("heartbeat_rate_hz", self.heartbeat_rate_hz),
            ("av_rate_hz", self.av_rate_hz),
            ("servo_rate_hz", self.servo_rate_hz),
        ]
    }

    pub fn frame_message_bytes(&self) -> usize {
        HEADER_LEN + 4 + self.frame.pixel_count()
    }

    /// Scheduled steady-state load per (stream, sending site) in bit/s.
    pub fn stream_loads(&self) -> Vec<(&'static str, Direction, f64)> {
        let hdr = HEADER_LEN as f64;
        vec![
            (
                US_IMAGES,
                Direction::SlaveToMaster,
                self.frame_rate_hz * self.frame_message_bytes() as f64 * 8.0,
            ),
            (
                HAPTIC_ROBOT,
                Direction::MasterToSlave,
                (self.motion_rate_hz * (hdr + MOTION_ORDER_LEN as f64) + self.heartbeat_rate_hz * hdr) * 8.0,
            ),
            (
                HAPTIC_ROBOT,
                Direction::SlaveToMaster,
                (self.force_rate_hz * (hdr + FORCE_SAMPLE_LEN as f64)
                    + self.state_rate_hz * (hdr + ROBOT_STATE_LEN as f64))
                    * 8.0,
            ),
            (
                AUDIO_VIDEO,
                Direction::MasterToSlave,
                self.av_rate_hz * AV_PLACEHOLDER_BYTES as f64 * 8.0,
            ),
            (
                AUDIO_VIDEO,
                Direction::SlaveToMaster,
                self.av_rate_hz * AV_PLACEHOLDER_BYTES as f64 * 8.0,
            ),
        ]
    }

    pub fn validate(&self, profile: &ChannelProfile) -> Result<(), ConfigError> {
        for (field, value) in self.rates() {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::NotPositive { field, value });
            }
            let p = 1e6 / value;
            if (p - p.round()).abs() > 1e-6 || p.round() < 1.0 {
                return Err(ConfigError::UnevenPeriod { field, value });
            }
        }
        for (field, value) in [
            ("watchdog_timeout_ms", self.watchdog_timeout_ms),
            ("servo_time_constant_ms", self.servo_time_constant_ms),
            ("max_probe_speed_mm_s", self.max_probe_speed_mm_s),
            ("retract_speed_mm_s", self.retract_speed_mm_s),
            ("release_force_n", self.release_force_n),
            ("frame.spacing_mm", self.frame.spacing_mm),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::NotPositive { field, value });
            }
        }
        if self.frame.width < 8 || self.frame.height < 8 {
            return Err(ConfigError::Invalid("frame must be at least 8x8 pixels".into()));
        }
        let r = &self.chart_rect;
        for span in [r.u, r.v] {
            if !(0.0 <= span[0] && span[0] < span[1] && span[1] <= 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "chart_rect span {span:?} must satisfy 0 <= lo < hi <= 1"
                )));
            }
        }
        if !self.contact.is_valid() {
            return Err(ConfigError::Invalid("contact model must be positive".into()));
        }
        let l = &self.wrist_limits;
        if [l.roll_rad, l.pitch_rad, l.yaw_rad, l.fine_travel_mm]
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(ConfigError::Invalid("wrist limits must be positive".into()));
        }
        for (stream, dir, needed) in self.stream_loads() {
            let dir_name = match dir {
                Direction::MasterToSlave => "master->slave",
                Direction::SlaveToMaster => "slave->master",
                Direction::Duplex => "duplex",
            };
            let spec = profile
                .stream(stream)
                .filter(|s| s.direction == dir || s.direction == Direction::Duplex)
                .ok_or_else(|| ConfigError::MissingStream(stream.to_string(), dir_name))?;
            if needed > spec.budget_bps as f64 {
                return Err(ConfigError::OverBudget {
                    stream: stream.to_string(),
                    direction: dir_name,
                    needed_bps: needed,
                    budget_bps: spec.budget_bps,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{preset, PRESET_NAMES};

    #[test]
    fn defaults_fit_every_preset() {
        for name in PRESET_NAMES {
            SessionConfig::default().validate(&preset(name).unwrap()).unwrap();
        }
    }

    #[test]
    fn default_frame_fits_quarter_second_of_image_budget() {
        let c = SessionConfig::default();
        assert_eq!(c.frame_message_bytes(), 3942);
        assert!(c.frame_message_bytes() <= 128_000 / 8 / 4);
    }

    #[test]
    fn rejects_over_budget() {
        let c = SessionConfig {
            frame_rate_hz: 5.0,
            ..SessionConfig::default()
        };
        let err = c.validate(&preset("ISDN256").unwrap()).unwrap_err();
        assert!(matches!(err, ConfigError::OverBudget { ref stream, .. } if stream == "us_images"));
        // the same rate fits the faster line
        c.validate(&preset("ISDN512").unwrap()).unwrap();

        let c = SessionConfig {
            motion_rate_hz: 200.0,
            ..SessionConfig::default()
        };
        assert!(c.validate(&preset("ISDN256").unwrap()).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let p = preset("ISDN256").unwrap();
        let c = SessionConfig {
            watchdog_timeout_ms: 0.0,
            ..SessionConfig::default()
        };
        assert!(matches!(c.validate(&p), Err(ConfigError::NotPositive { .. })));
        let c = SessionConfig {
            motion_rate_hz: 3.0,
            ..SessionConfig::default()
        };
        assert!(matches!(c.validate(&p), Err(ConfigError::UnevenPeriod { .. })));
    }
}
