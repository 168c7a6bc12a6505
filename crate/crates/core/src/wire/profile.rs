use serde::{Deserialize, Serialize};

use super::ChannelError;

/// Which site(s) transmit on a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    MasterToSlave,
    SlaveToMaster,
    /// Full duplex: the budget applies independently in each direction.
    Duplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub name: String,
    pub budget_bps: u64,
    pub direction: Direction,
}

/// Closed time window in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start_s: f64,
    pub end_s: f64,
}

impl Window {
    pub fn start_us(&self) -> u64 {
        secs_to_us(self.start_s)
    }

    pub fn end_us(&self) -> u64 {
        secs_to_us(self.end_s)
    }

    pub fn contains_us(&self, t_us: u64) -> bool {
        self.start_us() <= t_us && t_us <= self.end_us()
    }

    pub fn intersects_us(&self, a_us: u64, b_us: u64) -> bool {
        a_us <= self.end_us() && b_us >= self.start_us()
    }
}

pub(crate) fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round().max(0.0) as u64
}

/// Check windows are well-formed, sorted and pairwise disjoint.
pub fn validate_windows(windows: &[Window]) -> Result<(), ChannelError> {
    for w in windows {
        if !(w.start_s.is_finite() && w.end_s.is_finite() && 0.0 <= w.start_s && w.start_s <= w.end_s) {
            return Err(ChannelError::InvalidSchedule(format!(
                "window [{}, {}] is not a valid time interval",
                w.start_s, w.end_s
            )));
        }
    }
    for pair in windows.windows(2) {
        if pair[1].start_s <= pair[0].end_s {
            return Err(ChannelError::InvalidSchedule(format!(
                "windows [{}, {}] and [{}, {}] overlap or are unsorted",
                pair[0].start_s, pair[0].end_s, pair[1].start_s, pair[1].end_s
            )));
        }
    }
    Ok(())
}

/// Emulated link configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelProfile {
    pub name: String,
    pub link_total_bps: u64,
    pub streams: Vec<StreamSpec>,
    pub latency_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub disruption_windows: Vec<Window>,
}

pub const US_IMAGES: &str = "us_images";
pub const AUDIO_VIDEO: &str = "av";
pub const HAPTIC_ROBOT: &str = "haptic_robot";

pub const PRESET_NAMES: [&str; 5] = ["ISDN128x2", "ISDN256", "ISDN512", "LAN100M", "VTHD"];

fn three_streams(us: u64, av: u64, haptic: u64) -> Vec<StreamSpec> {
    vec![
        StreamSpec {
            name: US_IMAGES.into(),
            budget_bps: us,
            direction: Direction::SlaveToMaster,
        },
        StreamSpec {
            name: AUDIO_VIDEO.into(),
            budget_bps: av,
            direction: Direction::Duplex,
        },
        StreamSpec {
            name: HAPTIC_ROBOT.into(),
            budget_bps: haptic,
            direction: Direction::Duplex,
        },
    ]
}

/// Named link configurations. Rates are telecom kb/s (1000 bit/s).
pub fn preset(name: &str) -> Result<ChannelProfile, ChannelError> {
    let canonical = PRESET_NAMES
        .iter()
        .find(|p| p.eq_ignore_ascii_case(name))
        .ok_or_else(|| ChannelError::UnknownPreset(name.to_string()))?;
    let (total, streams, latency_ms) = match *canonical {
        // Two 128k lines: one for images, one shared by av and haptic/robot.
        "ISDN128x2" => (256_000, three_streams(128_000, 64_000, 64_000), 20.0),
        "ISDN256" => (256_000, three_streams(128_000, 64_000, 64_000), 20.0),
        "ISDN512" => (512_000, three_streams(320_000, 128_000, 64_000), 20.0),
        "LAN100M" => (
            100_000_000,
            three_streams(40_000_000, 10_000_000, 50_000_000),
            1.0,
        ),
        "VTHD" => (
            10_000_000_000,
            three_streams(4_000_000_000, 1_000_000_000, 5_000_000_000),
            15.0,
        ),
        _ => unreachable!(),
    };
    Ok(ChannelProfile {
        name: canonical.to_string(),
        link_total_bps: total,
        streams,
        latency_ms,
        jitter_ms: 0.0,
        disruption_windows: Vec::new(),
    })
}

impl ChannelProfile {
    pub fn stream(&self, name: &str) -> Option<&StreamSpec> {
        self.streams.iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: String| Err(ChannelError::InvalidProfile(m));
        if self.streams.is_empty() {
            return bad("profile has no streams".into());
        }
        for (i, s) in self.streams.iter().enumerate() {
            if s.budget_bps == 0 {
                return bad(format!("stream {} has a zero budget", s.name));
            }
            if self.streams[..i].iter().any(|o| o.name == s.name) {
                return bad(format!("duplicate stream {}", s.name));
            }
        }
        let sum: u128 = self.streams.iter().map(|s| s.budget_bps as u128).sum();
        if sum > self.link_total_bps as u128 {
            return bad(format!(
                "stream budgets sum to {sum} bit/s, above the {} bit/s link",
                self.link_total_bps
            ));
        }
        if !(self.latency_ms.is_finite() && self.latency_ms >= 0.0) {
            return bad("latency must be non-negative".into());
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return bad("jitter must be non-negative".into());
        }
        validate_windows(&self.disruption_windows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budgets(p: &ChannelProfile) -> Vec<u64> {
        p.streams.iter().map(|s| s.budget_bps).collect()
    }

    #[test]
    fn isdn256_split() {
        let p = preset("ISDN256").unwrap();
        assert_eq!(p.stream(US_IMAGES).unwrap().budget_bps, 128_000);
        assert_eq!(p.stream(AUDIO_VIDEO).unwrap().budget_bps, 64_000);
        assert_eq!(p.stream(HAPTIC_ROBOT).unwrap().budget_bps, 64_000);
        assert_eq!(p.link_total_bps, 256_000);
        assert_eq!(p.latency_ms, 20.0);
    }

    #[test]
    fn isdn512_split() {
        let p = preset("isdn512").unwrap();
        assert_eq!(budgets(&p), vec![320_000, 128_000, 64_000]);
        assert_eq!(p.name, "ISDN512");
    }

    #[test]
    fn wide_area_totals() {
        assert_eq!(preset("VTHD").unwrap().link_total_bps, 10_000_000_000);
        assert_eq!(preset("VTHD").unwrap().latency_ms, 15.0);
        assert_eq!(preset("LAN100M").unwrap().link_total_bps, 100_000_000);
        assert_eq!(preset("LAN100M").unwrap().latency_ms, 1.0);
        assert_eq!(
            budgets(&preset("ISDN128x2").unwrap()),
            vec![128_000, 64_000, 64_000]
        );
    }

    #[test]
    fn all_presets_validate() {
        for name in PRESET_NAMES {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(matches!(preset("DSL"), Err(ChannelError::UnknownPreset(_))));
    }

    #[test]
    fn profile_validation() {
        let mut p = preset("ISDN256").unwrap();
        p.streams[0].budget_bps = 200_000;
        assert!(p.validate().is_err());
        let mut p = preset("ISDN256").unwrap();
        p.disruption_windows = vec![
            Window {
                start_s: 5.0,
                end_s: 7.0,
            },
            Window {
                start_s: 6.0,
                end_s: 8.0,
            },
        ];
        assert!(p.validate().is_err());
        p.disruption_windows[1].start_s = 7.5;
        assert!(p.validate().is_ok());
    }
}
