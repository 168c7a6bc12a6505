use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::kinematics::StrapRig;
use crate::phantom::BodyPhantom;
use crate::teleop::{OperatorProgram, ScriptedOperator, SessionConfig, SessionSetup, Waypoint};
use crate::wire::{preset, ChannelProfile, Fault, FaultSchedule};

pub const SCHEMA_VERSION: u32 = 1;

/// Scenarios shipped with the simulator, addressable by name.
pub const BUNDLED: [(&str, &str); 5] = [
    ("aaa_sweep", include_str!("../../scenarios/aaa_sweep.json")),
    (
        "disruption_drill",
        include_str!("../../scenarios/disruption_drill.json"),
    ),
    ("freeze_drill", include_str!("../../scenarios/freeze_drill.json")),
    ("crash_drill", include_str!("../../scenarios/crash_drill.json")),
    ("interactive", include_str!("../../scenarios/interactive.json")),
];

/// A preset name or a full profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Preset(String),
    Profile(ChannelProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Scripted { waypoints: Vec<Waypoint> },
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSpec {
    /// Lumen threshold; defaults to the midpoint of vessel and tissue levels.
    pub threshold: Option<u8>,
    /// Additional sweeps with a jittered start position.
    pub repeats: u32,
    /// Half-width of the uniform start jitter along the sweep, mm.
    pub start_jitter_mm: f64,
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        Self {
            threshold: None,
            repeats: 0,
            start_jitter_mm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub phantom: BodyPhantom,
    #[serde(default)]
    pub rig: StrapRig,
    #[serde(default)]
    pub session: SessionConfig,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub faults: Vec<Fault>,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub measurement: MeasurementSpec,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn bundled(name: &str) -> Option<Self> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json(text).expect("bundled scenarios are valid"))
    }

    /// Bundled name or path to a JSON file.
    pub fn load(name_or_path: &str) -> Result<Self, HarnessError> {
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::from_path(path);
        }
        Self::bundled(name_or_path).ok_or_else(|| HarnessError::Io {
            path: name_or_path.to_string(),
            message: "no such file or bundled scenario".into(),
        })
    }

    pub fn profile(&self) -> Result<ChannelProfile, HarnessError> {
        Ok(match &self.channel {
            ChannelSpec::Preset(name) => preset(name)?,
            ChannelSpec::Profile(p) => p.clone(),
        })
    }

    pub fn channel_name(&self) -> String {
        match &self.channel {
            ChannelSpec::Preset(name) => name.clone(),
            ChannelSpec::Profile(p) => p.name.clone(),
        }
    }

    pub fn fault_schedule(&self) -> Result<FaultSchedule, HarnessError> {
        Ok(FaultSchedule::from_faults(&self.faults)?)
    }

    pub fn program(&self) -> Result<OperatorProgram, HarnessError> {
        Ok(match &self.operator {
            OperatorSpec::Scripted { waypoints } => OperatorProgram::Scripted(
                ScriptedOperator::new(waypoints.clone()).map_err(crate::teleop::SessionError::from)?,
            ),
            OperatorSpec::Interactive => OperatorProgram::Interactive,
        })
    }

    /// Check everything that can be checked without running.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(HarnessError::Validation("duration_s must be positive".into()));
        }
        let m = &self.measurement;
        if !(m.start_jitter_mm.is_finite() && m.start_jitter_mm >= 0.0) {
            return Err(HarnessError::Validation(
                "start_jitter_mm must be non-negative".into(),
            ));
        }
        let (lo, hi) = (
            self.phantom
                .vessel
                .intensity_vessel
                .min(self.phantom.vessel.intensity_tissue),
            self.phantom
                .vessel
                .intensity_vessel
                .max(self.phantom.vessel.intensity_tissue),
        );
        if let Some(t) = m.threshold {
            if !(lo < t && t < hi) {
                return Err(HarnessError::Validation(format!(
                    "threshold {t} must lie strictly between {lo} and {hi}"
                )));
            }
        }
        let profile = self.profile()?;
        profile.validate()?;
        self.phantom
            .validate()
            .map_err(crate::teleop::SessionError::from)?;
        self.rig.validate().map_err(crate::teleop::SessionError::from)?;
        self.session
            .validate(&profile)
            .map_err(crate::teleop::SessionError::from)?;
        self.fault_schedule()?;
        self.program()?;
        Ok(())
    }

    pub fn threshold(&self) -> u8 {
        self.measurement.threshold.unwrap_or_else(|| {
            let v = &self.phantom.vessel;
            ((v.intensity_vessel as u16 + v.intensity_tissue as u16) / 2) as u8
        })
    }

    pub fn setup(&self) -> Result<SessionSetup, HarnessError> {
        Ok(SessionSetup {
            phantom: self.phantom,
            rig: self.rig,
            config: self.session.clone(),
            profile: self.profile()?,
            faults: self.fault_schedule()?,
            duration_s: self.duration_s,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_load() {
        for (name, _) in BUNDLED {
            let s = Scenario::bundled(name).unwrap();
            assert_eq!(s.name, name);
        }
        assert!(Scenario::bundled("nope").is_none());
    }

    #[test]
    fn parse_error_has_position() {
        let text = "{\n  \"schema_version\": 1,\n  \"name\": \"x\",\n  \"duration_s\": oops\n}";
        match Scenario::from_json(text) {
            Err(HarnessError::Parse { line, column, .. }) => {
                assert_eq!(line, 4);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = r#"{"schema_version":1,"name":"x","duration_s":1,"channel":"ISDN256",
            "operator":{"mode":"interactive"},"durration":2}"#;
        assert!(matches!(
            Scenario::from_json(text),
            Err(HarnessError::Parse { .. })
        ));
    }

    #[test]
    fn validation_errors() {
        let base = r#"{"schema_version":1,"name":"x","duration_s":1,"channel":"ISDN256","operator":{"mode":"interactive"}"#;
        assert!(Scenario::from_json(&format!("{base}}}")).is_ok());
        let v2 = base.replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(matches!(
            Scenario::from_json(&format!("{v2}}}")),
            Err(HarnessError::Validation(_))
        ));
        let bad_preset = base.replace("ISDN256", "DSL");
        assert!(Scenario::from_json(&format!("{bad_preset}}}")).is_err());
        let overlap = format!(
            r#"{base},"faults":[{{"kind":"LinkDisruption","start_s":1,"end_s":3}},{{"kind":"LinkDisruption","start_s":2,"end_s":4}}]}}"#
        );
        assert!(Scenario::from_json(&overlap).is_err());
        let fast = format!(r#"{base},"session":{{"frame_rate_hz":8}}}}"#);
        assert!(Scenario::from_json(&fast).is_err());
        let thr = format!(r#"{base},"measurement":{{"threshold":200}}}}"#);
        assert!(Scenario::from_json(&thr).is_err());
    }

    #[test]
    fn default_threshold_is_midpoint() {
        assert_eq!(Scenario::bundled("aaa_sweep").unwrap().threshold(), 90);
    }
}
