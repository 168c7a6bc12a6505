use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::measure::MeasurementResult;
use super::scenario::SCHEMA_VERSION;
use super::HarnessError;
use crate::teleop::{SessionOutcome, SessionOutput, SlaveMode};
use crate::wire::TraceStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyEvent {
    pub t_s: f64,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub t_s: f64,
    pub from: Option<String>,
    pub to: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Repeatability {
    pub count: usize,
    pub mean_mm: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_mm: f64,
}

impl Repeatability {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.len() < 2 {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Some(Self {
            count: values.len(),
            mean_mm: mean,
            std_mm: var.sqrt(),
        })
    }
}

/// Human outcomes of a real examination. Recorded for schema parity with
/// clinical exam records; the simulator never fills them in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicalOutcomes {
    pub exam_duration_min: Option<f64>,
    pub satisfaction_score: Option<f64>,
    pub acceptability_score: Option<f64>,
    pub notes: Option<String>,
}

impl ClinicalOutcomes {
    pub fn validate(&self) -> Result<(), HarnessError> {
        for (name, v) in [
            ("exam_duration_min", self.exam_duration_min),
            ("satisfaction_score", self.satisfaction_score),
            ("acceptability_score", self.acceptability_score),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(HarnessError::Validation(format!("{name} must be non-negative")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamMetrics {
    pub schema_version: u32,
    pub scenario: String,
    pub channel: String,
    pub seed: u64,
    pub exam_duration_s: f64,
    pub configured_frame_rate_hz: f64,
    pub achieved_frame_rate_hz: f64,
    pub frames_received: u64,
    pub image_latency_mean_ms: Option<f64>,
    pub image_latency_p95_ms: Option<f64>,
    /// Delivered bytes per lane (stream and direction).
    pub bytes_per_stream: BTreeMap<String, u64>,
    pub dropped_messages: u64,
    pub safety_events: Vec<SafetyEvent>,
    pub mode_transitions: Vec<TransitionRecord>,
    pub measurements: Vec<MeasurementResult>,
    pub repeatability: Option<Repeatability>,
    pub ground_truth_ap_diameter_mm: f64,
    pub operator_clamp_count: u64,
    pub workspace_clamp_count: u64,
    pub max_rendered_force_n: f64,
    pub outcome: SessionOutcome,
    pub clinical: ClinicalOutcomes,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

fn secs(t_us: u64) -> f64 {
    t_us as f64 * 1e-6
}

pub struct MetricsContext<'a> {
    pub scenario: &'a str,
    pub channel: &'a str,
    pub seed: u64,
    pub configured_frame_rate_hz: f64,
    pub ground_truth_ap_diameter_mm: f64,
}

impl ExamMetrics {
    pub fn from_output(
        ctx: &MetricsContext<'_>,
        out: &SessionOutput,
        measurements: Vec<MeasurementResult>,
        repeatability: Option<Repeatability>,
    ) -> Self {
        let duration = secs(out.duration_us);
        let mut lat: Vec<f64> = out
            .frames
            .iter()
            .map(|f| f.latency_us() as f64 / 1000.0)
            .collect();
        lat.sort_by(f64::total_cmp);
        let mean = (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64);
        let mut bytes = BTreeMap::new();
        for label in &out.trace.lanes {
            bytes.insert(label.clone(), 0u64);
        }
        let mut dropped = 0;
        for r in &out.trace.records {
            match r.status {
                TraceStatus::Delivered => {
                    *bytes.get_mut(out.trace.lane_label(r.lane)).expect("lane listed") += r.size as u64
                }
                TraceStatus::Dropped => dropped += 1,
                TraceStatus::Sent => {}
            }
        }
        let transitions = out
            .transitions
            .iter()
            .map(|t| TransitionRecord {
                t_s: secs(t.t_us),
                from: t.from.map(|m| m.name().to_string()),
                to: t.to.name().to_string(),
            })
            .collect();
        let safety_events = out
            .transitions
            .iter()
            .filter(|t| t.to == SlaveMode::SafeHold)
            .map(|t| SafetyEvent {
                t_s: secs(t.t_us),
                kind: "SAFE_HOLD".into(),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: ctx.scenario.to_string(),
            channel: ctx.channel.to_string(),
            seed: ctx.seed,
            exam_duration_s: duration,
            configured_frame_rate_hz: ctx.configured_frame_rate_hz,
            achieved_frame_rate_hz: out.frames.len() as f64 / duration,
            frames_received: out.frames.len() as u64,
            image_latency_mean_ms: mean,
            image_latency_p95_ms: percentile(&lat, 95.0),
            bytes_per_stream: bytes,
            dropped_messages: dropped,
            safety_events,
            mode_transitions: transitions,
            measurements,
            repeatability,
            ground_truth_ap_diameter_mm: ctx.ground_truth_ap_diameter_mm,
            operator_clamp_count: out.master.clamp_count,
            workspace_clamp_count: out.slave.ik_clamps,
            max_rendered_force_n: out.master.max_force_display_n,
            outcome: out.outcome.clone(),
            clinical: ClinicalOutcomes::default(),
        }
    }

    pub fn primary_diameter_mm(&self) -> Option<f64> {
        self.measurements.first().map(|m| m.ap_diameter_mm)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialise");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Header and value row for the flat CSV summary.
    pub fn csv_row(&self) -> (Vec<String>, Vec<String>) {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut cols: Vec<(String, String)> = vec![
            ("schema_version".into(), self.schema_version.to_string()),
            ("scenario".into(), self.scenario.clone()),
            ("channel".into(), self.channel.clone()),
            ("seed".into(), self.seed.to_string()),
            ("exam_duration_s".into(), self.exam_duration_s.to_string()),
            (
                "configured_frame_rate_hz".into(),
                self.configured_frame_rate_hz.to_string(),
            ),
            (
                "achieved_frame_rate_hz".into(),
                self.achieved_frame_rate_hz.to_string(),
            ),
            ("frames_received".into(), self.frames_received.to_string()),
            ("image_latency_mean_ms".into(), opt(self.image_latency_mean_ms)),
            ("image_latency_p95_ms".into(), opt(self.image_latency_p95_ms)),
        ];
        for (lane, b) in &self.bytes_per_stream {
            cols.push((format!("bytes_{lane}"), b.to_string()));
        }
        cols.extend([
            ("dropped_messages".into(), self.dropped_messages.to_string()),
            ("safety_events".into(), self.safety_events.len().to_string()),
            ("ap_diameter_mm".into(), opt(self.primary_diameter_mm())),
            ("repeat_std_mm".into(), opt(self.repeatability.map(|r| r.std_mm))),
            (
                "ground_truth_ap_diameter_mm".into(),
                self.ground_truth_ap_diameter_mm.to_string(),
            ),
            (
                "operator_clamp_count".into(),
                self.operator_clamp_count.to_string(),
            ),
            (
                "workspace_clamp_count".into(),
                self.workspace_clamp_count.to_string(),
            ),
            (
                "max_rendered_force_n".into(),
                self.max_rendered_force_n.to_string(),
            ),
            (
                "outcome".into(),
                match &self.outcome {
                    SessionOutcome::Completed => "completed".into(),
                    SessionOutcome::SafetyAbort { .. } => "safety_abort".into(),
                    SessionOutcome::SolverFailure { .. } => "solver_failure".into(),
                },
            ),
        ]);
        cols.into_iter().unzip()
    }

    pub fn to_csv(&self) -> String {
        let (header, row) = self.csv_row();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).expect("in-memory write");
        w.write_record(&row).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunComparison {
    /// `b - a` for each numeric field.
    pub deltas: BTreeMap<String, f64>,
    pub diameter_abs_delta_mm: Option<f64>,
    pub diameter_ratio: Option<f64>,
    pub duration_ratio: f64,
}

/// Field-by-field comparison of two runs of the same measurement schema.
pub fn compare_runs(a: &ExamMetrics, b: &ExamMetrics) -> Result<RunComparison, HarnessError> {
    if a.schema_version != b.schema_version {
        return Err(HarnessError::IncompatibleRuns(format!(
            "schema versions {} and {} differ",
            a.schema_version, b.schema_version
        )));
    }
    if a.ground_truth_ap_diameter_mm != b.ground_truth_ap_diameter_mm {
        return Err(HarnessError::IncompatibleRuns(format!(
            "runs image different phantoms (D = {} vs {} mm)",
            a.ground_truth_ap_diameter_mm, b.ground_truth_ap_diameter_mm
        )));
    }
    let mut deltas = BTreeMap::new();
    let mut put = |k: &str, x: f64, y: f64| {
        deltas.insert(k.to_string(), y - x);
    };
    put("exam_duration_s", a.exam_duration_s, b.exam_duration_s);
    put(
        "achieved_frame_rate_hz",
        a.achieved_frame_rate_hz,
        b.achieved_frame_rate_hz,
    );
    put(
        "frames_received",
        a.frames_received as f64,
        b.frames_received as f64,
    );
    if let (Some(x), Some(y)) = (a.image_latency_mean_ms, b.image_latency_mean_ms) {
        put("image_latency_mean_ms", x, y);
    }
    if let (Some(x), Some(y)) = (a.image_latency_p95_ms, b.image_latency_p95_ms) {
        put("image_latency_p95_ms", x, y);
    }
    put(
        "dropped_messages",
        a.dropped_messages as f64,
        b.dropped_messages as f64,
    );
    put(
        "safety_events",
        a.safety_events.len() as f64,
        b.safety_events.len() as f64,
    );
    put(
        "operator_clamp_count",
        a.operator_clamp_count as f64,
        b.operator_clamp_count as f64,
    );
    put(
        "max_rendered_force_n",
        a.max_rendered_force_n,
        b.max_rendered_force_n,
    );
    let (da, db) = (a.primary_diameter_mm(), b.primary_diameter_mm());
    if let (Some(x), Some(y)) = (da, db) {
        put("ap_diameter_mm", x, y);
    }
    let both = da.zip(db);
    Ok(RunComparison {
        deltas,
        diameter_abs_delta_mm: both.map(|(x, y)| (y - x).abs()),
        diameter_ratio: both.and_then(|(x, y)| (x != 0.0).then(|| y / x)),
        duration_ratio: b.exam_duration_s / a.exam_duration_s,
    })
}
