use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::measure::{measure_ap_diameter, MeasurementResult};
use super::metrics::{ExamMetrics, MetricsContext, Repeatability};
use super::scenario::{ChannelSpec, Scenario};
use super::HarnessError;
use crate::phantom::pgm::{frame_file_name, write_pgm};
use crate::teleop::{run_session, OperatorProgram, SessionOutcome, SessionOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_SAFETY_ABORT: i32 = 2;
pub const EXIT_SOLVER_FAILURE: i32 = 3;

pub fn exit_code(outcome: &SessionOutcome) -> i32 {
    match outcome {
        SessionOutcome::Completed => EXIT_OK,
        SessionOutcome::SafetyAbort { .. } => EXIT_SAFETY_ABORT,
        SessionOutcome::SolverFailure { .. } => EXIT_SOLVER_FAILURE,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub repeats: Option<u32>,
}

impl RunOverrides {
    pub fn apply(&self, scenario: &Scenario) -> Result<Scenario, HarnessError> {
        let mut s = scenario.clone();
        if let Some(p) = &self.preset {
            s.channel = ChannelSpec::Preset(p.clone());
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(r) = self.repeats {
            s.measurement.repeats = r;
        }
        s.validate()?;
        Ok(s)
    }
}

pub struct RunReport {
    pub scenario: Scenario,
    pub metrics: ExamMetrics,
    pub output: SessionOutput,
}

fn measure(out: &SessionOutput, threshold: u8, repeat_index: u32) -> Option<MeasurementResult> {
    let frames = out.frames.iter().map(|f| (f.seq, &f.frame));
    measure_ap_diameter(frames, threshold)
        .ok()
        .map(|m| MeasurementResult { repeat_index, ..m })
}

/// Run a scenario, its jittered measurement repeats, and compute metrics.
pub fn run_scenario(scenario: &Scenario, overrides: &RunOverrides) -> Result<RunReport, HarnessError> {
    let scenario = overrides.apply(scenario)?;
    let program = scenario.program()?;
    let output = run_session(scenario.setup()?, program.clone())?;
    let threshold = scenario.threshold();
    let mut measurements: Vec<_> = measure(&output, threshold, 0).into_iter().collect();

    let mut repeat_values = Vec::new();
    if let OperatorProgram::Scripted(script) = &program {
        let j = scenario.measurement.start_jitter_mm;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x7e9e_a7ed_0000_0000);
        for k in 1..=scenario.measurement.repeats {
            let dx = if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
            let shifted = OperatorProgram::Scripted(script.shifted([dx, 0.0, 0.0]));
            let out = run_session(scenario.setup()?, shifted)?;
            if let Some(m) = measure(&out, threshold, k) {
                repeat_values.push(m.ap_diameter_mm);
                measurements.push(m);
            }
        }
    }

    let ctx = MetricsContext {
        scenario: &scenario.name,
        channel: &scenario.channel_name(),
        seed: scenario.seed,
        configured_frame_rate_hz: scenario.session.frame_rate_hz,
        ground_truth_ap_diameter_mm: scenario.phantom.ap_diameter_ground_truth(),
    };
    let metrics = ExamMetrics::from_output(
        &ctx,
        &output,
        measurements,
        Repeatability::from_values(&repeat_values),
    );
    Ok(RunReport {
        scenario,
        metrics,
        output,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutputOptions {
    pub trace: bool,
    pub dump_frames: bool,
}

fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Write `metrics.json`, `metrics.csv` and optionally `trace.tsv` and the
/// received frames as PGM files.
pub fn write_outputs(report: &RunReport, dir: &Path, opts: OutputOptions) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let write = |name: &str, data: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, data).map_err(|e| io_err(&p, e))
    };
    write("metrics.json", report.metrics.to_json().as_bytes())?;
    write("metrics.csv", report.metrics.to_csv().as_bytes())?;
    if opts.trace {
        write("trace.tsv", report.output.trace.to_tsv().as_bytes())?;
    }
    if opts.dump_frames {
        for f in &report.output.frames {
            let p = dir.join(frame_file_name(f.seq));
            write_pgm(&p, &f.frame).map_err(|e| io_err(&p, e))?;
        }
    }
    Ok(())
}
