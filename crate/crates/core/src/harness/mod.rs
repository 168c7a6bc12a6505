//! Scenarios, the measurement procedure, metrics and run outputs.

mod measure;
mod metrics;
mod run;
mod scenario;

use thiserror::Error;

use crate::teleop::SessionError;
use crate::wire::ChannelError;

pub use measure::{frame_ap_run, measure_ap_diameter, MeasurementResult};
pub use metrics::{
    compare_runs, percentile, ClinicalOutcomes, ExamMetrics, MetricsContext, Repeatability, RunComparison,
    SafetyEvent, TransitionRecord,
};
pub use run::{
    exit_code, run_scenario, write_outputs, OutputOptions, RunOverrides, RunReport, EXIT_ERROR, EXIT_OK,
    EXIT_SAFETY_ABORT, EXIT_SOLVER_FAILURE,
};
pub use scenario::{ChannelSpec, MeasurementSpec, OperatorSpec, Scenario, BUNDLED, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("measurement failed: {0}")]
    NotFound(String),
    #[error("incompatible runs: {0}")]
    IncompatibleRuns(String),
}

impl From<ChannelError> for HarnessError {
    fn from(e: ChannelError) -> Self {
        HarnessError::Session(SessionError::Channel(e))
    }
}
