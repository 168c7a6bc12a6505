//! Deterministic simulator of a tele-echography robot: a breathing body
//! phantom, a strap-driven probe holder, a bandwidth-budgeted link between the
//! expert and patient sites, and an exam harness that scores runs.
//!
//! Everything runs in simulated time from a seed, so the same scenario always
//! produces the same trace and metrics.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod harness;
pub mod kinematics;
pub mod phantom;
pub mod teleop;
pub mod wire;

pub use harness::{run_scenario, ExamMetrics, HarnessError, RunOverrides, RunReport, Scenario};
pub use kinematics::{KinematicsError, StrapLengths, StrapRig, WristState};
pub use phantom::{BodyPhantom, BodySurface, ProbePose, UsFrame, VascularPhantom};
pub use teleop::{
    run_session, SessionConfig, SessionError, SessionOutcome, SessionOutput, SessionSetup, SlaveMode,
};
pub use wire::{decode, encode, preset, ChannelProfile, Message, Payload};
