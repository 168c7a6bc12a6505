//! Wire format, link emulation and event tracing.

mod channel;
mod codec;
mod profile;
mod trace;
pub mod vectors;

use thiserror::Error;

pub use channel::{
    transmission_delay_us, Channel, Fault, FaultSchedule, LaneId, Packet, SendOutcome, Site, StreamState,
    AV_PLACEHOLDER_BYTES,
};
pub use codec::{
    decode, encode, flags, DecodeError, EncodeError, ForceSample, FramePayload, Message, MessageType,
    MotionOrder, Payload, RobotStateReport, SessionControl, FORCE_SAMPLE_LEN, HEADER_LEN, MAGIC,
    MOTION_ORDER_LEN, ROBOT_STATE_LEN, SESSION_CONTROL_LEN,
};
pub use profile::{
    preset, validate_windows, ChannelProfile, Direction, StreamSpec, Window, AUDIO_VIDEO, HAPTIC_ROBOT,
    PRESET_NAMES, US_IMAGES,
};
pub use trace::{
    budget_checks, parse_trace_line, LaneBudgetCheck, Trace, TraceLine, TraceRecord, TraceStatus,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("no such stream: {0}")]
    NoSuchStream(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid channel profile: {0}")]
    InvalidProfile(String),
    #[error("invalid fault schedule: {0}")]
    InvalidSchedule(String),
}
