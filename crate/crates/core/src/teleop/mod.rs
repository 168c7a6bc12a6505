//! Master and slave controllers and the virtual-clock session engine.

mod config;
mod engine;
mod master;
mod operator;
mod slave;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::KinematicsError;
use crate::phantom::{DomainError, PhantomError};
use crate::wire::ChannelError;

pub use config::{period_us, ChartRect, ConfigError, SessionConfig};
pub use engine::{
    run_session, OperatorProgram, ReceivedFrame, Session, SessionOutcome, SessionOutput, SessionSetup,
};
pub use master::{Master, MasterStats};
pub use operator::{OperatorInput, ScriptedOperator, Waypoint};
pub use slave::{ModeTransition, Slave, SlaveStats, TelemetrySample};

/// Slave controller mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SlaveMode {
    Init,
    Ready,
    Tracking,
    SafeHold,
    Shutdown,
}

impl SlaveMode {
    /// Value carried in the low nibble of the state report safety byte.
    pub fn code(self) -> u8 {
        match self {
            SlaveMode::Init => 0,
            SlaveMode::Ready => 1,
            SlaveMode::Tracking => 2,
            SlaveMode::SafeHold => 3,
            SlaveMode::Shutdown => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code & 0x0f {
            0 => SlaveMode::Init,
            1 => SlaveMode::Ready,
            2 => SlaveMode::Tracking,
            3 => SlaveMode::SafeHold,
            4 => SlaveMode::Shutdown,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SlaveMode::Init => "INIT",
            SlaveMode::Ready => "READY",
            SlaveMode::Tracking => "TRACKING",
            SlaveMode::SafeHold => "SAFE_HOLD",
            SlaveMode::Shutdown => "SHUTDOWN",
        }
    }

    /// Whether `self -> next` is an allowed edge of the mode machine.
    pub fn can_enter(self, next: SlaveMode) -> bool {
        use SlaveMode::*;
        matches!(
            (self, next),
            (Init, Ready)
                | (Ready, Tracking)
                | (Tracking, SafeHold)
                | (SafeHold, Tracking)
                | (Ready | Tracking | SafeHold, Shutdown)
        )
    }
}

/// Safety byte flag: a commanded point was clamped to the strap workspace.
pub const SAFETY_CLAMP_ACTIVE: u8 = 0x80;

/// Normal reaction component shown to the operator.
pub fn render_force_1d(f: &Vector3<f64>, normal: &Vector3<f64>) -> Result<f64, DomainError> {
    let norm = normal.norm();
    if !((norm - 1.0).abs() <= 1e-6) {
        return Err(DomainError::NonUnitNormal { norm });
    }
    Ok(f.dot(normal).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}
