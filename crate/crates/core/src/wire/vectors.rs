//! Golden codec vectors shared with the operator console.
//!
//! File layout: ASCII `TERV`, u32 LE count, then per message a u32 LE length
//! followed by the encoded bytes.

use std::io;
use std::path::Path;

use super::{
    encode, flags, ForceSample, FramePayload, Message, MotionOrder, Payload, RobotStateReport, SessionControl,
};

pub const VECTORS_MAGIC: &[u8; 4] = b"TERV";

/// Fixed set of messages covering every type and boundary values.
pub fn golden_messages() -> Vec<Message> {
    let msg = |seq, timestamp_us, payload| Message {
        seq,
        timestamp_us,
        payload,
    };
    let ramp: Vec<u8> = (0..64u32 * 60).map(|i| (i % 251) as u8).collect();
    vec![
        msg(0, 0, Payload::Heartbeat),
        msg(u32::MAX, u64::MAX, Payload::Heartbeat),
        msg(
            1,
            22_375,
            Payload::SessionControl(SessionControl {
                code: SessionControl::START,
            }),
        ),
        msg(
            2,
            60_000_000,
            Payload::SessionControl(SessionControl {
                code: SessionControl::STOP,
            }),
        ),
        msg(
            3,
            20_000,
            Payload::MotionOrder(MotionOrder {
                tip_mm: [12.5, -3.25, 109.75],
                orientation: [1.0, 0.0, 0.0, 0.0],
                fine_d_mm: 2.0,
                flags: 0,
            }),
        ),
        msg(
            4,
            5_500_000,
            Payload::MotionOrder(MotionOrder {
                tip_mm: [-80.0, 60.0, 0.5],
                orientation: [0.5, -0.5, 0.5, -0.5],
                fine_d_mm: -20.0,
                flags: flags::CLAMPED | flags::INPUT_FROZEN,
            }),
        ),
        msg(
            5,
            123_456,
            Payload::ForceSample(ForceSample {
                force_n: [0.125, -0.5, 1.9375],
                normal_n: 2.0,
            }),
        ),
        msg(
            6,
            100_000,
            Payload::RobotStateReport(RobotStateReport {
                straps_mm: [282.75, 300.5, 250.25, 199.0],
                wrist_rad: [0.25, -0.5, 3.0],
                fine_d_mm: 1.5,
                safety: 0x82,
            }),
        ),
        msg(
            7,
            266_375,
            Payload::UsFrame(FramePayload {
                width: 8,
                height: 8,
                pixels: (0..64).map(|i| i as u8 * 4).collect(),
            }),
        ),
        msg(
            8,
            516_375,
            Payload::UsFrame(FramePayload {
                width: 64,
                height: 60,
                pixels: ramp,
            }),
        ),
    ]
}

pub fn encode_vectors(messages: &[Message]) -> Vec<u8> {
    let mut out = Vec::from(&VECTORS_MAGIC[..]);
    out.extend_from_slice(&(messages.len() as u32).to_le_bytes());
    for m in messages {
        let bytes = encode(m).expect("golden messages are well-formed");
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

/// Split a vectors file into the encoded messages it holds.
pub fn parse_vectors(data: &[u8]) -> io::Result<Vec<Vec<u8>>> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    if data.len() < 8 || &data[..4] != VECTORS_MAGIC {
        return Err(bad("not a codec vectors file"));
    }
    let count = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let mut at = 8;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len_bytes = data.get(at..at + 4).ok_or_else(|| bad("truncated length"))?;
        let len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        at += 4;
        let body = data.get(at..at + len).ok_or_else(|| bad("truncated record"))?;
        out.push(body.to_vec());
        at += len;
    }
    if at != data.len() {
        return Err(bad("trailing bytes after last record"));
    }
    Ok(out)
}

pub fn write_vectors(path: &Path) -> io::Result<()> {
    std::fs::write(path, encode_vectors(&golden_messages()))
}
