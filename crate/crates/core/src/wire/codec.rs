//! Bit-exact little-endian message codec.
//!
//! ```text
//! offset size field
//!      0    1 magic (0x54)
//!      1    1 msg_type
//!      2    4 seq            u32
//!      6    8 timestamp_us   u64
//!     14    4 payload_len    u32
//!     18    n payload
//! ```

use thiserror::Error;

pub const MAGIC: u8 = 0x54;
pub const HEADER_LEN: usize = 18;
pub const MOTION_ORDER_LEN: usize = 33;
pub const FORCE_SAMPLE_LEN: usize = 16;
pub const ROBOT_STATE_LEN: usize = 33;
pub const SESSION_CONTROL_LEN: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MessageType {
    MotionOrder = 1,
    UsFrame = 2,
    ForceSample = 3,
    RobotStateReport = 4,
    SessionControl = 5,
    Heartbeat = 6,
}

impl MessageType {
    pub const ALL: [MessageType; 6] = [
        MessageType::MotionOrder,
        MessageType::UsFrame,
        MessageType::ForceSample,
        MessageType::RobotStateReport,
        MessageType::SessionControl,
        MessageType::Heartbeat,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageType::MotionOrder => "MotionOrder",
            MessageType::UsFrame => "USFrame",
            MessageType::ForceSample => "ForceSample",
            MessageType::RobotStateReport => "RobotStateReport",
            MessageType::SessionControl => "SessionControl",
            MessageType::Heartbeat => "Heartbeat",
        }
    }
}

/// Motion order flag bits.
pub mod flags {
    /// The operator input was clamped to the master workspace.
    pub const CLAMPED: u8 = 0x01;
    /// Operator input is frozen; the pose is a held value.
    pub const INPUT_FROZEN: u8 = 0x02;
    /// Console bridge only: the order carries an increment, not an absolute pose.
    pub const DELTA: u8 = 0x04;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionOrder {
    pub tip_mm: [f32; 3],
    /// Quaternion `w, x, y, z`.
    pub orientation: [f32; 4],
    pub fine_d_mm: f32,
    pub flags: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FramePayload {
    pub width: u16,
    pub height: u16,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceSample {
    pub force_n: [f32; 3],
    pub normal_n: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotStateReport {
    pub straps_mm: [f32; 4],
    pub wrist_rad: [f32; 3],
    pub fine_d_mm: f32,
    /// Low nibble: slave mode code. Bit 7: workspace clamp active.
    pub safety: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionControl {
    pub code: u8,
}

impl SessionControl {
    pub const START: u8 = 1;
    pub const STOP: u8 = 2;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    MotionOrder(MotionOrder),
    UsFrame(FramePayload),
    ForceSample(ForceSample),
    RobotStateReport(RobotStateReport),
    SessionControl(SessionControl),
    Heartbeat,
}

impl Payload {
    pub fn msg_type(&self) -> MessageType {
        match self {
            Payload::MotionOrder(_) => MessageType::MotionOrder,
            Payload::UsFrame(_) => MessageType::UsFrame,
            Payload::ForceSample(_) => MessageType::ForceSample,
            Payload::RobotStateReport(_) => MessageType::RobotStateReport,
            Payload::SessionControl(_) => MessageType::SessionControl,
            Payload::Heartbeat => MessageType::Heartbeat,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::MotionOrder(_) => MOTION_ORDER_LEN,
            Payload::UsFrame(f) => 4 + f.pixels.len(),
            Payload::ForceSample(_) => FORCE_SAMPLE_LEN,
            Payload::RobotStateReport(_) => ROBOT_STATE_LEN,
            Payload::SessionControl(_) => SESSION_CONTROL_LEN,
            Payload::Heartbeat => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub seq: u32,
    pub timestamp_us: u64,
    pub payload: Payload,
}

impl Message {
    pub fn msg_type(&self) -> MessageType {
        self.payload.msg_type()
    }

    /// On-wire size in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes does not fit a u32 length field")]
    EncodeOverflow(usize),
    #[error("frame pixel count {pixels} does not match {width}x{height}")]
    MalformedFrame { width: u16, height: u16, pixels: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("truncated message: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

fn put_f32s(out: &mut Vec<u8>, vals: &[f32]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(m: &Message) -> Result<Vec<u8>, EncodeError> {
    let payload_len = m.payload.len();
    if let Payload::UsFrame(f) = &m.payload {
        if f.pixels.len() != f.width as usize * f.height as usize {
            return Err(EncodeError::MalformedFrame {
                width: f.width,
                height: f.height,
                pixels: f.pixels.len(),
            });
        }
    }
    let len32 = u32::try_from(payload_len).map_err(|_| EncodeError::EncodeOverflow(payload_len))?;

    let mut out = Vec::with_capacity(HEADER_LEN + payload_len);
    out.push(MAGIC);
    out.push(m.msg_type() as u8);
    out.extend_from_slice(&m.seq.to_le_bytes());
    out.extend_from_slice(&m.timestamp_us.to_le_bytes());
    out.extend_from_slice(&len32.to_le_bytes());
    match &m.payload {
        Payload::MotionOrder(o) => {
            put_f32s(&mut out, &o.tip_mm);
            put_f32s(&mut out, &o.orientation);
            put_f32s(&mut out, &[o.fine_d_mm]);
            out.push(o.flags);
        }
        Payload::UsFrame(f) => {
            out.extend_from_slice(&f.width.to_le_bytes());
            out.extend_from_slice(&f.height.to_le_bytes());
            out.extend_from_slice(&f.pixels);
        }
        Payload::ForceSample(s) => {
            put_f32s(&mut out, &s.force_n);
            put_f32s(&mut out, &[s.normal_n]);
        }
        Payload::RobotStateReport(r) => {
            put_f32s(&mut out, &r.straps_mm);
            put_f32s(&mut out, &r.wrist_rad);
            put_f32s(&mut out, &[r.fine_d_mm]);
            out.push(r.safety);
        }
        Payload::SessionControl(c) => out.push(c.code),
        Payload::Heartbeat => {}
    }
    debug_assert_eq!(out.len(), HEADER_LEN + payload_len);
    Ok(out)
}

/// Bounds-checked little-endian reader over a payload slice.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        // Callers have validated the payload length against the fixed layout.
        let b: [u8; N] = self.buf[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        b
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }

    fn f32s<const N: usize>(&mut self) -> [f32; N] {
        std::array::from_fn(|_| self.f32())
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
}

/// Decode exactly one message occupying the whole of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let Some(&magic) = bytes.first() else {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN,
            available: 0,
        });
    };
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let msg_type = MessageType::from_u8(bytes[1]).ok_or(DecodeError::UnknownType(bytes[1]))?;
    let seq = u32::from_le_bytes(bytes[2..6].try_into().unwrap());
    let timestamp_us = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let declared = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;

    let fixed = match msg_type {
        MessageType::MotionOrder => Some(MOTION_ORDER_LEN),
        MessageType::ForceSample => Some(FORCE_SAMPLE_LEN),
        MessageType::RobotStateReport => Some(ROBOT_STATE_LEN),
        MessageType::SessionControl => Some(SESSION_CONTROL_LEN),
        MessageType::Heartbeat => Some(0),
        MessageType::UsFrame => None,
    };
    match fixed {
        Some(n) if n != declared => {
            return Err(DecodeError::LengthMismatch(format!(
                "{} payload must be {n} bytes, header says {declared}",
                msg_type.name()
            )))
        }
        None if declared < 4 => {
            return Err(DecodeError::LengthMismatch(format!(
                "USFrame payload of {declared} bytes lacks its dimensions"
            )))
        }
        _ => {}
    }
    let total = HEADER_LEN
        .checked_add(declared)
        .ok_or_else(|| DecodeError::LengthMismatch("payload length overflows".into()))?;
    if bytes.len() < total {
        return Err(DecodeError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(DecodeError::LengthMismatch(format!(
            "{} trailing bytes after payload",
            bytes.len() - total
        )));
    }

    let mut r = Reader {
        buf: &bytes[HEADER_LEN..total],
        pos: 0,
    };
    let payload = match msg_type {
        MessageType::MotionOrder => Payload::MotionOrder(MotionOrder {
            tip_mm: r.f32s(),
            orientation: r.f32s(),
            fine_d_mm: r.f32(),
            flags: r.u8(),
        }),
        MessageType::UsFrame => {
            let width = r.u16();
            let height = r.u16();
            let n = width as usize * height as usize;
            if n + 4 != declared {
                return Err(DecodeError::LengthMismatch(format!(
                    "USFrame {width}x{height} needs {} payload bytes, header says {declared}",
                    n + 4
                )));
            }
            Payload::UsFrame(FramePayload {
                width,
                height,
                pixels: r.buf[4..].to_vec(),
            })
        }
        MessageType::ForceSample => Payload::ForceSample(ForceSample {
            force_n: r.f32s(),
            normal_n: r.f32(),
        }),
        MessageType::RobotStateReport => Payload::RobotStateReport(RobotStateReport {
            straps_mm: r.f32s(),
            wrist_rad: r.f32s(),
            fine_d_mm: r.f32(),
            safety: r.u8(),
        }),
        MessageType::SessionControl => Payload::SessionControl(SessionControl { code: r.u8() }),
        MessageType::Heartbeat => Payload::Heartbeat,
    };
    Ok(Message {
        seq,
        timestamp_us,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(payload: Payload) -> Message {
        Message {
            seq: 7,
            timestamp_us: 123_456_789,
            payload,
        }
    }

    #[test]
    fn fixed_sizes() {
        assert_eq!(encode(&msg(Payload::Heartbeat)).unwrap().len(), 18);
        let order = msg(Payload::MotionOrder(MotionOrder::default()));
        assert_eq!(encode(&order).unwrap().len(), 51);
        assert_eq!(order.encoded_len(), 51);
        let force = msg(Payload::ForceSample(ForceSample::default()));
        assert_eq!(encode(&force).unwrap().len(), 34);
        let state = msg(Payload::RobotStateReport(RobotStateReport::default()));
        assert_eq!(encode(&state).unwrap().len(), 51);
        let ctl = msg(Payload::SessionControl(SessionControl { code: 1 }));
        assert_eq!(encode(&ctl).unwrap().len(), 19);
    }

    #[test]
    fn header_layout() {
        let m = Message {
            seq: 0x0102_0304,
            timestamp_us: 0x1122_3344_5566_7788,
            payload: Payload::SessionControl(SessionControl { code: 9 }),
        };
        let b = encode(&m).unwrap();
        assert_eq!(
            b,
            [
                0x54, 5, 0x04, 0x03, 0x02, 0x01, 0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11, 1, 0, 0, 0,
                9
            ]
        );
    }

    #[test]
    fn frame_round_trip() {
        let pixels: Vec<u8> = (0..64 * 60).map(|i| (i % 251) as u8).collect();
        let m = msg(Payload::UsFrame(FramePayload {
            width: 64,
            height: 60,
            pixels,
        }));
        let b = encode(&m).unwrap();
        assert_eq!(b.len(), 18 + 4 + 3840);
        assert_eq!(decode(&b).unwrap(), m);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode(&[0x00; 18]), Err(DecodeError::BadMagic(0)));
        let b = encode(&msg(Payload::ForceSample(ForceSample::default()))).unwrap();
        assert!(matches!(
            decode(&b[..b.len() - 1]),
            Err(DecodeError::Truncated { .. })
        ));
        assert!(matches!(decode(&b[..5]), Err(DecodeError::Truncated { .. })));
        assert!(matches!(decode(&[]), Err(DecodeError::Truncated { .. })));
        let mut unknown = b.clone();
        unknown[1] = 42;
        assert_eq!(decode(&unknown), Err(DecodeError::UnknownType(42)));
        let mut wrong_len = b.clone();
        wrong_len[14] = 15;
        assert!(matches!(decode(&wrong_len), Err(DecodeError::LengthMismatch(_))));
        let mut trailing = b.clone();
        trailing.push(0);
        assert!(matches!(decode(&trailing), Err(DecodeError::LengthMismatch(_))));
    }

    #[test]
    fn frame_dimension_mismatch() {
        let m = msg(Payload::UsFrame(FramePayload {
            width: 8,
            height: 8,
            pixels: vec![1; 64],
        }));
        let mut b = encode(&m).unwrap();
        b[18] = 9;
        assert!(matches!(decode(&b), Err(DecodeError::LengthMismatch(_))));
        let bad = msg(Payload::UsFrame(FramePayload {
            width: 8,
            height: 8,
            pixels: vec![1; 63],
        }));
        assert!(matches!(encode(&bad), Err(EncodeError::MalformedFrame { .. })));
    }
}
