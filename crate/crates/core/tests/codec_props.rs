use proptest::prelude::*;
use tersim_core::wire::{
    decode, encode, DecodeError, ForceSample, FramePayload, Message, MotionOrder, Payload, RobotStateReport,
    SessionControl, HEADER_LEN,
};

fn finite() -> impl Strategy<Value = f32> {
    -1.0e6f32..1.0e6f32
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        (
            prop::array::uniform3(finite()),
            prop::array::uniform4(finite()),
            finite(),
            any::<u8>()
        )
            .prop_map(
                |(tip_mm, orientation, fine_d_mm, flags)| Payload::MotionOrder(MotionOrder {
                    tip_mm,
                    orientation,
                    fine_d_mm,
                    flags
                })
            ),
        (1u16..40, 1u16..40, any::<u64>()).prop_map(|(w, h, s)| {
            let pixels = (0..w as u64 * h as u64)
                .map(|i| (i.wrapping_mul(s | 1) >> 3) as u8)
                .collect();
            Payload::UsFrame(FramePayload {
                width: w,
                height: h,
                pixels,
            })
        }),
        (prop::array::uniform3(finite()), finite())
            .prop_map(|(force_n, normal_n)| Payload::ForceSample(ForceSample { force_n, normal_n })),
        (
            prop::array::uniform4(finite()),
            prop::array::uniform3(finite()),
            finite(),
            any::<u8>()
        )
            .prop_map(|(straps_mm, wrist_rad, fine_d_mm, safety)| {
                Payload::RobotStateReport(RobotStateReport {
                    straps_mm,
                    wrist_rad,
                    fine_d_mm,
                    safety,
                })
            }),
        any::<u8>().prop_map(|code| Payload::SessionControl(SessionControl { code })),
        Just(Payload::Heartbeat),
    ]
}

fn message() -> impl Strategy<Value = Message> {
    (any::<u32>(), any::<u64>(), payload()).prop_map(|(seq, timestamp_us, payload)| Message {
        seq,
        timestamp_us,
        payload,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn round_trip(m in message()) {
        let bytes = encode(&m).unwrap();
        prop_assert_eq!(bytes.len(), m.encoded_len());
        prop_assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn decode_is_total(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        // Must return, never panic or read out of bounds.
        let _ = decode(&bytes);
    }

    #[test]
    fn truncation_is_reported(m in message(), cut in 1usize..64) {
        let bytes = encode(&m).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        let err = decode(&bytes[..keep]).unwrap_err();
        if keep < HEADER_LEN || m.payload.is_empty() {
            let truncated = matches!(err, DecodeError::Truncated { .. });
            prop_assert!(truncated, "{:?}", err);
        } else {
            let ok = matches!(err, DecodeError::Truncated { .. } | DecodeError::LengthMismatch(_));
            prop_assert!(ok, "{:?}", err);
        }
    }
}

#[test]
fn one_byte_short_payload_is_truncated() {
    let m = Message {
        seq: 1,
        timestamp_us: 2,
        payload: Payload::ForceSample(ForceSample::default()),
    };
    let bytes = encode(&m).unwrap();
    assert!(matches!(
        decode(&bytes[..bytes.len() - 1]),
        Err(DecodeError::Truncated { .. })
    ));
}

#[test]
fn frame_64x60_round_trip() {
    let pixels: Vec<u8> = (0..64 * 60).map(|i| (i * 7 % 256) as u8).collect();
    let m = Message {
        seq: 9,
        timestamp_us: 1,
        payload: Payload::UsFrame(FramePayload {
            width: 64,
            height: 60,
            pixels: pixels.clone(),
        }),
    };
    let back = decode(&encode(&m).unwrap()).unwrap();
    match back.payload {
        Payload::UsFrame(f) => assert_eq!(f.pixels, pixels),
        other => panic!("{other:?}"),
    }
}
