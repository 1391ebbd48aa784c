use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use swimps_core::protocol::*;

const KNOWN_FRAME: &str =
    "535701010700000001000000008b9bc38c0100000b008610220b6419780fe02e01581b4b28";

fn hex(s: &str) -> Vec<u8> {
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

fn random_frame(rng: &mut ChaCha8Rng) -> Frame {
    let r = rng.next_u64();
    let payload = match r % 3 {
        0 => Payload::Telemetry(TelemetryPayload {
            moisture_cpct: (rng.next_u32() % 10_001) as u16,
            temp_cdegc: rng.next_u32() as i16,
            rh_cpct: (rng.next_u32() % 10_001) as u16,
            battery_mv: rng.next_u32() as u16,
            solar_mv: rng.next_u32() as u16,
            flags: TelemetryFlags((rng.next_u32() % 8) as u8),
        }),
        1 if r & 8 == 0 => {
            let low = 1 + (rng.next_u32() % 9_998) as u16;
            let high = low + 1 + (rng.next_u32() % u32::from(9_999 - low)) as u16;
            Payload::Command(CommandPayload::SetThresholds {
                low_cpct: low,
                high_cpct: high,
            })
        }
        1 => Payload::Command(CommandPayload::PumpOverride {
            mode: [
                OverrideMode::Auto,
                OverrideMode::ForceOn,
                OverrideMode::ForceOff,
            ][(rng.next_u32() % 3) as usize],
        }),
        _ => Payload::Ack(AckPayload {
            acked_seq: rng.next_u32(),
            status: if r & 16 == 0 {
                AckStatus::Ok
            } else {
                AckStatus::Rejected
            },
        }),
    };
    Frame {
        device_id: rng.next_u32(),
        seq: rng.next_u32(),
        timestamp_ms: rng.next_u64(),
        payload,
    }
}

#[test]
fn known_answer_frame() {
    let bytes = hex(KNOWN_FRAME);
    let expected = Frame {
        device_id: 7,
        seq: 1,
        timestamp_ms: 1_704_088_800_000,
        payload: Payload::Telemetry(TelemetryPayload {
            moisture_cpct: 4230,
            temp_cdegc: 2850,
            rh_cpct: 6500,
            battery_mv: 3960,
            solar_mv: 12000,
            flags: TelemetryFlags::new(true, false, false),
        }),
    };
    assert_eq!(decode_frame(&bytes).unwrap(), expected);
    assert_eq!(encode_frame(&expected).unwrap(), bytes);
}

#[test]
fn random_frames_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let f = random_frame(&mut rng);
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(decode_frame(&bytes).unwrap(), f);
    }
}

#[test]
fn every_single_bit_flip_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let mut bytes = encode_frame(&random_frame(&mut rng)).unwrap();
        for bit in 0..bytes.len() * 8 {
            bytes[bit / 8] ^= 1 << (bit % 8);
            assert!(decode_frame(&bytes).is_err(), "bit {bit} slipped through");
            bytes[bit / 8] ^= 1 << (bit % 8);
        }
    }
}

#[test]
fn assembler_recovers_after_garbage() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let frames: Vec<Frame> = (0..50).map(|_| random_frame(&mut rng)).collect();
    let mut stream = vec![0xde, 0xad];
    for f in &frames {
        stream.extend(encode_frame(f).unwrap());
    }
    let mut asm = FrameAssembler::new();
    let mut got = Vec::new();
    for chunk in stream.chunks(7) {
        asm.push(chunk);
        while let Some(bytes) = asm.next_frame() {
            got.push(decode_frame(&bytes).unwrap());
        }
    }
    assert_eq!(got, frames);
}
