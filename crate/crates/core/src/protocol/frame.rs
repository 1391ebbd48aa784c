use serde::{Deserialize, Serialize};

use super::crc::crc32;

pub const MAGIC: [u8; 2] = [0x53, 0x57];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;
pub const CRC_LEN: usize = 4;
pub const MAX_PAYLOAD: usize = 1024;

const TELEMETRY_LEN: usize = 11;
const ACK_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Telemetry = 1,
    Command = 2,
    Ack = 3,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::Telemetry),
            2 => Some(Self::Command),
            3 => Some(Self::Ack),
            _ => None,
        }
    }
}

/// Pump mode selected by the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum OverrideMode {
    #[default]
    Auto = 0,
    ForceOn = 1,
    ForceOff = 2,
}

impl OverrideMode {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Auto),
            1 => Some(Self::ForceOn),
            2 => Some(Self::ForceOff),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TelemetryFlags(pub u8);

impl TelemetryFlags {
    pub const PUMP_ON: u8 = 0b001;
    pub const CHARGING: u8 = 0b010;
    pub const LOW_LATCH: u8 = 0b100;
    const KNOWN: u8 = 0b111;

    pub fn new(pump_on: bool, charging: bool, low_latch: bool) -> Self {
        let mut bits = 0;
        if pump_on {
            bits |= Self::PUMP_ON;
        }
        if charging {
            bits |= Self::CHARGING;
        }
        if low_latch {
            bits |= Self::LOW_LATCH;
        }
        Self(bits)
    }

    pub fn pump_on(self) -> bool {
        self.0 & Self::PUMP_ON != 0
    }

    pub fn charging(self) -> bool {
        self.0 & Self::CHARGING != 0
    }

    pub fn low_latch(self) -> bool {
        self.0 & Self::LOW_LATCH != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TelemetryPayload {
    pub moisture_cpct: u16,
    pub temp_cdegc: i16,
    pub rh_cpct: u16,
    pub battery_mv: u16,
    pub solar_mv: u16,
    pub flags: TelemetryFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum CommandPayload {
    SetThresholds { low_cpct: u16, high_cpct: u16 },
    PumpOverride { mode: OverrideMode },
}

impl CommandPayload {
    pub const SET_THRESHOLDS: u8 = 1;
    pub const PUMP_OVERRIDE: u8 = 2;

    /// Thresholds must satisfy `0 < low < high < 10000`.
    pub fn validate(&self) -> Result<(), &'static str> {
        match *self {
            Self::SetThresholds {
                low_cpct,
                high_cpct,
            } => {
                if low_cpct == 0 {
                    Err("low threshold must be > 0")
                } else if low_cpct >= high_cpct {
                    Err("low threshold must be below high threshold")
                } else if high_cpct >= 10_000 {
                    Err("high threshold must be below 10000")
                } else {
                    Ok(())
                }
            }
            Self::PumpOverride { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum AckStatus {
    Ok = 0,
    Rejected = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AckPayload {
    pub acked_seq: u32,
    pub status: AckStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Payload {
    Telemetry(TelemetryPayload),
    Command(CommandPayload),
    Ack(AckPayload),
}

impl Payload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Self::Telemetry(_) => MsgType::Telemetry,
            Self::Command(_) => MsgType::Command,
            Self::Ack(_) => MsgType::Ack,
        }
    }

    fn validate(&self) -> Result<(), &'static str> {
        match self {
            Self::Telemetry(t) => {
                if t.moisture_cpct > 10_000 {
                    Err("moisture above 10000 centi-percent")
                } else if t.rh_cpct > 10_000 {
                    Err("humidity above 10000 centi-percent")
                } else if t.flags.0 & !TelemetryFlags::KNOWN != 0 {
                    Err("reserved flag bits set")
                } else {
                    Ok(())
                }
            }
            Self::Command(c) => c.validate(),
            Self::Ack(_) => Ok(()),
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        match *self {
            Self::Telemetry(t) => {
                out.extend_from_slice(&t.moisture_cpct.to_le_bytes());
                out.extend_from_slice(&t.temp_cdegc.to_le_bytes());
                out.extend_from_slice(&t.rh_cpct.to_le_bytes());
                out.extend_from_slice(&t.battery_mv.to_le_bytes());
                out.extend_from_slice(&t.solar_mv.to_le_bytes());
                out.push(t.flags.0);
            }
            Self::Command(CommandPayload::SetThresholds {
                low_cpct,
                high_cpct,
            }) => {
                out.push(CommandPayload::SET_THRESHOLDS);
                out.extend_from_slice(&low_cpct.to_le_bytes());
                out.extend_from_slice(&high_cpct.to_le_bytes());
            }
            Self::Command(CommandPayload::PumpOverride { mode }) => {
                out.push(CommandPayload::PUMP_OVERRIDE);
                out.push(mode as u8);
            }
            Self::Ack(a) => {
                out.extend_from_slice(&a.acked_seq.to_le_bytes());
                out.push(a.status as u8);
            }
        }
    }

    fn read(msg_type: MsgType, b: &[u8]) -> Result<Self, DecodeError> {
        let bad = |reason: &'static str| Err(DecodeError::BadPayload(reason));
        let u16_at = |i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
        let payload = match msg_type {
            MsgType::Telemetry => {
                if b.len() != TELEMETRY_LEN {
                    return bad("telemetry payload must be 11 bytes");
                }
                Self::Telemetry(TelemetryPayload {
                    moisture_cpct: u16_at(0),
                    temp_cdegc: i16::from_le_bytes([b[2], b[3]]),
                    rh_cpct: u16_at(4),
                    battery_mv: u16_at(6),
                    solar_mv: u16_at(8),
                    flags: TelemetryFlags(b[10]),
                })
            }
            MsgType::Command => match b.first() {
                Some(&CommandPayload::SET_THRESHOLDS) => {
                    if b.len() != 5 {
                        return bad("set-thresholds payload must be 5 bytes");
                    }
                    Self::Command(CommandPayload::SetThresholds {
                        low_cpct: u16_at(1),
                        high_cpct: u16_at(3),
                    })
                }
                Some(&CommandPayload::PUMP_OVERRIDE) => {
                    if b.len() != 2 {
                        return bad("pump-override payload must be 2 bytes");
                    }
                    match OverrideMode::from_u8(b[1]) {
                        Some(mode) => Self::Command(CommandPayload::PumpOverride { mode }),
                        None => return bad("unknown override mode"),
                    }
                }
                Some(_) => return bad("unknown command"),
                None => return bad("empty command payload"),
            },
            MsgType::Ack => {
                if b.len() != ACK_LEN {
                    return bad("ack payload must be 5 bytes");
                }
                let status = match b[4] {
                    0 => AckStatus::Ok,
                    1 => AckStatus::Rejected,
                    _ => return bad("unknown ack status"),
                };
                Self::Ack(AckPayload {
                    acked_seq: u32::from_le_bytes([b[0], b[1], b[2], b[3]]),
                    status,
                })
            }
        };
        payload.validate().map_err(DecodeError::BadPayload)?;
        Ok(payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frame {
    pub device_id: u32,
    pub seq: u32,
    pub timestamp_ms: u64,
    pub payload: Payload,
}

impl Frame {
    pub fn msg_type(&self) -> MsgType {
        self.payload.msg_type()
    }
}

/// The fixed-size part of a frame, readable before the CRC is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub version: u8,
    pub msg_type: u8,
    pub device_id: u32,
    pub seq: u32,
    pub timestamp_ms: u64,
    pub payload_len: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("payload is {0} bytes, limit is {MAX_PAYLOAD}")]
    PayloadTooLong(usize),
    #[error("invalid payload: {0}")]
    InvalidPayload(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unknown protocol version {0}")]
    UnknownVersion(u8),
    #[error("unknown message type {0}")]
    UnknownMsgType(u8),
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("crc mismatch: frame carries {carried:#010x}, computed {computed:#010x}")]
    BadCrc { carried: u32, computed: u32 },
    #[error("bad payload: {0}")]
    BadPayload(&'static str),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
}

impl DecodeError {
    /// Stable short name, used for rejection counters.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::BadMagic => "bad_magic",
            Self::UnknownVersion(_) => "unknown_version",
            Self::UnknownMsgType(_) => "unknown_msg_type",
            Self::Truncated { .. } => "truncated",
            Self::BadCrc { .. } => "bad_crc",
            Self::BadPayload(_) => "bad_payload",
            Self::TrailingBytes(_) => "trailing_bytes",
        }
    }
}

/// Encode a frame from raw parts. Used directly by tests that need frames
/// the typed API refuses to build.
pub fn encode_raw(
    msg_type: u8,
    device_id: u32,
    seq: u32,
    timestamp_ms: u64,
    payload: &[u8],
) -> Result<Vec<u8>, EncodeError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(EncodeError::PayloadTooLong(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type);
    out.extend_from_slice(&device_id.to_le_bytes());
    out.extend_from_slice(&seq.to_le_bytes());
    out.extend_from_slice(&timestamp_ms.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u16).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn encode_frame(f: &Frame) -> Result<Vec<u8>, EncodeError> {
    f.payload.validate().map_err(EncodeError::InvalidPayload)?;
    let mut payload = Vec::with_capacity(TELEMETRY_LEN);
    f.payload.write(&mut payload);
    encode_raw(
        f.msg_type() as u8,
        f.device_id,
        f.seq,
        f.timestamp_ms,
        &payload,
    )
}

/// Parse the header without validating the CRC or the payload.
pub fn peek_header(bytes: &[u8]) -> Result<FrameHeader, DecodeError> {
    if bytes.len() >= 2 && bytes[..2] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() >= 3 && bytes[2] != VERSION {
        return Err(DecodeError::UnknownVersion(bytes[2]));
    }
    if bytes.len() >= 4 && MsgType::from_u8(bytes[3]).is_none() {
        return Err(DecodeError::UnknownMsgType(bytes[3]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let le32 = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let mut ts = [0u8; 8];
    ts.copy_from_slice(&bytes[12..20]);
    let header = FrameHeader {
        version: bytes[2],
        msg_type: bytes[3],
        device_id: le32(4),
        seq: le32(8),
        timestamp_ms: u64::from_le_bytes(ts),
        payload_len: u16::from_le_bytes([bytes[20], bytes[21]]),
    };
    if usize::from(header.payload_len) > MAX_PAYLOAD {
        return Err(DecodeError::BadPayload("payload_len exceeds 1024"));
    }
    Ok(header)
}

/// Decode exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, DecodeError> {
    let header = peek_header(bytes)?;
    let body_end = HEADER_LEN + usize::from(header.payload_len);
    let total = body_end + CRC_LEN;
    if bytes.len() < total {
        return Err(DecodeError::Truncated {
            needed: total,
            have: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(DecodeError::TrailingBytes(bytes.len() - total));
    }
    let carried = u32::from_le_bytes([
        bytes[body_end],
        bytes[body_end + 1],
        bytes[body_end + 2],
        bytes[body_end + 3],
    ]);
    let computed = crc32(&bytes[..body_end]);
    if carried != computed {
        return Err(DecodeError::BadCrc { carried, computed });
    }
    // peek_header already rejected unknown types
    let msg_type = MsgType::from_u8(header.msg_type).expect("checked msg_type");
    let payload = Payload::read(msg_type, &bytes[HEADER_LEN..body_end])?;
    Ok(Frame {
        device_id: header.device_id,
        seq: header.seq,
        timestamp_ms: header.timestamp_ms,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn telemetry() -> Frame {
        Frame {
            device_id: 7,
            seq: 1,
            timestamp_ms: 1_700_000_000_000,
            payload: Payload::Telemetry(TelemetryPayload {
                moisture_cpct: 4000,
                temp_cdegc: 2800,
                rh_cpct: 6500,
                battery_mv: 3960,
                solar_mv: 12000,
                flags: TelemetryFlags::new(true, true, false),
            }),
        }
    }

    #[test]
    fn telemetry_frame_is_37_bytes_with_le_payload() {
        let bytes = encode_frame(&telemetry()).unwrap();
        assert_eq!(bytes.len(), 37);
        assert_eq!(&bytes[..4], &[0x53, 0x57, 1, 1]);
        assert_eq!(&bytes[20..22], &[11, 0]);
        assert_eq!(&bytes[22..24], &[0xA0, 0x0F]);
    }

    #[test]
    fn flipped_crc_byte_is_bad_crc() {
        let mut bytes = encode_frame(&telemetry()).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xFF;
        assert!(matches!(
            decode_frame(&bytes),
            Err(DecodeError::BadCrc { .. })
        ));
    }

    #[test]
    fn short_input_is_truncated() {
        let bytes = encode_frame(&telemetry()).unwrap();
        assert!(matches!(
            decode_frame(&bytes[..10]),
            Err(DecodeError::Truncated {
                needed: 22,
                have: 10
            })
        ));
        assert!(matches!(
            decode_frame(&bytes[..30]),
            Err(DecodeError::Truncated {
                needed: 37,
                have: 30
            })
        ));
        assert!(matches!(
            decode_frame(&[]),
            Err(DecodeError::Truncated { .. })
        ));
    }

    #[test]
    fn header_field_errors() {
        let good = encode_frame(&telemetry()).unwrap();
        let mut b = good.clone();
        b[0] = 0x00;
        assert_eq!(decode_frame(&b), Err(DecodeError::BadMagic));
        let mut b = good.clone();
        b[2] = 2;
        assert_eq!(decode_frame(&b), Err(DecodeError::UnknownVersion(2)));
        let mut b = good.clone();
        b[3] = 9;
        assert_eq!(decode_frame(&b), Err(DecodeError::UnknownMsgType(9)));
        let mut b = good;
        b.push(0);
        assert_eq!(decode_frame(&b), Err(DecodeError::TrailingBytes(1)));
    }

    #[test]
    fn inverted_thresholds_are_bad_payload() {
        // low=4000, high=3000
        let payload = [1, 0xA0, 0x0F, 0xB8, 0x0B];
        let bytes = encode_raw(2, 7, 1, 0, &payload).unwrap();
        assert!(matches!(
            decode_frame(&bytes),
            Err(DecodeError::BadPayload(_))
        ));
        let cmd = Frame {
            device_id: 7,
            seq: 1,
            timestamp_ms: 0,
            payload: Payload::Command(CommandPayload::SetThresholds {
                low_cpct: 4000,
                high_cpct: 3000,
            }),
        };
        assert!(matches!(
            encode_frame(&cmd),
            Err(EncodeError::InvalidPayload(_))
        ));
    }

    #[test]
    fn unknown_override_and_ack_status_are_rejected() {
        let bytes = encode_raw(2, 1, 1, 0, &[2, 3]).unwrap();
        assert!(matches!(
            decode_frame(&bytes),
            Err(DecodeError::BadPayload(_))
        ));
        let bytes = encode_raw(3, 1, 1, 0, &[1, 0, 0, 0, 2]).unwrap();
        assert!(matches!(
            decode_frame(&bytes),
            Err(DecodeError::BadPayload(_))
        ));
    }

    #[test]
    fn oversized_payload() {
        assert_eq!(
            encode_raw(1, 0, 0, 0, &[0u8; 1025]),
            Err(EncodeError::PayloadTooLong(1025))
        );
        let mut header = encode_raw(1, 0, 0, 0, &[]).unwrap();
        header[20..22].copy_from_slice(&2000u16.to_le_bytes());
        assert!(matches!(
            peek_header(&header),
            Err(DecodeError::BadPayload(_))
        ));
    }

    #[test]
    fn command_and_ack_roundtrip() {
        for payload in [
            Payload::Command(CommandPayload::SetThresholds {
                low_cpct: 3000,
                high_cpct: 3500,
            }),
            Payload::Command(CommandPayload::PumpOverride {
                mode: OverrideMode::ForceOff,
            }),
            Payload::Ack(AckPayload {
                acked_seq: 99,
                status: AckStatus::Rejected,
            }),
        ] {
            let f = Frame {
                device_id: 3,
                seq: 12,
                timestamp_ms: 5,
                payload,
            };
            assert_eq!(decode_frame(&encode_frame(&f).unwrap()), Ok(f));
        }
    }

    #[test]
    fn flag_bits() {
        assert_eq!(TelemetryFlags::new(true, true, false).0, 3);
        assert_eq!(TelemetryFlags::new(false, false, false).0, 0);
        assert_eq!(TelemetryFlags::new(false, false, true).0, 4);
        let f = TelemetryFlags(5);
        assert!(f.pump_on() && !f.charging() && f.low_latch());
    }
}
