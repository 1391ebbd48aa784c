//! Binary framing between devices and the gateway.
//!
//! Every frame is
//!
//! ```text
//! offset  size  field
//!      0     2  magic 0x53 0x57 ("SW")
//!      2     1  version (1)
//!      3     1  msg_type (1 telemetry, 2 command, 3 ack)
//!      4     4  device_id
//!      8     4  seq
//!     12     8  timestamp_ms
//!     20     2  payload_len (<= 1024)
//!     22     n  payload
//!   22+n     4  CRC-32 of bytes 0..22+n
//! ```
//!
//! All integers are little-endian. Frames are self-delimiting through
//! `payload_len`, see [`FrameAssembler`] for stream reassembly.

mod crc;
mod frame;
mod stream;

pub use crc::{crc32, Crc32};
pub use frame::{
    decode_frame, encode_frame, encode_raw, peek_header, AckPayload, AckStatus, CommandPayload,
    DecodeError, EncodeError, Frame, FrameHeader, MsgType, OverrideMode, Payload, TelemetryFlags,
    TelemetryPayload, CRC_LEN, HEADER_LEN, MAGIC, MAX_PAYLOAD, VERSION,
};
pub use stream::{frame_len, FrameAssembler};
