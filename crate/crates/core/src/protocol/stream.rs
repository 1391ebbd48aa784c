use super::frame::{peek_header, DecodeError, CRC_LEN, HEADER_LEN};

/// Total length of the frame starting at `prefix`, once its header is in.
///
/// `Ok(None)` means more bytes are needed to know.
pub fn frame_len(prefix: &[u8]) -> Result<Option<usize>, DecodeError> {
    match peek_header(prefix) {
        Ok(h) => Ok(Some(HEADER_LEN + usize::from(h.payload_len) + CRC_LEN)),
        Err(DecodeError::Truncated { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Splits a byte stream into whole frames.
///
/// A header that cannot belong to a frame (bad magic, version or type)
/// poisons the stream: the assembler drops one byte and resynchronises on
/// the next magic.
#[derive(Debug, Default)]
pub struct FrameAssembler {
    buf: Vec<u8>,
    discarded: usize,
}

impl FrameAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes skipped while resynchronising.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Next complete frame's bytes, undecoded.
    pub fn next_frame(&mut self) -> Option<Vec<u8>> {
        loop {
            match frame_len(&self.buf) {
                Ok(Some(n)) if self.buf.len() >= n => {
                    return Some(self.buf.drain(..n).collect());
                }
                Ok(_) => return None,
                Err(_) => {
                    self.buf.remove(0);
                    self.discarded += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{decode_frame, encode_frame, AckPayload, AckStatus, Frame, Payload};

    fn ack(seq: u32) -> Vec<u8> {
        encode_frame(&Frame {
            device_id: 1,
            seq,
            timestamp_ms: 0,
            payload: Payload::Ack(AckPayload {
                acked_seq: seq,
                status: AckStatus::Ok,
            }),
        })
        .unwrap()
    }

    #[test]
    fn reassembles_split_and_coalesced_frames() {
        let mut stream = ack(1);
        stream.extend(ack(2));
        stream.extend(ack(3));
        let mut asm = FrameAssembler::new();
        let mut out = Vec::new();
        for chunk in stream.chunks(7) {
            asm.push(chunk);
            while let Some(f) = asm.next_frame() {
                out.push(decode_frame(&f).unwrap().seq);
            }
        }
        assert_eq!(out, vec![1, 2, 3]);
        assert_eq!(asm.discarded(), 0);
    }

    #[test]
    fn resyncs_after_garbage() {
        let mut asm = FrameAssembler::new();
        asm.push(&[0xFF, 0x00, 0x53]);
        asm.push(&ack(9));
        let f = asm.next_frame().unwrap();
        assert_eq!(decode_frame(&f).unwrap().seq, 9);
        assert_eq!(asm.discarded(), 3);
    }
}
