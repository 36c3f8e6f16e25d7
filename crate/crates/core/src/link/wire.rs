//! Bit-exact frame format.
//!
//! ```text
//! offset  size  field
//! 0       2     magic 0x53 0x43
//! 2       1     version 0x01
//! 3       1     msg_type
//! 4       2     port_id, big-endian
//! 6       4     payload_bit_len, big-endian
//! 10      n     payload, MSB first, zero-padded to a byte boundary
//! ```

use std::fmt;
use std::io::{self, Read};

use super::{LinkError, Message, MsgType};
use crate::codec::PackedBits;

pub const MAGIC: [u8; 2] = [0x53, 0x43];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
/// Upper bound on a payload, to keep a corrupt length from allocating
/// gigabytes.
pub const MAX_PAYLOAD_BITS: u32 = 1 << 24;

pub fn encode_frame(m: &Message) -> Vec<u8> {
    let payload = m.payload.as_bytes();
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(m.msg_type as u8);
    out.extend_from_slice(&m.port_id.to_be_bytes());
    out.extend_from_slice(&m.payload.width().to_be_bytes());
    out.extend_from_slice(payload);
    out
}

struct Header {
    msg_type: MsgType,
    port_id: u16,
    bit_len: u32,
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<Header, LinkError> {
    if h[..2] != MAGIC {
        return Err(LinkError::Framing(format!(
            "bad magic {:02x} {:02x}",
            h[0], h[1]
        )));
    }
    if h[2] != VERSION {
        return Err(LinkError::Framing(format!(
            "unsupported version {:#04x}",
            h[2]
        )));
    }
    let msg_type = MsgType::from_code(h[3])
        .ok_or_else(|| LinkError::Framing(format!("unknown message type {}", h[3])))?;
    let port_id = u16::from_be_bytes([h[4], h[5]]);
    let bit_len = u32::from_be_bytes([h[6], h[7], h[8], h[9]]);
    if bit_len > MAX_PAYLOAD_BITS {
        return Err(LinkError::Framing(format!(
            "payload length {bit_len} too large"
        )));
    }
    Ok(Header {
        msg_type,
        port_id,
        bit_len,
    })
}

fn build(h: Header, payload: Vec<u8>) -> Result<Message, LinkError> {
    let payload = PackedBits::from_bytes(h.bit_len, payload)
        .map_err(|e| LinkError::Framing(format!("payload: {e}")))?;
    Ok(Message {
        msg_type: h.msg_type,
        port_id: h.port_id,
        payload,
    })
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, LinkError> {
    if bytes.len() < HEADER_LEN {
        return Err(LinkError::Framing(format!(
            "truncated header: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    let h = parse_header(bytes[..HEADER_LEN].try_into().unwrap())?;
    let need = h.bit_len.div_ceil(8) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() < need {
        return Err(LinkError::Framing(format!(
            "truncated payload: {} of {need} bytes",
            body.len()
        )));
    }
    if body.len() > need {
        return Err(LinkError::Framing(format!(
            "{} trailing bytes after frame",
            body.len() - need
        )));
    }
    build(h, body.to_vec())
}

/// Reads one frame from a byte stream. `Ok(None)` on a clean end of stream
/// at a frame boundary.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Message>, LinkError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(LinkError::Framing(format!(
                    "truncated header: {got} of {HEADER_LEN} bytes"
                )))
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let h = parse_header(&header)?;
    let mut payload = vec![0u8; h.bit_len.div_ceil(8) as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => LinkError::Framing("truncated payload".into()),
        _ => LinkError::Transport(e),
    })?;
    build(h, payload).map(Some)
}

/// Direction of a captured frame, from the testbench side's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureDir {
    HvlToHdl,
    HdlToHvl,
}

impl CaptureDir {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptureDir::HvlToHdl => "H2D",
            CaptureDir::HdlToHvl => "D2H",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureEntry {
    pub dir: CaptureDir,
    pub message: Message,
}

/// `dir,msg_type,port,bitlen,hex` where `hex` is the padded payload bytes.
impl fmt::Display for CaptureEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.message;
        write!(
            f,
            "{},{},{},{},",
            self.dir.as_str(),
            m.msg_type,
            m.port_id,
            m.payload.width()
        )?;
        for b in m.payload.as_bytes() {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{pack_reg, RegPacket};

    #[test]
    fn shutdown_golden_bytes() {
        let m = Message::control(MsgType::Shutdown);
        assert_eq!(
            encode_frame(&m),
            vec![0x53, 0x43, 0x01, 0x07, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]
        );
    }

    #[test]
    fn reg_call_frame_layout() {
        let p = pack_reg(&RegPacket::write(0x10, 0xa5a5_a5a5, 0xf)).unwrap();
        let m = Message::new(MsgType::XtfCall, 3, p.clone());
        let bytes = encode_frame(&m);
        assert_eq!(bytes.len(), 24);
        assert_eq!(
            &bytes[..10],
            &[0x53, 0x43, 0x01, 0x00, 0x00, 0x03, 0x00, 0x00, 0x00, 0x69]
        );
        assert_eq!(&bytes[10..], p.as_bytes());
        assert_eq!(bytes[23] & 0x7f, 0);
        assert_eq!(decode_frame(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut b = encode_frame(&Message::control(MsgType::CycleTick));
        b[0] = 0x54;
        assert!(matches!(decode_frame(&b), Err(LinkError::Framing(_))));
        let mut b = encode_frame(&Message::control(MsgType::CycleTick));
        b[2] = 0x02;
        assert!(matches!(decode_frame(&b), Err(LinkError::Framing(_))));
        let mut b = encode_frame(&Message::control(MsgType::CycleTick));
        b[3] = 9;
        assert!(matches!(decode_frame(&b), Err(LinkError::Framing(_))));
    }

    #[test]
    fn rejects_truncation() {
        let b = encode_frame(&Message::run_cycles(7));
        assert!(decode_frame(&b[..5]).is_err());
        assert!(decode_frame(&b[..b.len() - 1]).is_err());
        let mut cur = &b[..b.len() - 1];
        assert!(matches!(read_frame(&mut cur), Err(LinkError::Framing(_))));
        let mut empty: &[u8] = &[];
        assert!(read_frame(&mut empty).unwrap().is_none());
    }

    #[test]
    fn stream_read_sequence() {
        let a = Message::run_cycles(100);
        let b = Message::control(MsgType::CycleAck);
        let mut buf = encode_frame(&a);
        buf.extend(encode_frame(&b));
        let mut cur = &buf[..];
        assert_eq!(read_frame(&mut cur).unwrap(), Some(a));
        assert_eq!(read_frame(&mut cur).unwrap(), Some(b));
        assert_eq!(read_frame(&mut cur).unwrap(), None);
    }

    #[test]
    fn capture_line_format() {
        let e = CaptureEntry {
            dir: CaptureDir::HvlToHdl,
            message: Message::run_cycles(0x100),
        };
        assert_eq!(e.to_string(), "H2D,RUN_CYCLES,0,32,00000100");
    }
}
