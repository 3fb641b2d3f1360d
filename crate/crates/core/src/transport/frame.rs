//! Binary frame codec.
//!
//! ```text
//! magic "MSBL" | version 0x01 | session_id [16] | seq u16 | sender u8
//! | receiver u8 | kind u8 | payload_count u8
//! | payload_count x (rows u32 | cols u32 | rows*cols f64, row-major)
//! | crc32 u32 over every preceding byte
//! ```
//!
//! All integers and floats are big-endian.

use std::io::Read;

use thiserror::Error;

use crate::numerics::RealMatrix;
use crate::protocol::{MessageKind, ProtocolMessage, Role, SessionId};

pub const MAGIC: [u8; 4] = *b"MSBL";
pub const VERSION: u8 = 0x01;
/// Bytes before the first payload.
pub const HEADER_LEN: usize = 4 + 1 + 16 + 2 + 1 + 1 + 1 + 1;
const DIMS_LEN: usize = 8;
const CRC_LEN: usize = 4;
/// Refuse payloads above 2^28 entries (2 GiB) before allocating.
const MAX_ENTRIES: u64 = 1 << 28;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("checksum mismatch: frame says {expected:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { expected: u32, computed: u32 },
    #[error("payload count {0} outside 1..=2")]
    PayloadCount(u8),
    #[error("unknown role code {0}")]
    UnknownRole(u8),
    #[error("unknown message kind code {0}")]
    UnknownKind(u8),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("cannot encode non-finite entry in payload {payload} at ({row}, {col})")]
    NonFinite { payload: usize, row: usize, col: usize },
}

pub fn encode_message(msg: &ProtocolMessage) -> Result<Vec<u8>, FrameError> {
    if msg.payloads.is_empty() || msg.payloads.len() > 2 {
        return Err(FrameError::PayloadCount(msg.payloads.len().min(255) as u8));
    }
    let mut len = HEADER_LEN + CRC_LEN;
    for (i, p) in msg.payloads.iter().enumerate() {
        if let Err(crate::numerics::NumericsError::NonFinite { row, col }) = p.check_finite() {
            return Err(FrameError::NonFinite { payload: i, row, col });
        }
        if u32::try_from(p.rows()).is_err() || u32::try_from(p.cols()).is_err() {
            return Err(FrameError::InvalidPayload(format!("payload {i} dimensions exceed u32")));
        }
        len += DIMS_LEN + 8 * p.rows() * p.cols();
    }

    let mut buf = Vec::with_capacity(len);
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&msg.session_id.to_bytes());
    buf.extend_from_slice(&msg.seq.to_be_bytes());
    buf.push(msg.sender.code());
    buf.push(msg.receiver.code());
    buf.push(msg.kind.code());
    buf.push(msg.payloads.len() as u8);
    for p in &msg.payloads {
        buf.extend_from_slice(&(p.rows() as u32).to_be_bytes());
        buf.extend_from_slice(&(p.cols() as u32).to_be_bytes());
        for v in p.as_slice() {
            buf.extend_from_slice(&v.to_be_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_be_bytes());
    debug_assert_eq!(buf.len(), len);
    Ok(buf)
}

fn need(bytes: &[u8], needed: usize) -> Result<(), FrameError> {
    if bytes.len() < needed {
        Err(FrameError::Truncated {
            needed,
            available: bytes.len(),
        })
    } else {
        Ok(())
    }
}

fn check_prefix(header: &[u8]) -> Result<u8, FrameError> {
    let magic: [u8; 4] = header[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    if header[4] != VERSION {
        return Err(FrameError::UnsupportedVersion(header[4]));
    }
    let count = header[HEADER_LEN - 1];
    if !(1..=2).contains(&count) {
        return Err(FrameError::PayloadCount(count));
    }
    Ok(count)
}

fn payload_dims(dims: &[u8]) -> Result<(usize, usize, usize), FrameError> {
    let rows = u32::from_be_bytes(dims[..4].try_into().unwrap());
    let cols = u32::from_be_bytes(dims[4..8].try_into().unwrap());
    let entries = rows as u64 * cols as u64;
    if entries == 0 {
        return Err(FrameError::InvalidPayload(format!("empty {rows}x{cols} matrix")));
    }
    if entries > MAX_ENTRIES {
        return Err(FrameError::InvalidPayload(format!("{rows}x{cols} matrix is too large")));
    }
    Ok((rows as usize, cols as usize, entries as usize * 8))
}

/// Total length of the frame starting at `bytes[0]`, validating the
/// structural fields on the way.
fn frame_len(bytes: &[u8]) -> Result<usize, FrameError> {
    need(bytes, HEADER_LEN)?;
    let count = check_prefix(&bytes[..HEADER_LEN])?;
    let mut at = HEADER_LEN;
    for _ in 0..count {
        need(bytes, at + DIMS_LEN)?;
        let (_, _, body) = payload_dims(&bytes[at..at + DIMS_LEN])?;
        at += DIMS_LEN + body;
    }
    need(bytes, at + CRC_LEN)?;
    Ok(at + CRC_LEN)
}

pub fn decode_message(bytes: &[u8]) -> Result<ProtocolMessage, FrameError> {
    let len = frame_len(bytes)?;
    if bytes.len() > len {
        return Err(FrameError::TrailingBytes(bytes.len() - len));
    }
    let body = &bytes[..len - CRC_LEN];
    let expected = u32::from_be_bytes(bytes[len - CRC_LEN..len].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if expected != computed {
        return Err(FrameError::ChecksumMismatch { expected, computed });
    }

    let session_id = SessionId::from_bytes(body[5..21].try_into().unwrap());
    let seq = u16::from_be_bytes([body[21], body[22]]);
    let sender = Role::from_code(body[23]).ok_or(FrameError::UnknownRole(body[23]))?;
    let receiver = Role::from_code(body[24]).ok_or(FrameError::UnknownRole(body[24]))?;
    let kind = MessageKind::from_code(body[25]).ok_or(FrameError::UnknownKind(body[25]))?;
    let count = body[26] as usize;

    let mut at = HEADER_LEN;
    let mut payloads = Vec::with_capacity(count);
    for i in 0..count {
        let (rows, cols, size) = payload_dims(&body[at..at + DIMS_LEN])?;
        at += DIMS_LEN;
        let data: Vec<f64> = body[at..at + size]
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect();
        at += size;
        let m = RealMatrix::from_vec(rows, cols, data).map_err(|e| FrameError::InvalidPayload(e.to_string()))?;
        m.check_finite()
            .map_err(|e| FrameError::InvalidPayload(format!("payload {i}: {e}")))?;
        payloads.push(m);
    }
    Ok(ProtocolMessage {
        session_id,
        seq,
        sender,
        receiver,
        kind,
        payloads,
    })
}

/// Read exactly one frame from a byte stream. Structural errors in the
/// header are reported before the payload is read.
pub fn read_frame<R: Read>(reader: &mut R) -> std::io::Result<Result<Vec<u8>, FrameError>> {
    let mut buf = vec![0u8; HEADER_LEN];
    reader.read_exact(&mut buf)?;
    let count = match check_prefix(&buf) {
        Ok(c) => c,
        Err(e) => return Ok(Err(e)),
    };
    for _ in 0..count {
        let at = buf.len();
        buf.resize(at + DIMS_LEN, 0);
        reader.read_exact(&mut buf[at..])?;
        let body = match payload_dims(&buf[at..]) {
            Ok((_, _, body)) => body,
            Err(e) => return Ok(Err(e)),
        };
        let at = buf.len();
        buf.resize(at + body, 0);
        reader.read_exact(&mut buf[at..])?;
    }
    let at = buf.len();
    buf.resize(at + CRC_LEN, 0);
    reader.read_exact(&mut buf[at..])?;
    Ok(Ok(buf))
}
