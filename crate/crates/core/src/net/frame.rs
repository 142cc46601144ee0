//! `QSPR` frame codec.
//!
//! ```text
//! "QSPR" | version 0x01 | type | session id (16) | payload length (u32 BE) | payload
//! ```

use std::fmt;
use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QSPR";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 26;
/// Default cap on a single payload read from the wire.
pub const MAX_PAYLOAD: usize = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgType {
    Query = 0x01,
    Answer = 0x02,
    Provision = 0x03,
    Close = 0x04,
    Error = 0x05,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => MsgType::Query,
            0x02 => MsgType::Answer,
            0x03 => MsgType::Provision,
            0x04 => MsgType::Close,
            0x05 => MsgType::Error,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Query => "QUERY",
            MsgType::Answer => "ANSWER",
            MsgType::Provision => "PROVISION",
            MsgType::Close => "CLOSE",
            MsgType::Error => "ERROR",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SessionId(pub [u8; 16]);

impl SessionId {
    pub fn from_rng<R: rand::RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        SessionId(b)
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionId({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub session: SessionId,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, session: SessionId, payload: Vec<u8>) -> Self {
        Self {
            msg_type,
            session,
            payload,
        }
    }

    pub fn close(session: SessionId) -> Self {
        Self::new(MsgType::Close, session, Vec::new())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

pub fn encode_frame(f: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(f.encoded_len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(f.msg_type as u8);
    out.extend_from_slice(&f.session.0);
    out.extend_from_slice(&(f.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&f.payload);
    out
}

struct Header {
    msg_type: MsgType,
    session: SessionId,
    len: usize,
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<Header> {
    if &h[..4] != MAGIC {
        return Err(Error::Framing(format!("bad magic {:02x?}", &h[..4])));
    }
    if h[4] != VERSION {
        return Err(Error::Framing(format!("unsupported version {:#04x}", h[4])));
    }
    let msg_type =
        MsgType::from_byte(h[5]).ok_or_else(|| Error::Framing(format!("unknown message type {:#04x}", h[5])))?;
    let session = SessionId(h[6..22].try_into().expect("16 bytes"));
    let len = u32::from_be_bytes(h[22..26].try_into().expect("4 bytes")) as usize;
    Ok(Header { msg_type, session, len })
}

/// Parses one frame from the front of `buf`. `Ok(None)` means more bytes
/// are needed; a malformed header is an error as soon as it is visible.
pub fn parse_prefix(buf: &[u8]) -> Result<Option<(Frame, usize)>> {
    // Reject bad magic / version / type on a partial header too.
    let seen = buf.len().min(HEADER_LEN);
    let mut probe = [0u8; HEADER_LEN];
    probe[..seen].copy_from_slice(&buf[..seen]);
    if seen < 4 {
        if buf[..seen] != MAGIC[..seen] {
            return Err(Error::Framing("bad magic".into()));
        }
        return Ok(None);
    }
    if seen < HEADER_LEN {
        probe[4] = if seen > 4 { probe[4] } else { VERSION };
        probe[5] = if seen > 5 { probe[5] } else { MsgType::Close as u8 };
        parse_header(&probe)?;
        return Ok(None);
    }
    let h = parse_header(&probe)?;
    let total = HEADER_LEN + h.len;
    if buf.len() < total {
        return Ok(None);
    }
    let frame = Frame::new(h.msg_type, h.session, buf[HEADER_LEN..total].to_vec());
    Ok(Some((frame, total)))
}

/// Decodes exactly one frame; short or over-long input is a framing error.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    match parse_prefix(bytes)? {
        Some((f, used)) if used == bytes.len() => Ok(f),
        Some((_, used)) => Err(Error::Framing(format!(
            "{} trailing bytes after frame",
            bytes.len() - used
        ))),
        None => Err(Error::Framing(format!("truncated frame ({} bytes)", bytes.len()))),
    }
}

fn read_full<R: Read + ?Sized>(r: &mut R, buf: &mut [u8], what: &str) -> Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(Error::Framing(format!("connection closed inside {what}"))),
            Ok(k) => got += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Framing(format!("read failed: {e}"))),
        }
    }
    Ok(true)
}

/// Blocking read of one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read + ?Sized>(r: &mut R, max_payload: usize) -> Result<Option<Frame>> {
    let mut h = [0u8; HEADER_LEN];
    if !read_full(r, &mut h, "frame header")? {
        return Ok(None);
    }
    let h = parse_header(&h)?;
    if h.len > max_payload {
        return Err(Error::Framing(format!(
            "payload of {} bytes exceeds limit {max_payload}",
            h.len
        )));
    }
    let mut payload = vec![0u8; h.len];
    if !read_full(r, &mut payload, "frame payload")? && h.len > 0 {
        return Err(Error::Framing("connection closed before payload".into()));
    }
    Ok(Some(Frame::new(h.msg_type, h.session, payload)))
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, f: &Frame) -> Result<()> {
    w.write_all(&encode_frame(f))
        .and_then(|_| w.flush())
        .map_err(|e| Error::Framing(format!("write failed: {e}")))
}
