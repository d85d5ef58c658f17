//! Binary wire format between an agent process and the environment server.
//!
//! Every frame is a 4-byte big-endian length `N`, then `N` bytes holding a
//! 1-byte message type followed by its payload. All integers are big-endian.
//!
//! | type | direction | payload |
//! |------|-----------|---------|
//! | `0x01` HELLO   | client | `u16` protocol version |
//! | `0x02` RESET   | client | `u8` has-seed flag, `u64` seed |
//! | `0x03` STEP    | client | `u8` action id |
//! | `0x04` CLOSE   | client | empty |
//! | `0x81` WELCOME | server | `u16` version, `u8` observation kind, `u32` observation length |
//! | `0x82` STATE   | server | observation, `i32` reward in millis, `u8` terminal, `u32` step index |
//! | `0x84` BYE     | server | empty |
//! | `0xFF` ERROR   | server | `u8` code, `u16` message length, UTF-8 message |
//!
//! An observation is a kind byte (`0` image, `1` state vector), a `u8`
//! dimension count, one `u32` per dimension, then the raw values: 8-bit
//! intensities for images, 32-bit fixed-point micros for state vectors.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::render::{quantize_u8, Image, ObsData, Observation, IMAGE_SIZE};

pub const PROTOCOL_VERSION: u16 = 1;
pub const MAX_FRAME: usize = 1 << 20;

const HELLO: u8 = 0x01;
const RESET: u8 = 0x02;
const STEP: u8 = 0x03;
const CLOSE: u8 = 0x04;
const WELCOME: u8 = 0x81;
const STATE: u8 = 0x82;
const BYE: u8 = 0x84;
const ERROR: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    Malformed = 1,
    VersionMismatch = 2,
    Environment = 3,
    NotReset = 4,
}

impl ErrorCode {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => ErrorCode::Malformed,
            2 => ErrorCode::VersionMismatch,
            3 => ErrorCode::Environment,
            4 => ErrorCode::NotReset,
            _ => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("protocol version mismatch: peer speaks {0}, we speak {PROTOCOL_VERSION}")]
    VersionMismatch(u16),
    #[error("server error {code:?}: {message}")]
    Remote { code: ErrorCode, message: String },
}

fn malformed<T>(msg: impl Into<String>) -> Result<T, ProtocolError> {
    Err(ProtocolError::Malformed(msg.into()))
}

/// Observation as carried on the wire (quantized).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireObservation {
    Image { dims: Vec<u32>, pixels: Vec<u8> },
    LowDim { dims: Vec<u32>, micros: Vec<i32> },
}

impl WireObservation {
    pub fn from_observation(obs: &Observation) -> Self {
        match &obs.data {
            ObsData::Image(img) => WireObservation::Image {
                dims: vec![IMAGE_SIZE as u32, IMAGE_SIZE as u32],
                pixels: img.0.iter().map(|&v| quantize_u8(v)).collect(),
            },
            ObsData::LowDim(v) => WireObservation::LowDim {
                dims: vec![v.len() as u32],
                micros: v.iter().map(|&x| to_micros(x)).collect(),
            },
        }
    }

    /// Decoded values as an observation (frame index is not transmitted).
    pub fn to_observation(&self, frame_index: u64) -> Observation {
        let data = match self {
            WireObservation::Image { pixels, .. } => {
                ObsData::Image(Image(pixels.iter().map(|&p| p as f32 / 255.0).collect()))
            }
            WireObservation::LowDim { micros, .. } => {
                ObsData::LowDim(micros.iter().map(|&m| m as f32 * 1e-6).collect())
            }
        };
        Observation { data, frame_index }
    }
}

pub fn to_micros(x: f32) -> i32 {
    (x as f64 * 1e6).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

pub fn reward_to_millis(r: f64) -> i32 {
    (r * 1000.0).round() as i32
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Hello { version: u16 },
    Reset { seed: Option<u64> },
    Step { action: u8 },
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMsg {
    pub observation: WireObservation,
    pub reward_millis: i32,
    pub terminal: bool,
    pub step: u32,
}

impl StateMsg {
    pub fn reward(&self) -> f64 {
        self.reward_millis as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Welcome { version: u16, obs_kind: u8, obs_len: u32 },
    State(StateMsg),
    Bye,
    Error { code: ErrorCode, message: String },
}

/// Cursor over a frame body with bounds-checked reads.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() - self.pos < n {
            return malformed("truncated payload");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn i32(&mut self) -> Result<i32, ProtocolError> {
        Ok(i32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn finish(&self) -> Result<(), ProtocolError> {
        if self.pos != self.buf.len() {
            return malformed("trailing bytes");
        }
        Ok(())
    }
}

impl Request {
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        match self {
            Request::Hello { version } => {
                body.push(HELLO);
                body.extend_from_slice(&version.to_be_bytes());
            }
            Request::Reset { seed } => {
                body.push(RESET);
                body.push(seed.is_some() as u8);
                body.extend_from_slice(&seed.unwrap_or(0).to_be_bytes());
            }
            Request::Step { action } => {
                body.push(STEP);
                body.push(*action);
            }
            Request::Close => body.push(CLOSE),
        }
        body
    }

    pub fn decode(body: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(body);
        let req = match r.u8()? {
            HELLO => Request::Hello { version: r.u16()? },
            RESET => {
                let has = r.u8()?;
                let seed = r.u64()?;
                match has {
                    0 => Request::Reset { seed: None },
                    1 => Request::Reset { seed: Some(seed) },
                    _ => return malformed("bad seed flag"),
                }
            }
            STEP => Request::Step { action: r.u8()? },
            CLOSE => Request::Close,
            t => return malformed(format!("unknown request type {t:#04x}")),
        };
        r.finish()?;
        Ok(req)
    }
}

fn encode_observation(obs: &WireObservation, out: &mut Vec<u8>) {
    let (kind, dims) = match obs {
        WireObservation::Image { dims, .. } => (0u8, dims),
        WireObservation::LowDim { dims, .. } => (1u8, dims),
    };
    out.push(kind);
    out.push(dims.len() as u8);
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    match obs {
        WireObservation::Image { pixels, .. } => out.extend_from_slice(pixels),
        WireObservation::LowDim { micros, .. } => {
            for m in micros {
                out.extend_from_slice(&m.to_be_bytes());
            }
        }
    }
}

fn decode_observation(r: &mut Reader<'_>) -> Result<WireObservation, ProtocolError> {
    let kind = r.u8()?;
    let ndims = r.u8()? as usize;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(r.u32()?);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .filter(|&c| c <= MAX_FRAME)
        .ok_or_else(|| ProtocolError::Malformed("observation too large".into()))?;
    match kind {
        0 => Ok(WireObservation::Image {
            dims,
            pixels: r.take(count)?.to_vec(),
        }),
        1 => {
            let mut micros = Vec::with_capacity(count);
            for _ in 0..count {
                micros.push(r.i32()?);
            }
            Ok(WireObservation::LowDim { dims, micros })
        }
        k => malformed(format!("unknown observation kind {k}")),
    }
}

impl Response {
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        match self {
            Response::Welcome { version, obs_kind, obs_len } => {
                body.push(WELCOME);
                body.extend_from_slice(&version.to_be_bytes());
                body.push(*obs_kind);
                body.extend_from_slice(&obs_len.to_be_bytes());
            }
            Response::State(s) => {
                body.push(STATE);
                encode_observation(&s.observation, &mut body);
                body.extend_from_slice(&s.reward_millis.to_be_bytes());
                body.push(s.terminal as u8);
                body.extend_from_slice(&s.step.to_be_bytes());
            }
            Response::Bye => body.push(BYE),
            Response::Error { code, message } => {
                body.push(ERROR);
                body.push(*code as u8);
                let msg = &message.as_bytes()[..message.len().min(u16::MAX as usize)];
                body.extend_from_slice(&(msg.len() as u16).to_be_bytes());
                body.extend_from_slice(msg);
            }
        }
        body
    }

    pub fn decode(body: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(body);
        let resp = match r.u8()? {
            WELCOME => Response::Welcome {
                version: r.u16()?,
                obs_kind: r.u8()?,
                obs_len: r.u32()?,
            },
            STATE => {
                let observation = decode_observation(&mut r)?;
                let reward_millis = r.i32()?;
                let terminal = match r.u8()? {
                    0 => false,
                    1 => true,
                    _ => return malformed("bad terminal flag"),
                };
                Response::State(StateMsg {
                    observation,
                    reward_millis,
                    terminal,
                    step: r.u32()?,
                })
            }
            BYE => Response::Bye,
            ERROR => {
                let code = ErrorCode::from_u8(r.u8()?)
                    .ok_or_else(|| ProtocolError::Malformed("unknown error code".into()))?;
                let n = r.u16()? as usize;
                let message = String::from_utf8_lossy(r.take(n)?).into_owned();
                Response::Error { code, message }
            }
            t => return malformed(format!("unknown response type {t:#04x}")),
        };
        r.finish()?;
        Ok(resp)
    }
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one frame body. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n == 0 || n > MAX_FRAME {
        return malformed(format!("frame length {n}"));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}
