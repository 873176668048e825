//! Wire types of the live operator protocol.
//!
//! Text messages are JSON objects carrying `v` (the protocol version) and a
//! `type` tag. Camera frames travel as a `frame` header text message followed
//! by one binary message: width as u32 LE, height as u32 LE, then
//! `width * height` row-major 8-bit pixels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::Frame;
use crate::session::{Event, StateSnapshot};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("binary frame is {got} bytes, expected {expected}")]
    FrameLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub v: u32,
    #[serde(flatten)]
    pub body: ClientBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientBody {
    Event { event: Event },
    /// Turn the camera frame stream on or off.
    Frames { enabled: bool },
    Ping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub v: u32,
    #[serde(flatten)]
    pub body: ServerBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    Hello { session: SessionInfo },
    Snapshot(Box<StateSnapshot>),
    /// The event was queued for the frame boundary at `time`.
    Ack { event: String, time: f64 },
    Error { message: String },
    Pong,
    /// Announces the binary frame message that follows.
    Frame { time: f64, width: u32, height: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub protocol: u32,
    pub width: u32,
    pub height: u32,
    /// pixels per meter
    pub scale: f64,
    pub frame_dt: f64,
    pub live_params: Vec<String>,
}

impl ClientMessage {
    pub fn new(body: ClientBody) -> Self {
        ClientMessage { v: PROTOCOL_VERSION, body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages serialize")
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        parse_versioned(text)
    }
}

impl ServerMessage {
    pub fn new(body: ServerBody) -> Self {
        ServerMessage { v: PROTOCOL_VERSION, body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        parse_versioned(text)
    }
}

fn parse_versioned<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ProtocolError> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    match raw.get("v").and_then(serde_json::Value::as_u64) {
        Some(v) if v == PROTOCOL_VERSION as u64 => {}
        Some(v) => return Err(ProtocolError::Version(v.min(u32::MAX as u64) as u32)),
        None => return Err(ProtocolError::Malformed("missing version field `v`".into())),
    }
    serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + frame.data.len());
    out.extend_from_slice(&frame.width.to_le_bytes());
    out.extend_from_slice(&frame.height.to_le_bytes());
    out.extend_from_slice(&frame.data);
    out
}

/// Inverse of [`encode_frame`]; the timestamp comes from the header message.
pub fn decode_frame(bytes: &[u8], time: f64) -> Result<Frame, ProtocolError> {
    if bytes.len() < 8 {
        return Err(ProtocolError::FrameLength { got: bytes.len(), expected: 8 });
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
    let height = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let expected = 8 + width as usize * height as usize;
    if bytes.len() != expected {
        return Err(ProtocolError::FrameLength { got: bytes.len(), expected });
    }
    Ok(Frame::from_data(width, height, bytes[8..].to_vec(), time).expect("length checked"))
}
