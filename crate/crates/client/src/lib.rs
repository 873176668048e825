//! Thin async client for the microsteer service.
//!
//! [`Client`] wraps the HTTP/JSON routes; [`LiveConnection`] speaks the live
//! operator protocol over a WebSocket.

pub use microsteer_core as core;

use futures::{SinkExt, StreamExt};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use tokio_tungstenite::tungstenite::Message;

use microsteer_core::api::{
    ErrorBody, EventAck, ParseRequest, RecordRequest, ReplayResponse, RunRequest, RunResponse, SessionStatus,
};
use microsteer_core::imaging::Frame;
use microsteer_core::protocol::{decode_frame, ClientBody, ClientMessage, ProtocolError, ServerBody, ServerMessage};
use microsteer_core::session::{Event, MetricsReport, Scenario, StateSnapshot};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Api { status: u16, message: String },
    #[error("websocket: {0}")]
    WebSocket(#[from] tokio_tungstenite::tungstenite::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("connection closed")]
    Closed,
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
        Err(ClientError::Api { status: status.as_u16(), message })
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    async fn get_text(&self, path: &str) -> Result<String> {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    pub async fn health(&self) -> Result<()> {
        self.get_text("/healthz").await.map(|_| ())
    }

    /// Parses a `key = value` scenario file, then applies `overrides` in order.
    pub async fn parse_scenario(&self, text: &str, overrides: &[(String, String)]) -> Result<Scenario> {
        self.post("/v1/scenario/parse", &ParseRequest { text: text.to_string(), overrides: overrides.to_vec() })
            .await
    }

    pub async fn run(&self, scenario: &Scenario) -> Result<RunResponse> {
        self.post("/v1/run", &RunRequest { scenario: scenario.clone() }).await
    }

    pub async fn replay(&self, record: &str) -> Result<ReplayResponse> {
        self.post("/v1/replay", &RecordRequest { record: record.to_string() }).await
    }

    pub async fn metrics(&self, record: &str) -> Result<MetricsReport> {
        self.post("/v1/metrics", &RecordRequest { record: record.to_string() }).await
    }

    pub async fn csv(&self, record: &str) -> Result<String> {
        let resp = self
            .http
            .post(format!("{}/v1/csv", self.base))
            .json(&RecordRequest { record: record.to_string() })
            .send()
            .await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    pub async fn session(&self) -> Result<SessionStatus> {
        let resp = self.http.get(format!("{}/v1/session", self.base)).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn send_event(&self, event: &Event) -> Result<EventAck> {
        self.post("/v1/session/events", event).await
    }

    pub async fn snapshot(&self) -> Result<Option<StateSnapshot>> {
        let resp = Self::check(self.http.get(format!("{}/v1/session/snapshot", self.base)).send().await?).await?;
        if resp.status() == reqwest::StatusCode::NO_CONTENT {
            return Ok(None);
        }
        Ok(Some(resp.json().await?))
    }

    /// The live session so far as a JSON-lines run record.
    pub async fn session_record(&self) -> Result<String> {
        self.get_text("/v1/session/record").await
    }

    /// The latest live frame as PGM bytes.
    pub async fn frame_pgm(&self) -> Result<Vec<u8>> {
        let resp = self.http.get(format!("{}/v1/session/frame.pgm", self.base)).send().await?;
        Ok(Self::check(resp).await?.bytes().await?.to_vec())
    }

    pub async fn connect_live(&self) -> Result<LiveConnection> {
        let url = format!("{}/v1/session/ws", self.base.replacen("http", "ws", 1));
        let (ws, _) = tokio_tungstenite::connect_async(url.as_str()).await.map_err(|e| match e {
            tokio_tungstenite::tungstenite::Error::Http(resp) => ClientError::Api {
                status: resp.status().as_u16(),
                message: resp
                    .body()
                    .as_ref()
                    .and_then(|b| serde_json::from_slice::<ErrorBody>(b).ok())
                    .map_or_else(|| "websocket upgrade refused".to_string(), |b| b.error),
            },
            other => other.into(),
        })?;
        Ok(LiveConnection { ws, pending_frame: None })
    }
}

/// One message from the live session, with frame headers and their binary
/// payloads already joined.
#[derive(Debug, Clone, PartialEq)]
pub enum LiveMessage {
    Server(ServerBody),
    Frame(Frame),
}

pub struct LiveConnection {
    ws: tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>,
    pending_frame: Option<f64>,
}

impl LiveConnection {
    pub async fn send(&mut self, body: ClientBody) -> Result<()> {
        self.send_raw(&ClientMessage::new(body).to_json()).await
    }

    pub async fn send_event(&mut self, event: Event) -> Result<()> {
        self.send(ClientBody::Event { event }).await
    }

    /// Sends text as is, bypassing the message types.
    pub async fn send_raw(&mut self, text: &str) -> Result<()> {
        self.ws.send(Message::Text(text.into())).await?;
        Ok(())
    }

    pub async fn next(&mut self) -> Result<LiveMessage> {
        loop {
            let msg = self.ws.next().await.ok_or(ClientError::Closed)??;
            match msg {
                Message::Text(t) => {
                    let parsed = ServerMessage::parse(t.as_str())?;
                    if let ServerBody::Frame { time, .. } = parsed.body {
                        self.pending_frame = Some(time);
                        continue;
                    }
                    return Ok(LiveMessage::Server(parsed.body));
                }
                Message::Binary(bytes) => {
                    let time = self.pending_frame.take().ok_or_else(|| {
                        ProtocolError::Malformed("binary frame without a preceding frame header".into())
                    })?;
                    return Ok(LiveMessage::Frame(decode_frame(&bytes, time)?));
                }
                Message::Close(_) => return Err(ClientError::Closed),
                _ => {}
            }
        }
    }

    /// Skips messages until the next snapshot.
    pub async fn next_snapshot(&mut self) -> Result<StateSnapshot> {
        loop {
            if let LiveMessage::Server(ServerBody::Snapshot(s)) = self.next().await? {
                return Ok(*s);
            }
        }
    }

    pub async fn close(mut self) -> Result<()> {
        self.ws.close(None).await?;
        Ok(())
    }
}
