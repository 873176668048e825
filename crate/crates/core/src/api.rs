//! Request and response bodies of the HTTP/JSON service.

use serde::{Deserialize, Serialize};

use crate::coils::{CoilCalibration, CoilCurrents};
use crate::geometry::Vec2;
use crate::protocol::SessionInfo;
use crate::session::{MetricsReport, Scenario, StateSnapshot};
use crate::sim::FieldCommand;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// A `key = value` scenario file plus `key=value` overrides applied after it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseRequest {
    pub text: String,
    #[serde(default)]
    pub overrides: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResponse {
    pub metrics: MetricsReport,
    pub frames: usize,
    /// The run record as JSON lines.
    pub record: String,
}

/// A run record as JSON lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRequest {
    pub record: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayResponse {
    pub frames: usize,
    pub identical: bool,
    pub first_mismatch: Option<u64>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleRequest {
    pub points: Vec<Vec2>,
    pub node_spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetRequest {
    pub applied: FieldCommand,
    /// measured velocity, any unit
    pub velocity: Vec2,
    /// robot to target
    pub target: Vec2,
    #[serde(default)]
    pub min_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentsRequest {
    pub field: FieldCommand,
    #[serde(default)]
    pub calibration: CoilCalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRequest {
    pub currents: CoilCurrents,
    #[serde(default)]
    pub calibration: CoilCalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionRequest {
    /// meters
    pub radius: f64,
    /// kelvin
    pub temperature: f64,
    /// pascal seconds
    pub viscosity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionResponse {
    pub rotational: f64,
    pub translational: f64,
}

/// Acknowledges an operator event queued for the frame boundary at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAck {
    pub event: String,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub info: SessionInfo,
    pub frames: u64,
    pub time: f64,
    pub operator_connected: bool,
    pub latest: Option<StateSnapshot>,
}
