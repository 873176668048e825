//! Run records: one JSON object per line, scenario first, then one snapshot
//! per camera frame. Every line carries the protocol version `v`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::MetricsReport;
use super::scenario::Scenario;
use crate::coils::CoilCurrents;
use crate::control::Phase;
use crate::geometry::{Angle, Vec2};
use crate::protocol::PROTOCOL_VERSION;
use crate::sim::{FieldCommand, RobotState};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: unsupported record version {version}")]
    Version { line: usize, version: u32 },
    #[error("record does not start with a scenario line")]
    MissingScenario,
    #[error("line {0}: second scenario line")]
    DuplicateScenario(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSnapshot {
    pub id: u32,
    /// Latest tracked position, pixels.
    pub position: Vec2,
    /// When `position` was observed; older than the snapshot on a miss.
    pub sample_time: f64,
    /// pixels / second
    pub velocity: Option<Vec2>,
    pub misses: u32,
    pub lost: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSnapshot {
    pub id: u32,
    pub nodes: Vec<Vec2>,
    pub current_index: usize,
    pub epsilon: f64,
    pub installed_at: f64,
}

/// Everything observable about one camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub frame: u64,
    /// seconds, end of the frame
    pub time: f64,
    /// Simulated state of the tracked robot (the first robot before any
    /// selection). Meters.
    pub robot_truth: Option<RobotState>,
    pub track: Option<TrackSnapshot>,
    pub phase: Phase,
    /// Field computed this frame; drives the next frame's physics.
    pub field: Option<FieldCommand>,
    pub currents: Option<CoilCurrents>,
    pub offset_estimate: Option<Angle>,
    pub plan: Option<PlanSnapshot>,
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub snapshots: Vec<StateSnapshot>,
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    v: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LineBody {
    Scenario { scenario: Box<Scenario> },
    Snapshot(Box<StateSnapshot>),
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LineRef<'a> {
    Scenario { scenario: &'a Scenario },
    Snapshot(&'a StateSnapshot),
}

pub fn scenario_line(scenario: &Scenario) -> String {
    serde_json::to_string(&Line { v: PROTOCOL_VERSION, body: LineRef::Scenario { scenario } })
        .expect("scenario serializes")
}

pub fn snapshot_line(snapshot: &StateSnapshot) -> String {
    serde_json::to_string(&Line { v: PROTOCOL_VERSION, body: LineRef::Snapshot(snapshot) })
        .expect("snapshot serializes")
}

impl RunRecord {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", scenario_line(&self.scenario))?;
        for s in &self.snapshots {
            writeln!(out, "{}", snapshot_line(s))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn from_jsonl(text: &str) -> Result<RunRecord, RecordError> {
        let mut scenario = None;
        let mut snapshots = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let parsed: Line<LineBody> =
                serde_json::from_str(raw).map_err(|source| RecordError::Json { line, source })?;
            if parsed.v != PROTOCOL_VERSION {
                return Err(RecordError::Version { line, version: parsed.v });
            }
            match parsed.body {
                LineBody::Scenario { scenario: s } => {
                    if scenario.is_some() {
                        return Err(RecordError::DuplicateScenario(line));
                    }
                    scenario = Some(*s);
                }
                LineBody::Snapshot(s) => {
                    if scenario.is_none() {
                        return Err(RecordError::MissingScenario);
                    }
                    snapshots.push(*s);
                }
            }
        }
        Ok(RunRecord { scenario: scenario.ok_or(RecordError::MissingScenario)?, snapshots })
    }

    /// Plot-friendly export. Positions are pixels; `field_dir` is radians.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RecordError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "x_true", "y_true", "x_tracked", "y_tracked", "field_dir", "field_mag", "node_index"])?;
        let scale = self.scenario.cam.scale;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.snapshots {
            let truth = s.robot_truth.map(|r| r.position * scale);
            let tracked = s.track.as_ref().map(|t| t.position);
            w.write_record([
                s.time.to_string(),
                opt(truth.map(|p| p.x)),
                opt(truth.map(|p| p.y)),
                opt(tracked.map(|p| p.x)),
                opt(tracked.map(|p| p.y)),
                opt(s.field.map(|f| f.direction.angle().radians())),
                opt(s.field.map(|f| f.magnitude)),
                opt(s.plan.as_ref().map(|p| p.current_index as f64)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
