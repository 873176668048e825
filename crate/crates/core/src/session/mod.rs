//! The closed loop as a session: scenarios, the frame-by-frame engine,
//! run records, replay and performance metrics.

mod engine;
pub mod metrics;
pub mod path;
pub mod record;
pub mod scenario;

use thiserror::Error;

pub use engine::Session;
pub use metrics::{metrics, metrics_of, MetricsAccumulator, MetricsReport};
pub use path::{distance_to_polyline, polyline_length, resample_path, PathError};
pub use record::{scenario_line, snapshot_line, PlanSnapshot, RecordError, RunRecord, StateSnapshot, TrackSnapshot};
pub use scenario::{ConfigError, Event, InitialRobot, Scenario, TimedEvent, LIVE_PARAM_KEYS};

use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

/// Runs a scenario for its full duration without pacing.
pub fn run_headless(scenario: &Scenario) -> Result<(RunRecord, MetricsReport), SessionError> {
    let mut session = Session::new(scenario.clone())?;
    let frames = scenario.frame_count();
    let mut snapshots = Vec::with_capacity(frames as usize);
    for _ in 0..frames {
        snapshots.push(session.advance());
    }
    let report = snapshots.last().map(|s| s.metrics.clone()).unwrap_or_default();
    Ok((RunRecord { scenario: scenario.clone(), snapshots }, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub frames: usize,
    /// First frame whose re-run snapshot differs from the record, if any.
    pub first_mismatch: Option<u64>,
    pub metrics: MetricsReport,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// Re-runs the scenario of a record and compares every snapshot bit for bit.
pub fn replay(record: &RunRecord) -> Result<ReplayReport, SessionError> {
    let (rerun, metrics) = run_headless(&record.scenario)?;
    let mut first_mismatch = None;
    let n = record.snapshots.len().max(rerun.snapshots.len());
    for i in 0..n {
        let same = match (record.snapshots.get(i), rerun.snapshots.get(i)) {
            (Some(a), Some(b)) => snapshot_line(a) == snapshot_line(b),
            _ => false,
        };
        if !same {
            first_mismatch = Some(record.snapshots.get(i).or(rerun.snapshots.get(i)).map_or(i as u64, |s| s.frame));
            break;
        }
    }
    Ok(ReplayReport { frames: rerun.snapshots.len(), first_mismatch, metrics })
}
