//! Field retargeting and node-by-node trajectory following.
//!
//! The robot swims at an unknown offset from the applied field. After a
//! window of tracked samples under a constant field, the measured offset is
//! `theta = angle(B -> v)`, and steering toward a target `t` means applying
//! `R(-theta) · t̂`. Trajectories are followed by aiming at one node at a time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotate, signed_angle, unit, Angle, GeometryError, Vec2};
use crate::imaging::Track;
use crate::sim::FieldCommand;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("robot speed {speed:.3} px/s is below the {min_speed} px/s floor")]
    StalledRobot { speed: f64, min_speed: f64 },
    #[error("robot sits on its target; no direction to steer toward")]
    ZeroTarget,
    #[error("trajectory plan has no nodes")]
    EmptyPlan,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// tesla
    pub field_magnitude: f64,
    /// Tracked samples between field updates (N).
    pub samples_per_update: usize,
    /// Node arrival threshold, pixels.
    pub arrival_epsilon: f64,
    /// Below this speed (px/s) the measured direction is not trusted.
    pub min_speed: f64,
    /// Arc-length spacing used when resampling drawn paths, pixels.
    pub node_spacing: f64,
    /// Hold the bootstrap field forever instead of retargeting.
    pub open_loop: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            field_magnitude: 2e-3,
            samples_per_update: 10,
            arrival_epsilon: 10.0,
            min_speed: 5.0,
            node_spacing: 40.0,
            open_loop: false,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.field_magnitude > 0.0 && self.field_magnitude.is_finite()) {
            return Err("field_magnitude must be positive".into());
        }
        if self.samples_per_update < 2 {
            return Err("samples_per_update must be at least 2".into());
        }
        if !(self.arrival_epsilon > 0.0 && self.arrival_epsilon.is_finite()) {
            return Err("arrival_epsilon must be positive".into());
        }
        if !(self.min_speed >= 0.0 && self.min_speed.is_finite()) {
            return Err("min_speed must be non-negative".into());
        }
        if !(self.node_spacing > 0.0 && self.node_spacing.is_finite()) {
            return Err("node_spacing must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Bootstrapping,
    Correcting,
    StationKeeping,
    Lost,
}

/// The initial field along +x, independent of the target.
pub fn bootstrap_field(config: &ControllerConfig) -> FieldCommand {
    FieldCommand { direction: Vec2::X, magnitude: config.field_magnitude }
}

/// New field direction that sends a robot moving along `velocity` under
/// `applied` toward `target_vec`. Magnitude is unchanged.
pub fn retarget_field(
    applied: &FieldCommand,
    velocity: Vec2,
    target_vec: Vec2,
    config: &ControllerConfig,
) -> Result<FieldCommand, ControlError> {
    let speed = velocity.norm();
    if !(speed >= config.min_speed) || speed == 0.0 {
        return Err(ControlError::StalledRobot { speed, min_speed: config.min_speed });
    }
    let aim = unit(target_vec).map_err(|e| match e {
        GeometryError::ZeroVector => ControlError::ZeroTarget,
        other => other.into(),
    })?;
    let offset = signed_angle(applied.direction, velocity)?;
    Ok(FieldCommand { direction: rotate(aim, -offset), magnitude: applied.magnitude })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub applied_field: Option<FieldCommand>,
    pub samples_since_update: usize,
    pub phase: Phase,
    /// Offset measured at the most recent retarget.
    pub offset_estimate: Option<Angle>,
    pub retargets: u32,
}

impl Default for ControllerState {
    fn default() -> Self {
        ControllerState {
            applied_field: None,
            samples_since_update: 0,
            phase: Phase::Idle,
            offset_estimate: None,
            retargets: 0,
        }
    }
}

impl ControllerState {
    /// Starts a new guidance episode with the +x bootstrap field.
    pub fn bootstrap(&mut self, config: &ControllerConfig) -> FieldCommand {
        let field = bootstrap_field(config);
        self.applied_field = Some(field);
        self.samples_since_update = 0;
        self.phase = Phase::Bootstrapping;
        field
    }

    pub fn stop(&mut self) {
        self.applied_field = None;
        self.samples_since_update = 0;
        self.phase = Phase::Idle;
    }

    pub fn mark_lost(&mut self) {
        self.applied_field = None;
        self.samples_since_update = 0;
        self.phase = Phase::Lost;
    }

    /// Rescales the held field after a magnitude change.
    pub fn set_magnitude(&mut self, magnitude: f64) {
        if let Some(f) = &mut self.applied_field {
            f.magnitude = magnitude;
        }
    }

    pub fn enter_station_keeping(&mut self) {
        if self.applied_field.is_some() {
            self.phase = Phase::StationKeeping;
        }
    }

    /// One tracked sample of point-to-point steering toward `target`.
    ///
    /// Every `samples_per_update` samples the field is retargeted from the
    /// track's velocity; in between the held field is returned.
    pub fn algorithm1_step(&mut self, track: &Track, target: Vec2, config: &ControllerConfig) -> Option<FieldCommand> {
        if track.is_lost() {
            self.mark_lost();
            return None;
        }
        let applied = self.applied_field?;
        self.samples_since_update += 1;
        if self.samples_since_update < config.samples_per_update {
            return Some(applied);
        }
        if config.open_loop {
            self.samples_since_update = 0;
            return Some(applied);
        }
        let Some(velocity) = track.velocity else {
            return Some(applied);
        };
        let target_vec = target - track.latest().position;
        match retarget_field(&applied, velocity, target_vec, config) {
            Ok(field) => {
                self.offset_estimate = signed_angle(applied.direction, velocity).ok();
                self.applied_field = Some(field);
                self.samples_since_update = 0;
                self.retargets += 1;
                if self.phase == Phase::Bootstrapping {
                    self.phase = Phase::Correcting;
                }
                Some(field)
            }
            // hold the last known-good field and try again next window
            Err(ControlError::StalledRobot { .. }) => {
                self.samples_since_update = 0;
                Some(applied)
            }
            // retry on the next sample, once the robot has moved off the target
            Err(_) => Some(applied),
        }
    }

    /// Keeps a perpetually swimming robot near `final_target` with the same
    /// law as [`ControllerState::algorithm1_step`].
    pub fn station_keep(&mut self, track: &Track, final_target: Vec2, config: &ControllerConfig) -> Option<FieldCommand> {
        self.enter_station_keeping();
        self.algorithm1_step(track, final_target, config)
    }
}

/// Ordered waypoints with an arrival threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub nodes: Vec<Vec2>,
    pub current_index: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeTarget {
    Node(Vec2),
    Done,
}

impl TrajectoryPlan {
    pub fn new(nodes: Vec<Vec2>, epsilon: f64) -> Result<Self, ControlError> {
        if nodes.is_empty() {
            return Err(ControlError::EmptyPlan);
        }
        Ok(TrajectoryPlan { nodes, current_index: 0, epsilon })
    }

    pub fn is_done(&self) -> bool {
        self.current_index >= self.nodes.len()
    }

    pub fn final_node(&self) -> Option<Vec2> {
        self.nodes.last().copied()
    }

    /// Advances past every node the robot is already within `epsilon` of and
    /// returns the node to steer toward next.
    pub fn algorithm2_step(&mut self, position: Vec2) -> Result<NodeTarget, ControlError> {
        if self.nodes.is_empty() {
            return Err(ControlError::EmptyPlan);
        }
        while self.current_index < self.nodes.len() && position.distance(self.nodes[self.current_index]) < self.epsilon {
            self.current_index += 1;
        }
        Ok(match self.nodes.get(self.current_index) {
            Some(&node) => NodeTarget::Node(node),
            None => NodeTarget::Done,
        })
    }
}
