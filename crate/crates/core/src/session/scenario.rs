//! Scenario description and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! run.seed = 42
//! run.duration = 30
//! sim.offset_delta = 60deg
//! sim.robot = 51.2e-6 51.2e-6 0
//! cam.noise_sigma = 2
//! ctrl.samples_per_update = 10
//! cal.gain = 1e-3 0 0 1e-3
//! event = 0 select 256 256
//! event = 0 target 456 256
//! event = 5 path 40 100 100 200 150 300 100
//! event = 8 set ctrl.arrival_epsilon=8
//! event = 12 stop
//! ```
//!
//! Positions in `sim.*` are meters; event coordinates are frame pixels.
//! Angles accept radians or a `deg` suffix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coils::CoilCalibration;
use crate::control::ControllerConfig;
use crate::geometry::{Angle, Vec2};
use crate::imaging::{CameraConfig, DetectorParams, TrackingConfig};
use crate::sim::{default_diffusion, SimConfig};

/// Keys an operator may change mid-run through [`Event::SetParams`].
pub const LIVE_PARAM_KEYS: [&str; 4] =
    ["ctrl.samples_per_update", "ctrl.arrival_epsilon", "ctrl.field_magnitude", "ctrl.node_spacing"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialRobot {
    /// meters
    pub position: Vec2,
    pub psi: Angle,
}

/// Operator and script actions. Coordinates are frame pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SelectRobot { cursor: Vec2 },
    SetTarget { point: Vec2 },
    SetPath { points: Vec<Vec2>, node_spacing: f64 },
    SetParams { params: BTreeMap<String, serde_json::Value> },
    Start,
    Stop,
}

impl Event {
    /// Checks the event on its own, without session state.
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            Event::SetPath { points, node_spacing } => {
                if points.len() < 2 {
                    return Err(ConfigError::Invalid("a path needs at least two points".into()));
                }
                if !(*node_spacing > 0.0 && node_spacing.is_finite()) {
                    return Err(ConfigError::Invalid("node_spacing must be positive".into()));
                }
                Ok(())
            }
            Event::SetParams { params } => {
                let mut probe = ControllerConfig::default();
                for (key, value) in params {
                    if !LIVE_PARAM_KEYS.contains(&key.as_str()) {
                        return Err(ConfigError::UnknownKey(key.clone()));
                    }
                    apply_ctrl_key(&mut probe, key, &json_scalar(value))?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Event::SelectRobot { .. } => "select_robot",
            Event::SetTarget { .. } => "set_target",
            Event::SetPath { .. } => "set_path",
            Event::SetParams { .. } => "set_params",
            Event::Start => "start",
            Event::Stop => "stop",
        }
    }
}

/// Renders a JSON scalar the way it would appear in a config file.
pub(crate) fn json_scalar(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    /// seconds; applied at the first frame boundary at or after this time
    pub time: f64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub seed: u64,
    /// seconds
    pub duration: f64,
    pub sim: SimConfig,
    pub cam: CameraConfig,
    pub detect: DetectorParams,
    pub tracking: TrackingConfig,
    pub ctrl: ControllerConfig,
    pub cal: CoilCalibration,
    pub robots: Vec<InitialRobot>,
    pub events: Vec<TimedEvent>,
}

impl Default for Scenario {
    fn default() -> Self {
        let sim = SimConfig::default();
        let center = Vec2::new(sim.arena_width / 2.0, sim.arena_height / 2.0);
        Scenario {
            seed: 0,
            duration: 30.0,
            sim,
            cam: CameraConfig::default(),
            detect: DetectorParams::default(),
            tracking: TrackingConfig::default(),
            ctrl: ControllerConfig::default(),
            cal: CoilCalibration::default(),
            robots: vec![InitialRobot { position: center, psi: Angle::ZERO }],
            events: Vec::new(),
        }
    }
}

impl Scenario {
    /// Physics sub-steps per camera frame; must be a positive integer.
    pub fn substeps(&self) -> Result<u32, ConfigError> {
        let k = self.cam.frame_dt / self.sim.dt_physics;
        let rounded = k.round();
        if !(rounded >= 1.0) || (k - rounded).abs() > 1e-9 * rounded {
            return Err(ConfigError::Invalid(format!(
                "frame_dt / dt_physics = {k} is not a positive integer"
            )));
        }
        Ok(rounded as u32)
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration / self.cam.frame_dt).round() as u64
    }

    /// Jump limit for association, defaulting to three robot diameters.
    pub fn max_jump_px(&self) -> f64 {
        self.tracking.max_jump.unwrap_or(3.0 * 2.0 * self.sim.robot_radius * self.cam.scale)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.sim.validate().map_err(|e| invalid(e.to_string()))?;
        self.cam.validate().map_err(invalid)?;
        self.ctrl.validate().map_err(invalid)?;
        self.cal.validate().map_err(|e| invalid(e.to_string()))?;
        self.substeps()?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration must be positive".into()));
        }
        if self.detect.min_size > self.detect.max_size {
            return Err(invalid("cam.min_size exceeds cam.max_size".into()));
        }
        if self.tracking.lost_after == 0 {
            return Err(invalid("cam.lost_after must be at least 1".into()));
        }
        let limit = self.cal.isotropic_limit().map_err(|e| invalid(e.to_string()))?;
        if self.ctrl.field_magnitude > limit {
            return Err(invalid(format!(
                "ctrl.field_magnitude {} T exceeds the {limit} T the coils reach in every direction",
                self.ctrl.field_magnitude
            )));
        }
        if self.events.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(invalid("events must be sorted by time".into()));
        }
        for e in &self.events {
            if !e.time.is_finite() {
                return Err(invalid("event time must be finite".into()));
            }
            e.event.validate()?;
        }
        Ok(())
    }

    /// Parses a `key = value` scenario file on top of the defaults.
    pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
        let mut scenario = Scenario::default();
        let mut robots = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "sim.robot" => robots.push(parse_robot(value)?),
                _ => scenario.set(key, value).map_err(|e| match e {
                    ConfigError::BadValue { key, message } => ConfigError::Syntax {
                        line: idx + 1,
                        message: format!("bad value for `{key}`: {message}"),
                    },
                    other => other,
                })?,
            }
        }
        if !robots.is_empty() {
            scenario.robots = robots;
        }
        scenario.events.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(scenario)
    }

    /// Applies one `key = value` setting (also used for CLI overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let (ns, name) = key.split_once('.').unwrap_or((key, ""));
        match (ns, name) {
            ("run", "seed") => self.seed = parse_num(key, value)?,
            ("run", "duration") => self.duration = parse_num(key, value)?,
            ("event", "") => self.events.push(parse_event(value)?),
            ("sim", "robot") => {
                self.robots = vec![parse_robot(value)?];
            }
            ("sim", "thermal") => {
                let nums = parse_list(key, value)?;
                let [temperature, viscosity] = nums[..] else {
                    return Err(bad(key, "expected `<kelvin> <pa_s>`"));
                };
                let (dr, dt) = default_diffusion(self.sim.robot_radius, temperature, viscosity)
                    .map_err(|e| bad(key, &e.to_string()))?;
                self.sim.rot_diff_dr = dr;
                self.sim.trans_diff_dt = dt;
            }
            ("sim", _) => apply_sim_key(&mut self.sim, key, value)?,
            ("cam", _) => self.apply_cam_key(key, value)?,
            ("ctrl", _) => apply_ctrl_key(&mut self.ctrl, key, value)?,
            ("cal", "gain") => {
                let g = parse_list(key, value)?;
                let [a, b, c, d] = g[..] else {
                    return Err(bad(key, "expected four numbers, row-major"));
                };
                self.cal.gain = [[a, b], [c, d]];
            }
            ("cal", "max_current") => self.cal.max_current = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    fn apply_cam_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let cam = &mut self.cam;
        match key {
            "cam.width_px" => cam.width_px = parse_num(key, value)?,
            "cam.height_px" => cam.height_px = parse_num(key, value)?,
            "cam.scale" => cam.scale = parse_num(key, value)?,
            "cam.frame_dt" => cam.frame_dt = parse_num(key, value)?,
            "cam.psf_sigma" => cam.psf_sigma = parse_num(key, value)?,
            "cam.background_level" => cam.background_level = parse_num(key, value)?,
            "cam.noise_sigma" => cam.noise_sigma = parse_num(key, value)?,
            "cam.spot_amplitude" => cam.spot_amplitude = parse_num(key, value)?,
            "cam.threshold" => self.detect.threshold = parse_num(key, value)?,
            "cam.min_size" => self.detect.min_size = parse_num(key, value)?,
            "cam.max_size" => self.detect.max_size = parse_num(key, value)?,
            "cam.roi_half_width" => self.tracking.roi_half_width = parse_num(key, value)?,
            "cam.max_jump" => self.tracking.max_jump = Some(parse_num(key, value)?),
            "cam.select_radius" => self.tracking.select_radius = parse_num(key, value)?,
            "cam.lost_after" => self.tracking.lost_after = parse_num(key, value)?,
            "cam.ideal_tracking" => self.tracking.ideal = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

fn bad(key: &str, message: &str) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), message: message.to_string() }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| bad(key, &format!("`{value}`: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).map(|s| parse_num(key, s)).collect()
}

/// Radians, or degrees with a `deg` suffix.
pub fn parse_angle(key: &str, value: &str) -> Result<Angle, ConfigError> {
    let v = value.trim();
    match v.strip_suffix("deg") {
        Some(d) => Ok(Angle::from_degrees(parse_num(key, d)?)),
        None => Ok(Angle::new(parse_num(key, v)?)),
    }
}

fn parse_robot(value: &str) -> Result<InitialRobot, ConfigError> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    let (x, y, psi) = match parts[..] {
        [x, y] => (x, y, "0"),
        [x, y, psi] => (x, y, psi),
        _ => return Err(bad("sim.robot", "expected `<x_m> <y_m> [psi]`")),
    };
    Ok(InitialRobot {
        position: Vec2::new(parse_num("sim.robot", x)?, parse_num("sim.robot", y)?),
        psi: parse_angle("sim.robot", psi)?,
    })
}

fn apply_sim_key(sim: &mut SimConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "sim.arena_width" => sim.arena_width = parse_num(key, value)?,
        "sim.arena_height" => sim.arena_height = parse_num(key, value)?,
        "sim.dt_physics" => sim.dt_physics = parse_num(key, value)?,
        "sim.speed_v0" => sim.speed_v0 = parse_num(key, value)?,
        "sim.offset_delta" => sim.offset_delta = parse_angle(key, value)?,
        "sim.align_tau" => sim.align_tau = parse_num(key, value)?,
        "sim.rot_diff_dr" => sim.rot_diff_dr = parse_num(key, value)?,
        "sim.trans_diff_dt" => sim.trans_diff_dt = parse_num(key, value)?,
        "sim.intrinsic_omega" => sim.intrinsic_omega = parse_num(key, value)?,
        "sim.moment_drift_rate" => sim.moment_drift_rate = parse_num(key, value)?,
        "sim.robot_radius" => sim.robot_radius = parse_num(key, value)?,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

pub(crate) fn apply_ctrl_key(ctrl: &mut ControllerConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "ctrl.field_magnitude" => ctrl.field_magnitude = parse_num(key, value)?,
        "ctrl.samples_per_update" => ctrl.samples_per_update = parse_num(key, value)?,
        "ctrl.arrival_epsilon" => ctrl.arrival_epsilon = parse_num(key, value)?,
        "ctrl.min_speed" => ctrl.min_speed = parse_num(key, value)?,
        "ctrl.node_spacing" => ctrl.node_spacing = parse_num(key, value)?,
        "ctrl.open_loop" => ctrl.open_loop = parse_num(key, value)?,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    ctrl.validate().map_err(|m| bad(key, &m))
}

/// `<time> <kind> <args...>`
fn parse_event(value: &str) -> Result<TimedEvent, ConfigError> {
    let key = "event";
    let mut parts = value.split_whitespace();
    let time: f64 = parse_num(key, parts.next().ok_or_else(|| bad(key, "missing time"))?)?;
    let kind = parts.next().ok_or_else(|| bad(key, "missing event kind"))?;
    let rest: Vec<&str> = parts.collect();
    let point = |args: &[&str]| -> Result<Vec2, ConfigError> {
        match args {
            [x, y] => Ok(Vec2::new(parse_num(key, x)?, parse_num(key, y)?)),
            _ => Err(bad(key, "expected `<x> <y>`")),
        }
    };
    let event = match kind {
        "select" => Event::SelectRobot { cursor: point(&rest)? },
        "target" => Event::SetTarget { point: point(&rest)? },
        "path" => {
            let nums = parse_list(key, &rest.join(" "))?;
            if nums.len() < 5 || nums.len() % 2 == 0 {
                return Err(bad(key, "expected `path <spacing> <x1> <y1> <x2> <y2> ...`"));
            }
            let points = nums[1..].chunks(2).map(|c| Vec2::new(c[0], c[1])).collect();
            Event::SetPath { points, node_spacing: nums[0] }
        }
        "set" => {
            let mut params = BTreeMap::new();
            for kv in rest {
                let (k, v) = kv.split_once('=').ok_or_else(|| bad(key, "expected `set key=value ...`"))?;
                let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
                params.insert(k.to_string(), value);
            }
            Event::SetParams { params }
        }
        "start" => Event::Start,
        "stop" => Event::Stop,
        other => return Err(bad(key, &format!("unknown event kind `{other}`"))),
    };
    event.validate()?;
    Ok(TimedEvent { time, event })
}
