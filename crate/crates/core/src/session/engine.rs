use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::MetricsAccumulator;
use super::path::resample_path;
use super::record::{PlanSnapshot, StateSnapshot, TrackSnapshot};
use super::scenario::{json_scalar, ConfigError, Event, Scenario, TimedEvent};
use super::SessionError;
use crate::coils::{currents_for_field, field_for_currents, CoilCurrents};
use crate::control::{ControllerConfig, ControllerState, NodeTarget, Phase, TrajectoryPlan};
use crate::geometry::Vec2;
use crate::imaging::{
    associate, detect_blobs, render_spots_into, select_robot_at, update_roi, Detection, DetectorParams, Frame,
    NoiseKey, Rect, Sample, Track,
};
use crate::sim::{FieldCommand, World};

/// Mixed into the scenario seed for the camera noise stream.
const CAMERA_STREAM: u64 = 0x6361_6d65_7261_0001;

/// One closed loop: world, tracker and controller, advanced a camera frame
/// at a time.
///
/// Frame `n` runs, in order: pending events at `t_n`, physics up to
/// `t_{n+1}` under the field actuated at the end of frame `n-1`, observation,
/// tracking, control, actuation, snapshot.
pub struct Session {
    scenario: Scenario,
    world: World,
    cam_rng: ChaCha8Rng,
    noise_key: NoiseKey,
    frame_buf: Frame,
    detector: DetectorParams,
    max_jump: f64,
    substeps: u32,
    /// Controller settings, including live changes; the scenario keeps the
    /// initial ones.
    ctrl_cfg: ControllerConfig,

    track: Option<Track>,
    tracked_robot: Option<usize>,
    next_track_id: u32,
    ctrl: ControllerState,
    plan: Option<(TrajectoryPlan, u32, f64)>,
    next_plan_id: u32,
    field: Option<FieldCommand>,
    currents: Option<CoilCurrents>,

    frame_index: u64,
    next_event: usize,
    log: Vec<String>,
    metrics: MetricsAccumulator,
}

impl Session {
    pub fn new(scenario: Scenario) -> Result<Self, SessionError> {
        scenario.validate()?;
        let substeps = scenario.substeps()?;
        let robots: Vec<_> = scenario.robots.iter().map(|r| (r.position, r.psi)).collect();
        let world = World::new(scenario.sim.clone(), scenario.seed, &robots)?;
        let mut cam_rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ CAMERA_STREAM);
        let noise_key = NoiseKey::draw(&mut cam_rng);
        let detector = DetectorParams { background: scenario.cam.background_level, ..scenario.detect.clone() };
        Ok(Session {
            frame_buf: Frame::new(scenario.cam.width_px, scenario.cam.height_px, 0, 0.0),
            max_jump: scenario.max_jump_px(),
            detector,
            substeps,
            ctrl_cfg: scenario.ctrl.clone(),
            world,
            cam_rng,
            noise_key,
            track: None,
            tracked_robot: None,
            next_track_id: 1,
            ctrl: ControllerState::default(),
            plan: None,
            next_plan_id: 1,
            field: None,
            currents: None,
            frame_index: 0,
            next_event: 0,
            log: Vec::new(),
            metrics: MetricsAccumulator::default(),
            scenario,
        })
    }

    /// The scenario including every event applied so far.
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    /// Time of the next frame boundary, where queued events take effect.
    pub fn boundary_time(&self) -> f64 {
        self.frame_index as f64 * self.scenario.cam.frame_dt
    }

    pub fn phase(&self) -> Phase {
        self.ctrl.phase
    }

    /// Queues an operator event for the next frame boundary and records it
    /// in the scenario so the run can be replayed.
    pub fn push_event(&mut self, event: Event) -> Result<(), ConfigError> {
        event.validate()?;
        let time = self.boundary_time();
        let at = self.scenario.events.partition_point(|e| e.time <= time);
        self.scenario.events.insert(at, TimedEvent { time, event });
        Ok(())
    }

    /// Runs one camera frame and returns its snapshot.
    pub fn advance(&mut self) -> StateSnapshot {
        let frame_dt = self.scenario.cam.frame_dt;
        let boundary = self.boundary_time();
        self.apply_due_events(boundary);

        for _ in 0..self.substeps {
            self.world.step(self.field.as_ref());
        }
        self.frame_index += 1;
        let now = self.frame_index as f64 * frame_dt;
        self.noise_key = NoiseKey::draw(&mut self.cam_rng);

        let observed = self.observe_tracked(now);
        if observed {
            self.control();
        }
        self.actuate();
        self.snapshot(now)
    }

    /// Full frame of the current world as the camera saw it at the end of the
    /// last frame.
    pub fn render_full(&self) -> Frame {
        let cam = &self.scenario.cam;
        let mut frame = Frame::new(cam.width_px, cam.height_px, 0, self.boundary_time());
        render_spots_into(&self.spots(), cam, self.noise_key, cam.full_rect(), &mut frame);
        frame
    }

    fn spots(&self) -> Vec<Vec2> {
        self.world.robots.iter().map(|r| self.scenario.cam.to_pixels(r.position)).collect()
    }

    fn detections_in(&mut self, rect: Rect) -> Vec<Detection> {
        let spots = self.spots();
        if self.scenario.tracking.ideal {
            return spots
                .into_iter()
                .filter(|p| {
                    p.x >= rect.x0 as f64 && p.x < rect.x1 as f64 && p.y >= rect.y0 as f64 && p.y < rect.y1 as f64
                })
                .map(|p| Detection {
                    centroid: p,
                    mass: self.scenario.cam.spot_amplitude,
                    pixel_count: self.detector.min_size,
                })
                .collect();
        }
        render_spots_into(&spots, &self.scenario.cam, self.noise_key, rect, &mut self.frame_buf);
        detect_blobs(&self.frame_buf, &self.detector, Some(rect))
    }

    fn apply_due_events(&mut self, boundary: f64) {
        let tol = 1e-9 * self.scenario.cam.frame_dt;
        while let Some(ev) = self.scenario.events.get(self.next_event) {
            if ev.time > boundary + tol {
                break;
            }
            let event = ev.event.clone();
            self.next_event += 1;
            self.apply_event(event, boundary);
        }
    }

    fn apply_event(&mut self, event: Event, now: f64) {
        match event {
            Event::SelectRobot { cursor } => {
                let full = self.scenario.cam.full_rect();
                let detections = self.detections_in(full);
                match select_robot_at(cursor, &detections, self.scenario.tracking.select_radius) {
                    Some(d) => {
                        let id = self.next_track_id;
                        self.next_track_id += 1;
                        let sample = Sample { position: d.centroid, time: now };
                        self.track = Some(Track::new(
                            id,
                            sample,
                            self.ctrl_cfg.samples_per_update,
                            self.scenario.tracking.roi_half_width,
                        ));
                        let spots = self.spots();
                        self.tracked_robot = spots
                            .iter()
                            .enumerate()
                            .min_by(|a, b| a.1.distance(d.centroid).total_cmp(&b.1.distance(d.centroid)))
                            .map(|(i, _)| i);
                        self.ctrl.stop();
                        self.plan = None;
                        self.log.push(format!("select: track {id} at ({:.1}, {:.1})", d.centroid.x, d.centroid.y));
                    }
                    None => self.log.push(format!(
                        "select: no robot within {} px of ({:.1}, {:.1})",
                        self.scenario.tracking.select_radius, cursor.x, cursor.y
                    )),
                }
            }
            Event::SetTarget { point } => {
                let eps = self.ctrl_cfg.arrival_epsilon;
                self.install_plan(vec![point], eps, now, "target");
            }
            Event::SetPath { points, node_spacing } => match resample_path(&points, node_spacing) {
                Ok(nodes) => {
                    let eps = self.ctrl_cfg.arrival_epsilon;
                    self.install_plan(nodes, eps, now, "path");
                }
                Err(e) => self.log.push(format!("path: {e}")),
            },
            Event::SetParams { params } => {
                for (key, value) in &params {
                    if let Err(e) = self.apply_param(key, &json_scalar(value)) {
                        self.log.push(format!("set: {e}"));
                    }
                }
            }
            Event::Start => {
                if self.plan.is_none() || !self.track_alive() {
                    self.log.push("start: nothing to guide".into());
                } else if matches!(self.ctrl.phase, Phase::Idle) {
                    self.ctrl.bootstrap(&self.ctrl_cfg);
                    self.actuate();
                }
            }
            Event::Stop => {
                self.ctrl.stop();
                self.actuate();
            }
        }
    }

    fn track_alive(&self) -> bool {
        self.track.as_ref().is_some_and(|t| !t.is_lost())
    }

    fn install_plan(&mut self, nodes: Vec<Vec2>, epsilon: f64, now: f64, what: &str) {
        if !self.track_alive() {
            self.log.push(format!("{what}: no robot selected"));
            return;
        }
        let plan = TrajectoryPlan::new(nodes, epsilon).expect("nodes are non-empty");
        let id = self.next_plan_id;
        self.next_plan_id += 1;
        self.log.push(format!("{what}: plan {id} with {} node(s)", plan.nodes.len()));
        self.plan = Some((plan, id, now));
        self.ctrl.bootstrap(&self.ctrl_cfg);
        self.actuate();
    }

    fn apply_param(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut next = self.scenario.clone();
        next.ctrl = self.ctrl_cfg.clone();
        next.set(key, value)?;
        next.validate()?;
        self.ctrl_cfg = next.ctrl;
        let ctrl = &self.ctrl_cfg;
        match key {
            "ctrl.samples_per_update" => {
                if let Some(t) = &mut self.track {
                    t.set_capacity(ctrl.samples_per_update);
                }
            }
            "ctrl.arrival_epsilon" => {
                if let Some((plan, _, _)) = &mut self.plan {
                    plan.epsilon = ctrl.arrival_epsilon;
                }
            }
            "ctrl.field_magnitude" => {
                self.ctrl.set_magnitude(ctrl.field_magnitude);
                self.actuate();
            }
            _ => {}
        }
        Ok(())
    }

    /// Returns whether the tracked robot was observed this frame.
    fn observe_tracked(&mut self, now: f64) -> bool {
        let Some(track) = &self.track else {
            return false;
        };
        if track.is_lost() {
            return false;
        }
        let cam = &self.scenario.cam;
        let roi = update_roi(track, cam.width_px, cam.height_px);
        let detections = self.detections_in(roi);
        let track = self.track.as_mut().expect("checked above");
        match associate(track, &detections, self.max_jump) {
            Some(d) => {
                track.push(Sample { position: d.centroid, time: now }).expect("frame times increase");
                true
            }
            None => {
                if track.record_miss(self.scenario.tracking.lost_after) {
                    self.ctrl.mark_lost();
                    self.log.push(format!("track {} lost", track.id));
                }
                false
            }
        }
    }

    fn control(&mut self) {
        let (Some(track), Some((plan, _, _))) = (&self.track, &mut self.plan) else {
            return;
        };
        if matches!(self.ctrl.phase, Phase::Idle | Phase::Lost) {
            return;
        }
        let cfg = &self.ctrl_cfg;
        let position = track.latest().position;
        match plan.algorithm2_step(position) {
            Ok(NodeTarget::Node(node)) => {
                self.ctrl.algorithm1_step(track, node, cfg);
            }
            Ok(NodeTarget::Done) => {
                let last = plan.final_node().expect("plans are non-empty");
                self.ctrl.station_keep(track, last, cfg);
            }
            Err(e) => self.log.push(format!("plan: {e}")),
        }
    }

    /// Converts the controller's field to coil currents and back, so the plant
    /// sees exactly what the coils produce.
    fn actuate(&mut self) {
        let Some(cmd) = self.ctrl.applied_field else {
            self.field = None;
            self.currents = None;
            return;
        };
        match currents_for_field(&cmd, &self.scenario.cal) {
            Ok(currents) => {
                let b = field_for_currents(&currents, &self.scenario.cal);
                self.field = FieldCommand::new(b, b.norm()).ok();
                self.currents = Some(currents);
            }
            Err(e) => {
                self.log.push(format!("coils: {e}"));
                self.ctrl.stop();
                self.field = None;
                self.currents = None;
            }
        }
    }

    fn snapshot(&mut self, now: f64) -> StateSnapshot {
        let robot_truth = self.world.robots.get(self.tracked_robot.unwrap_or(0)).copied();
        let track = self.track.as_ref().map(|t| {
            let latest = t.latest();
            TrackSnapshot {
                id: t.id,
                position: latest.position,
                sample_time: latest.time,
                velocity: t.velocity,
                misses: t.misses(),
                lost: t.is_lost(),
            }
        });
        let plan = self.plan.as_ref().map(|(p, id, installed_at)| PlanSnapshot {
            id: *id,
            nodes: p.nodes.clone(),
            current_index: p.current_index,
            epsilon: p.epsilon,
            installed_at: *installed_at,
        });
        let mut snap = StateSnapshot {
            frame: self.frame_index,
            time: now,
            robot_truth,
            track,
            phase: self.ctrl.phase,
            field: self.ctrl.applied_field,
            currents: self.currents,
            offset_estimate: self.ctrl.offset_estimate,
            plan,
            metrics: Default::default(),
            log: std::mem::take(&mut self.log),
        };
        self.metrics.observe(&snap);
        snap.metrics = self.metrics.report().clone();
        snap
    }
}
