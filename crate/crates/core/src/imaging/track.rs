use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Detection, Rect};
use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("sample time {got} does not follow the latest sample at {latest}")]
    NonIncreasingTime { latest: f64, got: f64 },
}

/// Single-target tracking knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    pub roi_half_width: u32,
    /// Largest frame-to-frame jump accepted by [`associate`], pixels.
    /// `None` derives three robot diameters from the scene.
    pub max_jump: Option<f64>,
    pub select_radius: f64,
    /// Consecutive misses before the track is declared lost.
    pub lost_after: u32,
    /// Feed ground-truth positions to the tracker instead of detecting blobs.
    pub ideal: bool,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig { roi_half_width: 32, max_jump: None, select_radius: 20.0, lost_after: 5, ideal: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub position: Vec2,
    pub time: f64,
}

/// A single tracked robot: the last `capacity` observed positions plus the
/// derived velocity and region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u32,
    history: VecDeque<Sample>,
    capacity: usize,
    pub roi_center: Vec2,
    pub roi_half_width: u32,
    pub velocity: Option<Vec2>,
    misses: u32,
    lost: bool,
}

impl Track {
    pub fn new(id: u32, first: Sample, capacity: usize, roi_half_width: u32) -> Self {
        let capacity = capacity.max(2);
        let mut history = VecDeque::with_capacity(capacity);
        history.push_back(first);
        Track {
            id,
            history,
            capacity,
            roi_center: first.position,
            roi_half_width,
            velocity: None,
            misses: 0,
            lost: false,
        }
    }

    /// Appends an observation, evicting the oldest past capacity, and
    /// refreshes velocity and ROI center.
    pub fn push(&mut self, sample: Sample) -> Result<(), TrackError> {
        let latest = self.latest();
        if !(sample.time > latest.time) {
            return Err(TrackError::NonIncreasingTime { latest: latest.time, got: sample.time });
        }
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(sample);
        self.misses = 0;
        self.roi_center = sample.position;
        self.velocity = estimate_velocity(self);
        Ok(())
    }

    /// Counts a frame with no association; returns whether the track is now lost.
    pub fn record_miss(&mut self, lost_after: u32) -> bool {
        self.misses += 1;
        if self.misses >= lost_after {
            self.lost = true;
        }
        self.lost
    }

    pub fn latest(&self) -> Sample {
        *self.history.back().expect("track history is never empty")
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = &Sample> + '_ {
        self.history.iter()
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Changes N, keeping the newest samples.
    pub fn set_capacity(&mut self, capacity: usize) {
        self.capacity = capacity.max(2);
        while self.history.len() > self.capacity {
            self.history.pop_front();
        }
        self.velocity = estimate_velocity(self);
    }

    pub fn misses(&self) -> u32 {
        self.misses
    }

    pub fn is_lost(&self) -> bool {
        self.lost
    }
}

/// Average velocity over the stored history, in pixels per second.
///
/// Uses the endpoint form `(p_last - p_first) / (t_last - t_first)`, which is
/// the mean of the per-interval displacements for uniformly spaced samples.
pub fn estimate_velocity(track: &Track) -> Option<Vec2> {
    if track.history.len() < 2 {
        return None;
    }
    let first = track.history.front()?;
    let last = track.history.back()?;
    let span = last.time - first.time;
    (span > 0.0).then(|| (last.position - first.position) * (1.0 / span))
}

/// Nearest detection to the track head within `max_jump`; equal distances
/// prefer the heavier blob.
pub fn associate(track: &Track, detections: &[Detection], max_jump: f64) -> Option<Detection> {
    let head = track.latest().position;
    nearest_within(head, detections, max_jump)
}

/// The detection nearest to a cursor click, if within `radius`.
pub fn select_robot_at(cursor: Vec2, detections: &[Detection], radius: f64) -> Option<Detection> {
    nearest_within(cursor, detections, radius)
}

fn nearest_within(point: Vec2, detections: &[Detection], limit: f64) -> Option<Detection> {
    const TIE: f64 = 1e-9;
    let mut best: Option<(f64, Detection)> = None;
    for d in detections {
        let dist = d.centroid.distance(point);
        if dist > limit {
            continue;
        }
        best = match best {
            None => Some((dist, *d)),
            Some((bd, b)) if dist < bd - TIE || ((dist - bd).abs() <= TIE && d.mass > b.mass) => Some((dist, *d)),
            keep => keep,
        };
    }
    best.map(|(_, d)| d)
}

/// Square crop of side `2 * roi_half_width` around the track head, clipped
/// to the frame.
pub fn update_roi(track: &Track, frame_width: u32, frame_height: u32) -> Rect {
    let c = track.latest().position;
    let hw = i64::from(track.roi_half_width);
    let lo = |v: f64| ((v.round() as i64) - hw).max(0) as u32;
    let hi = |v: f64, max: u32| ((v.round() as i64) + hw).clamp(0, i64::from(max)) as u32;
    Rect { x0: lo(c.x), y0: lo(c.y), x1: hi(c.x, frame_width), y1: hi(c.y, frame_height) }.clip(frame_width, frame_height)
}
