//! Synthetic camera and the tracking pipeline that consumes its frames.

mod camera;
mod detect;
mod track;

pub use camera::{render_frame, render_spots_into, CameraConfig, Frame, NoiseKey};
pub use detect::{detect_blobs, Detection, DetectorParams};
pub use track::{
    associate, estimate_velocity, select_robot_at, update_roi, Sample, Track, TrackError, TrackingConfig,
};

use serde::{Deserialize, Serialize};

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn clip(self, width: u32, height: u32) -> Rect {
        let x1 = self.x1.min(width);
        let y1 = self.y1.min(height);
        Rect { x0: self.x0.min(x1), y0: self.y0.min(y1), x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}
