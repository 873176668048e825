use serde::{Deserialize, Serialize};

use super::{Frame, Rect};
use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// Pixels strictly brighter than this belong to a blob.
    pub threshold: u8,
    pub min_size: usize,
    pub max_size: usize,
    /// Subtracted before weighting the centroid.
    pub background: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams { threshold: 80, min_size: 10, max_size: 4000, background: 40.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Sub-pixel, intensity weighted.
    pub centroid: Vec2,
    /// Summed intensity above background.
    pub mass: f64,
    pub pixel_count: usize,
}

/// Threshold + 8-connected components + weighted centroid, restricted to
/// `roi` when given. Results are sorted by descending mass.
pub fn detect_blobs(frame: &Frame, params: &DetectorParams, roi: Option<Rect>) -> Vec<Detection> {
    let rect = roi
        .unwrap_or(Rect { x0: 0, y0: 0, x1: frame.width, y1: frame.height })
        .clip(frame.width, frame.height);
    if rect.is_empty() {
        return Vec::new();
    }
    let (rw, rh) = (rect.width() as usize, rect.height() as usize);
    let stride = frame.width as usize;
    let pixel = |lx: usize, ly: usize| frame.data[(ly + rect.y0 as usize) * stride + lx + rect.x0 as usize];

    let mut visited = vec![false; rw * rh];
    let mut stack = Vec::new();
    let mut out = Vec::new();

    for start in 0..rw * rh {
        if visited[start] || pixel(start % rw, start / rw) <= params.threshold {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let (mut count, mut mass, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64, 0.0f64);
        while let Some(idx) = stack.pop() {
            let (lx, ly) = (idx % rw, idx / rw);
            let w = pixel(lx, ly) as f64 - params.background;
            count += 1;
            mass += w;
            sx += w * (lx + rect.x0 as usize) as f64;
            sy += w * (ly + rect.y0 as usize) as f64;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = lx as i64 + dx;
                    let ny = ly as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= rw as i64 || ny >= rh as i64 {
                        continue;
                    }
                    let n = ny as usize * rw + nx as usize;
                    if !visited[n] && pixel(nx as usize, ny as usize) > params.threshold {
                        visited[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        if count < params.min_size || count > params.max_size || mass <= 0.0 {
            continue;
        }
        out.push(Detection { centroid: Vec2::new(sx / mass, sy / mass), mass, pixel_count: count });
    }
    out.sort_by(|a, b| b.mass.total_cmp(&a.mass));
    out
}
