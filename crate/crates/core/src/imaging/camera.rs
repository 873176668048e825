use std::io::{self, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::Rect;
use crate::geometry::Vec2;
use crate::sim::World;

/// Synthetic microscope camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub width_px: u32,
    pub height_px: u32,
    /// pixels per meter
    pub scale: f64,
    /// seconds between frames
    pub frame_dt: f64,
    /// Gaussian spot width, pixels
    pub psf_sigma: f64,
    pub background_level: f64,
    pub noise_sigma: f64,
    pub spot_amplitude: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            width_px: 512,
            height_px: 512,
            scale: 5e6,
            frame_dt: 0.05,
            psf_sigma: 4.0,
            background_level: 40.0,
            noise_sigma: 2.0,
            spot_amplitude: 150.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err("frame dimensions must be positive".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err("scale must be positive".into());
        }
        if !(self.frame_dt > 0.0 && self.frame_dt.is_finite()) {
            return Err("frame_dt must be positive".into());
        }
        if !(self.psf_sigma > 0.0 && self.psf_sigma.is_finite()) {
            return Err("psf_sigma must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err("noise_sigma must be non-negative".into());
        }
        let peak = self.background_level + self.spot_amplitude;
        if !(self.background_level >= 0.0 && self.spot_amplitude >= 0.0 && peak <= 255.0) {
            return Err("background_level + spot_amplitude must lie in [0, 255]".into());
        }
        Ok(())
    }

    /// World meters to pixel coordinates. Pixel `(i, j)` samples the point
    /// `(i, j)` in pixel space.
    pub fn to_pixels(&self, p: Vec2) -> Vec2 {
        p * self.scale
    }

    pub fn to_meters(&self, p: Vec2) -> Vec2 {
        p * (1.0 / self.scale)
    }

    pub fn full_rect(&self) -> Rect {
        Rect { x0: 0, y0: 0, x1: self.width_px, y1: self.height_px }
    }
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
    /// seconds; stored as raw bits so `Frame` can be `Eq`
    timestamp_bits: u64,
}

impl Frame {
    pub fn new(width: u32, height: u32, fill: u8, timestamp: f64) -> Self {
        Frame {
            width,
            height,
            data: vec![fill; width as usize * height as usize],
            timestamp_bits: timestamp.to_bits(),
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<u8>, timestamp: f64) -> Option<Self> {
        (data.len() == width as usize * height as usize).then_some(Frame {
            width,
            height,
            data,
            timestamp_bits: timestamp.to_bits(),
        })
    }

    pub fn timestamp(&self) -> f64 {
        f64::from_bits(self.timestamp_bits)
    }

    pub fn set_timestamp(&mut self, t: f64) {
        self.timestamp_bits = t.to_bits();
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Binary PGM (P5, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.data)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.data.len() + 20);
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

/// Per-frame key for the pixel noise field.
///
/// Pixel noise is a pure function of `(key, x, y)`, so rendering any
/// sub-rectangle produces exactly the pixels a full render would.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseKey(pub u64);

impl NoiseKey {
    pub fn draw<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        NoiseKey(rng.next_u64())
    }

    /// Standard normal deviate for pixel `(x, y)`.
    pub fn normal(self, x: u32, y: u32) -> f64 {
        let (even, odd) = self.normal_pair(x >> 1, y);
        if x & 1 == 0 {
            even
        } else {
            odd
        }
    }

    /// Both Box-Muller outputs for the pixel pair `(2 * pair, y)`, `(2 * pair + 1, y)`.
    fn normal_pair(self, pair: u32, y: u32) -> (f64, f64) {
        let idx = (u64::from(y) << 32) | u64::from(pair);
        let h1 = splitmix64(self.0 ^ splitmix64(idx));
        let h2 = splitmix64(h1);
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((h1 >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (h2 >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders every robot of `world` as a full frame, drawing the noise key
/// from `rng`.
pub fn render_frame<R: RngCore + ?Sized>(world: &World, cam: &CameraConfig, rng: &mut R) -> Frame {
    let key = NoiseKey::draw(rng);
    let spots: Vec<Vec2> = world.robots.iter().map(|r| cam.to_pixels(r.position)).collect();
    let mut frame = Frame::new(cam.width_px, cam.height_px, 0, world.time);
    render_spots_into(&spots, cam, key, cam.full_rect(), &mut frame);
    frame
}

/// Writes the pixels of `rect` into `frame`; pixels outside `rect` are left
/// untouched. `spots` are pixel-space centers.
pub fn render_spots_into(spots: &[Vec2], cam: &CameraConfig, key: NoiseKey, rect: Rect, frame: &mut Frame) {
    debug_assert_eq!((frame.width, frame.height), (cam.width_px, cam.height_px));
    let rect = rect.clip(cam.width_px, cam.height_px);
    let reach = 6.0 * cam.psf_sigma;
    let inv_two_var = 1.0 / (2.0 * cam.psf_sigma * cam.psf_sigma);
    let near: Vec<Vec2> = spots
        .iter()
        .copied()
        .filter(|s| {
            s.x + reach >= rect.x0 as f64
                && s.x - reach < rect.x1 as f64
                && s.y + reach >= rect.y0 as f64
                && s.y - reach < rect.y1 as f64
        })
        .collect();
    // the spot profile is separable: amplitude * gx(x) * gy(y)
    let profile = |c: f64, lo: u32, hi: u32| -> Vec<f64> {
        (lo..hi).map(|i| (-(i as f64 - c).powi(2) * inv_two_var).exp()).collect()
    };
    let factors: Vec<(Vec2, Vec<f64>, Vec<f64>)> =
        near.iter().map(|s| (*s, profile(s.x, rect.x0, rect.x1), profile(s.y, rect.y0, rect.y1))).collect();
    let width = frame.width as usize;
    for y in rect.y0..rect.y1 {
        let row = y as usize * width;
        let mut pair = None;
        for x in rect.x0..rect.x1 {
            let mut v = cam.background_level;
            for (s, gx, gy) in &factors {
                let dx = x as f64 - s.x;
                let dy = y as f64 - s.y;
                if dx * dx + dy * dy <= reach * reach {
                    v += cam.spot_amplitude * gx[(x - rect.x0) as usize] * gy[(y - rect.y0) as usize];
                }
            }
            if cam.noise_sigma > 0.0 {
                let (even, odd) = match pair {
                    Some((p, values)) if p == x >> 1 => values,
                    _ => {
                        let values = key.normal_pair(x >> 1, y);
                        pair = Some((x >> 1, values));
                        values
                    }
                };
                v += cam.noise_sigma * if x & 1 == 0 { even } else { odd };
            }
            frame.data[row + x as usize] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Angle;
    use crate::sim::SimConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world_at(cam: &CameraConfig, px: &[Vec2]) -> World {
        let sim = SimConfig {
            arena_width: cam.width_px as f64 / cam.scale,
            arena_height: cam.height_px as f64 / cam.scale,
            ..SimConfig::default()
        };
        let robots: Vec<_> = px.iter().map(|p| (cam.to_meters(*p), Angle::ZERO)).collect();
        World::new(sim, 0, &robots).unwrap()
    }

    #[test]
    fn centered_spot_is_symmetric() {
        let cam = CameraConfig { width_px: 129, height_px: 129, noise_sigma: 0.0, ..CameraConfig::default() };
        let w = world_at(&cam, &[Vec2::new(64.0, 64.0)]);
        let f = render_frame(&w, &cam, &mut ChaCha8Rng::seed_from_u64(1));
        let max = *f.data.iter().max().unwrap();
        assert_eq!(f.get(64, 64), max);
        for y in 0..129 {
            for x in 0..129 {
                let a = f.get(x, y) as i32;
                let b = f.get(128 - x, 128 - y) as i32;
                assert!((a - b).abs() <= 1, "({x},{y})");
            }
        }
    }

    #[test]
    fn empty_world_is_uniform_background() {
        let cam = CameraConfig { noise_sigma: 0.0, ..CameraConfig::default() };
        let w = world_at(&cam, &[]);
        let f = render_frame(&w, &cam, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(f.data.iter().all(|&v| v == 40));
    }

    #[test]
    fn pixel_noise_has_requested_spread() {
        let cam = CameraConfig { noise_sigma: 2.0, ..CameraConfig::default() };
        let w = world_at(&cam, &[]);
        let f = render_frame(&w, &cam, &mut ChaCha8Rng::seed_from_u64(99));
        let n = f.data.len() as f64;
        let mean = f.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = f.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((std - 2.0).abs() < 0.2 * 2.0, "std {std}");
        assert!((mean - 40.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn region_render_matches_full_render() {
        let cam = CameraConfig::default();
        let spots = [Vec2::new(100.3, 200.7), Vec2::new(130.0, 190.0)];
        let key = NoiseKey(0xDEAD_BEEF);
        let mut full = Frame::new(cam.width_px, cam.height_px, 0, 0.0);
        render_spots_into(&spots, &cam, key, cam.full_rect(), &mut full);
        let roi = Rect { x0: 80, y0: 170, x1: 150, y1: 230 };
        let mut part = Frame::new(cam.width_px, cam.height_px, 0, 0.0);
        render_spots_into(&spots, &cam, key, roi, &mut part);
        for y in roi.y0..roi.y1 {
            for x in roi.x0..roi.x1 {
                assert_eq!(full.get(x, y), part.get(x, y));
            }
        }
        assert_eq!(part.get(0, 0), 0);
    }

    #[test]
    fn pgm_header_and_payload() {
        let f = Frame::from_data(3, 2, vec![0, 1, 2, 3, 4, 255], 0.5).unwrap();
        let bytes = f.to_pgm();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 1, 2, 3, 4, 255]);
        assert!(Frame::from_data(3, 2, vec![0; 5], 0.0).is_none());
    }

    #[test]
    fn render_is_bit_exact_for_same_seed() {
        let cam = CameraConfig::default();
        let w = world_at(&cam, &[Vec2::new(256.0, 256.0)]);
        let a = render_frame(&w, &cam, &mut ChaCha8Rng::seed_from_u64(5));
        let b = render_frame(&w, &cam, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
