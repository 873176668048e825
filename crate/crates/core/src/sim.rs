//! Ground-truth plant: overdamped active Brownian particles whose magnetic
//! moment is torqued toward the applied planar field.
//!
//! Heading model per robot (moment angle `psi`, propulsion offset `delta`):
//!
//! ```text
//! field on,  tau > 0:  dpsi = sin(phi_B - psi)/tau dt + sqrt(2 Dr) dW
//! field on,  tau = 0:  psi  = phi_B + sqrt(2 Dr dt) eta
//! field off:           dpsi = omega0 dt + sqrt(2 Dr) dW
//! ```
//!
//! The robot swims at `v0` along `psi + delta`, with translational noise
//! `sqrt(2 Dt)` per axis and reflecting arena walls.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap, Angle, Vec2};

pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("robot at ({x}, {y}) m lies outside the {width} x {height} m arena")]
    OutOfArena { x: f64, y: f64, width: f64, height: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("diffusion inputs must be positive")]
    NonPositiveInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// meters
    pub arena_width: f64,
    /// meters
    pub arena_height: f64,
    /// seconds
    pub dt_physics: f64,
    /// meters / second
    pub speed_v0: f64,
    /// Angle from the magnetic moment axis to the propulsion axis.
    pub offset_delta: Angle,
    /// Magnetic alignment relaxation time in seconds; 0 aligns instantly.
    pub align_tau: f64,
    /// rad^2 / s
    pub rot_diff_dr: f64,
    /// m^2 / s
    pub trans_diff_dt: f64,
    /// Field-free angular drift, rad / s.
    pub intrinsic_omega: f64,
    /// Random-walk rate of the propulsion offset, rad^2 / s; 0 disables.
    pub moment_drift_rate: f64,
    /// meters
    pub robot_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            arena_width: 102.4e-6,
            arena_height: 102.4e-6,
            dt_physics: 1e-3,
            speed_v0: 10e-6,
            offset_delta: Angle::ZERO,
            align_tau: 0.005,
            rot_diff_dr: 0.0,
            trans_diff_dt: 0.0,
            intrinsic_omega: 0.3,
            moment_drift_rate: 0.0,
            robot_radius: 2.35e-6,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        let all_finite = [
            self.arena_width,
            self.arena_height,
            self.dt_physics,
            self.speed_v0,
            self.offset_delta.radians(),
            self.align_tau,
            self.rot_diff_dr,
            self.trans_diff_dt,
            self.intrinsic_omega,
            self.moment_drift_rate,
            self.robot_radius,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("all parameters must be finite");
        }
        if self.arena_width <= 0.0 || self.arena_height <= 0.0 {
            return bad("arena dimensions must be positive");
        }
        if self.dt_physics <= 0.0 {
            return bad("dt_physics must be positive");
        }
        if self.speed_v0 < 0.0 {
            return bad("speed_v0 must be non-negative");
        }
        if self.align_tau < 0.0 {
            return bad("align_tau must be non-negative");
        }
        if self.rot_diff_dr < 0.0 || self.trans_diff_dt < 0.0 || self.moment_drift_rate < 0.0 {
            return bad("diffusion coefficients must be non-negative");
        }
        if self.robot_radius <= 0.0 {
            return bad("robot_radius must be positive");
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (0.0..=self.arena_width).contains(&p.x) && (0.0..=self.arena_height).contains(&p.y)
    }
}

/// Stokes-Einstein rotational and translational diffusion of a sphere of
/// `radius` meters in a fluid of `viscosity` Pa·s at `temperature` K.
///
/// Returns `(Dr [rad²/s], Dt [m²/s])`.
pub fn default_diffusion(radius: f64, temperature: f64, viscosity: f64) -> Result<(f64, f64), SimError> {
    if !(radius > 0.0 && temperature > 0.0 && viscosity > 0.0) {
        return Err(SimError::NonPositiveInput);
    }
    let kt = BOLTZMANN * temperature;
    let dr = kt / (8.0 * std::f64::consts::PI * viscosity * radius.powi(3));
    let dt = kt / (6.0 * std::f64::consts::PI * viscosity * radius);
    Ok((dr, dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// meters
    pub position: Vec2,
    /// Magnetic moment orientation.
    pub psi: Angle,
    /// Current propulsion offset from the moment axis.
    pub delta: Angle,
}

impl RobotState {
    /// Direction the robot swims in.
    pub fn heading(&self) -> Angle {
        self.psi + self.delta
    }
}

/// A planar magnetic field: unit direction plus magnitude in tesla.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldCommand {
    pub direction: Vec2,
    pub magnitude: f64,
}

impl FieldCommand {
    /// Builds a command from an arbitrary non-zero direction.
    pub fn new(direction: Vec2, magnitude: f64) -> Result<Self, crate::geometry::GeometryError> {
        Ok(FieldCommand { direction: crate::geometry::unit(direction)?, magnitude })
    }

    pub fn vector(&self) -> Vec2 {
        self.direction * self.magnitude
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub robots: Vec<RobotState>,
    pub time: f64,
    pub steps: u64,
    pub config: SimConfig,
    rng: ChaCha8Rng,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.robots == other.robots
            && self.time.to_bits() == other.time.to_bits()
            && self.steps == other.steps
            && self.config == other.config
            && self.rng == other.rng
    }
}

impl World {
    /// Seeds a world with robots at the given `(position, psi)` pairs.
    pub fn new(config: SimConfig, seed: u64, initial: &[(Vec2, Angle)]) -> Result<Self, SimError> {
        config.validate()?;
        let robots = initial
            .iter()
            .map(|&(position, psi)| {
                if !position.is_finite() || !config.contains(position) {
                    return Err(SimError::OutOfArena {
                        x: position.x,
                        y: position.y,
                        width: config.arena_width,
                        height: config.arena_height,
                    });
                }
                Ok(RobotState { position, psi, delta: config.offset_delta })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(World { robots, time: 0.0, steps: 0, config, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Advances every robot by one physics step under `field` (or none).
    pub fn step(&mut self, field: Option<&FieldCommand>) {
        let cfg = &self.config;
        let dt = cfg.dt_physics;
        let rot_kick = (2.0 * cfg.rot_diff_dr * dt).sqrt();
        let drift_kick = (cfg.moment_drift_rate * dt).sqrt();
        let trans_kick = (2.0 * cfg.trans_diff_dt * dt).sqrt();
        let field_angle = field.map(|f| f.direction.y.atan2(f.direction.x));

        for robot in &mut self.robots {
            // Fixed draw order per robot keeps trajectories reproducible.
            let eta: f64 = StandardNormal.sample(&mut self.rng);
            let eta_delta: f64 = StandardNormal.sample(&mut self.rng);
            let xi_x: f64 = StandardNormal.sample(&mut self.rng);
            let xi_y: f64 = StandardNormal.sample(&mut self.rng);

            let psi = robot.psi.radians();
            let new_psi = match field_angle {
                Some(phi) if cfg.align_tau == 0.0 => phi + rot_kick * eta,
                Some(phi) => psi + (phi - psi).sin() / cfg.align_tau * dt + rot_kick * eta,
                None => psi + cfg.intrinsic_omega * dt + rot_kick * eta,
            };
            robot.psi = Angle::new(new_psi);
            if cfg.moment_drift_rate > 0.0 {
                robot.delta = Angle::new(robot.delta.radians() + drift_kick * eta_delta);
            }

            let (s, c) = wrap(robot.psi.radians() + robot.delta.radians()).sin_cos();
            let x = robot.position.x + cfg.speed_v0 * c * dt + trans_kick * xi_x;
            let y = robot.position.y + cfg.speed_v0 * s * dt + trans_kick * xi_y;
            robot.position = Vec2::new(reflect(x, cfg.arena_width), reflect(y, cfg.arena_height));
        }
        self.steps += 1;
        self.time = self.steps as f64 * dt;
    }
}

/// Folds `x` back into `[0, extent]` as a mirror at each wall.
fn reflect(x: f64, extent: f64) -> f64 {
    if (0.0..=extent).contains(&x) {
        return x;
    }
    let period = 2.0 * extent;
    let r = x.rem_euclid(period);
    if r > extent {
        period - r
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn quiet() -> SimConfig {
        SimConfig {
            rot_diff_dr: 0.0,
            trans_diff_dt: 0.0,
            intrinsic_omega: 0.0,
            align_tau: 0.0,
            ..SimConfig::default()
        }
    }

    fn center(cfg: &SimConfig) -> Vec2 {
        Vec2::new(cfg.arena_width / 2.0, cfg.arena_height / 2.0)
    }

    #[test]
    fn create_world_examples() {
        let cfg = SimConfig::default();
        let w = World::new(cfg.clone(), 42, &[(center(&cfg), Angle::ZERO)]).unwrap();
        assert_eq!(w.time, 0.0);
        assert_eq!(w.robots[0].position, center(&cfg));

        let small = SimConfig { arena_width: 1.0, arena_height: 1.0, ..SimConfig::default() };
        let err = World::new(small, 1, &[(Vec2::new(-1.0, 0.0), Angle::ZERO)]).unwrap_err();
        assert!(matches!(err, SimError::OutOfArena { .. }));

        let a = World::new(cfg.clone(), 7, &[(center(&cfg), Angle::ZERO)]).unwrap();
        let b = World::new(cfg.clone(), 7, &[(center(&cfg), Angle::ZERO)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SimConfig { dt_physics: 0.0, ..SimConfig::default() };
        assert!(matches!(World::new(cfg, 0, &[]), Err(SimError::InvalidConfig(_))));
        let cfg = SimConfig { align_tau: -1.0, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn noise_free_step_along_field() {
        let cfg = SimConfig { dt_physics: 0.1, ..quiet() };
        let start = center(&cfg);
        let mut w = World::new(cfg, 1, &[(start, Angle::new(1.0))]).unwrap();
        w.step(Some(&FieldCommand { direction: Vec2::X, magnitude: 2e-3 }));
        let d = w.robots[0].position - start;
        assert!((d.x - 1.0e-6).abs() < 1e-18, "{d:?}");
        assert!(d.y.abs() < 1e-18);
        assert!((w.time - 0.1).abs() < 1e-15);
    }

    #[test]
    fn noise_free_step_with_quarter_turn_offset() {
        let cfg = SimConfig { dt_physics: 0.1, offset_delta: Angle::new(FRAC_PI_2), ..quiet() };
        let start = center(&cfg);
        let mut w = World::new(cfg, 1, &[(start, Angle::ZERO)]).unwrap();
        w.step(Some(&FieldCommand { direction: Vec2::X, magnitude: 2e-3 }));
        let d = w.robots[0].position - start;
        assert!(d.x.abs() < 1e-18);
        assert!((d.y - 1.0e-6).abs() < 1e-18, "{d:?}");
    }

    #[test]
    fn alignment_matches_closed_form() {
        // dpsi/dt = -sin(psi)/tau  =>  tan(psi/2) = tan(psi0/2) exp(-t/tau)
        let tau = 1.0;
        let cfg = SimConfig { dt_physics: 1e-4, align_tau: tau, speed_v0: 0.0, ..quiet() };
        let mut w = World::new(cfg, 3, &[(center(&SimConfig::default()), Angle::new(FRAC_PI_2))]).unwrap();
        let field = FieldCommand { direction: Vec2::X, magnitude: 1e-3 };
        for _ in 0..10_000 {
            w.step(Some(&field));
        }
        let expected = 2.0 * ((FRAC_PI_2 / 2.0).tan() * (-1.0f64).exp()).atan();
        assert!((expected - 0.7050).abs() < 1e-3);
        assert!((w.robots[0].psi.radians() - expected).abs() < 1e-3);
    }

    #[test]
    fn heading_error_strictly_decreases_under_constant_field() {
        let cfg = SimConfig { align_tau: 0.05, dt_physics: 1e-3, ..quiet() };
        let mut w = World::new(cfg.clone(), 3, &[(center(&cfg), Angle::new(3.0))]).unwrap();
        let field = FieldCommand { direction: Vec2::X, magnitude: 1e-3 };
        let mut prev = w.robots[0].psi.radians().abs();
        for _ in 0..2000 {
            w.step(Some(&field));
            let err = w.robots[0].psi.radians().abs();
            if prev < 1e-12 {
                break;
            }
            assert!(err < prev, "{err} !< {prev}");
            prev = err;
        }
    }

    #[test]
    fn field_free_path_is_a_circle() {
        let omega = 0.5;
        let cfg = SimConfig { intrinsic_omega: omega, dt_physics: 1e-3, ..quiet() };
        let start = center(&cfg);
        let mut w = World::new(cfg.clone(), 9, &[(start, Angle::ZERO)]).unwrap();
        let steps = (2.0 * PI / omega / cfg.dt_physics).round() as usize;
        let mut pts = Vec::with_capacity(steps);
        for _ in 0..steps {
            w.step(None);
            pts.push(w.robots[0].position);
        }
        let expected_radius = cfg.speed_v0 / omega;
        // center of the circle is a quarter turn left of the initial heading
        let c = start + Vec2::Y * expected_radius;
        for p in pts {
            let r = p.distance(c);
            assert!((r - expected_radius).abs() < 0.01 * expected_radius, "{r} vs {expected_radius}");
        }
    }

    #[test]
    fn reflection_keeps_robot_inside() {
        let cfg = SimConfig { speed_v0: 50e-6, ..quiet() };
        let near_wall = Vec2::new(cfg.arena_width - 1e-7, cfg.arena_height / 2.0);
        let mut w = World::new(cfg.clone(), 2, &[(near_wall, Angle::ZERO)]).unwrap();
        let field = FieldCommand { direction: Vec2::X, magnitude: 1e-3 };
        let mut prev = w.robots[0].position;
        for _ in 0..1000 {
            w.step(Some(&field));
            let p = w.robots[0].position;
            assert!(cfg.contains(p));
            let moved = p.distance(prev);
            assert!(moved <= cfg.speed_v0 * cfg.dt_physics * (1.0 + 1e-9));
            prev = p;
        }
        assert_eq!(reflect(-0.25, 1.0), 0.25);
        assert_eq!(reflect(1.25, 1.0), 0.75);
        assert_eq!(reflect(3.5, 1.0), 0.5);
    }

    #[test]
    fn angles_stay_wrapped_with_noise_and_drift() {
        let cfg = SimConfig {
            rot_diff_dr: 5.0,
            moment_drift_rate: 5.0,
            trans_diff_dt: 1e-12,
            ..SimConfig::default()
        };
        let mut w = World::new(cfg.clone(), 5, &[(center(&cfg), Angle::ZERO)]).unwrap();
        for i in 0..5000 {
            let field = (i % 2 == 0).then_some(FieldCommand { direction: Vec2::Y, magnitude: 1e-3 });
            w.step(field.as_ref());
            let r = w.robots[0];
            for a in [r.psi.radians(), r.delta.radians()] {
                assert!(a > -PI && a <= PI);
            }
            assert!(cfg.contains(r.position));
        }
    }

    #[test]
    fn same_seed_same_trajectory_bitwise() {
        let cfg = SimConfig { rot_diff_dr: 0.1, trans_diff_dt: 1e-13, ..SimConfig::default() };
        let run = |seed| {
            let mut w = World::new(cfg.clone(), seed, &[(center(&cfg), Angle::ZERO)]).unwrap();
            for i in 0..500 {
                let field = (i > 100).then_some(FieldCommand { direction: Vec2::Y, magnitude: 1e-3 });
                w.step(field.as_ref());
            }
            w
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4).robots, run(5).robots);
    }

    #[test]
    fn stokes_einstein_defaults() {
        // direct formula evaluation for a 4.7 µm bead in water at 298 K
        let a = 2.35e-6;
        let kt = 1.380_649e-23 * 298.0;
        let dr_oracle = kt / (8.0 * PI * 1e-3 * a * a * a);
        let dt_oracle = kt / (6.0 * PI * 1e-3 * a);
        let (dr, dt) = default_diffusion(a, 298.0, 1e-3).unwrap();
        assert!((dr - dr_oracle).abs() < 1e-15);
        assert!((dt - dt_oracle).abs() < 1e-27);
        assert!((dr - 1.26e-2).abs() < 0.005e-2);
        assert!((dt - 9.3e-14).abs() < 0.05e-14);

        let (dr2, _) = default_diffusion(2.0 * a, 298.0, 1e-3).unwrap();
        assert!((dr2 / dr - 0.125).abs() < 1e-12);

        assert_eq!(default_diffusion(0.0, 298.0, 1e-3), Err(SimError::NonPositiveInput));
        assert_eq!(default_diffusion(a, -1.0, 1e-3), Err(SimError::NonPositiveInput));
    }
}
