//! Planar coil model: two logical Helmholtz axes with a linear
//! current-to-field gain and per-axis current limits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::sim::FieldCommand;

/// Largest accepted condition number of the gain matrix.
pub const MAX_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoilError {
    #[error("field needs ({ix:.4}, {iy:.4}) A, beyond the {max_current} A limit")]
    UnreachableField { ix: f64, iy: f64, max_current: f64 },
    #[error("calibration matrix is singular or ill-conditioned (cond = {0:e})")]
    SingularCalibration(f64),
    #[error("invalid calibration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoilCalibration {
    /// Tesla per ampere, row-major: `[[dBx/dIx, dBx/dIy], [dBy/dIx, dBy/dIy]]`.
    pub gain: [[f64; 2]; 2],
    /// Amperes, applied to each axis.
    pub max_current: f64,
}

impl Default for CoilCalibration {
    fn default() -> Self {
        CoilCalibration { gain: [[1e-3, 0.0], [0.0, 1e-3]], max_current: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilCurrents {
    pub ix: f64,
    pub iy: f64,
}

impl CoilCalibration {
    pub fn validate(&self) -> Result<(), CoilError> {
        if !(self.max_current > 0.0 && self.max_current.is_finite()) {
            return Err(CoilError::Invalid("max_current must be positive".into()));
        }
        self.inverse().map(|_| ())
    }

    /// 2-norm condition number via the singular values of the gain.
    pub fn condition_number(&self) -> f64 {
        let [[a, b], [c, d]] = self.gain;
        let frob2 = a * a + b * b + c * c + d * d;
        let det = (a * d - b * c).abs();
        if det == 0.0 || !frob2.is_finite() {
            return f64::INFINITY;
        }
        // s1^2 + s2^2 = frob2, s1 * s2 = det
        let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0).sqrt();
        let s1 = ((frob2 + disc) / 2.0).sqrt();
        let s2 = det / s1;
        s1 / s2
    }

    fn inverse(&self) -> Result<[[f64; 2]; 2], CoilError> {
        let cond = self.condition_number();
        if !(cond < MAX_CONDITION) {
            return Err(CoilError::SingularCalibration(cond));
        }
        let [[a, b], [c, d]] = self.gain;
        let det = a * d - b * c;
        Ok([[d / det, -b / det], [-c / det, a / det]])
    }

    /// Largest field magnitude reachable in every direction.
    ///
    /// Axis current `i` for a field `m·u` is `m·(row_i · u)`, whose worst
    /// case over unit `u` is `m·|row_i|`.
    pub fn isotropic_limit(&self) -> Result<f64, CoilError> {
        let inv = self.inverse()?;
        let worst = inv.iter().map(|r| r[0].hypot(r[1])).fold(0.0, f64::max);
        Ok(self.max_current / worst)
    }
}

/// Currents that produce `field`; errors instead of clamping when a limit
/// would be exceeded.
pub fn currents_for_field(field: &FieldCommand, cal: &CoilCalibration) -> Result<CoilCurrents, CoilError> {
    let inv = cal.inverse()?;
    let b = field.vector();
    let ix = inv[0][0] * b.x + inv[0][1] * b.y;
    let iy = inv[1][0] * b.x + inv[1][1] * b.y;
    if ix.abs() > cal.max_current || iy.abs() > cal.max_current {
        return Err(CoilError::UnreachableField { ix, iy, max_current: cal.max_current });
    }
    Ok(CoilCurrents { ix, iy })
}

/// Field in tesla produced by `currents`.
pub fn field_for_currents(currents: &CoilCurrents, cal: &CoilCalibration) -> Vec2 {
    let [[a, b], [c, d]] = cal.gain;
    Vec2::new(a * currents.ix + b * currents.iy, c * currents.ix + d * currents.iy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(dir: Vec2, mag: f64) -> FieldCommand {
        FieldCommand::new(dir, mag).unwrap()
    }

    #[test]
    fn identity_gain() {
        let cal = CoilCalibration { gain: [[1e-3, 0.0], [0.0, 1e-3]], max_current: 5.0 };
        let i = currents_for_field(&field(Vec2::X, 1e-3), &cal).unwrap();
        assert!((i.ix - 1.0).abs() < 1e-12 && i.iy.abs() < 1e-12);
        let b = field_for_currents(&CoilCurrents { ix: 1.0, iy: 0.0 }, &cal);
        assert_eq!(b, Vec2::new(1e-3, 0.0));
        assert_eq!(field_for_currents(&CoilCurrents { ix: 0.0, iy: 0.0 }, &cal), Vec2::ZERO);
    }

    #[test]
    fn scalar_gain() {
        let cal = CoilCalibration { gain: [[2e-3, 0.0], [0.0, 2e-3]], max_current: 5.0 };
        let i = currents_for_field(&field(Vec2::Y, 1e-3), &cal).unwrap();
        assert!(i.ix.abs() < 1e-12 && (i.iy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn over_limit_is_an_error() {
        let cal = CoilCalibration { gain: [[1e-3, 0.0], [0.0, 1e-3]], max_current: 5.0 };
        let err = currents_for_field(&field(Vec2::X, 10e-3), &cal).unwrap_err();
        assert!(matches!(err, CoilError::UnreachableField { .. }));
    }

    #[test]
    fn singular_gain_rejected() {
        let cal = CoilCalibration { gain: [[1e-3, 2e-3], [2e-3, 4e-3]], max_current: 5.0 };
        assert!(matches!(cal.validate(), Err(CoilError::SingularCalibration(_))));
        let err = currents_for_field(&field(Vec2::X, 1e-3), &cal).unwrap_err();
        assert!(matches!(err, CoilError::SingularCalibration(_)));
        let bad = CoilCalibration { max_current: 0.0, ..CoilCalibration::default() };
        assert!(matches!(bad.validate(), Err(CoilError::Invalid(_))));
    }

    #[test]
    fn isotropic_limit_bounds_every_direction() {
        let cal = CoilCalibration { gain: [[1e-3, 0.4e-3], [-0.2e-3, 0.8e-3]], max_current: 3.0 };
        let limit = cal.isotropic_limit().unwrap();
        for k in 0..360 {
            let dir = Vec2::from_angle(crate::geometry::Angle::from_degrees(k as f64));
            assert!(currents_for_field(&field(dir, limit * 0.999_999), &cal).is_ok());
        }
        let over = (0..3600)
            .map(|k| Vec2::from_angle(crate::geometry::Angle::from_degrees(k as f64 / 10.0)))
            .any(|dir| currents_for_field(&field(dir, limit * 1.001), &cal).is_err());
        assert!(over);
    }

    #[test]
    fn linearity_is_exact() {
        let cal = CoilCalibration { gain: [[1.5e-3, 0.25e-3], [-0.5e-3, 1e-3]], max_current: 3.0 };
        let i = CoilCurrents { ix: 0.7, iy: -1.3 };
        let b = field_for_currents(&i, &cal);
        let b2 = field_for_currents(&CoilCurrents { ix: 2.0 * i.ix, iy: 2.0 * i.iy }, &cal);
        assert_eq!(b2, b * 2.0);
    }

    // Random well-conditioned gains: currents_for_field inverts
    // field_for_currents to 1e-9 relative.
    #[test]
    fn round_trip_random_gains() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 100 {
            let gain = [
                [rng.random_range(-2e-3..2e-3), rng.random_range(-2e-3..2e-3)],
                [rng.random_range(-2e-3..2e-3), rng.random_range(-2e-3..2e-3)],
            ];
            let cal = CoilCalibration { gain, max_current: 5.0 };
            if cal.condition_number() > 100.0 {
                continue;
            }
            let i = CoilCurrents { ix: rng.random_range(-5.0..5.0), iy: rng.random_range(-5.0..5.0) };
            let b = field_for_currents(&i, &cal);
            let cmd = FieldCommand::new(b, b.norm()).unwrap();
            let back = currents_for_field(&cmd, &cal).unwrap_or_else(|e| panic!("{e}"));
            let scale = i.ix.hypot(i.iy);
            assert!((back.ix - i.ix).abs() <= 1e-9 * scale);
            assert!((back.iy - i.iy).abs() <= 1e-9 * scale);
            let b_back = field_for_currents(&back, &cal);
            assert!(b_back.distance(b) <= 1e-9 * b.norm());
            checked += 1;
        }
    }
}
