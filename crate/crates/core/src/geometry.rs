//! Planar vector and angle algebra.
//!
//! Everything the controller does reduces to three operations on 2D vectors:
//! normalizing, rotating, and measuring the signed angle between two
//! directions. Magnitudes are carried separately by callers.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norms below this are treated as zero by [`unit`] and [`signed_angle`].
pub const ZERO_NORM: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("vector has (near) zero length")]
    ZeroVector,
    #[error("vector component is not finite")]
    NonFinite,
}

/// A 2D vector. Units depend on context: meters in the simulator, pixels in
/// the tracker, tesla for fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };
    pub const X: Vec2 = Vec2 { x: 1.0, y: 0.0 };
    pub const Y: Vec2 = Vec2 { x: 0.0, y: 1.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Checked constructor; rejects NaN and infinities.
    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Vec2 { x, y })
        } else {
            Err(GeometryError::NonFinite)
        }
    }

    /// Unit vector at `angle` from the +x axis.
    pub fn from_angle(angle: Angle) -> Self {
        let (s, c) = angle.radians().sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Direction of the vector as an angle from +x.
    pub fn angle(self) -> Angle {
        Angle::new(self.y.atan2(self.x))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl TryFrom<[f64; 2]> for Vec2 {
    type Error = GeometryError;

    fn try_from(value: [f64; 2]) -> Result<Self, Self::Error> {
        Vec2::try_new(value[0], value[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// An angle in radians, always wrapped to `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    pub fn new(radians: f64) -> Self {
        Angle(wrap(radians))
    }

    pub fn from_degrees(degrees: f64) -> Self {
        Angle::new(degrees.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

impl From<f64> for Angle {
    fn from(radians: f64) -> Self {
        Angle::new(radians)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

impl Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle::new(-self.0)
    }
}

impl Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        Angle::new(self.0 + rhs.0)
    }
}

impl Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        Angle::new(self.0 - rhs.0)
    }
}

/// Wraps `theta` into `(-π, π]`.
pub fn wrap(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Normalizes `v` to unit length.
pub fn unit(v: Vec2) -> Result<Vec2, GeometryError> {
    let n = v.norm();
    if !n.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    if n < ZERO_NORM {
        return Err(GeometryError::ZeroVector);
    }
    Ok(Vec2::new(v.x / n, v.y / n))
}

/// Counter-clockwise rotation of `v` by `theta`.
pub fn rotate(v: Vec2, theta: Angle) -> Vec2 {
    let (s, c) = theta.radians().sin_cos();
    Vec2::new(v.x * c - v.y * s, v.x * s + v.y * c)
}

/// The angle that rotates the direction of `a` onto the direction of `b`.
///
/// Antiparallel inputs give `+π`.
pub fn signed_angle(a: Vec2, b: Vec2) -> Result<Angle, GeometryError> {
    let a = unit(a)?;
    let b = unit(b)?;
    let theta = a.cross(b).atan2(a.dot(b));
    // atan2(-0.0, -1) is -π; fold it onto the closed end of the interval.
    Ok(Angle::new(if theta == -PI { PI } else { theta }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol
    }

    #[test]
    fn unit_examples() {
        assert!(close(unit(Vec2::new(3.0, 4.0)).unwrap(), Vec2::new(0.6, 0.8), 1e-15));
        assert_eq!(unit(Vec2::X).unwrap(), Vec2::X);
        assert_eq!(unit(Vec2::ZERO), Err(GeometryError::ZeroVector));
    }

    #[test]
    fn rotate_examples() {
        assert!(close(rotate(Vec2::X, Angle::new(FRAC_PI_2)), Vec2::Y, 1e-15));
        let v = Vec2::new(0.6, 0.8);
        assert_eq!(rotate(v, Angle::ZERO), v);
    }

    #[test]
    fn signed_angle_examples() {
        let quarter = signed_angle(Vec2::X, Vec2::Y).unwrap().radians();
        assert!((quarter - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(signed_angle(Vec2::X, Vec2::X).unwrap().radians(), 0.0);
        assert_eq!(signed_angle(Vec2::X, -Vec2::X).unwrap().radians(), PI);
        assert_eq!(signed_angle(Vec2::X, Vec2::new(-1.0, -0.0)).unwrap().radians(), PI);
        assert_eq!(signed_angle(Vec2::ZERO, Vec2::X), Err(GeometryError::ZeroVector));
    }

    #[test]
    fn wrap_boundaries() {
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(TAU + 0.25) - 0.25).abs() < 1e-12);
        assert!((wrap(-TAU - 0.25) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn vec2_rejects_non_finite_on_deserialize() {
        assert!(serde_json::from_str::<Vec2>("[1.0, 2.0]").is_ok());
        assert!(Vec2::try_new(f64::NAN, 0.0).is_err());
        assert!(Vec2::try_new(0.0, f64::INFINITY).is_err());
    }

    // 100 random (v, θ) pairs: rotating forth and back is the identity.
    #[test]
    fn rotate_inverse_random_sample() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let v = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let theta = Angle::new(rng.random_range(-PI..PI));
            let back = rotate(rotate(v, theta), -theta);
            assert!(close(back, v, 1e-12), "{v:?} {theta:?} {back:?}");
        }
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(x in -1e3..1e3f64, y in -1e3..1e3f64, t in -10.0..10.0f64) {
            let v = Vec2::new(x, y);
            prop_assume!(v.norm() > 1e-9);
            let r = rotate(v, Angle::new(t));
            prop_assert!((r.norm() - v.norm()).abs() <= 1e-12 * v.norm());
        }

        #[test]
        fn signed_angle_maps_a_onto_b(
            ax in -10.0..10.0f64, ay in -10.0..10.0f64,
            bx in -10.0..10.0f64, by in -10.0..10.0f64,
        ) {
            let (a, b) = (Vec2::new(ax, ay), Vec2::new(bx, by));
            prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
            let theta = signed_angle(a, b).unwrap();
            let mapped = rotate(unit(a).unwrap(), theta);
            prop_assert!(close(mapped, unit(b).unwrap(), 1e-10));
            let back = signed_angle(b, a).unwrap();
            if theta.radians().abs() < PI - 1e-9 {
                prop_assert!((theta.radians() + back.radians()).abs() < 1e-12);
            }
        }

        #[test]
        fn wrap_is_idempotent_and_periodic(t in -100.0..100.0f64) {
            let w = wrap(t);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap(w), w);
            prop_assert!((wrap(t + TAU) - w).abs() < 1e-9 || (wrap(t + TAU) - w).abs() > TAU - 1e-9);
        }
    }
}
