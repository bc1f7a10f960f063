//! Core types shared by every stage: samples, traces, angles, attitude, positions.
//!
//! Frames. The device frame is right-handed with `z` up when the device sits level
//! (a level, static accelerometer reads `(0, 0, g)`). Headings are measured from
//! magnetic north toward east, so the magnetometer heading is `atan2(m_y, m_x)` of the
//! levelled field. The planar track frame has `x` along magnetic north and `y` along
//! magnetic east; a step of length `d` at heading `psi` moves `(d cos psi, d sin psi)`.
//! Angles are radians internally and degrees in every file and CLI interface.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Sub};

use nalgebra::{UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;

/// A planar angle wrapped to `[0, 2π)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Wraps any finite value. Panics on non-finite input; use [`wrap_angle`] for a
    /// checked conversion.
    pub fn from_radians(x: f64) -> Angle {
        wrap_angle(x).expect("finite angle")
    }

    pub fn from_degrees(deg: f64) -> Angle {
        Angle::from_radians(deg.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    pub fn sin_cos(self) -> (f64, f64) {
        self.0.sin_cos()
    }

    /// Rotates by a signed offset in radians.
    pub fn rotated(self, by: f64) -> Angle {
        Angle::from_radians(self.0 + by)
    }
}

/// Wraps `x` into `[0, 2π)`.
pub fn wrap_angle(x: f64) -> Result<Angle> {
    if !x.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    Ok(Angle(if r >= TAU { 0.0 } else { r }))
}

/// Signed shortest arc from `b` to `a`, in `(-π, π]`. Antipodal ties resolve to `+π`.
pub fn circular_diff(a: Angle, b: Angle) -> f64 {
    let d = (a.0 - b.0 + PI).rem_euclid(TAU) - PI;
    // rounding can land an exact antipode a hair inside -π
    if d <= -PI + 1e-12 {
        PI
    } else {
        d
    }
}

/// Weighted circular mean: direction of the weighted resultant of unit vectors.
pub fn circular_mean(angles: &[Angle], weights: Option<&[f64]>) -> Result<Angle> {
    if angles.is_empty() {
        return Err(Error::InvalidInput("circular mean of an empty set".into()));
    }
    let (mut s, mut c, mut total) = (0.0, 0.0, 0.0);
    match weights {
        Some(w) => {
            if w.len() != angles.len() {
                return Err(Error::Misaligned(format!(
                    "{} angles but {} weights",
                    angles.len(),
                    w.len()
                )));
            }
            for (a, &wi) in angles.iter().zip(w) {
                if !(wi >= 0.0) || !wi.is_finite() {
                    return Err(Error::InvalidInput(format!("invalid weight {wi}")));
                }
                let (sa, ca) = a.sin_cos();
                s += wi * sa;
                c += wi * ca;
                total += wi;
            }
            if total <= 0.0 {
                return Err(Error::InvalidInput("all weights are zero".into()));
            }
        }
        None => {
            for a in angles {
                let (sa, ca) = a.sin_cos();
                s += sa;
                c += ca;
            }
            total = angles.len() as f64;
        }
    }
    if s.hypot(c) <= 1e-12 * total {
        return Err(Error::UndefinedMean);
    }
    wrap_angle(s.atan2(c))
}

/// Interpolates from `a` toward `b` along the shortest arc: `a + w_b * diff(b, a)`.
///
/// Linear in arc length, so scalar blends of nearby headings are reproduced exactly and
/// the 0/2π boundary is honoured. Antipodal inputs move along the `+π` side of `a`.
pub fn circular_blend(a: Angle, b: Angle, w_b: f64) -> Angle {
    if w_b <= 0.0 {
        return a;
    }
    if w_b >= 1.0 {
        return b;
    }
    a.rotated(w_b * circular_diff(b, a))
}

/// One timestamped 9-axis reading in the device frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    /// Seconds since trace start.
    pub t: f64,
    /// Specific force, m/s².
    pub acc: Vector3<f64>,
    /// Angular rate, rad/s.
    pub gyro: Vector3<f64>,
    /// Magnetic field, arbitrary linear units.
    pub mag: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, acc: Vector3<f64>, gyro: Vector3<f64>, mag: Vector3<f64>) -> Result<Self> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidInput(format!("timestamp {t} must be finite and non-negative")));
        }
        if acc.iter().chain(gyro.iter()).chain(mag.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field"));
        }
        Ok(ImuSample { t, acc, gyro, mag })
    }
}

/// A time-ordered sequence of samples from one device.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceTrace {
    pub device_id: String,
    pub rate_hz: f64,
    pub samples: Vec<ImuSample>,
    /// Reference heading per sample (phone traces only).
    pub reference: Option<Vec<Angle>>,
}

impl DeviceTrace {
    pub fn new(device_id: impl Into<String>, rate_hz: f64, samples: Vec<ImuSample>) -> Result<Self> {
        let trace = DeviceTrace {
            device_id: device_id.into(),
            rate_hz,
            samples,
            reference: None,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn with_reference(mut self, reference: Vec<Angle>) -> Result<Self> {
        if reference.len() != self.samples.len() {
            return Err(Error::Misaligned(format!(
                "{} reference headings for {} samples",
                reference.len(),
                self.samples.len()
            )));
        }
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return Err(Error::InvalidInput(format!("rate {} Hz must be positive", self.rate_hz)));
        }
        if let Some(i) = self.samples.windows(2).position(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidInput(format!(
                "timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// True when every spacing is within `tol` seconds of `1 / rate_hz`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let dt = self.dt();
        self.samples.windows(2).all(|w| ((w[1].t - w[0].t) - dt).abs() <= tol)
    }

    pub fn accel_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.acc.norm()).collect()
    }
}

/// Unit quaternion mapping the device frame into the world frame (`x` north, `y` west,
/// `z` up). Heading is the negated yaw of this rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attitude(pub UnitQuaternion<f64>);

impl Default for Attitude {
    fn default() -> Self {
        Attitude(UnitQuaternion::identity())
    }
}

impl Attitude {
    /// Level attitude with the given roll (about `x`) and pitch (about `y`).
    pub fn from_tilt(roll: f64, pitch: f64) -> Self {
        Attitude(UnitQuaternion::from_euler_angles(roll, pitch, 0.0))
    }

    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Attitude(UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// Applies a body-frame rotation increment `omega * dt` through the exponential map.
    pub fn integrate(self, omega: &Vector3<f64>, dt: f64) -> Self {
        let delta = UnitQuaternion::from_scaled_axis(omega * dt);
        let mut q = self.0 * delta;
        q.renormalize();
        Attitude(q)
    }

    /// Z-Y-X yaw of the rotation, radians, counter-clockwise about up.
    pub fn yaw(&self) -> f64 {
        let q = self.0.quaternion();
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z))
    }

    /// Heading measured from north toward east.
    pub fn heading(&self) -> Angle {
        Angle::from_radians(-self.yaw())
    }

    pub fn norm(&self) -> f64 {
        self.0.quaternion().norm()
    }
}

/// Planar position in metres: `x` along magnetic north, `y` along magnetic east.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub const ORIGIN: Position2D = Position2D { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Position2D { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Position2D) -> f64 {
        (*self - *other).norm()
    }

    /// Displacement of length `d` along heading `psi`.
    pub fn step(d: f64, psi: Angle) -> Position2D {
        let (s, c) = psi.sin_cos();
        Position2D { x: d * c, y: d * s }
    }
}

impl Add for Position2D {
    type Output = Position2D;
    fn add(self, rhs: Self) -> Self {
        Position2D::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Position2D {
    type Output = Position2D;
    fn sub(self, rhs: Self) -> Self {
        Position2D::new(self.x - rhs.x, self.y - rhs.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deg(d: f64) -> Angle {
        Angle::from_degrees(d)
    }

    #[test]
    fn wrap_examples() {
        assert!((wrap_angle(TAU + 0.5).unwrap().radians() - 0.5).abs() < 1e-12);
        assert!((wrap_angle(-0.1).unwrap().radians() - (TAU - 0.1)).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0).unwrap().radians(), 0.0);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
        let tiny = wrap_angle(-1e-18).unwrap().radians();
        assert!((0.0..TAU).contains(&tiny));
    }

    #[test]
    fn diff_examples() {
        assert!((circular_diff(deg(10.0), deg(350.0)).to_degrees() - 20.0).abs() < 1e-9);
        assert_eq!(circular_diff(deg(42.0), deg(42.0)), 0.0);
        assert_eq!(circular_diff(deg(270.0), deg(90.0)), PI);
        assert_eq!(circular_diff(deg(90.0), deg(270.0)), PI);
    }

    #[test]
    fn mean_examples() {
        let m = circular_mean(&[deg(359.0), deg(1.0)], None).unwrap();
        assert!(circular_diff(m, Angle::ZERO).abs() < 1e-9);
        let m = circular_mean(&[deg(10.0), deg(12.0), deg(14.0)], None).unwrap();
        assert!((m.degrees() - 12.0).abs() < 1e-9);
        assert!(matches!(
            circular_mean(&[deg(0.0), deg(180.0)], None),
            Err(Error::UndefinedMean)
        ));
        assert!(circular_mean(&[], None).is_err());
        assert!(circular_mean(&[deg(1.0)], Some(&[0.0])).is_err());
    }

    #[test]
    fn blend_is_linear_in_arc() {
        let blend = circular_blend(deg(350.0), deg(10.0), 0.2);
        assert!((blend.degrees() - 354.0).abs() < 1e-9);
        let blend = circular_blend(deg(10.0), deg(20.0), 0.2);
        assert!((blend.degrees() - 12.0).abs() < 1e-9);
        assert!((circular_blend(deg(0.0), deg(180.0), 0.5).degrees() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn attitude_constant_yaw_rate() {
        let mut att = Attitude::default();
        let omega = Vector3::new(0.0, 0.0, 0.1);
        for _ in 0..100 {
            att = att.integrate(&omega, 0.1);
        }
        assert!((att.yaw() - 1.0).abs() < 1e-12);
        assert!((att.heading().radians() - (TAU - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn attitude_norm_preserved_over_many_updates() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut att = Attitude::default();
        for _ in 0..1_000_000 {
            let w = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            att = att.integrate(&w, 0.01);
        }
        assert!((att.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trace_rejects_duplicate_times() {
        let s = ImuSample::new(0.0, Vector3::zeros(), Vector3::zeros(), Vector3::x()).unwrap();
        assert!(DeviceTrace::new("left", 20.0, vec![s, s]).is_err());
        assert!(ImuSample::new(-1.0, Vector3::zeros(), Vector3::zeros(), Vector3::x()).is_err());
        assert!(ImuSample::new(0.0, Vector3::new(f64::NAN, 0.0, 0.0), Vector3::zeros(), Vector3::x()).is_err());
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(x in -1e4f64..1e4) {
            let a = wrap_angle(x).unwrap();
            prop_assert_eq!(wrap_angle(a.radians()).unwrap(), a);
            prop_assert!((0.0..TAU).contains(&a.radians()));
        }

        #[test]
        fn diff_recovers_offset(x in -100.0f64..100.0, d in -3.1f64..3.1) {
            let a = wrap_angle(x + d).unwrap();
            let b = wrap_angle(x).unwrap();
            prop_assert!((circular_diff(a, b) - d).abs() < 1e-12);
        }

        #[test]
        fn diff_reconstructs(a in 0.0f64..TAU, b in 0.0f64..TAU) {
            let (a, b) = (Angle::from_radians(a), Angle::from_radians(b));
            let d = circular_diff(a, b);
            prop_assert!(d > -PI && d <= PI);
            prop_assert!(circular_diff(b.rotated(d), a).abs() < 1e-12);
        }

        #[test]
        fn mean_is_rotation_equivariant(
            xs in proptest::collection::vec(0.0f64..1.0, 1..10),
            r in 0.0f64..TAU,
        ) {
            // clustered within one radian so the mean is always defined
            let base: Vec<Angle> = xs.iter().map(|&x| Angle::from_radians(x)).collect();
            let rotated: Vec<Angle> = base.iter().map(|a| a.rotated(r)).collect();
            let m0 = circular_mean(&base, None).unwrap();
            let m1 = circular_mean(&rotated, None).unwrap();
            prop_assert!(circular_diff(m1, m0.rotated(r)).abs() < 1e-9);
        }

        #[test]
        fn blend_stays_on_shortest_arc(a in 0.0f64..TAU, b in 0.0f64..TAU, w in 0.0f64..=1.0) {
            let (a, b) = (Angle::from_radians(a), Angle::from_radians(b));
            let out = circular_blend(a, b, w);
            let span = circular_diff(b, a);
            let pos = circular_diff(out, a);
            if span.abs() < PI - 1e-9 {
                prop_assert!(pos * span >= -1e-12);
                prop_assert!(pos.abs() <= span.abs() + 1e-12);
            }
        }
    }
}
