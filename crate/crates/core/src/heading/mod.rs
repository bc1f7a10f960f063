//! Heading estimation: tilt-compensated magnetometer heading, strapdown gyro heading,
//! the time-scheduled complementary blend of the two, and a Madgwick baseline.

mod gyro;
mod madgwick;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Rotation3, Vector3};

pub use gyro::{gyro_attitudes, integrate_gyro};
pub use madgwick::{madgwick_attitudes, madgwick_heading, madgwick_step};

use crate::calibration::find_stationary_windows;
use crate::datamodel::{circular_blend, Angle, DeviceTrace, GRAVITY};
use crate::error::{Error, Result};
use crate::trace_io::write_table;

/// Roll `phi` and pitch `theta`, radians.
pub type Tilt = (f64, f64);

/// Largest relative departure of `|a|` from `g` for which tilt is defined.
const TILT_NORM_TOLERANCE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadingMethod {
    Mag,
    Gyro,
    Complementary,
    Madgwick,
}

impl HeadingMethod {
    pub const ALL: [HeadingMethod; 4] = [
        HeadingMethod::Mag,
        HeadingMethod::Gyro,
        HeadingMethod::Complementary,
        HeadingMethod::Madgwick,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadingMethod::Mag => "mag",
            HeadingMethod::Gyro => "gyro",
            HeadingMethod::Complementary => "complementary",
            HeadingMethod::Madgwick => "madgwick",
        }
    }
}

impl fmt::Display for HeadingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadingMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        HeadingMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadingEstimate {
    pub t: f64,
    pub psi: Angle,
    pub method: HeadingMethod,
    pub tilt: Option<Tilt>,
}

/// A time-aligned heading series produced by one method.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadingSeries {
    pub method: HeadingMethod,
    pub t: Vec<f64>,
    pub psi: Vec<Angle>,
    pub tilt: Option<Vec<Tilt>>,
}

impl HeadingSeries {
    pub fn new(method: HeadingMethod, t: Vec<f64>, psi: Vec<Angle>) -> Result<Self> {
        if t.len() != psi.len() {
            return Err(Error::Misaligned(format!("{} times for {} headings", t.len(), psi.len())));
        }
        Ok(HeadingSeries { method, t, psi, tilt: None })
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn get(&self, i: usize) -> HeadingEstimate {
        HeadingEstimate {
            t: self.t[i],
            psi: self.psi[i],
            method: self.method,
            tilt: self.tilt.as_ref().map(|v| v[i]),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = HeadingEstimate> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Adds a per-sample offset (zero-order-held calibration) to every heading.
    pub fn with_offsets(mut self, offsets: &[Angle]) -> Result<Self> {
        if offsets.len() != self.psi.len() {
            return Err(Error::Misaligned(format!(
                "{} offsets for {} headings",
                offsets.len(),
                self.psi.len()
            )));
        }
        for (p, o) in self.psi.iter_mut().zip(offsets) {
            *p = p.rotated(o.radians());
        }
        Ok(self)
    }

    /// Writes `(t, heading_deg, method)` rows.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self.iter().map(|e| {
            vec![
                format!("{:.6}", e.t),
                format!("{:.6}", e.psi.degrees()),
                e.method.as_str().to_string(),
            ]
        });
        write_table(path, &["t", "heading_deg", "method"], rows)
    }
}

/// Roll and pitch from a static specific-force reading:
/// `phi = atan2(a_y, a_z)`, `theta = atan(-a_x / (a_y sin phi + a_z cos phi))`.
pub fn tilt_angles(a: &Vector3<f64>) -> Result<Tilt> {
    let n = a.norm();
    if !n.is_finite() || (n - GRAVITY).abs() > TILT_NORM_TOLERANCE * GRAVITY {
        return Err(Error::TiltUnavailable(n));
    }
    let phi = a.y.atan2(a.z);
    let den = a.y * phi.sin() + a.z * phi.cos();
    // den = hypot(a_y, a_z) >= 0, so atan2 equals atan and stays defined at den = 0
    let theta = (-a.x).atan2(den);
    Ok((phi, theta))
}

/// Rotation taking device-frame vectors into the level frame, `Ry(theta) Rx(phi)`.
pub fn leveling_rotation(tilt: Tilt) -> Rotation3<f64> {
    Rotation3::from_euler_angles(tilt.0, tilt.1, 0.0)
}

/// Tilt-compensated magnetometer heading `atan2(m_y, m_x)` of the levelled field,
/// shifted by the magnetometer calibration offset.
pub fn mag_heading(m: &Vector3<f64>, tilt: Tilt, mag_offset: Angle) -> Result<Angle> {
    let level = leveling_rotation(tilt) * m;
    let h = level.x.hypot(level.y);
    if !(h > 1e-12 * m.norm()) {
        return Err(Error::HeadingUndefined);
    }
    Ok(Angle::from_radians(level.y.atan2(level.x)).rotated(mag_offset.radians()))
}

/// Per-sample tilt: computed from the mean specific force of each stationary window
/// and held until the next one. Samples before the first window use it; with no
/// window at all the mean over the whole trace is used.
pub fn tilt_series(trace: &DeviceTrace, threshold: f64, min_window_s: f64) -> Result<Vec<Tilt>> {
    if trace.is_empty() {
        return Err(Error::InvalidInput("empty trace".into()));
    }
    let mean = |r: std::ops::Range<usize>| {
        let n = r.len() as f64;
        trace.samples[r].iter().fold(Vector3::zeros(), |acc, s| acc + s.acc) / n
    };
    let windows = find_stationary_windows(trace, threshold, min_window_s);
    if windows.is_empty() {
        let tilt = tilt_angles(&mean(0..trace.len()))?;
        return Ok(vec![tilt; trace.len()]);
    }
    let mut out = Vec::with_capacity(trace.len());
    let tilts: Vec<Tilt> = windows.iter().map(|w| tilt_angles(&mean(w.clone()))).collect::<Result<_>>()?;
    let mut k = 0;
    for i in 0..trace.len() {
        while k + 1 < windows.len() && windows[k + 1].start <= i {
            k += 1;
        }
        out.push(tilts[k]);
    }
    Ok(out)
}

/// Magnetometer heading of every sample under the given tilts, without offset.
pub fn mag_heading_series(trace: &DeviceTrace, tilts: &[Tilt]) -> Result<HeadingSeries> {
    if tilts.len() != trace.len() {
        return Err(Error::Misaligned(format!("{} tilts for {} samples", tilts.len(), trace.len())));
    }
    let psi = trace
        .samples
        .iter()
        .zip(tilts)
        .map(|(s, &tilt)| mag_heading(&s.mag, tilt, Angle::ZERO))
        .collect::<Result<Vec<_>>>()?;
    let mut series = HeadingSeries::new(HeadingMethod::Mag, trace.times(), psi)?;
    series.tilt = Some(tilts.to_vec());
    Ok(series)
}

/// Gyro weight schedule `w_g(t) = clamp(alpha0 - slope * (t - t_reset), floor, 1)`,
/// with `t_reset` the latest schedule reset at or before `t` (series start when none).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplementarySchedule {
    pub alpha0: f64,
    pub slope: f64,
    pub floor: f64,
    /// Absolute times at which the schedule clock restarts, ascending.
    pub resets: Vec<f64>,
}

impl Default for ComplementarySchedule {
    fn default() -> Self {
        ComplementarySchedule {
            alpha0: 0.8,
            slope: 1.0 / 400.0,
            floor: 0.0,
            resets: Vec::new(),
        }
    }
}

impl ComplementarySchedule {
    /// `elapsed` is seconds since the series start.
    pub fn gyro_weight(&self, elapsed: f64, t_abs: f64, t0: f64) -> f64 {
        let since = self
            .resets
            .iter()
            .rev()
            .find(|&&r| r <= t_abs)
            .map_or(elapsed, |&r| t_abs - r.max(t0));
        (self.alpha0 - self.slope * since).clamp(self.floor.clamp(0.0, 1.0), 1.0)
    }
}

/// Per-sample shortest-arc blend with gyro weight `w_g(t)` and magnetometer weight
/// `1 - w_g(t)`.
pub fn complementary_heading(
    gyro: &HeadingSeries,
    mag: &HeadingSeries,
    schedule: &ComplementarySchedule,
) -> Result<HeadingSeries> {
    if gyro.len() != mag.len() || gyro.t.iter().zip(&mag.t).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(Error::Misaligned("gyro and magnetometer series are not time-aligned".into()));
    }
    let t0 = gyro.t.first().copied().unwrap_or(0.0);
    let psi = gyro
        .t
        .iter()
        .zip(gyro.psi.iter().zip(&mag.psi))
        .map(|(&t, (&g, &m))| circular_blend(g, m, 1.0 - schedule.gyro_weight(t - t0, t, t0)))
        .collect();
    HeadingSeries::new(HeadingMethod::Complementary, gyro.t.clone(), psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::circular_diff;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn deg(d: f64) -> Angle {
        Angle::from_degrees(d)
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn tilt_examples() {
        let g = GRAVITY;
        let (p, t) = tilt_angles(&Vector3::new(0.0, 0.0, g)).unwrap();
        assert_eq!((p, t), (0.0, 0.0));
        let r = 30f64.to_radians();
        let (p, t) = tilt_angles(&Vector3::new(0.0, g * r.sin(), g * r.cos())).unwrap();
        close(p.to_degrees(), 30.0, 1e-12);
        close(t, 0.0, 1e-15);
        let r = 20f64.to_radians();
        let (p, t) = tilt_angles(&Vector3::new(-g * r.sin(), 0.0, g * r.cos())).unwrap();
        close(p, 0.0, 1e-15);
        close(t.to_degrees(), 20.0, 1e-12);
        assert!(matches!(tilt_angles(&Vector3::zeros()), Err(Error::TiltUnavailable(_))));
    }

    #[test]
    fn tilt_recovers_random_attitudes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let (roll, pitch, yaw) = (
                rng.random_range(-1.4..1.4),
                rng.random_range(-1.4..1.4),
                rng.random_range(-PI..PI),
            );
            let r = Rotation3::from_euler_angles(roll, pitch, yaw);
            let a = r.transpose() * Vector3::new(0.0, 0.0, GRAVITY);
            let (p, t) = tilt_angles(&a).unwrap();
            close(p, roll, 1e-9);
            close(t, pitch, 1e-9);
        }
    }

    #[test]
    fn mag_heading_examples() {
        let flat = (0.0, 0.0);
        close(mag_heading(&Vector3::x(), flat, Angle::ZERO).unwrap().degrees(), 0.0, 1e-12);
        close(mag_heading(&Vector3::y(), flat, Angle::ZERO).unwrap().degrees(), 90.0, 1e-12);
        close(mag_heading(&Vector3::x(), flat, deg(5.0)).unwrap().degrees(), 5.0, 1e-12);
        assert!(matches!(
            mag_heading(&Vector3::z(), flat, Angle::ZERO),
            Err(Error::HeadingUndefined)
        ));
    }

    /// Device at heading `psi` with roll and pitch, in a field with horizontal part
    /// pointing north and a downward dip.
    fn device_readings(psi: f64, roll: f64, pitch: f64) -> (Vector3<f64>, Vector3<f64>) {
        let r = Rotation3::from_euler_angles(roll, pitch, -psi);
        let field = Vector3::new(20.0, 0.0, -42.0);
        let acc = r.transpose() * Vector3::new(0.0, 0.0, GRAVITY);
        (acc, r.transpose() * field)
    }

    #[test]
    fn pitched_device_matches_flat_heading() {
        let psi = 47f64.to_radians();
        let (_, m_flat) = device_readings(psi, 0.0, 0.0);
        let flat = mag_heading(&m_flat, (0.0, 0.0), Angle::ZERO).unwrap();
        let (a, m) = device_readings(psi, 0.0, 30f64.to_radians());
        let tilted = mag_heading(&m, tilt_angles(&a).unwrap(), Angle::ZERO).unwrap();
        assert!(circular_diff(flat, tilted).abs() < 1e-9);
        assert!(circular_diff(flat, Angle::from_radians(psi)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn tilt_compensation_is_exact(psi in 0.0f64..360.0, roll in -60.0f64..60.0, pitch in -60.0f64..60.0) {
            let (a, m) = device_readings(psi.to_radians(), roll.to_radians(), pitch.to_radians());
            let h = mag_heading(&m, tilt_angles(&a).unwrap(), Angle::ZERO).unwrap();
            prop_assert!(circular_diff(h, deg(psi)).abs() < 1e-9);
        }

        #[test]
        fn world_rotation_shifts_heading(psi in 0.0f64..360.0, r in -180.0f64..180.0, roll in -40.0f64..40.0) {
            let (a, m) = device_readings(psi.to_radians(), roll.to_radians(), 0.1);
            let (a2, m2) = device_readings((psi + r).to_radians(), roll.to_radians(), 0.1);
            let h1 = mag_heading(&m, tilt_angles(&a).unwrap(), Angle::ZERO).unwrap();
            let h2 = mag_heading(&m2, tilt_angles(&a2).unwrap(), Angle::ZERO).unwrap();
            prop_assert!((circular_diff(h2, h1) - circular_diff(deg(r), Angle::ZERO)).abs() < 1e-9);
        }

        #[test]
        fn blend_stays_on_shortest_arc(g in 0.0f64..360.0, m in 0.0f64..360.0, t in 0.0f64..500.0) {
            let s = ComplementarySchedule::default();
            let gs = HeadingSeries::new(HeadingMethod::Gyro, vec![0.0, t], vec![deg(g), deg(g)]).unwrap();
            let ms = HeadingSeries::new(HeadingMethod::Mag, vec![0.0, t], vec![deg(m), deg(m)]).unwrap();
            let out = complementary_heading(&gs, &ms, &s).unwrap().psi[1];
            let arc = circular_diff(deg(m), deg(g));
            let along = circular_diff(out, deg(g));
            if arc.abs() < PI - 1e-9 {
                prop_assert!(along * arc >= -1e-12);
                prop_assert!(along.abs() <= arc.abs() + 1e-12);
            }
        }
    }

    fn blend_at(t: f64, g: f64, m: f64) -> f64 {
        let gs = HeadingSeries::new(HeadingMethod::Gyro, vec![0.0, t], vec![deg(g); 2]).unwrap();
        let ms = HeadingSeries::new(HeadingMethod::Mag, vec![0.0, t], vec![deg(m); 2]).unwrap();
        complementary_heading(&gs, &ms, &ComplementarySchedule::default()).unwrap().psi[1].degrees()
    }

    #[test]
    fn complementary_examples() {
        close(blend_at(0.0, 10.0, 20.0), 12.0, 1e-9);
        close(blend_at(240.0, 10.0, 20.0), 18.0, 1e-9);
        close(blend_at(0.0, 350.0, 10.0), 354.0, 1e-9);
        assert_eq!(blend_at(320.0, 10.0, 20.0), deg(20.0).degrees());
        assert_eq!(blend_at(1000.0, 123.0, 321.0), deg(321.0).degrees());
    }

    #[test]
    fn scalar_schedule_weights() {
        let s = ComplementarySchedule::default();
        close(s.gyro_weight(0.0, 0.0, 0.0), 0.8, 1e-15);
        close(s.gyro_weight(240.0, 240.0, 0.0), 0.2, 1e-15);
        assert_eq!(s.gyro_weight(320.0, 320.0, 0.0), 0.0);
        let reset = ComplementarySchedule { resets: vec![100.0], ..s };
        close(reset.gyro_weight(140.0, 140.0, 0.0), 0.7, 1e-12);
        close(reset.gyro_weight(50.0, 50.0, 0.0), 0.675, 1e-12);
    }

    #[test]
    fn misaligned_series_rejected() {
        let a = HeadingSeries::new(HeadingMethod::Gyro, vec![0.0, 1.0], vec![deg(0.0); 2]).unwrap();
        let b = HeadingSeries::new(HeadingMethod::Mag, vec![0.0, 1.5], vec![deg(0.0); 2]).unwrap();
        assert!(matches!(
            complementary_heading(&a, &b, &ComplementarySchedule::default()),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn method_names() {
        for m in HeadingMethod::ALL {
            assert_eq!(m.as_str().parse::<HeadingMethod>().unwrap(), m);
        }
        let e = "kalman".parse::<HeadingMethod>().unwrap_err().to_string();
        assert!(e.contains("mag, gyro, complementary, madgwick"));
    }
}
