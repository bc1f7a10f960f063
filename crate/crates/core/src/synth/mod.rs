//! Synthetic walks and the signals a head-worn 9-axis IMU would record along them.
//!
//! The walker stands still, walks straight legs at constant speed and turns in place
//! between legs. Each step adds `-A cos(2π f τ)` to the vertical specific force, with
//! `τ` the time since the leg started, so steps peak at `τ = (k + 1/2) / f`. Devices are
//! rigidly mounted on the head: device yaw follows the head heading (body heading plus
//! optional glances) plus a mounting offset, and a fixed roll/pitch tilt is applied on
//! top. Hard iron is modelled as a rotation of the apparent horizontal field.

mod timeline;

use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::calibration::{invert_accel_calibration, AccelCalib};
use crate::datamodel::{Angle, DeviceTrace, ImuSample, Position2D, GRAVITY};
use crate::error::{Error, Result};
use crate::fusion::GpsFix;
use crate::heading::Tilt;
use crate::trace_io::{write_table, write_trace};
use timeline::{Timeline, TimelineSpec};

/// Per-channel white-noise standard deviations.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Noise {
    /// m/s²
    pub acc: f64,
    /// rad/s
    pub gyro: f64,
    /// field units
    pub mag: f64,
}

/// Mounting and sensor imperfections of one earable.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceParams {
    pub id: String,
    /// Yaw of the device relative to the head, degrees.
    pub mount_deg: f64,
    /// Apparent rotation of the horizontal field, degrees.
    pub hard_iron_deg: f64,
    /// rad/s, device frame
    pub gyro_bias: Vector3<f64>,
    /// Calibration the raw readings need; the generator applies its inverse.
    pub accel: AccelCalib,
}

impl DeviceParams {
    pub fn ideal(id: &str) -> Self {
        DeviceParams {
            id: id.to_string(),
            mount_deg: 0.0,
            hard_iron_deg: 0.0,
            gyro_bias: Vector3::zeros(),
            accel: AccelCalib::IDENTITY,
        }
    }
}

/// Sudden head turns away from the walking direction and back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Glances {
    pub per_minute: f64,
    /// Uniform range of the turn amplitude, degrees; the sign is random.
    pub amplitude_deg: (f64, f64),
    /// Duration of the turn out (and of the turn back), s.
    pub out_s: f64,
    /// Uniform range of the time spent looking away, s.
    pub hold_s: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthScenario {
    pub name: String,
    /// Track-frame polyline (x north, y east), metres.
    pub waypoints: Vec<Position2D>,
    pub speed: f64,
    pub step_hz: f64,
    /// Amplitude of the vertical step oscillation, m/s².
    pub step_amp: f64,
    pub user_height: f64,
    pub rate_hz: f64,
    /// Standing time at both ends, s.
    pub stand_s: f64,
    /// Time for a 90° in-place turn, s.
    pub turn_s_per_90: f64,
    /// Relative uniform jitter of each turn duration.
    pub turn_jitter: f64,
    /// Fixed roll and pitch of every device, radians.
    pub tilt: Tilt,
    pub noise: Noise,
    pub devices: Vec<DeviceParams>,
    /// Standard deviation of the phone reference heading, degrees.
    pub phone_noise_deg: f64,
    /// Horizontal and vertical (up-positive) earth field, field units.
    pub field: (f64, f64),
    pub glances: Option<Glances>,
    /// GPS fix period and per-axis σ, when fixes are wanted.
    pub gps: Option<(f64, f64)>,
    pub seed: u64,
}

/// Walking speed at which one stride per step period equals `0.43 · height`.
pub fn consistent_speed(height: f64, step_hz: f64) -> f64 {
    crate::displacement::stride_length(height) * step_hz
}

impl SynthScenario {
    /// Noiseless, level, perfectly calibrated walker with two devices along `waypoints`.
    pub fn ideal(name: &str, waypoints: Vec<Position2D>) -> Self {
        let user_height = 1.80;
        SynthScenario {
            name: name.to_string(),
            waypoints,
            speed: consistent_speed(user_height, 2.0),
            step_hz: 2.0,
            step_amp: 3.0,
            user_height,
            rate_hz: 20.0,
            stand_s: 2.0,
            turn_s_per_90: 1.0,
            turn_jitter: 0.0,
            tilt: (0.0, 0.0),
            noise: Noise::default(),
            devices: vec![DeviceParams::ideal("left"), DeviceParams::ideal("right")],
            phone_noise_deg: 0.0,
            field: (20.0, -42.0),
            glances: None,
            gps: None,
            seed: 0,
        }
    }

    /// Straight walk of `length` metres along `heading_deg`.
    pub fn straight(length: f64, heading_deg: f64) -> Self {
        let end = Position2D::step(length, Angle::from_degrees(heading_deg));
        SynthScenario::ideal("straight", vec![Position2D::ORIGIN, end])
    }

    /// Closed square walked clockwise `laps` times, first leg along `heading_deg`.
    pub fn square_loop(side: f64, laps: usize, heading_deg: f64) -> Self {
        let mut wps = vec![Position2D::ORIGIN];
        let mut p = Position2D::ORIGIN;
        for k in 0..4 * laps {
            p = p + Position2D::step(side, Angle::from_degrees(heading_deg + 90.0 * (k % 4) as f64));
            wps.push(p);
        }
        // remove accumulated rounding so the loop closes exactly
        *wps.last_mut().expect("non-empty") = Position2D::ORIGIN;
        SynthScenario::ideal("loop", wps)
    }

    /// Corridor walked back and forth `legs` times with in-place U-turns; an even leg
    /// count ends at the start.
    pub fn corridor(length: f64, legs: usize, heading_deg: f64) -> Self {
        let far = Position2D::step(length, Angle::from_degrees(heading_deg));
        let wps = (0..=legs)
            .map(|k| if k % 2 == 0 { Position2D::ORIGIN } else { far })
            .collect();
        SynthScenario::ideal("corridor", wps)
    }

    /// Consumer-grade sensor imperfections drawn from `seed`: white noise, per-device
    /// gyro bias, hard iron and mounting yaw, and a noisy phone reference.
    pub fn with_realistic_noise(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        self.seed = seed;
        self.noise = Noise {
            acc: 0.1,
            gyro: 0.3f64.to_radians(),
            mag: 0.4,
        };
        self.phone_noise_deg = 3.0;
        self.turn_jitter = 0.2;
        let bias = Normal::new(0.0, 0.4f64.to_radians()).expect("valid sigma");
        for d in &mut self.devices {
            d.gyro_bias = Vector3::from_fn(|_, _| bias.sample(&mut rng));
            d.hard_iron_deg = rng.random_range(-15.0..15.0);
            d.mount_deg = rng.random_range(-5.0..5.0);
        }
        self
    }

    /// Indoor-style head motion: several sharp glances per minute.
    pub fn with_glances(mut self) -> Self {
        self.glances = Some(Glances {
            per_minute: 8.0,
            amplitude_deg: (30.0, 45.0),
            out_s: 0.3,
            hold_s: (0.4, 1.2),
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::InvalidInput("scenario needs at least two waypoints".into()));
        }
        if self.waypoints.windows(2).all(|w| w[0].distance(&w[1]) == 0.0) {
            return Err(Error::InvalidInput("degenerate polyline: zero length".into()));
        }
        let positive = [
            ("speed", self.speed),
            ("step_hz", self.step_hz),
            ("step_amp", self.step_amp),
            ("user_height", self.user_height),
            ("rate_hz", self.rate_hz),
            ("turn_s_per_90", self.turn_s_per_90),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.devices.is_empty() {
            return Err(Error::InvalidInput("scenario needs at least one device".into()));
        }
        if !(0.0..1.0).contains(&self.turn_jitter) || self.stand_s < 0.0 {
            return Err(Error::InvalidInput("turn_jitter must be in [0, 1), stand_s >= 0".into()));
        }
        Ok(())
    }

    pub fn stride_length(&self) -> f64 {
        self.speed / self.step_hz
    }
}

/// Ground truth sampled on the device time base.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub t: Vec<f64>,
    pub position: Vec<Position2D>,
    /// Walking direction.
    pub heading: Vec<Angle>,
    /// Head direction, including glances, without mounting offsets.
    pub head_heading: Vec<Angle>,
    /// 1 at the sample nearest each step peak.
    pub stride_flag: Vec<u8>,
    pub stride_times: Vec<f64>,
}

impl Truth {
    pub fn duration(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0) - self.t.first().copied().unwrap_or(0.0)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = (0..self.t.len()).map(|i| {
            vec![
                format!("{:.6}", self.t[i]),
                format!("{:.6}", self.position[i].x),
                format!("{:.6}", self.position[i].y),
                format!("{:.6}", self.heading[i].degrees()),
                self.stride_flag[i].to_string(),
            ]
        });
        write_table(path, &["t", "x", "y", "heading_deg", "stride_flag"], rows)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    /// One trace per configured device, in scenario order.
    pub devices: Vec<DeviceTrace>,
    /// Hand-held phone trace carrying the reference heading column.
    pub phone: DeviceTrace,
    pub truth: Truth,
    pub gps: Vec<GpsFix>,
}

impl SynthOutput {
    pub fn left(&self) -> &DeviceTrace {
        &self.devices[0]
    }

    pub fn right(&self) -> Option<&DeviceTrace> {
        self.devices.get(1)
    }

    /// Writes `<id>.csv` per device, `phone.csv`, `truth.csv` and, with fixes, `gps.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for d in &self.devices {
            write_trace(dir.join(format!("{}.csv", d.device_id)), d)?;
        }
        write_trace(dir.join("phone.csv"), &self.phone)?;
        self.truth.write(dir.join("truth.csv"))?;
        if !self.gps.is_empty() {
            crate::fusion::write_gps_fixes(dir.join("gps.csv"), &self.gps)?;
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("valid sigma").sample(rng)
    } else {
        0.0
    }
}

fn noise3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    Vector3::new(gaussian(rng, sigma), gaussian(rng, sigma), gaussian(rng, sigma))
}

/// Level-frame field seen by a device at heading `psi` (radians).
fn level_field(field: (f64, f64), psi: f64) -> Vector3<f64> {
    Vector3::new(field.0 * psi.cos(), field.0 * psi.sin(), field.1)
}

pub fn generate(scenario: &SynthScenario) -> Result<SynthOutput> {
    scenario.validate()?;
    let mut timeline_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let spec = TimelineSpec {
        waypoints: &scenario.waypoints,
        speed: scenario.speed,
        stand_s: scenario.stand_s,
        turn_s_per_90: scenario.turn_s_per_90,
        turn_jitter: scenario.turn_jitter,
        glances: scenario.glances,
    };
    let tl = Timeline::build(&spec, &mut timeline_rng);
    let n = (tl.duration * scenario.rate_hz + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = (0..n).map(|k| k as f64 / scenario.rate_hz).collect();
    let states: Vec<_> = times.iter().map(|&t| tl.state(t)).collect();

    let stride_times = tl.stride_times(scenario.step_hz);
    let mut stride_flag = vec![0u8; n];
    for &st in &stride_times {
        let k = ((st * scenario.rate_hz).round() as usize).min(n - 1);
        stride_flag[k] = 1;
    }
    let truth = Truth {
        t: times.clone(),
        position: states.iter().map(|s| s.position).collect(),
        heading: states.iter().map(|s| Angle::from_radians(s.body)).collect(),
        head_heading: states.iter().map(|s| Angle::from_radians(s.head)).collect(),
        stride_flag,
        stride_times,
    };

    let r_tilt = Rotation3::from_euler_angles(scenario.tilt.0, scenario.tilt.1, 0.0);
    let r_t = r_tilt.transpose();
    let bob = |leg_time: Option<f64>| {
        leg_time.map_or(0.0, |tau| scenario.step_amp * (2.0 * std::f64::consts::PI * scenario.step_hz * tau).cos())
    };

    let mut devices = Vec::with_capacity(scenario.devices.len());
    for (d_idx, dev) in scenario.devices.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(1 + d_idx as u64);
        let mount = dev.mount_deg.to_radians();
        let hard = dev.hard_iron_deg.to_radians();
        let mut samples = Vec::with_capacity(n);
        for (&t, s) in times.iter().zip(&states) {
            let specific = r_t * Vector3::new(0.0, 0.0, GRAVITY - bob(s.leg_time));
            let acc = invert_accel_calibration(&specific, &dev.accel)? + noise3(&mut rng, scenario.noise.acc);
            // device yaw is the negated heading, so the body rate about up is -d(heading)/dt
            let gyro = r_t * Vector3::new(0.0, 0.0, -s.head_rate) + dev.gyro_bias + noise3(&mut rng, scenario.noise.gyro);
            let mag = r_t * level_field(scenario.field, s.head + mount + hard) + noise3(&mut rng, scenario.noise.mag);
            samples.push(ImuSample::new(t, acc, gyro, mag)?);
        }
        devices.push(DeviceTrace::new(dev.id.clone(), scenario.rate_hz, samples)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(16);
    let mut phone_samples = Vec::with_capacity(n);
    let mut reference = Vec::with_capacity(n);
    for (&t, s) in times.iter().zip(&states) {
        phone_samples.push(ImuSample::new(
            t,
            Vector3::new(0.0, 0.0, GRAVITY),
            Vector3::new(0.0, 0.0, -s.body_rate),
            level_field(scenario.field, s.body),
        )?);
        let noise = gaussian(&mut rng, scenario.phone_noise_deg.to_radians());
        reference.push(Angle::from_radians(s.body + noise));
    }
    let phone = DeviceTrace::new("phone", scenario.rate_hz, phone_samples)?.with_reference(reference)?;

    let mut gps = Vec::new();
    if let Some((period, sigma)) = scenario.gps {
        rng.set_stream(17);
        let mut k = 1;
        while k as f64 * period <= tl.duration {
            let t = k as f64 * period;
            let p = tl.state(t).position;
            let noisy = Position2D::new(p.x + gaussian(&mut rng, sigma), p.y + gaussian(&mut rng, sigma));
            gps.push(GpsFix::new(t, noisy, sigma)?);
            k += 1;
        }
    }
    Ok(SynthOutput { devices, phone, truth, gps })
}

/// Replaces every accelerometer reading with the raw value a sensor needing `calib`
/// would report.
pub fn inject_miscalibration(trace: &DeviceTrace, calib: &AccelCalib) -> Result<DeviceTrace> {
    if calib.scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput("scale factors must be positive".into()));
    }
    let mut out = trace.clone();
    for s in &mut out.samples {
        s.acc = invert_accel_calibration(&s.acc, calib)?;
    }
    Ok(out)
}

/// Minimum angle between any two poses of a calibration session, radians. Larger than
/// the fitter's distinctness threshold so every pose counts.
const SESSION_POSE_SEPARATION: f64 = 0.35;

/// A static calibration recording: `poses` holds of `hold_s` seconds each in random
/// orientations, read by a sensor needing `calib`, with white accelerometer noise.
/// Poses follow each other without transition samples.
pub fn calibration_session(
    calib: &AccelCalib,
    poses: usize,
    hold_s: f64,
    rate_hz: f64,
    acc_noise: f64,
    seed: u64,
) -> Result<DeviceTrace> {
    if poses == 0 || !(hold_s > 0.0) || !(rate_hz > 0.0) {
        return Err(Error::InvalidInput("calibration session needs poses, hold time and rate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vector3<f64>> = Vec::with_capacity(poses);
    while dirs.len() < poses {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if !(0.2..=1.0).contains(&n) {
            continue;
        }
        let u = v / n;
        if dirs.iter().all(|d| d.dot(&u).clamp(-1.0, 1.0).acos() > SESSION_POSE_SEPARATION) {
            dirs.push(u);
        }
    }
    let per_pose = ((hold_s * rate_hz).round() as usize).max(1);
    let mut samples = Vec::with_capacity(per_pose * poses);
    for (k, u) in dirs.iter().enumerate() {
        let raw = invert_accel_calibration(&(u * GRAVITY), calib)?;
        for i in 0..per_pose {
            let t = (k * per_pose + i) as f64 / rate_hz;
            let acc = raw + noise3(&mut rng, acc_noise);
            samples.push(ImuSample::new(t, acc, Vector3::zeros(), Vector3::new(20.0, 0.0, -42.0))?);
        }
    }
    DeviceTrace::new("calibration", rate_hz, samples)
}
