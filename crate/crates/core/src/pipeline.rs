//! End-to-end processing of one device (calibration, heading, dead reckoning) and of a
//! left/right pair (heading particle filter, merged strides, optional GPS correction).

use std::fmt;
use std::str::FromStr;

use crate::calibration::{
    apply_accel_calibration, calibrate_gyro_windows, mag_add_reference_point, mag_check_rollover, offset_series,
    CalibrationSet, MagCalibState,
};
use crate::datamodel::{circular_diff, Angle, Attitude, DeviceTrace};
use crate::displacement::{
    detect_strides_with, integrate_track, kinematics_track, per_timestamp_distance, planar_world_accel, stride_spans,
    StrideEvent, Track,
};
use crate::error::{Error, Result};
use crate::fusion::{average_stride_times, fuse_headings, gps_position_filter, GpsFix, HeadingPfConfig, PositionPfConfig};
use crate::heading::{
    complementary_heading, gyro_attitudes, madgwick_heading, mag_heading_series, tilt_series, ComplementarySchedule,
    HeadingMethod, HeadingSeries, Tilt,
};
use crate::trace_io::{resample, resample_to_times, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DisplacementMethod {
    Pdr,
    Kinematics,
}

impl FromStr for DisplacementMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdr" => Ok(DisplacementMethod::Pdr),
            "kinematics" => Ok(DisplacementMethod::Kinematics),
            other => Err(Error::InvalidInput(format!(
                "unknown displacement method {other:?} (supported: pdr, kinematics)"
            ))),
        }
    }
}

impl fmt::Display for DisplacementMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisplacementMethod::Pdr => "pdr",
            DisplacementMethod::Kinematics => "kinematics",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOptions {
    pub method: HeadingMethod,
    /// False runs the uncalibrated ablation: raw accelerometer, no magnetometer offset,
    /// gyro anchored once to the raw magnetic heading at the first sample.
    pub calibrated: bool,
    pub displacement: DisplacementMethod,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            method: HeadingMethod::Complementary,
            calibrated: true,
            displacement: DisplacementMethod::Pdr,
        }
    }
}

/// Intermediate and final products for one device.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceResult {
    /// Trace after accelerometer calibration.
    pub trace: DeviceTrace,
    pub tilts: Vec<Tilt>,
    /// Calibrated magnetometer heading.
    pub mag: HeadingSeries,
    /// Calibrated gyro heading.
    pub gyro: HeadingSeries,
    pub complementary: HeadingSeries,
    /// The heading of the selected method.
    pub heading: HeadingSeries,
    pub mag_state: MagCalibState,
    pub strides: Vec<StrideEvent>,
    pub track: Track,
}

fn calibrate_accel(trace: &DeviceTrace, calib: &CalibrationSet) -> DeviceTrace {
    let mut out = trace.clone();
    for s in &mut out.samples {
        s.acc = apply_accel_calibration(&s.acc, &calib.accel);
    }
    out
}

/// Magnetometer offsets per sample from phone reference points taken at multiples of
/// the calibration period, with rollover re-calibration. `raw` is the uncorrected
/// magnetic heading on `times`. Returns the offsets, the final state and the rollover
/// times.
pub fn phone_mag_offsets(
    times: &[f64],
    raw: &[Angle],
    reference: &[Angle],
    config: &RunConfig,
) -> (Vec<Angle>, MagCalibState, Vec<f64>) {
    let mut state = MagCalibState::new(config.mag_window_cap, config.mag_cal_period_s);
    let mut offsets = Vec::with_capacity(times.len());
    let mut rollovers = Vec::new();
    let t0 = times[0];
    let mut next_k = 0u64;
    for i in 0..times.len() {
        let due = t0 + next_k as f64 * config.mag_cal_period_s;
        if times[i] >= due - 1e-9 {
            state = mag_add_reference_point(&state, times[i], reference[i], raw[i]);
            next_k = ((times[i] - t0 + 1e-9) / config.mag_cal_period_s).floor() as u64 + 1;
        }
        if i > 0 {
            let off = state.current_offset.radians();
            let before = state.rollovers;
            state = mag_check_rollover(&state, raw[i - 1].rotated(off), raw[i].rotated(off));
            if state.rollovers > before {
                rollovers.push(times[i]);
            }
        }
        offsets.push(state.current_offset);
    }
    (offsets, state, rollovers)
}

/// Runs calibration, heading estimation and dead reckoning on one device. `phone`
/// supplies reference headings for the magnetometer window; without it the offset
/// stored in `calib` is used.
pub fn process_device(
    trace: &DeviceTrace,
    phone: Option<&DeviceTrace>,
    calib: &CalibrationSet,
    config: &RunConfig,
    opts: &PipelineOptions,
) -> Result<DeviceResult> {
    if trace.len() < 2 {
        return Err(Error::InvalidInput(format!("trace {} has fewer than two samples", trace.device_id)));
    }
    let trace = if opts.calibrated { calibrate_accel(trace, calib) } else { trace.clone() };
    let times = trace.times();
    let tilts = tilt_series(&trace, config.stationary_threshold, config.stationary_window_s)?;
    let raw_mag = mag_heading_series(&trace, &tilts)?;

    let mut resets = Vec::new();
    let (mag_offsets, mag_state) = if !opts.calibrated {
        (vec![Angle::ZERO; trace.len()], MagCalibState::default())
    } else if let Some(phone) = phone {
        let aligned = resample_to_times(phone, &times, trace.rate_hz)?;
        let reference = aligned
            .reference
            .ok_or_else(|| Error::InvalidInput("phone trace has no reference heading column".into()))?;
        let (offsets, state, rollovers) = phone_mag_offsets(&times, &raw_mag.psi, &reference, config);
        if config.comp_reset_on_rollover {
            resets = rollovers;
        }
        (offsets, state)
    } else {
        (vec![calib.mag.current_offset; trace.len()], calib.mag.clone())
    };
    let mag = raw_mag.clone().with_offsets(&mag_offsets)?;

    let attitudes = gyro_attitudes(&trace, Attitude::from_tilt(tilts[0].0, tilts[0].1))?;
    let raw_gyro = HeadingSeries::new(HeadingMethod::Gyro, times.clone(), attitudes.iter().map(Attitude::heading).collect())?;
    let gyro_offsets = if opts.calibrated {
        let calibs = calibrate_gyro_windows(
            &trace,
            &raw_gyro.psi,
            &mag.psi,
            config.stationary_threshold,
            config.stationary_window_s,
            config.gyro_recalibrate,
        )?;
        offset_series(&times, &calibs)
    } else {
        let anchor = Angle::from_radians(circular_diff(raw_mag.psi[0], raw_gyro.psi[0]));
        vec![anchor; trace.len()]
    };
    let gyro = raw_gyro.with_offsets(&gyro_offsets)?;

    let schedule = ComplementarySchedule {
        alpha0: config.comp_alpha0,
        slope: config.comp_slope,
        floor: config.comp_floor,
        resets,
    };
    let complementary = complementary_heading(&gyro, &mag, &schedule)?;
    let heading = match opts.method {
        HeadingMethod::Mag => mag.clone(),
        HeadingMethod::Gyro => gyro.clone(),
        HeadingMethod::Complementary => complementary.clone(),
        HeadingMethod::Madgwick => {
            let start = Attitude::from_euler(tilts[0].0, tilts[0].1, -raw_mag.psi[0].radians());
            madgwick_heading(&trace, config.madgwick_beta, start)?.with_offsets(&mag_offsets)?
        }
    };

    let strides = detect_strides_with(&trace.accel_norms(), trace.rate_hz, config.prominence, config.lowpass_hz)?;
    let track = match opts.displacement {
        DisplacementMethod::Pdr => {
            let spans: Vec<(usize, usize)> = strides.iter().map(|s| s.span).collect();
            let d = per_timestamp_distance(&spans, trace.len(), config.stride_length())?;
            let mut track = integrate_track(&times, &d, &heading.psi)?;
            track.strides = strides.clone();
            track
        }
        DisplacementMethod::Kinematics => {
            let acc = planar_world_accel(&trace, &tilts, &heading.psi)?;
            let mut track = kinematics_track(&times, &acc)?;
            track.strides = strides.clone();
            track
        }
    };
    Ok(DeviceResult {
        trace,
        tilts,
        mag,
        gyro,
        complementary,
        heading,
        mag_state,
        strides,
        track,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedResult {
    pub left: DeviceResult,
    pub right: DeviceResult,
    pub heading: HeadingSeries,
    /// Merged stride peak times, absolute seconds.
    pub stride_times: Vec<f64>,
    /// Dead-reckoned track before GPS correction.
    pub dead_reckoned: Track,
    /// Final track; equals `dead_reckoned` without fixes.
    pub track: Track,
}

pub fn heading_pf_config(config: &RunConfig) -> HeadingPfConfig {
    HeadingPfConfig {
        particles: config.heading_particles,
        process_noise: config.pf_process_noise_deg.to_radians(),
        measurement_noise: config.pf_measurement_noise_deg.to_radians(),
        resample_fraction: 0.5,
        seed: config.seed,
    }
}

pub fn position_pf_config(config: &RunConfig) -> PositionPfConfig {
    PositionPfConfig {
        particles: config.position_particles,
        process_noise: config.gps_process_noise,
        // decorrelate from the heading filter stream
        seed: config.seed ^ 0x9e37_79b9_7f4a_7c15,
    }
}

/// The two-device algorithm: calibrate and estimate heading per device, fuse the
/// headings with the particle filter, average the stride times, integrate the track,
/// and correct it with GPS when fixes are given. The right trace is interpolated onto
/// the left time grid first.
pub fn process_pair(
    left: &DeviceTrace,
    right: &DeviceTrace,
    phone: Option<&DeviceTrace>,
    calib: (&CalibrationSet, &CalibrationSet),
    gps: &[GpsFix],
    config: &RunConfig,
    opts: &PipelineOptions,
) -> Result<FusedResult> {
    let times = left.times();
    let right_aligned = resample_to_times(right, &times, left.rate_hz)?;
    let l = process_device(left, phone, calib.0, config, opts)?;
    let r = process_device(&right_aligned, phone, calib.1, config, opts)?;
    let heading = fuse_headings(&l.heading, &r.heading, &heading_pf_config(config))?;

    let t0 = times[0];
    let fs = left.rate_hz;
    let peak_times = |s: &[StrideEvent]| s.iter().map(|e| t0 + e.peak_time).collect::<Vec<_>>();
    let stride_times = average_stride_times(&peak_times(&l.strides), &peak_times(&r.strides));
    let mut peaks: Vec<usize> = stride_times
        .iter()
        .map(|t| (((t - t0) * fs).round() as usize).min(times.len() - 1))
        .collect();
    peaks.dedup();
    let spans = stride_spans(&peaks, times.len());
    let d = per_timestamp_distance(&spans, times.len(), config.stride_length())?;
    let mut dead_reckoned = integrate_track(&times, &d, &heading.psi)?;
    dead_reckoned.strides = peaks
        .iter()
        .zip(&spans)
        .map(|(&p, &span)| StrideEvent {
            peak_time: p as f64 / fs,
            peak_index: p,
            span,
            prominence: f64::NAN,
        })
        .collect();
    let track = gps_position_filter(&dead_reckoned, gps, &position_pf_config(config))?;
    Ok(FusedResult {
        left: l,
        right: r,
        heading,
        stride_times,
        dead_reckoned,
        track,
    })
}

/// Rates at which the right device may run in mixed-rate operation, Hz.
pub const MIXED_RATES: [f64; 4] = [20.0, 10.0, 5.0, 2.5];

/// Drops the right device to `rate_hz` and fuses it with the full-rate left device.
#[allow(clippy::too_many_arguments)]
pub fn run_mixed_rate(
    left: &DeviceTrace,
    right: &DeviceTrace,
    rate_hz: f64,
    phone: Option<&DeviceTrace>,
    calib: (&CalibrationSet, &CalibrationSet),
    gps: &[GpsFix],
    config: &RunConfig,
    opts: &PipelineOptions,
) -> Result<FusedResult> {
    if !MIXED_RATES.iter().any(|r| (r - rate_hz).abs() < 1e-9) || rate_hz > left.rate_hz + 1e-9 {
        return Err(Error::InvalidInput(format!(
            "unsupported mixed rate {rate_hz} Hz (supported: 20, 10, 5, 2.5 and at most the left rate)"
        )));
    }
    let slow = resample(right, rate_hz)?;
    process_pair(left, &slow, phone, calib, gps, config, opts)
}
