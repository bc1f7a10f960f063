//! Rotational offset between the integrated gyro heading and the magnetic heading,
//! estimated while the wearer is stationary.

use std::ops::Range;

use crate::datamodel::{circular_diff, circular_mean, Angle, DeviceTrace, GRAVITY};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GyroCalib {
    /// Added to the raw gyro heading to align it with the magnetic heading.
    pub heading_offset: Angle,
    pub calibrated_at: f64,
}

impl GyroCalib {
    pub const NONE: GyroCalib = GyroCalib {
        heading_offset: Angle::ZERO,
        calibrated_at: 0.0,
    };

    pub fn apply(&self, raw_gyro_heading: Angle) -> Angle {
        raw_gyro_heading.rotated(self.heading_offset.radians())
    }
}

/// Maximal runs of samples with `| |a| - g | < threshold` lasting at least
/// `min_duration` seconds, as half-open index ranges.
pub fn find_stationary_windows(trace: &DeviceTrace, threshold: f64, min_duration: f64) -> Vec<Range<usize>> {
    let mut windows = Vec::new();
    let n = trace.samples.len();
    let mut start: Option<usize> = None;
    for i in 0..=n {
        let still = i < n && (trace.samples[i].acc.norm() - GRAVITY).abs() < threshold;
        match (still, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                // duration counts sample periods, so 1 s at 20 Hz is 20 samples
                let span = trace.samples[i - 1].t - trace.samples[s].t + trace.dt();
                if span >= min_duration - 1e-9 {
                    windows.push(s..i);
                }
                start = None;
            }
            _ => {}
        }
    }
    windows
}

/// Circular mean of `mag - gyro` over `window`.
pub fn calibrate_gyro(
    times: &[f64],
    gyro_heading: &[Angle],
    mag_heading: &[Angle],
    window: Range<usize>,
) -> Result<GyroCalib> {
    if gyro_heading.len() != mag_heading.len() || times.len() != gyro_heading.len() {
        return Err(Error::Misaligned(format!(
            "{} times, {} gyro headings, {} magnetic headings",
            times.len(),
            gyro_heading.len(),
            mag_heading.len()
        )));
    }
    if window.is_empty() || window.end > times.len() {
        return Err(Error::NoStationaryWindow);
    }
    let diffs: Vec<Angle> = window
        .clone()
        .map(|i| Angle::from_radians(circular_diff(mag_heading[i], gyro_heading[i])))
        .collect();
    Ok(GyroCalib {
        heading_offset: circular_mean(&diffs, None)?,
        calibrated_at: times[window.start],
    })
}

/// Calibrations at every stationary window (or only the first when `recalibrate` is
/// false), in time order.
pub fn calibrate_gyro_windows(
    trace: &DeviceTrace,
    gyro_heading: &[Angle],
    mag_heading: &[Angle],
    threshold: f64,
    min_duration: f64,
    recalibrate: bool,
) -> Result<Vec<GyroCalib>> {
    let windows = find_stationary_windows(trace, threshold, min_duration);
    if windows.is_empty() {
        return Err(Error::NoStationaryWindow);
    }
    let times = trace.times();
    let take = if recalibrate { windows.len() } else { 1 };
    windows
        .into_iter()
        .take(take)
        .map(|w| calibrate_gyro(&times, gyro_heading, mag_heading, w))
        .collect()
}

/// Per-sample offset under zero-order hold; samples before the first calibration use it.
pub fn offset_series(times: &[f64], calibs: &[GyroCalib]) -> Vec<Angle> {
    let mut k = 0;
    times
        .iter()
        .map(|&t| {
            while k + 1 < calibs.len() && calibs[k + 1].calibrated_at <= t {
                k += 1;
            }
            calibs.get(k).map_or(Angle::ZERO, |c| c.heading_offset)
        })
        .collect()
}
