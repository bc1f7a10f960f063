//! Accelerometer, gyroscope and magnetometer calibration, plus the text format used to
//! hand a calibration from `calibrate` to `track`.

mod accel;
mod gyro;
pub mod lm;
mod mag;

use std::path::Path;

use nalgebra::Vector3;

pub use accel::{
    apply_accel_calibration, fit_accel_calibration, fit_accel_calibration_with, invert_accel_calibration,
    segment_static_clips, AccelCalib, AccelFit, MIN_ORIENTATIONS, RESIDUAL_DEFINITION,
};
pub use gyro::{calibrate_gyro, calibrate_gyro_windows, find_stationary_windows, offset_series, GyroCalib};
pub use mag::{crosses_north, mag_add_reference_point, mag_check_rollover, MagCalibState, MIN_SPACING_S, WINDOW_CAP};

use crate::datamodel::Angle;
use crate::error::{Error, Result};
use crate::trace_io::{read_key_values, write_key_values};

const ACCEL_KEYS: [&str; 9] = [
    "alpha_yx", "alpha_zx", "alpha_zy", "sf_ax", "sf_ay", "sf_az", "b_ax", "b_ay", "b_az",
];

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSet {
    pub accel: AccelCalib,
    pub gyro: Option<GyroCalib>,
    pub mag: MagCalibState,
}

impl Default for CalibrationSet {
    fn default() -> Self {
        CalibrationSet {
            accel: AccelCalib::IDENTITY,
            gyro: None,
            mag: MagCalibState::default(),
        }
    }
}

impl CalibrationSet {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = ACCEL_KEYS
            .iter()
            .zip(self.accel.as_array())
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        if let Some(g) = self.gyro {
            out.push(("gyro_offset_deg".into(), g.heading_offset.degrees().to_string()));
            out.push(("gyro_calibrated_at".into(), g.calibrated_at.to_string()));
        }
        out.push(("mag_window_cap".into(), self.mag.cap.to_string()));
        out.push(("mag_spacing_s".into(), self.mag.spacing.to_string()));
        let window: Vec<String> = self
            .mag
            .window
            .iter()
            .map(|(t, o)| format!("{t}:{}", o.radians()))
            .collect();
        out.push(("mag_window_rad".into(), window.join(",")));
        out
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let num = |key: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::InvalidInput(format!("{key}: not a finite number: {v:?}")))
        };
        for (k, _) in pairs {
            let known = ACCEL_KEYS.contains(&k.as_str())
                || matches!(
                    k.as_str(),
                    "gyro_offset_deg" | "gyro_calibrated_at" | "mag_window_cap" | "mag_spacing_s" | "mag_window_rad"
                );
            if !known {
                return Err(Error::InvalidInput(format!("unknown calibration key {k:?}")));
            }
        }
        let mut p = [0.0; 9];
        for (slot, key) in p.iter_mut().zip(ACCEL_KEYS) {
            let v = get(key).ok_or_else(|| Error::InvalidInput(format!("missing calibration key {key:?}")))?;
            *slot = num(key, v)?;
        }
        let accel = AccelCalib {
            alpha_yx: p[0],
            alpha_zx: p[1],
            alpha_zy: p[2],
            scale: Vector3::new(p[3], p[4], p[5]),
            bias: Vector3::new(p[6], p[7], p[8]),
        };
        let gyro = match get("gyro_offset_deg") {
            Some(v) => Some(GyroCalib {
                heading_offset: Angle::from_degrees(num("gyro_offset_deg", v)?),
                calibrated_at: get("gyro_calibrated_at").map_or(Ok(0.0), |v| num("gyro_calibrated_at", v))?,
            }),
            None => None,
        };
        let cap = match get("mag_window_cap") {
            Some(v) => v
                .parse::<usize>()
                .ok()
                .filter(|c| *c > 0)
                .ok_or_else(|| Error::InvalidInput(format!("mag_window_cap: {v:?}")))?,
            None => WINDOW_CAP,
        };
        let spacing = get("mag_spacing_s").map_or(Ok(MIN_SPACING_S), |v| num("mag_spacing_s", v))?;
        let mut mag = MagCalibState::new(cap, spacing);
        for item in get("mag_window_rad").unwrap_or("").split(',').filter(|s| !s.is_empty()) {
            let (t, o) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidInput(format!("mag_window_rad entry {item:?}")))?;
            let (t, o) = (num("mag_window_rad", t)?, num("mag_window_rad", o)?);
            // replaying through the public operation re-establishes the window invariants
            let earable = Angle::ZERO;
            mag = mag_add_reference_point(&mag, t, Angle::from_radians(o), earable);
        }
        Ok(CalibrationSet { accel, gyro, mag })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_key_values(path, &self.to_pairs())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CalibrationSet::from_pairs(&read_key_values(path)?)
    }
}
