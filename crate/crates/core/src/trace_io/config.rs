//! Run configuration as a flat `key=value` file. Unknown keys are rejected.

use std::path::Path;

use super::table::{parse_key_values, read_key_values};
use crate::error::{Error, Result};

/// Every tunable constant of the pipeline. Defaults: the complementary schedule
/// (gyro weight `0.8 - t/400`), the 3 Hz stride filter, 15 s magnetometer reference
/// points with a 15-point window, and 30 s GPS fixes at σ = 3.9 m.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// User height, m.
    pub user_height: f64,
    /// Rate every trace is resampled to before processing, Hz.
    pub rate_hz: f64,
    /// Gyro weight of the complementary filter at t = 0.
    pub comp_alpha0: f64,
    /// Decrease of the gyro weight per second.
    pub comp_slope: f64,
    /// Lower clamp of the gyro weight.
    pub comp_floor: f64,
    /// Restart the complementary schedule clock at every rollover re-calibration.
    pub comp_reset_on_rollover: bool,
    /// Maximum | |acc| - g | for a sample to count as stationary, m/s².
    pub stationary_threshold: f64,
    /// Minimum length of a stationary window, s.
    pub stationary_window_s: f64,
    /// Re-estimate the gyro heading offset at every stationary window (else only the first).
    pub gyro_recalibrate: bool,
    /// Stride low-pass cutoff, Hz.
    pub lowpass_hz: f64,
    /// Minimum topographic prominence of a stride peak, m/s².
    pub prominence: f64,
    pub heading_particles: usize,
    pub position_particles: usize,
    /// Heading particle filter process noise per step, degrees.
    pub pf_process_noise_deg: f64,
    /// Heading particle filter measurement noise, degrees.
    pub pf_measurement_noise_deg: f64,
    pub gps_period_s: f64,
    pub gps_sigma_m: f64,
    /// Dead-reckoning error growth of the position filter, m/√s.
    pub gps_process_noise: f64,
    pub mag_cal_period_s: f64,
    pub mag_window_cap: usize,
    pub madgwick_beta: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            user_height: 1.80,
            rate_hz: 20.0,
            comp_alpha0: 0.8,
            comp_slope: 1.0 / 400.0,
            comp_floor: 0.0,
            comp_reset_on_rollover: false,
            stationary_threshold: 0.3,
            stationary_window_s: 1.0,
            gyro_recalibrate: true,
            lowpass_hz: 3.0,
            prominence: 0.8,
            heading_particles: 500,
            position_particles: 1000,
            pf_process_noise_deg: 1.0,
            pf_measurement_noise_deg: 10.0,
            gps_period_s: 30.0,
            gps_sigma_m: 3.9,
            gps_process_noise: 3.0,
            mag_cal_period_s: 15.0,
            mag_window_cap: 15,
            madgwick_beta: 0.1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_pairs(&read_key_values(path)?, path)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let path = Path::new("<config>");
        Self::from_pairs(&parse_key_values(text, path)?, path)
    }

    fn from_pairs(pairs: &[(String, String)], path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (key, value) in pairs {
            let bad = |what: &str| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("{key}: expected {what}, found {value:?}"),
            };
            let real = || value.parse::<f64>().map_err(|_| bad("a number"));
            let count = || value.parse::<usize>().map_err(|_| bad("a count"));
            let flag = || value.parse::<bool>().map_err(|_| bad("true or false"));
            match key.as_str() {
                "user_height" => cfg.user_height = real()?,
                "rate_hz" => cfg.rate_hz = real()?,
                "comp_alpha0" => cfg.comp_alpha0 = real()?,
                "comp_slope" => cfg.comp_slope = real()?,
                "comp_floor" => cfg.comp_floor = real()?,
                "comp_reset_on_rollover" => cfg.comp_reset_on_rollover = flag()?,
                "stationary_threshold" => cfg.stationary_threshold = real()?,
                "stationary_window_s" => cfg.stationary_window_s = real()?,
                "gyro_recalibrate" => cfg.gyro_recalibrate = flag()?,
                "lowpass_hz" => cfg.lowpass_hz = real()?,
                "prominence" => cfg.prominence = real()?,
                "heading_particles" => cfg.heading_particles = count()?,
                "position_particles" => cfg.position_particles = count()?,
                "pf_process_noise_deg" => cfg.pf_process_noise_deg = real()?,
                "pf_measurement_noise_deg" => cfg.pf_measurement_noise_deg = real()?,
                "gps_period_s" => cfg.gps_period_s = real()?,
                "gps_sigma_m" => cfg.gps_sigma_m = real()?,
                "gps_process_noise" => cfg.gps_process_noise = real()?,
                "mag_cal_period_s" => cfg.mag_cal_period_s = real()?,
                "mag_window_cap" => cfg.mag_window_cap = count()?,
                "madgwick_beta" => cfg.madgwick_beta = real()?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: 0,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rate_hz", self.rate_hz),
            ("comp_slope", self.comp_slope),
            ("stationary_threshold", self.stationary_threshold),
            ("stationary_window_s", self.stationary_window_s),
            ("lowpass_hz", self.lowpass_hz),
            ("prominence", self.prominence),
            ("pf_process_noise_deg", self.pf_process_noise_deg),
            ("pf_measurement_noise_deg", self.pf_measurement_noise_deg),
            ("gps_period_s", self.gps_period_s),
            ("gps_sigma_m", self.gps_sigma_m),
            ("gps_process_noise", self.gps_process_noise),
            ("mag_cal_period_s", self.mag_cal_period_s),
            ("madgwick_beta", self.madgwick_beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be strictly positive, got {v}")));
            }
        }
        for (name, v) in [
            ("heading_particles", self.heading_particles),
            ("position_particles", self.position_particles),
            ("mag_window_cap", self.mag_window_cap),
        ] {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be strictly positive")));
            }
        }
        if !(0.5..=2.5).contains(&self.user_height) {
            return Err(Error::InvalidInput(format!(
                "user_height {} m outside [0.5, 2.5]",
                self.user_height
            )));
        }
        if !(0.0..=1.0).contains(&self.comp_alpha0) || !(0.0..=1.0).contains(&self.comp_floor) {
            return Err(Error::InvalidInput("complementary weights must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Resolved configuration in canonical key order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let kv = |k: &str, v: String| (k.to_string(), v);
        vec![
            kv("user_height", self.user_height.to_string()),
            kv("rate_hz", self.rate_hz.to_string()),
            kv("comp_alpha0", self.comp_alpha0.to_string()),
            kv("comp_slope", self.comp_slope.to_string()),
            kv("comp_floor", self.comp_floor.to_string()),
            kv("comp_reset_on_rollover", self.comp_reset_on_rollover.to_string()),
            kv("stationary_threshold", self.stationary_threshold.to_string()),
            kv("stationary_window_s", self.stationary_window_s.to_string()),
            kv("gyro_recalibrate", self.gyro_recalibrate.to_string()),
            kv("lowpass_hz", self.lowpass_hz.to_string()),
            kv("prominence", self.prominence.to_string()),
            kv("heading_particles", self.heading_particles.to_string()),
            kv("position_particles", self.position_particles.to_string()),
            kv("pf_process_noise_deg", self.pf_process_noise_deg.to_string()),
            kv("pf_measurement_noise_deg", self.pf_measurement_noise_deg.to_string()),
            kv("gps_period_s", self.gps_period_s.to_string()),
            kv("gps_sigma_m", self.gps_sigma_m.to_string()),
            kv("gps_process_noise", self.gps_process_noise.to_string()),
            kv("mag_cal_period_s", self.mag_cal_period_s.to_string()),
            kv("mag_window_cap", self.mag_window_cap.to_string()),
            kv("madgwick_beta", self.madgwick_beta.to_string()),
            kv("seed", self.seed.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        super::table::format_key_values(&self.to_pairs())
    }

    /// Constant stride length for this user.
    pub fn stride_length(&self) -> f64 {
        crate::displacement::stride_length(self.user_height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let e = RunConfig::parse("user_height=1.7\ncolour=blue\n").unwrap_err().to_string();
        assert!(e.contains("unknown key"), "{e}");
    }

    #[test]
    fn bounds_enforced() {
        assert!(RunConfig::parse("user_height=0").is_err());
        assert!(RunConfig::parse("user_height=2.6").is_err());
        assert!(RunConfig::parse("gps_sigma_m=0").is_err());
        assert!(RunConfig::parse("heading_particles=0").is_err());
        assert!(RunConfig::parse("lowpass_hz=-3").is_err());
        assert!(RunConfig::parse("gyro_recalibrate=maybe").is_err());
        let cfg = RunConfig::parse("user_height=1.0\nseed=42\n").unwrap();
        assert_eq!(cfg.seed, 42);
        assert!((cfg.stride_length() - 0.43).abs() < 1e-15);
    }
}
