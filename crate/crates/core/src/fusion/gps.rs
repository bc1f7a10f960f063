use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{normalise_log_weights, systematic_resample};
use crate::datamodel::Position2D;
use crate::displacement::Track;
use crate::error::{Error, Result};
use crate::trace_io::{read_table, write_table};

const GPS_COLUMNS: [&str; 4] = ["t", "x_m", "y_m", "sigma_m"];

/// An absolute position observation with isotropic Gaussian error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpsFix {
    pub t: f64,
    pub position: Position2D,
    pub sigma: f64,
}

impl GpsFix {
    pub fn new(t: f64, position: Position2D, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !t.is_finite() || !position.x.is_finite() || !position.y.is_finite()
        {
            return Err(Error::InvalidInput(format!("invalid GPS fix at t={t} (sigma {sigma})")));
        }
        Ok(GpsFix { t, position, sigma })
    }
}

pub fn write_gps_fixes(path: impl AsRef<Path>, fixes: &[GpsFix]) -> Result<()> {
    let rows = fixes.iter().map(|f| {
        vec![
            format!("{:.6}", f.t),
            format!("{:.6}", f.position.x),
            format!("{:.6}", f.position.y),
            format!("{:.6}", f.sigma),
        ]
    });
    write_table(path, &GPS_COLUMNS, rows)
}

pub fn read_gps_fixes(path: impl AsRef<Path>) -> Result<Vec<GpsFix>> {
    let table = read_table(path, &GPS_COLUMNS)?;
    let mut out: Vec<GpsFix> = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        let fix = GpsFix::new(
            table.f64_at(r, 0)?,
            Position2D::new(table.f64_at(r, 1)?, table.f64_at(r, 2)?),
            table.f64_at(r, 3)?,
        )
        .map_err(|e| table.err(r, e.to_string()))?;
        if out.last().is_some_and(|p| p.t > fix.t) {
            return Err(table.err(r, "GPS fixes must be sorted by time".into()));
        }
        out.push(fix);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionPfConfig {
    pub particles: usize,
    /// Growth of dead-reckoning error, m/√s, per axis.
    pub process_noise: f64,
    pub seed: u64,
}

impl Default for PositionPfConfig {
    fn default() -> Self {
        PositionPfConfig {
            particles: 1000,
            process_noise: 3.0,
            seed: 0,
        }
    }
}

/// Corrects a dead-reckoned track with GPS fixes.
///
/// Each particle is an offset from the dead-reckoned position, so particles move with
/// the dead-reckoned increments. Between fixes the offsets diffuse by
/// `N(0, process_noise² Δt)` per axis; at a fix they are weighted by the Gaussian
/// likelihood of the fix and resampled. The output is the dead-reckoned position plus
/// the weighted mean offset, which changes only at fixes.
pub fn gps_position_filter(dr: &Track, fixes: &[GpsFix], cfg: &PositionPfConfig) -> Result<Track> {
    if fixes.is_empty() || dr.is_empty() {
        return Ok(dr.clone());
    }
    let t0 = dr.t[0];
    if fixes[0].t < t0 {
        return Err(Error::InvalidInput(format!(
            "GPS fix at t={} precedes the track start t={t0}",
            fixes[0].t
        )));
    }
    if fixes.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::InvalidInput("GPS fixes must be sorted by time".into()));
    }
    if cfg.particles == 0 || !(cfg.process_noise >= 0.0) {
        return Err(Error::InvalidInput("position filter needs N > 0 and non-negative noise".into()));
    }
    let n = cfg.particles;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut offsets = vec![Position2D::ORIGIN; n];
    let mut scratch = vec![Position2D::ORIGIN; n];
    let mut weights = vec![1.0 / n as f64; n];
    let mut log_w = vec![0.0; n];
    let mut mean = Position2D::ORIGIN;
    let mut last_t = t0;
    let mut next_fix = 0;
    let mut positions = Vec::with_capacity(dr.len());
    for (k, &t) in dr.t.iter().enumerate() {
        while next_fix < fixes.len() && fixes[next_fix].t <= t {
            let fix = fixes[next_fix];
            let dt = fix.t - last_t;
            if dt > 0.0 && cfg.process_noise > 0.0 {
                let spread = Normal::new(0.0, cfg.process_noise * dt.sqrt()).expect("positive sigma");
                for o in &mut offsets {
                    *o = *o + Position2D::new(spread.sample(&mut rng), spread.sample(&mut rng));
                }
            }
            let base = dr.position_at(fix.t);
            let inv_two_var = 1.0 / (2.0 * fix.sigma * fix.sigma);
            for (lw, o) in log_w.iter_mut().zip(&offsets) {
                *lw = -(base + *o).distance(&fix.position).powi(2) * inv_two_var;
            }
            normalise_log_weights(&log_w, &mut weights);
            let (sx, sy) = offsets
                .iter()
                .zip(&weights)
                .fold((0.0, 0.0), |(sx, sy), (o, w)| (sx + w * o.x, sy + w * o.y));
            mean = Position2D::new(sx, sy);
            let idx = systematic_resample(&weights, &mut rng);
            for (s, &i) in scratch.iter_mut().zip(&idx) {
                *s = offsets[i];
            }
            std::mem::swap(&mut offsets, &mut scratch);
            weights.fill(1.0 / n as f64);
            last_t = fix.t;
            next_fix += 1;
        }
        positions.push(dr.positions[k] + mean);
    }
    Ok(Track {
        t: dr.t.clone(),
        positions,
        strides: dr.strides.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Angle;
    use crate::displacement::integrate_track;

    fn straight_track(secs: usize, speed: f64) -> Track {
        let t: Vec<f64> = (0..=secs).map(|i| i as f64).collect();
        let d = vec![speed; t.len()];
        integrate_track(&t, &d, &vec![Angle::ZERO; t.len()]).unwrap()
    }

    #[test]
    fn no_fixes_returns_dead_reckoning() {
        let dr = straight_track(100, 1.0);
        assert_eq!(gps_position_filter(&dr, &[], &PositionPfConfig::default()).unwrap(), dr);
    }

    #[test]
    fn precise_fixes_snap() {
        let dr = straight_track(120, 1.0);
        let truth = |t: f64| Position2D::new(t + 1.0, 0.5 * t);
        let fixes: Vec<GpsFix> = (1..=4).map(|k| GpsFix::new(30.0 * k as f64, truth(30.0 * k as f64), 1e-3).unwrap()).collect();
        // the snap is limited by particle density around the fix
        let cfg = PositionPfConfig { particles: 20000, ..Default::default() };
        let out = gps_position_filter(&dr, &fixes, &cfg).unwrap();
        for f in &fixes {
            let k = f.t as usize;
            assert!(out.positions[k].distance(&f.position) < 0.5, "{:?}", out.positions[k]);
        }
    }

    #[test]
    fn early_fix_rejected() {
        let mut dr = straight_track(10, 1.0);
        dr.t.iter_mut().for_each(|t| *t += 5.0);
        let fix = GpsFix::new(1.0, Position2D::ORIGIN, 3.9).unwrap();
        assert!(gps_position_filter(&dr, &[fix], &PositionPfConfig::default()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let fixes = vec![
            GpsFix::new(30.0, Position2D::new(1.5, -2.25), 3.9).unwrap(),
            GpsFix::new(60.0, Position2D::new(3.0, 4.0), 3.9).unwrap(),
        ];
        let p = dir.path().join("gps.csv");
        write_gps_fixes(&p, &fixes).unwrap();
        assert_eq!(read_gps_fixes(&p).unwrap(), fixes);
    }
}
