use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{normalise_log_weights, systematic_resample};
use crate::datamodel::{circular_blend, circular_diff, circular_mean, Angle};
use crate::error::{Error, Result};
use crate::heading::HeadingSeries;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadingPfConfig {
    pub particles: usize,
    /// Random-walk noise added per step on top of the measured heading change, rad.
    pub process_noise: f64,
    /// Per-device heading measurement noise, rad.
    pub measurement_noise: f64,
    /// Resample when the effective sample size drops below this fraction of N.
    pub resample_fraction: f64,
    pub seed: u64,
}

impl Default for HeadingPfConfig {
    fn default() -> Self {
        HeadingPfConfig {
            particles: 500,
            process_noise: 1f64.to_radians(),
            measurement_noise: 10f64.to_radians(),
            resample_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Per-timestamp most probable heading given both devices' headings.
///
/// Particles move by the mean of the two devices' heading changes plus Gaussian
/// process noise, are weighted by the product of both wrapped-Gaussian likelihoods,
/// and are resampled systematically when the effective sample size falls below
/// `resample_fraction · N`. The estimate is the weighted circular mean.
pub fn fuse_headings(left: &HeadingSeries, right: &HeadingSeries, cfg: &HeadingPfConfig) -> Result<HeadingSeries> {
    if left.len() != right.len() || left.t.iter().zip(&right.t).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(Error::Misaligned("left and right heading series are on different grids".into()));
    }
    if cfg.particles == 0 || !(cfg.process_noise > 0.0) || !(cfg.measurement_noise > 0.0) {
        return Err(Error::InvalidInput("particle filter needs N > 0 and positive noise".into()));
    }
    let n = cfg.particles;
    let mut out = Vec::with_capacity(left.len());
    if left.is_empty() {
        return HeadingSeries::new(left.method, Vec::new(), out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let process = Normal::new(0.0, cfg.process_noise).expect("positive sigma");
    let prior = Normal::new(0.0, cfg.measurement_noise).expect("positive sigma");
    let start = circular_blend(left.psi[0], right.psi[0], 0.5);
    let mut particles: Vec<f64> = (0..n).map(|_| start.radians() + prior.sample(&mut rng)).collect();
    let mut weights = vec![1.0 / n as f64; n];
    let mut log_w = vec![0.0; n];
    let inv_two_var = 1.0 / (2.0 * cfg.measurement_noise * cfg.measurement_noise);
    let mut scratch = vec![0.0; n];
    for k in 0..left.len() {
        if k > 0 {
            let dl = circular_diff(left.psi[k], left.psi[k - 1]);
            let dr = circular_diff(right.psi[k], right.psi[k - 1]);
            let drift = 0.5 * (dl + dr);
            for p in &mut particles {
                *p += drift + process.sample(&mut rng);
            }
        }
        for (lw, (&p, &w)) in log_w.iter_mut().zip(particles.iter().zip(&weights)) {
            let a = Angle::from_radians(p);
            let el = circular_diff(left.psi[k], a);
            let er = circular_diff(right.psi[k], a);
            *lw = w.ln() - (el * el + er * er) * inv_two_var;
        }
        let ess = normalise_log_weights(&log_w, &mut weights);
        let angles: Vec<Angle> = particles.iter().map(|&p| Angle::from_radians(p)).collect();
        let estimate = circular_mean(&angles, Some(&weights)).unwrap_or(angles[0]);
        out.push(estimate);
        if ess < cfg.resample_fraction * n as f64 {
            let idx = systematic_resample(&weights, &mut rng);
            for (s, &i) in scratch.iter_mut().zip(&idx) {
                *s = particles[i];
            }
            std::mem::swap(&mut particles, &mut scratch);
            weights.fill(1.0 / n as f64);
        }
        // keep particle values bounded
        for p in &mut particles {
            *p = Angle::from_radians(*p).radians();
        }
    }
    HeadingSeries::new(left.method, left.t.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heading::HeadingMethod;
    use rand::Rng;

    fn series(degs: &[f64]) -> HeadingSeries {
        let t = (0..degs.len()).map(|i| i as f64 * 0.05).collect();
        HeadingSeries::new(HeadingMethod::Complementary, t, degs.iter().map(|d| Angle::from_degrees(*d)).collect())
            .unwrap()
    }

    #[test]
    fn consensus_fixed_point() {
        let s = series(&[45.0; 200]);
        let cfg = HeadingPfConfig { measurement_noise: 0.5f64.to_radians(), ..Default::default() };
        let f = fuse_headings(&s, &s, &cfg).unwrap();
        assert!(f.psi.iter().all(|p| circular_diff(*p, Angle::from_degrees(45.0)).abs().to_degrees() < 0.5));
    }

    /// Steady-state posterior standard deviation of the equivalent Kalman filter: a
    /// random walk observed twice with the measurement noise.
    fn posterior_sd(cfg: &HeadingPfConfig) -> f64 {
        let q = cfg.process_noise.powi(2);
        let r = cfg.measurement_noise.powi(2) / 2.0;
        let mut p = r;
        for _ in 0..1000 {
            p = (p + q) * r / (p + q + r);
        }
        p.sqrt()
    }

    #[test]
    fn consensus_error_is_monte_carlo_scale() {
        let s = series(&(0..400).map(|i| (i as f64 * 0.7) % 360.0).collect::<Vec<_>>());
        let cfg = HeadingPfConfig::default();
        let f = fuse_headings(&s, &s, &cfg).unwrap();
        let scale = posterior_sd(&cfg) / (cfg.particles as f64).sqrt();
        let errs: Vec<f64> = f.psi.iter().zip(&s.psi).skip(20).map(|(a, b)| circular_diff(*a, *b).abs()).collect();
        let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
        assert!(rms < 1.5 * scale, "rms {} scale {}", rms.to_degrees(), scale.to_degrees());
        assert!(errs.iter().all(|e| *e < 4.5 * scale));
    }

    #[test]
    fn symmetric_across_north() {
        let f = fuse_headings(&series(&[350.0; 100]), &series(&[10.0; 100]), &HeadingPfConfig::default()).unwrap();
        assert!(f.psi[20..].iter().all(|p| circular_diff(*p, Angle::ZERO).abs().to_degrees() < 1.0));
    }

    #[test]
    fn fused_beats_single_device() {
        let mut better = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let noise = Normal::new(0.0, 8.0).unwrap();
            let truth: Vec<f64> = (0..1200).map(|i| 100.0 + 40.0 * (i as f64 / 150.0).sin()).collect();
            let l: Vec<f64> = truth.iter().map(|t| t + noise.sample(&mut rng)).collect();
            let r: Vec<f64> = truth.iter().map(|t| t + noise.sample(&mut rng)).collect();
            let cfg = HeadingPfConfig { seed, ..Default::default() };
            let f = fuse_headings(&series(&l), &series(&r), &cfg).unwrap();
            let rmse = |est: &[Angle]| {
                (est.iter()
                    .zip(&truth)
                    .map(|(e, t)| circular_diff(*e, Angle::from_degrees(*t)).powi(2))
                    .sum::<f64>()
                    / truth.len() as f64)
                    .sqrt()
            };
            if rmse(&f.psi) < rmse(&series(&l).psi) {
                better += 1;
            }
            let _ = rng.random::<u8>();
        }
        assert_eq!(better, 100);
    }

    #[test]
    fn deterministic() {
        let a = series(&[10.0, 20.0, 30.0, 40.0]);
        let b = series(&[12.0, 18.0, 33.0, 41.0]);
        let cfg = HeadingPfConfig { seed: 9, ..Default::default() };
        assert_eq!(fuse_headings(&a, &b, &cfg).unwrap(), fuse_headings(&a, &b, &cfg).unwrap());
    }

    #[test]
    fn misaligned_rejected() {
        assert!(fuse_headings(&series(&[1.0, 2.0]), &series(&[1.0]), &HeadingPfConfig::default()).is_err());
    }
}
