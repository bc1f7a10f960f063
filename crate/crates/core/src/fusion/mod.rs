//! Fusion of two earables and GPS: a heading particle filter over both devices'
//! headings, stride-time averaging, and a positional particle filter correcting the
//! dead-reckoned track with GPS fixes.

mod gps;
mod heading_pf;
mod strides;

pub use gps::{gps_position_filter, read_gps_fixes, write_gps_fixes, GpsFix, PositionPfConfig};
pub use heading_pf::{fuse_headings, HeadingPfConfig};
pub use strides::{average_stride_times, average_stride_times_within, NOMINAL_STRIDE_PERIOD_S};

use rand::Rng;

/// Systematic resampling: one uniform offset, `n` evenly spaced pointers into the
/// cumulative weights. `weights` must be normalised.
pub fn systematic_resample<R: Rng>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let u0: f64 = rng.random_range(0.0..1.0) / n as f64;
    let mut cum = weights[0];
    let mut i = 0;
    for k in 0..n {
        let u = u0 + k as f64 / n as f64;
        while u > cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

/// Normalises log-weights in place into linear weights; returns the effective sample
/// size `1 / Σ w²`.
pub(crate) fn normalise_log_weights(log_w: &[f64], out: &mut [f64]) -> f64 {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(log_w) {
        *o = (l - max).exp();
        total += *o;
    }
    let mut sq = 0.0;
    for o in out.iter_mut() {
        *o /= total;
        sq += *o * *o;
    }
    1.0 / sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn systematic_resampling_counts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let w = [0.5, 0.25, 0.25, 0.0];
        let idx = systematic_resample(&w, &mut rng);
        let count = |k| idx.iter().filter(|&&i| i == k).count();
        assert_eq!((count(0), count(1), count(2), count(3)), (2, 1, 1, 0));
        let idx = systematic_resample(&[0.0, 1.0, 0.0], &mut rng);
        assert_eq!(idx, vec![1, 1, 1]);
    }

    #[test]
    fn log_weights_normalise() {
        let mut w = [0.0; 3];
        let ess = normalise_log_weights(&[-1000.0, -1000.0, -1000.0], &mut w);
        assert!((ess - 3.0).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ess = normalise_log_weights(&[0.0, -1e6, -1e6], &mut w);
        assert_eq!(w, [1.0, 0.0, 0.0]);
        assert_eq!(ess, 1.0);
    }
}
