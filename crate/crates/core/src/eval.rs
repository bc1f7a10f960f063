//! Evaluation metrics: closed-loop drift, heading error against a reference, and the
//! paired t-test used to compare methods.

use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::datamodel::{circular_diff, Angle, Position2D};
use crate::displacement::Track;
use crate::error::{Error, Result};
use crate::heading::HeadingSeries;
use crate::trace_io::{write_key_values, write_table};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftReport {
    /// `|final position| / duration`, m/s.
    pub drift: f64,
    pub duration: f64,
    pub final_position: Position2D,
}

impl DriftReport {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("drift_m_per_s".into(), format!("{:.9}", self.drift)),
            ("duration_s".into(), format!("{:.6}", self.duration)),
            ("final_x_m".into(), format!("{:.6}", self.final_position.x)),
            ("final_y_m".into(), format!("{:.6}", self.final_position.y)),
        ]
    }
}

/// Drift of a closed-loop walk that starts and ends at the origin.
pub fn drift(track: &Track) -> Result<DriftReport> {
    if track.is_empty() {
        return Err(Error::InvalidInput("drift of an empty track".into()));
    }
    let duration = track.t[track.t.len() - 1] - track.t[0];
    if !(duration > 0.0) {
        return Err(Error::InvalidInput("track duration must be positive".into()));
    }
    let final_position = track.final_position();
    Ok(DriftReport {
        drift: final_position.norm() / duration,
        duration,
        final_position,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadingErrorReport {
    /// Mean of `|circular_diff|`, degrees.
    pub mean_abs_error: f64,
    /// Population standard deviation of the same errors, degrees.
    pub std_dev: f64,
    /// Per-timestamp absolute errors, degrees.
    pub errors: Vec<f64>,
}

impl HeadingErrorReport {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("heading_error_mean_deg".into(), format!("{:.6}", self.mean_abs_error)),
            ("heading_error_sd_deg".into(), format!("{:.6}", self.std_dev)),
            ("heading_error_samples".into(), self.errors.len().to_string()),
        ]
    }

    pub fn write_errors(&self, path: impl AsRef<Path>, t: &[f64]) -> Result<()> {
        let rows = t
            .iter()
            .zip(&self.errors)
            .map(|(t, e)| vec![format!("{t:.6}"), format!("{e:.6}")]);
        write_table(path, &["t", "abs_error_deg"], rows)
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Absolute heading error at every estimate timestamp. The reference is interpolated
/// along the shortest arc at each estimate time and clamped at its ends; estimate
/// samples outside the reference time range are skipped.
pub fn heading_error(estimate: &HeadingSeries, reference: &HeadingSeries) -> Result<HeadingErrorReport> {
    if reference.is_empty() || estimate.is_empty() {
        return Err(Error::InvalidInput("heading error of an empty series".into()));
    }
    let (r0, r1) = (reference.t[0], reference.t[reference.len() - 1]);
    let mut errors = Vec::with_capacity(estimate.len());
    for (&t, &psi) in estimate.t.iter().zip(&estimate.psi) {
        if t < r0 - 1e-9 || t > r1 + 1e-9 {
            continue;
        }
        let k = reference.t.partition_point(|&x| x < t - 1e-9);
        let r = if k < reference.len() && (reference.t[k] - t).abs() <= 1e-9 {
            reference.psi[k]
        } else if k == 0 {
            reference.psi[0]
        } else if k >= reference.len() {
            reference.psi[reference.len() - 1]
        } else {
            let w = (t - reference.t[k - 1]) / (reference.t[k] - reference.t[k - 1]);
            crate::datamodel::circular_blend(reference.psi[k - 1], reference.psi[k], w)
        };
        errors.push(circular_diff(psi, r).abs().to_degrees());
    }
    if errors.is_empty() {
        return Err(Error::Misaligned("estimate and reference cover disjoint time ranges".into()));
    }
    let (mean_abs_error, std_dev) = mean_sd(&errors);
    Ok(HeadingErrorReport {
        mean_abs_error,
        std_dev,
        errors,
    })
}

/// Mean and sample standard deviation across runs of each run's mean heading error,
/// the between-run view of the error spread.
pub fn across_runs(reports: &[HeadingErrorReport]) -> (f64, f64) {
    let means: Vec<f64> = reports.iter().map(|r| r.mean_abs_error).collect();
    mean_and_sd(&means)
}

/// Mean and sample standard deviation; the deviation is 0 for fewer than two values.
pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTestResult {
    /// `mean(d) / (sd(d) / √n)` with `d = a - b`; infinite when `sd(d) = 0` and
    /// `mean(d) ≠ 0`.
    pub t: f64,
    pub df: usize,
    pub mean_difference: f64,
    /// Two-sided Student-t critical value at `alpha`.
    pub critical: f64,
    pub alpha: f64,
    pub significant: bool,
    /// The differences had zero variance.
    pub degenerate_variance: bool,
}

impl TTestResult {
    pub fn to_pairs(&self, prefix: &str) -> Vec<(String, String)> {
        vec![
            (format!("{prefix}t"), format!("{:.6}", self.t)),
            (format!("{prefix}df"), self.df.to_string()),
            (format!("{prefix}mean_difference"), format!("{:.9}", self.mean_difference)),
            (format!("{prefix}critical"), format!("{:.6}", self.critical)),
            (format!("{prefix}significant"), self.significant.to_string()),
        ]
    }
}

/// Two-sided paired t-test of `a` against `b`.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!("{} vs {} paired samples", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("paired t-test needs at least two pairs".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired sample"));
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = d.len() - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let critical = dist.inverse_cdf(1.0 - alpha / 2.0);
    // exact constant differences leave only rounding-level variance
    let degenerate = var.sqrt() <= 1e-12 * mean.abs().max(1e-300);
    if degenerate {
        if mean == 0.0 {
            return Err(Error::Degenerate);
        }
        return Ok(TTestResult {
            t: mean.signum() * f64::INFINITY,
            df,
            mean_difference: mean,
            critical,
            alpha,
            significant: true,
            degenerate_variance: true,
        });
    }
    let t = mean / (var.sqrt() / n.sqrt());
    Ok(TTestResult {
        t,
        df,
        mean_difference: mean,
        critical,
        alpha,
        significant: t.abs() > critical,
        degenerate_variance: false,
    })
}

/// Writes a flat report.
pub fn write_report(path: impl AsRef<Path>, pairs: &[(String, String)]) -> Result<()> {
    write_key_values(path, pairs)
}

/// Mean absolute heading error of `psi` against `reference`, both on the same grid.
pub fn mean_abs_error_deg(psi: &[Angle], reference: &[Angle]) -> f64 {
    let n = psi.len().min(reference.len()).max(1) as f64;
    psi.iter()
        .zip(reference)
        .map(|(a, b)| circular_diff(*a, *b).abs().to_degrees())
        .sum::<f64>()
        / n
}
