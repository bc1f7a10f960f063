//! Stride detection on the accelerometer norm: zero-phase low-pass, local maxima, and a
//! topographic prominence filter.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_CUTOFF_HZ: f64 = 3.0;

/// `sqrt(2^(1/4) - 1)`: the corner of each first-order section relative to the cutoff,
/// so that four passes (two sections, forward and backward) meet at -3 dB.
const SECTION_RATIO: f64 = 0.434_979_442_046_082_2;

/// Gaps longer than this multiple of the median stride period are walking pauses.
const PAUSE_FACTOR: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrideEvent {
    /// Seconds from the first sample.
    pub peak_time: f64,
    pub peak_index: usize,
    /// Half-open sample range `[i, j)` attributed to this stride.
    pub span: (usize, usize),
    /// Prominence on the filtered norm, m/s².
    pub prominence: f64,
}

fn first_order_pass(x: &[f64], k: f64) -> Vec<f64> {
    let b = k / (1.0 + k);
    let a = (k - 1.0) / (k + 1.0);
    let mut out = Vec::with_capacity(x.len());
    // start at the DC steady state of the first input
    let (mut xp, mut yp) = (x[0], x[0]);
    for &xi in x {
        let y = b * (xi + xp) - a * yp;
        out.push(y);
        xp = xi;
        yp = y;
    }
    out
}

/// Critically damped second-order low-pass run forward then backward; the overall
/// amplitude response is -3 dB at `cutoff_hz`.
pub fn zero_phase_lowpass(x: &[f64], fs: f64, cutoff_hz: f64) -> Result<Vec<f64>> {
    if !(fs > 2.0 * cutoff_hz) || !(cutoff_hz > 0.0) {
        return Err(Error::RateTooLow { fs, cutoff: cutoff_hz });
    }
    if x.len() < 2 {
        return Ok(x.to_vec());
    }
    let k = (PI * cutoff_hz / fs).tan() / SECTION_RATIO;
    let n = x.len();
    // odd reflection about each end point keeps the edges free of start-up transients
    let pad = ((3.0 * fs / cutoff_hz).ceil() as usize).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let mut y = first_order_pass(&first_order_pass(&ext, k), k);
    y.reverse();
    let mut y = first_order_pass(&first_order_pass(&y, k), k);
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

/// Indices of local maxima; a flat top counts once, at its middle sample.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Height of the peak above the higher of the two lowest points reached before
/// meeting higher ground (or the series end) on either side.
pub fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

fn median(v: &mut [usize]) -> f64 {
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        (v[m - 1] + v[m]) as f64 / 2.0
    }
}

/// Spans around sorted peak indices. Consecutive peaks at most 1.5 median periods
/// apart share a midpoint boundary; across longer gaps (pauses) and at both ends each
/// stride reaches at most half a median period from its peak. A lone peak owns the
/// whole series.
pub fn stride_spans(peaks: &[usize], n: usize) -> Vec<(usize, usize)> {
    match peaks.len() {
        0 => return Vec::new(),
        1 => return vec![(0, n)],
        _ => {}
    }
    let mut gaps: Vec<usize> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    let period = median(&mut gaps);
    let half = ((period / 2.0).round() as usize).max(1);
    let mut spans = Vec::with_capacity(peaks.len());
    let mut start = peaks[0].saturating_sub(half);
    for k in 0..peaks.len() {
        let p = peaks[k];
        let end = match peaks.get(k + 1) {
            Some(&q) if (q - p) as f64 <= PAUSE_FACTOR * period => (p + q).div_ceil(2),
            Some(&q) => (p + half).min((p + q).div_ceil(2)),
            None => (p + half).min(n),
        };
        spans.push((start, end));
        if let Some(&q) = peaks.get(k + 1) {
            start = if (q - p) as f64 <= PAUSE_FACTOR * period {
                end
            } else {
                q.saturating_sub(half).max(end)
            };
        }
    }
    spans
}

/// Strides in an accelerometer-norm series sampled at `fs`, using the default cutoff.
pub fn detect_strides(norms: &[f64], fs: f64, prominence_threshold: f64) -> Result<Vec<StrideEvent>> {
    detect_strides_with(norms, fs, prominence_threshold, DEFAULT_CUTOFF_HZ)
}

pub fn detect_strides_with(
    norms: &[f64],
    fs: f64,
    prominence_threshold: f64,
    cutoff_hz: f64,
) -> Result<Vec<StrideEvent>> {
    if norms.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("accelerometer norm"));
    }
    let filtered = zero_phase_lowpass(norms, fs, cutoff_hz)?;
    let accepted: Vec<(usize, f64)> = local_maxima(&filtered)
        .into_iter()
        .map(|p| (p, prominence(&filtered, p)))
        .filter(|&(_, prom)| prom >= prominence_threshold)
        .collect();
    let peaks: Vec<usize> = accepted.iter().map(|a| a.0).collect();
    let spans = stride_spans(&peaks, norms.len());
    Ok(accepted
        .iter()
        .zip(spans)
        .map(|(&(p, prom), span)| StrideEvent {
            peak_time: p as f64 / fs,
            peak_index: p,
            span,
            prominence: prom,
        })
        .collect())
}
