//! Pedestrian dead reckoning: strides from the accelerometer norm, a constant stride
//! length spread evenly over each stride's samples, and heading-driven integration.
//! A double-integration kinematics track is kept as a baseline.

mod strides;

use std::path::Path;

use nalgebra::Vector3;

pub use strides::{
    detect_strides, detect_strides_with, local_maxima, prominence, stride_spans, zero_phase_lowpass, StrideEvent,
    DEFAULT_CUTOFF_HZ,
};

use crate::datamodel::{Angle, DeviceTrace, Position2D, GRAVITY};
use crate::error::{Error, Result};
use crate::heading::{leveling_rotation, Tilt};
use crate::trace_io::write_table;

/// Stride length as a fixed fraction of body height.
pub fn stride_length(height: f64) -> f64 {
    0.43 * height
}

/// Spreads one stride length evenly over the samples of each span; samples outside
/// every span get zero.
pub fn per_timestamp_distance(spans: &[(usize, usize)], n_timestamps: usize, stride_len: f64) -> Result<Vec<f64>> {
    let mut d = vec![0.0; n_timestamps];
    let mut prev_end = 0;
    for (k, &(i, j)) in spans.iter().enumerate() {
        if !(i < j) || j > n_timestamps || (k > 0 && i < prev_end) {
            return Err(Error::OverlappingSpans(k));
        }
        let share = stride_len / (j - i) as f64;
        d[i..j].iter_mut().for_each(|v| *v = share);
        prev_end = j;
    }
    Ok(d)
}

/// A dead-reckoned path. `positions[k]` is the position after sample `k`'s
/// displacement, accumulated from the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub t: Vec<f64>,
    pub positions: Vec<Position2D>,
    pub strides: Vec<StrideEvent>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn final_position(&self) -> Position2D {
        self.positions.last().copied().unwrap_or(Position2D::ORIGIN)
    }

    /// Sum of segment lengths, starting from the origin.
    pub fn path_length(&self) -> f64 {
        let mut prev = Position2D::ORIGIN;
        self.positions
            .iter()
            .map(|p| {
                let d = p.distance(&prev);
                prev = *p;
                d
            })
            .sum()
    }

    /// Position at time `t` by linear interpolation, clamped to the ends.
    pub fn position_at(&self, t: f64) -> Position2D {
        if self.is_empty() {
            return Position2D::ORIGIN;
        }
        let k = self.t.partition_point(|&x| x <= t);
        if k == 0 {
            return self.positions[0];
        }
        if k >= self.t.len() {
            return self.final_position();
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.positions[k - 1], self.positions[k]);
        Position2D::new(a.x + w * (b.x - a.x), a.y + w * (b.y - a.y))
    }

    /// Writes `(t, x_m, y_m)` rows.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self
            .t
            .iter()
            .zip(&self.positions)
            .map(|(t, p)| vec![format!("{t:.6}"), format!("{:.6}", p.x), format!("{:.6}", p.y)]);
        write_table(path, &["t", "x_m", "y_m"], rows)
    }

    /// Writes `(peak_time, i, j, prominence)` rows.
    pub fn write_strides(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self.strides.iter().map(|s| {
            vec![
                format!("{:.6}", s.peak_time),
                s.span.0.to_string(),
                s.span.1.to_string(),
                format!("{:.6}", s.prominence),
            ]
        });
        write_table(path, &["peak_time", "i", "j", "prominence"], rows)
    }
}

/// `S_t = S_{t-1} + d_t (cos psi_t, sin psi_t)` from the origin.
pub fn integrate_track(t: &[f64], distance: &[f64], heading: &[Angle]) -> Result<Track> {
    if distance.len() != heading.len() || t.len() != heading.len() {
        return Err(Error::Misaligned(format!(
            "{} times, {} distances, {} headings",
            t.len(),
            distance.len(),
            heading.len()
        )));
    }
    let mut s = Position2D::ORIGIN;
    let positions = distance
        .iter()
        .zip(heading)
        .map(|(&d, &psi)| {
            s = s + Position2D::step(d, psi);
            s
        })
        .collect();
    Ok(Track {
        t: t.to_vec(),
        positions,
        strides: Vec::new(),
    })
}

/// Horizontal specific force in the track frame (north, east): each reading levelled
/// by its tilt, then the device forward and left axes rotated by the heading.
pub fn planar_world_accel(trace: &DeviceTrace, tilts: &[Tilt], heading: &[Angle]) -> Result<Vec<[f64; 2]>> {
    if tilts.len() != trace.len() || heading.len() != trace.len() {
        return Err(Error::Misaligned("trace, tilts and headings differ in length".into()));
    }
    Ok(trace
        .samples
        .iter()
        .zip(tilts.iter().zip(heading))
        .map(|(s, (&tilt, psi))| {
            let level: Vector3<f64> = leveling_rotation(tilt) * s.acc;
            let (sn, cs) = psi.sin_cos();
            // forward = (cos, sin), left = (sin, -cos) in (north, east)
            [level.x * cs + level.y * sn, level.x * sn - level.y * cs]
        })
        .collect())
}

/// Velocity and position by trapezoidal integration from rest, with no resets.
pub fn kinematics_track(t: &[f64], accel: &[[f64; 2]]) -> Result<Track> {
    if t.len() != accel.len() {
        return Err(Error::Misaligned(format!("{} times for {} accelerations", t.len(), accel.len())));
    }
    let mut v = [0.0; 2];
    let mut s = Position2D::ORIGIN;
    let mut positions = Vec::with_capacity(t.len());
    if !t.is_empty() {
        positions.push(s);
    }
    for k in 1..t.len() {
        let dt = t[k] - t[k - 1];
        let v_prev = v;
        for axis in 0..2 {
            v[axis] += 0.5 * (accel[k - 1][axis] + accel[k][axis]) * dt;
        }
        s = s + Position2D::new(0.5 * (v_prev[0] + v[0]) * dt, 0.5 * (v_prev[1] + v[1]) * dt);
        positions.push(s);
    }
    Ok(Track {
        t: t.to_vec(),
        positions,
        strides: Vec::new(),
    })
}

/// Vertical specific force minus gravity, useful for diagnostics of the stride signal.
pub fn dynamic_norm(trace: &DeviceTrace) -> Vec<f64> {
    trace.accel_norms().into_iter().map(|n| n - GRAVITY).collect()
}
