//! Trace files, tabular sidecar formats, run configuration, and resampling.
//!
//! Trace files are UTF-8 with LF line endings. The single header line carries the
//! metadata and column list:
//!
//! ```text
//! # device_id=left rate_hz=20 columns=t,ax,ay,az,gx,gy,gz,mx,my,mz
//! 0.000000,0.000000000,0.000000000,9.806650000,...
//! ```
//!
//! Phone traces append a `ref_heading_deg` column. Timestamps are written with six
//! decimals and channels with nine, so `format_trace(parse_trace(f))` reproduces a
//! canonically formatted file byte for byte.

mod config;
mod resample;
mod table;

pub use config::RunConfig;
pub use resample::{resample, resample_to_times};
pub use table::{read_key_values, read_table, write_key_values, write_table, Table};

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::datamodel::{Angle, DeviceTrace, ImuSample};
use crate::error::{Error, Result};

pub const IMU_COLUMNS: [&str; 10] = ["t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"];
pub const REFERENCE_COLUMN: &str = "ref_heading_deg";

/// Which column layout a trace file must have.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Columns {
    /// The ten IMU columns.
    Imu,
    /// IMU columns plus a reference heading (phone traces).
    ImuWithReference,
    /// Either layout.
    Any,
}

pub fn load_trace(path: impl AsRef<Path>, expected: Columns) -> Result<DeviceTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace(&text, path, expected)
}

pub fn write_trace(path: impl AsRef<Path>, trace: &DeviceTrace) -> Result<()> {
    write_file(path.as_ref(), &format_trace(trace))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_trace(text: &str, path: &Path, expected: Columns) -> Result<DeviceTrace> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| err(1, "header must start with '#'".into()))?;

    let (mut device_id, mut rate, mut columns) = (None, None, None);
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(1, format!("malformed header field {field:?}")))?;
        match key {
            "device_id" => device_id = Some(value.to_string()),
            "rate_hz" => {
                rate = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| err(1, format!("bad rate {value:?}")))?,
                )
            }
            "columns" => columns = Some(value.split(',').map(str::to_string).collect::<Vec<_>>()),
            other => return Err(err(1, format!("unknown header key {other:?}"))),
        }
    }
    let device_id = device_id.ok_or_else(|| err(1, "missing device_id".into()))?;
    let rate = rate.ok_or_else(|| err(1, "missing rate_hz".into()))?;
    let columns = columns.ok_or_else(|| err(1, "missing columns".into()))?;

    let has_reference = if columns.as_slice() == IMU_COLUMNS {
        false
    } else if columns.len() == 11 && columns[..10] == IMU_COLUMNS && columns[10] == REFERENCE_COLUMN {
        true
    } else {
        return Err(err(1, format!("unexpected column list {}", columns.join(","))));
    };
    match (expected, has_reference) {
        (Columns::Imu, true) => return Err(err(1, "unexpected reference heading column".into())),
        (Columns::ImuWithReference, false) => return Err(err(1, "missing reference heading column".into())),
        _ => {}
    }

    let width = columns.len();
    let mut samples = Vec::new();
    let mut reference = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(err(lineno, format!("expected {width} fields, found {}", fields.len())));
        }
        let mut values = [0.0; 11];
        for (k, f) in fields.iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("malformed number {f:?} in column {}", columns[k])))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite field in column {}", columns[k])));
            }
            values[k] = v;
        }
        let t = values[0];
        if let Some(prev) = samples.last().map(|s: &ImuSample| s.t) {
            if t <= prev {
                let what = if t == prev { "duplicate" } else { "non-monotonic" };
                return Err(err(lineno, format!("{what} timestamp {t}")));
            }
        }
        let v3 = |i: usize| Vector3::new(values[i], values[i + 1], values[i + 2]);
        let sample = ImuSample::new(t, v3(1), v3(4), v3(7)).map_err(|e| err(lineno, e.to_string()))?;
        samples.push(sample);
        if has_reference {
            reference.push(Angle::from_degrees(values[10]));
        }
    }
    let mut trace = DeviceTrace::new(device_id, rate, samples).map_err(|e| err(1, e.to_string()))?;
    if has_reference {
        trace = trace.with_reference(reference)?;
    }
    Ok(trace)
}

pub fn format_trace(trace: &DeviceTrace) -> String {
    let mut out = String::with_capacity(trace.len() * 120 + 128);
    let mut columns = IMU_COLUMNS.join(",");
    if trace.reference.is_some() {
        columns.push(',');
        columns.push_str(REFERENCE_COLUMN);
    }
    let _ = writeln!(
        out,
        "# device_id={} rate_hz={} columns={}",
        trace.device_id, trace.rate_hz, columns
    );
    for (i, s) in trace.samples.iter().enumerate() {
        let _ = write!(out, "{:.6}", s.t);
        for v in s.acc.iter().chain(s.gyro.iter()).chain(s.mag.iter()) {
            let _ = write!(out, ",{}", fmt9(*v));
        }
        if let Some(r) = &trace.reference {
            let _ = write!(out, ",{:.6}", r[i].degrees());
        }
        out.push('\n');
    }
    out
}

/// Nine-decimal formatting without a negative zero.
fn fmt9(v: f64) -> String {
    let s = format!("{v:.9}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}
