use crate::datamodel::{circular_blend, DeviceTrace, ImuSample};
use crate::error::{Error, Result};

/// Grid points closer than this to a sample reuse the sample verbatim.
const SNAP: f64 = 1e-9;

/// Resamples onto the uniform grid `t0 + k / target_hz` spanning the trace, with linear
/// interpolation of every channel. `target_hz` may not exceed the native rate.
pub fn resample(trace: &DeviceTrace, target_hz: f64) -> Result<DeviceTrace> {
    if !(target_hz > 0.0) || !target_hz.is_finite() {
        return Err(Error::InvalidInput(format!("target rate {target_hz} Hz must be positive")));
    }
    if target_hz > trace.rate_hz * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!(
            "target rate {target_hz} Hz exceeds native rate {} Hz",
            trace.rate_hz
        )));
    }
    let first = trace
        .samples
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot resample an empty trace".into()))?;
    let count = (trace.duration() * target_hz + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = (0..count).map(|k| first.t + k as f64 / target_hz).collect();
    resample_to_times(trace, &times, target_hz)
}

/// Interpolates the trace at arbitrary increasing `times`, holding the end samples
/// outside the covered range. Used to bring a low-rate device onto another device's grid.
pub fn resample_to_times(trace: &DeviceTrace, times: &[f64], rate_hz: f64) -> Result<DeviceTrace> {
    let src = &trace.samples;
    if src.is_empty() {
        return Err(Error::InvalidInput("cannot resample an empty trace".into()));
    }
    let reference = trace.reference.as_deref();
    let mut samples = Vec::with_capacity(times.len());
    let mut ref_out = reference.map(|_| Vec::with_capacity(times.len()));
    let mut j = 0usize;
    for &t in times {
        while j + 1 < src.len() && src[j + 1].t <= t + SNAP {
            j += 1;
        }
        let (sample, heading) = if (src[j].t - t).abs() <= SNAP {
            (src[j], reference.map(|r| r[j]))
        } else if t < src[0].t {
            (ImuSample { t, ..src[0] }, reference.map(|r| r[0]))
        } else if j + 1 >= src.len() {
            (ImuSample { t, ..src[j] }, reference.map(|r| r[j]))
        } else {
            let (a, b) = (&src[j], &src[j + 1]);
            let w = (t - a.t) / (b.t - a.t);
            let lerp = |u: &nalgebra::Vector3<f64>, v: &nalgebra::Vector3<f64>| u + (v - u) * w;
            (
                ImuSample {
                    t,
                    acc: lerp(&a.acc, &b.acc),
                    gyro: lerp(&a.gyro, &b.gyro),
                    mag: lerp(&a.mag, &b.mag),
                },
                reference.map(|r| circular_blend(r[j], r[j + 1], w)),
            )
        };
        samples.push(sample);
        if let (Some(out), Some(h)) = (ref_out.as_mut(), heading) {
            out.push(h);
        }
    }
    let mut out = DeviceTrace::new(trace.device_id.clone(), rate_hz, samples)?;
    if let Some(r) = ref_out {
        out = out.with_reference(r)?;
    }
    Ok(out)
}
