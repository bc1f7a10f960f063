use super::{HeadingMethod, HeadingSeries};
use crate::calibration::GyroCalib;
use crate::datamodel::{Attitude, DeviceTrace};
use crate::error::{Error, Result};

/// Relative spacing error tolerated before a trace counts as non-uniform.
const UNIFORM_TOLERANCE: f64 = 1e-6;

/// Strapdown attitude per sample: one exponential-map update per interval using the
/// mean of the two bracketing rate samples.
pub fn gyro_attitudes(trace: &DeviceTrace, initial: Attitude) -> Result<Vec<Attitude>> {
    if !trace.is_uniform(UNIFORM_TOLERANCE * trace.dt()) {
        return Err(Error::InvalidInput(format!(
            "gyro integration needs uniform timestamps at {} Hz",
            trace.rate_hz
        )));
    }
    let mut out = Vec::with_capacity(trace.len());
    let mut q = initial;
    if !trace.is_empty() {
        out.push(q);
    }
    for w in trace.samples.windows(2) {
        let omega = (w[0].gyro + w[1].gyro) * 0.5;
        q = q.integrate(&omega, w[1].t - w[0].t);
        out.push(q);
    }
    Ok(out)
}

/// Gyro heading series: heading of the integrated attitude plus the calibration offset.
pub fn integrate_gyro(trace: &DeviceTrace, initial: Attitude, calib: &GyroCalib) -> Result<HeadingSeries> {
    let psi = gyro_attitudes(trace, initial)?
        .iter()
        .map(|q| calib.apply(q.heading()))
        .collect();
    HeadingSeries::new(HeadingMethod::Gyro, trace.times(), psi)
}
