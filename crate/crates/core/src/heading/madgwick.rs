use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4, Vector6};

use super::{HeadingMethod, HeadingSeries};
use crate::datamodel::{Attitude, DeviceTrace};
use crate::error::Result;

/// Objective `[R^T e_z - a ; R^T b - m]` of the gradient-descent MARG filter with unit
/// `a`, `m` and earth field `b = (b_x, 0, b_z)`, and its Jacobian in `(w, x, y, z)`.
fn objective(q: &Quaternion<f64>, a: &Vector3<f64>, m: &Vector3<f64>, bx: f64, bz: f64) -> (Vector6<f64>, [[f64; 4]; 6]) {
    let (q0, q1, q2, q3) = (q.w, q.i, q.j, q.k);
    let f = Vector6::new(
        2.0 * (q1 * q3 - q0 * q2) - a.x,
        2.0 * (q0 * q1 + q2 * q3) - a.y,
        2.0 * (0.5 - q1 * q1 - q2 * q2) - a.z,
        2.0 * bx * (0.5 - q2 * q2 - q3 * q3) + 2.0 * bz * (q1 * q3 - q0 * q2) - m.x,
        2.0 * bx * (q1 * q2 - q0 * q3) + 2.0 * bz * (q0 * q1 + q2 * q3) - m.y,
        2.0 * bx * (q0 * q2 + q1 * q3) + 2.0 * bz * (0.5 - q1 * q1 - q2 * q2) - m.z,
    );
    let j = [
        [-2.0 * q2, 2.0 * q3, -2.0 * q0, 2.0 * q1],
        [2.0 * q1, 2.0 * q0, 2.0 * q3, 2.0 * q2],
        [0.0, -4.0 * q1, -4.0 * q2, 0.0],
        [
            -2.0 * bz * q2,
            2.0 * bz * q3,
            -4.0 * bx * q2 - 2.0 * bz * q0,
            -4.0 * bx * q3 + 2.0 * bz * q1,
        ],
        [
            -2.0 * bx * q3 + 2.0 * bz * q1,
            2.0 * bx * q2 + 2.0 * bz * q0,
            2.0 * bx * q1 + 2.0 * bz * q3,
            -2.0 * bx * q0 + 2.0 * bz * q2,
        ],
        [
            2.0 * bx * q2,
            2.0 * bx * q3 - 4.0 * bz * q1,
            2.0 * bx * q0 - 4.0 * bz * q2,
            2.0 * bx * q1,
        ],
    ];
    (f, j)
}

/// One filter update. Readings with zero accelerometer or magnetometer norm fall back
/// to pure gyro propagation.
pub fn madgwick_step(
    q: &UnitQuaternion<f64>,
    gyro: &Vector3<f64>,
    acc: &Vector3<f64>,
    mag: &Vector3<f64>,
    beta: f64,
    dt: f64,
) -> UnitQuaternion<f64> {
    let qv = q.quaternion();
    let mut q_dot = qv * Quaternion::from_imag(*gyro) * 0.5;
    let (an, mn) = (acc.norm(), mag.norm());
    if an > 0.0 && mn > 0.0 {
        let a = acc / an;
        let m = mag / mn;
        // earth field direction seen through the current estimate
        let h = q.transform_vector(&m);
        let bx = h.x.hypot(h.y);
        let bz = h.z;
        let (f, j) = objective(qv, &a, &m, bx, bz);
        let jm = nalgebra::Matrix6x4::from_fn(|r, c| j[r][c]);
        let grad: Vector4<f64> = jm.transpose() * f;
        let gn = grad.norm();
        // below this the normalised step would amplify rounding noise
        if gn > 1e-10 {
            let step = grad / gn;
            q_dot -= Quaternion::new(step[0], step[1], step[2], step[3]) * beta;
        }
    }
    UnitQuaternion::from_quaternion(qv + q_dot * dt)
}

pub fn madgwick_attitudes(trace: &DeviceTrace, beta: f64, initial: Attitude) -> Vec<Attitude> {
    let mut out = Vec::with_capacity(trace.len());
    let mut q = initial.0;
    let mut prev_t: Option<f64> = None;
    for s in &trace.samples {
        if let Some(t0) = prev_t {
            q = madgwick_step(&q, &s.gyro, &s.acc, &s.mag, beta, s.t - t0);
        }
        prev_t = Some(s.t);
        out.push(Attitude(q));
    }
    out
}

/// Madgwick heading series starting from `initial`.
pub fn madgwick_heading(trace: &DeviceTrace, beta: f64, initial: Attitude) -> Result<HeadingSeries> {
    let psi = madgwick_attitudes(trace, beta, initial).iter().map(Attitude::heading).collect();
    HeadingSeries::new(HeadingMethod::Madgwick, trace.times(), psi)
}
