//! Accelerometer model `a' = L · S · (a - b)` with unit lower-triangular misalignment
//! `L`, diagonal scale factors `S` and bias `b`, fitted on static clips so that every
//! calibrated clip mean has norm `g`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::lm::{levenberg_marquardt, LeastSquaresProblem, LmSettings};
use crate::datamodel::{ImuSample, GRAVITY};
use crate::error::{Error, Result};

/// Identifiability needs at least as many distinct orientations as parameters.
pub const MIN_ORIENTATIONS: usize = 9;
/// Clip means closer than this angle count as the same orientation.
const DISTINCT_ORIENTATION_RAD: f64 = 0.1745; // 10°
/// Per-axis variance above which a clip is not static, (m/s²)².
const STATIC_VARIANCE: f64 = 0.1;

pub const RESIDUAL_DEFINITION: &str = "gravity-norm |a'| - g over clip means";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccelCalib {
    pub alpha_yx: f64,
    pub alpha_zx: f64,
    pub alpha_zy: f64,
    pub scale: Vector3<f64>,
    pub bias: Vector3<f64>,
}

impl Default for AccelCalib {
    fn default() -> Self {
        AccelCalib::IDENTITY
    }
}

impl AccelCalib {
    pub const IDENTITY: AccelCalib = AccelCalib {
        alpha_yx: 0.0,
        alpha_zx: 0.0,
        alpha_zy: 0.0,
        scale: Vector3::new(1.0, 1.0, 1.0),
        bias: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn misalignment(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0, 0.0, 0.0, //
            self.alpha_yx, 1.0, 0.0, //
            self.alpha_zx, self.alpha_zy, 1.0,
        )
    }

    /// The combined matrix `L · S`.
    pub fn matrix(&self) -> Matrix3<f64> {
        self.misalignment() * Matrix3::from_diagonal(&self.scale)
    }

    fn to_params(self) -> DVector<f64> {
        DVector::from_vec(vec![
            self.alpha_yx,
            self.alpha_zx,
            self.alpha_zy,
            self.scale.x,
            self.scale.y,
            self.scale.z,
            self.bias.x,
            self.bias.y,
            self.bias.z,
        ])
    }

    fn from_params(p: &DVector<f64>) -> Self {
        AccelCalib {
            alpha_yx: p[0],
            alpha_zx: p[1],
            alpha_zy: p[2],
            scale: Vector3::new(p[3], p[4], p[5]),
            bias: Vector3::new(p[6], p[7], p[8]),
        }
    }

    /// Parameters in the order `α_yx α_zx α_zy SF_x SF_y SF_z b_x b_y b_z`.
    pub fn as_array(&self) -> [f64; 9] {
        let p = self.to_params();
        std::array::from_fn(|i| p[i])
    }

    pub fn check_bounds(&self) -> Result<()> {
        if self.scale.iter().any(|s| !(0.5 < *s && *s < 2.0)) {
            return Err(Error::CalibrationBounds(format!("scale factors {:?} outside (0.5, 2)", self.scale)));
        }
        if [self.alpha_yx, self.alpha_zx, self.alpha_zy].iter().any(|a| a.abs() >= 0.2) {
            return Err(Error::CalibrationBounds("misalignment magnitude >= 0.2".into()));
        }
        if self.bias.iter().any(|b| b.abs() >= 2.0) {
            return Err(Error::CalibrationBounds(format!("bias {:?} exceeds 2 m/s^2", self.bias)));
        }
        Ok(())
    }
}

/// Forward model: raw reading to calibrated specific force.
pub fn apply_accel_calibration(a: &Vector3<f64>, c: &AccelCalib) -> Vector3<f64> {
    c.matrix() * (a - c.bias)
}

/// Inverse model: calibrated specific force to the raw reading a miscalibrated sensor
/// would report.
pub fn invert_accel_calibration(a_true: &Vector3<f64>, c: &AccelCalib) -> Result<Vector3<f64>> {
    if c.scale.iter().any(|s| !(s.abs() > 1e-12) || !s.is_finite()) {
        return Err(Error::InvalidInput("singular scale factor".into()));
    }
    // L is unit lower-triangular so only S can make the product singular
    let inv = c
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular scale factor".into()))?;
    Ok(inv * a_true + c.bias)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccelFit {
    pub calib: AccelCalib,
    pub rms_residual: f64,
    pub iterations: usize,
    pub orientations: usize,
}

struct GravityNorm<'a> {
    means: &'a [Vector3<f64>],
}

impl LeastSquaresProblem for GravityNorm<'_> {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let c = AccelCalib::from_params(p);
        let m = c.matrix();
        DVector::from_iterator(self.means.len(), self.means.iter().map(|a| (m * (a - c.bias)).norm() - GRAVITY))
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let c = AccelCalib::from_params(p);
        let m = c.matrix();
        let mut j = DMatrix::zeros(self.means.len(), 9);
        for (row, a) in self.means.iter().enumerate() {
            let d = a - c.bias;
            let out = m * d;
            let n = out.norm();
            if n == 0.0 {
                continue;
            }
            let u = out / n;
            let (s, dx, dy, dz) = (c.scale, d.x, d.y, d.z);
            let partials = [
                Vector3::new(0.0, s.x * dx, 0.0),
                Vector3::new(0.0, 0.0, s.x * dx),
                Vector3::new(0.0, 0.0, s.y * dy),
                Vector3::new(dx, c.alpha_yx * dx, c.alpha_zx * dx),
                Vector3::new(0.0, dy, c.alpha_zy * dy),
                Vector3::new(0.0, 0.0, dz),
                -m.column(0).into_owned(),
                -m.column(1).into_owned(),
                -m.column(2).into_owned(),
            ];
            for (col, dv) in partials.iter().enumerate() {
                j[(row, col)] = u.dot(dv);
            }
        }
        j
    }
}

fn distinct_orientations(means: &[Vector3<f64>]) -> usize {
    let mut reps: Vec<Vector3<f64>> = Vec::new();
    for m in means {
        let u = m.normalize();
        if reps.iter().all(|r| r.dot(&u).clamp(-1.0, 1.0).acos() > DISTINCT_ORIENTATION_RAD) {
            reps.push(u);
        }
    }
    reps.len()
}

/// Fits the nine model parameters from groups of static samples.
pub fn fit_accel_calibration(clips: &[Vec<ImuSample>]) -> Result<AccelFit> {
    fit_accel_calibration_with(clips, &LmSettings::default())
}

pub fn fit_accel_calibration_with(clips: &[Vec<ImuSample>], settings: &LmSettings) -> Result<AccelFit> {
    let mut means = Vec::with_capacity(clips.len());
    for (k, clip) in clips.iter().enumerate() {
        if clip.is_empty() {
            return Err(Error::InvalidInput(format!("clip {k} is empty")));
        }
        let n = clip.len() as f64;
        let mean = clip.iter().fold(Vector3::zeros(), |acc, s| acc + s.acc) / n;
        let var = clip
            .iter()
            .fold(Vector3::zeros(), |acc, s| acc + (s.acc - mean).component_mul(&(s.acc - mean)))
            / n;
        if var.max() > STATIC_VARIANCE {
            return Err(Error::InvalidInput(format!(
                "clip {k} is not static (variance {:.3} (m/s^2)^2)",
                var.max()
            )));
        }
        means.push(mean);
    }
    let orientations = distinct_orientations(&means);
    if orientations < MIN_ORIENTATIONS {
        return Err(Error::InsufficientOrientations {
            got: orientations,
            need: MIN_ORIENTATIONS,
        });
    }
    let problem = GravityNorm { means: &means };
    let report = levenberg_marquardt(&problem, AccelCalib::IDENTITY.to_params(), settings)?;
    let calib = AccelCalib::from_params(&report.params);
    calib.check_bounds()?;
    Ok(AccelFit {
        calib,
        rms_residual: report.rms,
        iterations: report.iterations,
        orientations,
    })
}

/// Splits a recording of successive static poses into clips: a new clip starts when a
/// reading departs from the running clip mean by more than `jump` m/s². Clips shorter
/// than `min_len` samples are dropped.
pub fn segment_static_clips(samples: &[ImuSample], jump: f64, min_len: usize) -> Vec<Vec<ImuSample>> {
    let mut clips = Vec::new();
    let mut current: Vec<ImuSample> = Vec::new();
    let mut sum = Vector3::zeros();
    for s in samples {
        if !current.is_empty() {
            let mean = sum / current.len() as f64;
            if (s.acc - mean).norm() > jump {
                if current.len() >= min_len {
                    clips.push(std::mem::take(&mut current));
                } else {
                    current.clear();
                }
                sum = Vector3::zeros();
            }
        }
        current.push(*s);
        sum += s.acc;
    }
    if current.len() >= min_len {
        clips.push(current);
    }
    clips
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn calib(sf: [f64; 3], b: [f64; 3], a: [f64; 3]) -> AccelCalib {
        AccelCalib {
            alpha_yx: a[0],
            alpha_zx: a[1],
            alpha_zy: a[2],
            scale: Vector3::from(sf),
            bias: Vector3::from(b),
        }
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.2 && n <= 1.0 {
                return v / n;
            }
        }
    }

    fn clips_for(c: &AccelCalib, rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<ImuSample>> {
        (0..count)
            .map(|_| {
                let truth = random_unit(rng) * GRAVITY;
                let raw = invert_accel_calibration(&truth, c).unwrap();
                vec![ImuSample::new(0.0, raw, Vector3::zeros(), Vector3::x()).unwrap()]
            })
            .collect()
    }

    #[test]
    fn apply_examples() {
        let id = AccelCalib::IDENTITY;
        let a = Vector3::new(0.0, 0.0, 9.81);
        assert_eq!(apply_accel_calibration(&a, &id), a);
        let c = calib([1.0; 3], [0.1, 0.0, 0.0], [0.0; 3]);
        let out = apply_accel_calibration(&Vector3::new(0.1, 0.0, 9.81), &c);
        assert!((out - Vector3::new(0.0, 0.0, 9.81)).norm() < 1e-15);
        let c = calib([2.0, 1.0, 1.0], [0.0; 3], [0.0; 3]);
        assert_eq!(apply_accel_calibration(&Vector3::new(1.0, 0.0, 0.0), &c), Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn inverse_examples() {
        let a = Vector3::new(0.3, -0.2, 9.7);
        assert_eq!(invert_accel_calibration(&a, &AccelCalib::IDENTITY).unwrap(), a);
        let c = calib([1.0; 3], [0.1, 0.0, 0.0], [0.0; 3]);
        let raw = invert_accel_calibration(&a, &c).unwrap();
        assert!((raw - (a + Vector3::new(0.1, 0.0, 0.0))).norm() < 1e-15);
        assert!(invert_accel_calibration(&a, &calib([0.0, 1.0, 1.0], [0.0; 3], [0.0; 3])).is_err());
    }

    #[test]
    fn inverse_then_forward_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let c = calib(
                [rng.random_range(0.8..1.2), rng.random_range(0.8..1.2), rng.random_range(0.8..1.2)],
                [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
                [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)],
            );
            let a = random_unit(&mut rng) * GRAVITY;
            let back = apply_accel_calibration(&invert_accel_calibration(&a, &c).unwrap(), &c);
            assert!((back - a).norm() < 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let means: Vec<Vector3<f64>> = (0..12).map(|_| random_unit(&mut rng) * 9.7).collect();
        let problem = GravityNorm { means: &means };
        let p = calib([1.02, 0.97, 1.01], [0.05, -0.03, 0.02], [0.01, -0.02, 0.015]).to_params();
        let j = problem.jacobian(&p);
        let h = 1e-6;
        for col in 0..9 {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[col] += h;
            minus[col] -= h;
            let fd = (problem.residuals(&plus) - problem.residuals(&minus)) / (2.0 * h);
            for row in 0..means.len() {
                assert!((fd[row] - j[(row, col)]).abs() < 1e-6, "row {row} col {col}");
            }
        }
    }

    #[test]
    fn zero_residual_clips_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clips = clips_for(&AccelCalib::IDENTITY, &mut rng, 12);
        let fit = fit_accel_calibration(&clips).unwrap();
        for (got, want) in fit.calib.as_array().iter().zip(AccelCalib::IDENTITY.as_array()) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn recovers_injected_parameters() {
        let truth = calib([1.02, 0.98, 1.01], [0.05, -0.03, 0.02], [0.01, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fit = fit_accel_calibration(&clips_for(&truth, &mut rng, 12)).unwrap();
        for (got, want) in fit.calib.as_array().iter().zip(truth.as_array()) {
            let scale = want.abs().max(1e-2);
            assert!((got - want).abs() / scale < 1e-3, "{got} vs {want}");
        }
        assert!(fit.rms_residual < 1e-6);
    }

    #[test]
    fn too_few_orientations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut clips = clips_for(&AccelCalib::IDENTITY, &mut rng, 3);
        // repeats of the same poses do not add orientations
        clips.extend(clips.clone());
        clips.extend(clips.clone());
        let e = fit_accel_calibration(&clips).unwrap_err();
        assert!(matches!(e, Error::InsufficientOrientations { got: 3, .. }), "{e}");
    }

    #[test]
    fn non_static_clip_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut clips = clips_for(&AccelCalib::IDENTITY, &mut rng, 12);
        clips[0].push(ImuSample::new(0.1, Vector3::new(5.0, 0.0, 0.0), Vector3::zeros(), Vector3::x()).unwrap());
        assert!(fit_accel_calibration(&clips).is_err());
    }

    #[test]
    fn segmentation_splits_on_pose_changes() {
        let mut samples = Vec::new();
        let poses = [Vector3::new(0.0, 0.0, 9.8), Vector3::new(9.8, 0.0, 0.0), Vector3::new(0.0, -9.8, 0.0)];
        let mut t = 0.0;
        for p in poses {
            for _ in 0..20 {
                samples.push(ImuSample::new(t, p, Vector3::zeros(), Vector3::x()).unwrap());
                t += 0.05;
            }
        }
        let clips = segment_static_clips(&samples, 1.0, 5);
        assert_eq!(clips.len(), 3);
        assert!(clips.iter().all(|c| c.len() == 20));
    }
}
