//! Levenberg-Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LeastSquaresProblem {
    fn residuals(&self, params: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, params: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmSettings {
    pub max_iterations: usize,
    /// Converged once `max |J^T r|` falls below this.
    pub gradient_tolerance: f64,
    pub initial_lambda: f64,
    /// Multiplier applied to λ after a rejected step; accepted steps divide by it.
    pub lambda_factor: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            initial_lambda: 1e-3,
            lambda_factor: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmReport {
    pub params: DVector<f64>,
    pub iterations: usize,
    /// Root-mean-square residual at the solution.
    pub rms: f64,
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

fn rms(r: &DVector<f64>) -> f64 {
    if r.is_empty() {
        0.0
    } else {
        (r.norm_squared() / r.len() as f64).sqrt()
    }
}

pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    initial: DVector<f64>,
    settings: &LmSettings,
) -> Result<LmReport> {
    let mut params = initial;
    let mut r = problem.residuals(&params);
    let mut current = cost(&r);
    let mut lambda = settings.initial_lambda;

    for iteration in 0..settings.max_iterations {
        let j = problem.jacobian(&params);
        let jt = j.transpose();
        let gradient = &jt * &r;
        if gradient.amax() < settings.gradient_tolerance || current == 0.0 {
            return Ok(LmReport {
                params,
                iterations: iteration,
                rms: rms(&r),
            });
        }
        let jtj = &jt * &j;

        // inner loop: raise λ until a step reduces the cost
        loop {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&gradient)),
                None => {
                    lambda *= settings.lambda_factor;
                    if lambda > 1e16 {
                        break;
                    }
                    continue;
                }
            };
            let candidate = &params + &step;
            let r_new = problem.residuals(&candidate);
            let c_new = cost(&r_new);
            if c_new.is_finite() && c_new < current {
                let small_step = step.norm() <= 1e-15 * (params.norm() + 1e-15);
                params = candidate;
                r = r_new;
                current = c_new;
                lambda = (lambda / settings.lambda_factor).max(1e-15);
                if small_step {
                    return Ok(LmReport {
                        params,
                        iterations: iteration + 1,
                        rms: rms(&r),
                    });
                }
                break;
            }
            lambda *= settings.lambda_factor;
            if lambda > 1e16 {
                // no descent direction left at working precision
                return Ok(LmReport {
                    params,
                    iterations: iteration + 1,
                    rms: rms(&r),
                });
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iterations,
        rms: rms(&r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as residuals (1 - x, 10 (y - x²)).
    struct Rosenbrock;

    impl LeastSquaresProblem for Rosenbrock {
        fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![1.0 - p[0], 10.0 * (p[1] - p[0] * p[0])])
        }
        fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * p[0], 10.0])
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let rep = levenberg_marquardt(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &LmSettings::default()).unwrap();
        assert!((rep.params[0] - 1.0).abs() < 1e-9);
        assert!((rep.params[1] - 1.0).abs() < 1e-9);
        assert!(rep.rms < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let settings = LmSettings {
            max_iterations: 2,
            ..LmSettings::default()
        };
        let e = levenberg_marquardt(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &settings).unwrap_err();
        assert!(matches!(e, Error::NoConvergence { iterations: 2, .. }));
    }
}
