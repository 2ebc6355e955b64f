//! Online gradient descent: the unstructured baseline and the phase-1 data
//! generator for identification.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Step-size configuration; valid when h < 2 / lambda_max of the target
/// problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OgdConfig {
    pub h: f64,
}

impl OgdConfig {
    /// The step size minimizing the contraction factor over
    /// [lambda_min, lambda_max].
    pub fn optimal(lambda_min: f64, lambda_max: f64) -> Self {
        Self { h: 2.0 / (lambda_min + lambda_max) }
    }

    pub fn validate(&self, lambda_max: f64) -> Result<()> {
        if self.h > 0.0 && self.h < 2.0 / lambda_max {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "step size {} outside (0, {})",
                self.h,
                2.0 / lambda_max
            )))
        }
    }
}

/// One descent step x - h * grad.
pub fn ogd_step(x: &DVector<f64>, grad: &DVector<f64>, h: f64) -> DVector<f64> {
    assert_eq!(x.len(), grad.len(), "ogd_step dimension mismatch");
    assert!(h > 0.0, "step size must be positive");
    x - grad * h
}

/// Per-step contraction factor max{|1 - h lambda_min|, |1 - h lambda_max|},
/// guaranteed in (0, 1) for h in (0, 2/lambda_max).
pub fn contraction_factor(h: f64, lambda_min: f64, lambda_max: f64) -> Result<f64> {
    if !(h > 0.0 && h < 2.0 / lambda_max) {
        return Err(Error::InvalidParameter(format!(
            "step size {} outside (0, {})",
            h,
            2.0 / lambda_max
        )));
    }
    Ok((1.0 - h * lambda_min).abs().max((1.0 - h * lambda_max).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{OnlineProblem, QuadraticProblem, SignalKind};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let x = DVector::from_vec(vec![1.5, -0.5]);
        assert_eq!(ogd_step(&x, &DVector::zeros(2), 0.7), x);
    }

    #[test]
    fn step_arithmetic() {
        let x = DVector::from_element(2, 1.0);
        let g = DVector::from_element(2, 1.0);
        let y = ogd_step(&x, &g, 0.2);
        assert_relative_eq!(y[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(y[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn contraction_factor_values() {
        assert_relative_eq!(contraction_factor(1.0 / 3.0, 1.0, 5.0).unwrap(), 2.0 / 3.0);
        // optimal step: both terms equal
        assert_relative_eq!(
            contraction_factor(2.0 / 6.0, 1.0, 5.0).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            contraction_factor(0.39, 1.0, 5.0).unwrap(),
            0.95,
            epsilon = 1e-12
        );
        assert!(contraction_factor(0.4, 1.0, 5.0).is_err());
        assert!(contraction_factor(-0.1, 1.0, 5.0).is_err());
    }

    #[test]
    fn constant_signal_converges_geometrically() {
        let n = 6;
        let b = crate::problems::random_b_bar(n, 3);
        let p = QuadraticProblem::randomized(
            n,
            1.0,
            5.0,
            3,
            SignalKind::Constant { b_bar: b },
            0.1,
        )
        .unwrap();
        let h = 1.0 / 3.0;
        let rho = contraction_factor(h, 1.0, 5.0).unwrap();
        let xstar = p.minimizer(0);
        let mut x = DVector::zeros(n);
        let e0 = (&x - &xstar).norm();
        for k in 0..120 {
            x = ogd_step(&x, &p.gradient(&x, k), h);
            let bound = rho.powi(k as i32 + 1) * e0 + 1e-9;
            assert!(
                (&x - &xstar).norm() <= bound,
                "k={} error {} > bound {}",
                k,
                (&x - &xstar).norm(),
                bound
            );
        }
    }

    #[test]
    fn per_step_tracking_bound_holds() {
        // short version of the acceptance run
        let p = QuadraticProblem::randomized(8, 1.0, 5.0, 17, SignalKind::Sine { omega0: 1.0 }, 0.1)
            .unwrap();
        let h = 1.0 / 3.0;
        let rho = contraction_factor(h, 1.0, 5.0).unwrap();
        let mut x = DVector::zeros(8);
        for k in 0..200 {
            let err_k = (&x - p.minimizer(k)).norm();
            let drift = (p.minimizer(k) - p.minimizer(k + 1)).norm();
            x = ogd_step(&x, &p.gradient(&x, k), h);
            let err_next = (&x - p.minimizer(k + 1)).norm();
            assert!(err_next <= rho * err_k + drift + 1e-9);
        }
    }
}
