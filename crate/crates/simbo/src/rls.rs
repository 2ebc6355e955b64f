//! Recursive least squares identification of the internal-model denominator
//! from the decision trajectory, with exponential forgetting and
//! persistency-of-excitation diagnostics.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// The l1 identification residual, computed with the estimate held *before*
/// the update ingests the sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub e: f64,
}

/// Streaming least-squares state: coefficient estimate, covariance, and the
/// rolling window of past decisions that regressors are built from.
#[derive(Clone, Debug)]
pub struct RlsState {
    d_hat: DVector<f64>,
    p: DMatrix<f64>,
    alpha: f64,
    beta: f64,
    m: usize,
    n: usize,
    window: VecDeque<DVector<f64>>,
    updates: usize,
    p_resets: usize,
}

impl RlsState {
    /// Uninformative start: d_hat = 0, P = beta * I, empty window.
    pub fn init(m: usize, n: usize, beta: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidForgettingFactor(alpha));
        }
        Self::with_alpha_unchecked(m, n, beta, alpha)
    }

    /// Variant with alpha = 1 (no forgetting), provided for comparing the
    /// recursion against closed-form batch least squares.
    pub fn without_forgetting(m: usize, n: usize, beta: f64) -> Result<Self> {
        Self::with_alpha_unchecked(m, n, beta, 1.0)
    }

    fn with_alpha_unchecked(m: usize, n: usize, beta: f64, alpha: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidDimension("rls needs m >= 1 and n >= 1".into()));
        }
        if beta <= 0.0 {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        Ok(Self {
            d_hat: DVector::zeros(m),
            p: DMatrix::identity(m, m) * beta,
            alpha,
            beta,
            m,
            n,
            window: VecDeque::with_capacity(m + 1),
            updates: 0,
            p_resets: 0,
        })
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.d_hat
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn update_count(&self) -> usize {
        self.updates
    }

    /// Number of times P lost positive definiteness and was re-seeded.
    pub fn p_resets(&self) -> usize {
        self.p_resets
    }

    /// Record a new decision in the rolling window (call after the sample has
    /// been used as the observation of the current step).
    pub fn push(&mut self, x: &DVector<f64>) {
        assert_eq!(x.len(), self.n, "window sample dimension mismatch");
        self.window.push_front(x.clone());
        self.window.truncate(self.m);
    }

    /// True once the window holds m past decisions.
    pub fn warmed_up(&self) -> bool {
        self.window.len() == self.m
    }

    /// Past decisions, most recent first.
    pub fn window(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.window.iter()
    }

    /// Regressor built from the current window, or None before warm-up.
    pub fn regressor_now(&self) -> Option<DMatrix<f64>> {
        if !self.warmed_up() {
            return None;
        }
        let window: Vec<DVector<f64>> = self.window.iter().cloned().collect();
        Some(regressor(&window, self.m))
    }

    /// One RLS step with observation y and regressor phi. The returned
    /// residual uses the pre-update estimate. Loss of positive definiteness
    /// in P re-seeds it at beta * I and bumps `p_resets`.
    pub fn update(&mut self, y: &DVector<f64>, phi: &DMatrix<f64>) -> Residual {
        assert_eq!(y.len(), self.n, "observation dimension mismatch");
        assert_eq!(phi.nrows(), self.m, "regressor row count mismatch");
        assert_eq!(phi.ncols(), self.n, "regressor column count mismatch");

        let innovation = y - phi.transpose() * &self.d_hat;
        let residual = Residual { e: innovation.iter().map(|v| v.abs()).sum() };

        let inner = DMatrix::identity(self.n, self.n) * self.alpha
            + phi.transpose() * &self.p * phi;
        let chol = match Cholesky::new(inner) {
            Some(c) => c,
            None => {
                // P has drifted out of the cone; re-seed and retry
                self.p = DMatrix::identity(self.m, self.m) * self.beta;
                self.p_resets += 1;
                let inner = DMatrix::identity(self.n, self.n) * self.alpha
                    + phi.transpose() * &self.p * phi;
                Cholesky::new(inner).expect("alpha I + phi' (beta I) phi is positive definite")
            }
        };
        let p_phi = &self.p * phi;
        // L = P phi (alpha I + phi' P phi)^{-1}
        let gain = chol.solve(&p_phi.transpose()).transpose();
        self.d_hat += &gain * innovation;
        let mut p_next = (&self.p - gain * p_phi.transpose()) / self.alpha;
        p_next = (&p_next + p_next.transpose()) * 0.5;
        if Cholesky::new(p_next.clone()).is_none() {
            self.p = DMatrix::identity(self.m, self.m) * self.beta;
            self.p_resets += 1;
        } else {
            self.p = p_next;
        }
        self.updates += 1;
        residual
    }

    /// Full re-initialization of the estimator (d_hat = 0, P = beta I),
    /// keeping the rolling window of decisions.
    pub fn reset_estimator(&mut self) {
        self.d_hat.fill(0.0);
        self.p = DMatrix::identity(self.m, self.m) * self.beta;
    }
}

/// Regressor of the order-m recurrence: row i of the m x n matrix is
/// -x_{k-m+i}', so that phi' d reproduces x_k for noiseless data. `window`
/// holds the last m decisions most recent first.
pub fn regressor(window: &[DVector<f64>], m: usize) -> DMatrix<f64> {
    assert_eq!(window.len(), m, "regressor needs exactly m past decisions");
    assert!(m >= 1);
    let n = window[0].len();
    // window[0] = x_{k-1} lands in the last row, pairing x_{k-m+i} with d_i
    DMatrix::from_fn(m, n, |i, j| -window[m - 1 - i][j])
}

/// l1 residual of an observation against a fixed coefficient vector.
pub fn identification_residual(d: &DVector<f64>, y: &DVector<f64>, phi: &DMatrix<f64>) -> f64 {
    (y - phi.transpose() * d).iter().map(|v| v.abs()).sum()
}

/// Persistency-of-excitation test of order m: full row rank of the depth-m
/// Hankel matrix built on a window of `h_len` samples, judged by singular
/// values at a 1e-9 relative threshold.
pub fn pe_order(samples: &[DVector<f64>], m: usize, h_len: usize) -> Result<bool> {
    if h_len < m || m == 0 {
        return Err(Error::InvalidParameter(format!(
            "window length {h_len} must be at least the order {m}"
        )));
    }
    if samples.len() < h_len {
        return Err(Error::InsufficientSamples { needed: h_len, got: samples.len() });
    }
    let n = samples[0].len();
    let cols = h_len - m + 1;
    let hankel = DMatrix::from_fn(m, cols * n, |i, jc| {
        let j = jc / n;
        let c = jc % n;
        samples[j + i][c]
    });
    let svals = hankel.svd(false, false).singular_values;
    let smax = svals.max();
    if smax == 0.0 {
        return Ok(false);
    }
    let rank = svals.iter().filter(|s| **s > 1e-9 * smax).count();
    Ok(rank == m)
}
