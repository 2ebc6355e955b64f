//! Time-varying quadratic test problems: seeded Hessian generation, driving
//! signals with known annihilating polynomials, gradients and ground-truth
//! minimizers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::poly;

/// Monic annihilating polynomial z^m + sum_i d_i z^i of a driving signal.
///
/// Holds the low-order coefficients `d_0..d_{m-1}`; this is both the object
/// identified by recursive least squares and the data the companion
/// realization is built from.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalModel {
    d: Vec<f64>,
}

impl InternalModel {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::InvalidDimension(
                "internal model needs order >= 1".into(),
            ));
        }
        Ok(Self { d })
    }

    pub fn order(&self) -> usize {
        self.d.len()
    }

    /// Low-order coefficients `d_0..d_{m-1}`.
    pub fn coefficients(&self) -> &[f64] {
        &self.d
    }

    /// Largest root magnitude of the polynomial.
    pub fn spectral_radius(&self) -> f64 {
        poly::spectral_radius(&self.d)
    }
}

/// The driving-signal families of the experiment suite.
///
/// Every non-switching kind satisfies a finite-order linear recurrence whose
/// monic coefficients [`SignalKind::true_denominator`] returns; `Switch` is
/// piecewise so.
#[derive(Clone, Debug, PartialEq)]
pub enum SignalKind {
    Sine { omega0: f64 },
    Ramp { b_bar: DVector<f64> },
    SineRamp { omega0: f64, b_bar: DVector<f64> },
    SineSquared { omega1: f64 },
    Constant { b_bar: DVector<f64> },
    Switch { first: Box<SignalKind>, second: Box<SignalKind>, k_switch: usize },
}

impl SignalKind {
    /// Signal sample b_k for an n-dimensional problem.
    pub fn value(&self, k: usize, ts: f64, n: usize) -> DVector<f64> {
        let t = k as f64 * ts;
        match self {
            SignalKind::Sine { omega0 } => DVector::from_element(n, (omega0 * t).sin()),
            SignalKind::Ramp { b_bar } => {
                assert_eq!(b_bar.len(), n, "ramp coefficient dimension mismatch");
                b_bar * t
            }
            SignalKind::SineRamp { omega0, b_bar } => {
                assert_eq!(b_bar.len(), n, "ramp coefficient dimension mismatch");
                DVector::from_element(n, (omega0 * t).sin()) + b_bar * t
            }
            SignalKind::SineSquared { omega1 } => {
                DVector::from_element(n, (omega1 * t).sin().powi(2))
            }
            SignalKind::Constant { b_bar } => {
                assert_eq!(b_bar.len(), n, "constant term dimension mismatch");
                b_bar.clone()
            }
            SignalKind::Switch { first, second, k_switch } => {
                if k < *k_switch {
                    first.value(k, ts, n)
                } else {
                    second.value(k, ts, n)
                }
            }
        }
    }

    /// Minimal monic annihilating polynomial of the signal.
    ///
    /// A switching signal has no single time-invariant model and is rejected.
    pub fn true_denominator(&self, ts: f64) -> Result<InternalModel> {
        let d = match self {
            // sin(w k Ts): z^2 - 2cos(w Ts) z + 1
            SignalKind::Sine { omega0 } => vec![1.0, -2.0 * (omega0 * ts).cos()],
            // k Ts b: (z - 1)^2
            SignalKind::Ramp { .. } => vec![1.0, -2.0],
            SignalKind::SineRamp { omega0, .. } => {
                poly::monic_mul(&[1.0, -2.0 * (omega0 * ts).cos()], &[1.0, -2.0])
            }
            // sin^2(w k Ts) = 1/2 - cos(2 w k Ts)/2: (z - 1)(z^2 - 2cos(2 w Ts) z + 1)
            SignalKind::SineSquared { omega1 } => {
                poly::monic_mul(&[-1.0], &[1.0, -2.0 * (2.0 * omega1 * ts).cos()])
            }
            SignalKind::Constant { .. } => vec![-1.0],
            SignalKind::Switch { .. } => return Err(Error::SwitchHasNoModel),
        };
        // defective double roots (ramp) perturb companion eigenvalues by
        // about sqrt(machine eps), hence the loose band
        debug_assert!(poly::spectral_radius(&d) <= 1.0 + 1e-6);
        InternalModel::new(d)
    }

    /// Model order m of the signal; for a switching signal, the larger of the
    /// two segment orders (the identifier must be able to fit either).
    pub fn model_order(&self) -> usize {
        match self {
            SignalKind::Sine { .. } | SignalKind::Ramp { .. } => 2,
            SignalKind::SineRamp { .. } => 4,
            SignalKind::SineSquared { .. } => 3,
            SignalKind::Constant { .. } => 1,
            SignalKind::Switch { first, second, .. } => {
                first.model_order().max(second.model_order())
            }
        }
    }
}

/// An online problem exposing exactly what the algorithms may query: gradient
/// oracle, eigenvalue bounds, and (for benchmarking only) the true minimizer.
pub trait OnlineProblem {
    fn dim(&self) -> usize;
    fn lambda_bounds(&self) -> (f64, f64);
    fn ts(&self) -> f64;
    /// Linear term b_k of the cost at step k.
    fn linear_term(&self, k: usize) -> DVector<f64>;
    /// Gradient of f_k at x.
    fn gradient(&self, x: &DVector<f64>, k: usize) -> DVector<f64>;
    /// Unique minimizer of f_k, i.e. the solution of the stationarity
    /// condition A_k x + b_k = 0.
    fn minimizer(&self, k: usize) -> DVector<f64>;
    fn cost(&self, x: &DVector<f64>, k: usize) -> f64;
}

/// Quadratic cost f_k(x) = x'Ax/2 + x'b_k with a fixed positive-definite
/// Hessian and a time-varying linear term.
#[derive(Clone)]
pub struct QuadraticProblem {
    a: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lambda_min: f64,
    lambda_max: f64,
    signal: SignalKind,
    ts: f64,
    n: usize,
}

impl QuadraticProblem {
    /// Wrap an explicit symmetric positive-definite Hessian.
    pub fn new(
        a: DMatrix<f64>,
        lambda_min: f64,
        lambda_max: f64,
        signal: SignalKind,
        ts: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidDimension("hessian must be square".into()));
        }
        if !(lambda_min > 0.0 && lambda_min <= lambda_max) {
            return Err(Error::InvalidBounds { lambda_min, lambda_max });
        }
        let asym = (&a - a.transpose()).abs().max();
        if asym > 1e-9 * a.abs().max().max(1.0) {
            return Err(Error::InvalidParameter("hessian must be symmetric".into()));
        }
        let chol = Cholesky::new(a.clone())
            .ok_or_else(|| Error::InvalidParameter("hessian must be positive definite".into()))?;
        Ok(Self { a, chol, lambda_min, lambda_max, signal, ts, n })
    }

    /// Seeded random problem whose spectrum contains `lambda_min` and
    /// `lambda_max` exactly, the remaining eigenvalues uniform in between.
    pub fn randomized(
        n: usize,
        lambda_min: f64,
        lambda_max: f64,
        seed: u64,
        signal: SignalKind,
        ts: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("dimension must be >= 1".into()));
        }
        if !(lambda_min > 0.0 && lambda_min <= lambda_max) {
            return Err(Error::InvalidBounds { lambda_min, lambda_max });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_HESSIAN);
        let mut eigs = DVector::zeros(n);
        eigs[0] = lambda_min;
        if n > 1 {
            eigs[n - 1] = lambda_max;
        }
        for i in 1..n.saturating_sub(1) {
            eigs[i] = rng.random_range(lambda_min..=lambda_max);
        }
        let q = random_orthogonal(n, &mut rng);
        let a = &q * DMatrix::from_diagonal(&eigs) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        Self::new(a, lambda_min, lambda_max, signal, ts)
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn signal(&self) -> &SignalKind {
        &self.signal
    }
}

impl OnlineProblem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.n
    }

    fn lambda_bounds(&self) -> (f64, f64) {
        (self.lambda_min, self.lambda_max)
    }

    fn ts(&self) -> f64 {
        self.ts
    }

    fn linear_term(&self, k: usize) -> DVector<f64> {
        self.signal.value(k, self.ts, self.n)
    }

    fn gradient(&self, x: &DVector<f64>, k: usize) -> DVector<f64> {
        assert_eq!(x.len(), self.n, "gradient input dimension mismatch");
        &self.a * x + self.linear_term(k)
    }

    fn minimizer(&self, k: usize) -> DVector<f64> {
        self.chol.solve(&(-self.linear_term(k)))
    }

    fn cost(&self, x: &DVector<f64>, k: usize) -> f64 {
        0.5 * (x.transpose() * &self.a * x)[(0, 0)] + x.dot(&self.linear_term(k))
    }
}

/// Quadratic cost with a sinusoidally perturbed Hessian
/// A_k = V (Lambda + diag(sin(omega0 k Ts) v)) V' and a constant linear term.
#[derive(Clone, Debug)]
pub struct TvHessianProblem {
    basis: DMatrix<f64>,
    base_spectrum: DVector<f64>,
    perturbation: DVector<f64>,
    omega0: f64,
    ts: f64,
    b_bar: DVector<f64>,
    n: usize,
}

impl TvHessianProblem {
    /// Seeded instance with Lambda uniform in [2, 4] and v uniform in
    /// [-1, 1], so every A_k has eigenvalues in [1, 5].
    pub fn randomized(n: usize, seed: u64, omega0: f64, ts: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("dimension must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_TV_HESSIAN);
        let basis = random_orthogonal(n, &mut rng);
        let base_spectrum = DVector::from_fn(n, |_, _| rng.random_range(2.0..=4.0));
        let perturbation = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let b_bar = random_b_bar(n, seed);
        Ok(Self { basis, base_spectrum, perturbation, omega0, ts, b_bar, n })
    }

    pub fn hessian_at(&self, k: usize) -> DMatrix<f64> {
        let s = (self.omega0 * k as f64 * self.ts).sin();
        let diag = &self.base_spectrum + &self.perturbation * s;
        &self.basis * DMatrix::from_diagonal(&diag) * self.basis.transpose()
    }
}

impl OnlineProblem for TvHessianProblem {
    fn dim(&self) -> usize {
        self.n
    }

    fn lambda_bounds(&self) -> (f64, f64) {
        (1.0, 5.0)
    }

    fn ts(&self) -> f64 {
        self.ts
    }

    fn linear_term(&self, _k: usize) -> DVector<f64> {
        self.b_bar.clone()
    }

    fn gradient(&self, x: &DVector<f64>, k: usize) -> DVector<f64> {
        assert_eq!(x.len(), self.n, "gradient input dimension mismatch");
        self.hessian_at(k) * x + &self.b_bar
    }

    fn minimizer(&self, k: usize) -> DVector<f64> {
        // eigenbasis is shared across k, so invert the spectrum directly
        let s = (self.omega0 * k as f64 * self.ts).sin();
        let inv = DVector::from_fn(self.n, |i, _| {
            1.0 / (self.base_spectrum[i] + s * self.perturbation[i])
        });
        -(&self.basis * DMatrix::from_diagonal(&inv) * self.basis.transpose() * &self.b_bar)
    }

    fn cost(&self, x: &DVector<f64>, k: usize) -> f64 {
        0.5 * (x.transpose() * self.hessian_at(k) * x)[(0, 0)] + x.dot(&self.b_bar)
    }
}

const STREAM_HESSIAN: u64 = 0;
const STREAM_B_BAR: u64 = 1;
const STREAM_TV_HESSIAN: u64 = 2;

/// Seeded ramp/constant coefficient vector with entries uniform in
/// [0.5, 1.5], bounded away from zero so every coordinate stays excited.
pub fn random_b_bar(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_B_BAR);
    DVector::from_fn(n, |_, _| rng.random_range(0.5..=1.5))
}

/// Haar-ish random orthogonal matrix: Gaussian entries, QR, signs fixed so
/// the construction is canonical.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let gauss = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = gauss.qr();
    let r_diag: Vec<f64> = (0..n).map(|i| qr.r()[(i, i)]).collect();
    let mut q = qr.q();
    for (j, rj) in r_diag.iter().enumerate() {
        if *rj < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
