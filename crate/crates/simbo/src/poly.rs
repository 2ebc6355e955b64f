//! Monic-polynomial helpers shared by the signal models and the controller
//! synthesis. A monic polynomial z^m + sum_i d_i z^i is represented by its
//! low-order coefficient slice `d = [d_0, ..., d_{m-1}]`.

use nalgebra::{Complex, DMatrix, Schur};

/// Multiply two monic polynomials given their low-order coefficients.
pub fn monic_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let ma = a.len();
    let mb = b.len();
    // full coefficient vectors, ascending order, leading 1 included
    let mut fa = a.to_vec();
    fa.push(1.0);
    let mut fb = b.to_vec();
    fb.push(1.0);
    let mut prod = vec![0.0; ma + mb + 1];
    for (i, &ca) in fa.iter().enumerate() {
        for (j, &cb) in fb.iter().enumerate() {
            prod[i + j] += ca * cb;
        }
    }
    prod.truncate(ma + mb);
    prod
}

/// Expand prod_i (z - r_i) for real roots.
pub fn monic_from_real_roots(roots: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = Vec::new();
    for &r in roots {
        d = monic_mul(&d, &[-r]);
    }
    d
}

/// Roots of the monic polynomial, computed as companion-matrix eigenvalues.
/// Returns None when the QR iteration fails to converge in a bounded number
/// of sweeps (callers treat that as "assume the worst").
pub fn try_roots(d: &[f64]) -> Option<Vec<Complex<f64>>> {
    let m = d.len();
    if m == 0 {
        return Some(Vec::new());
    }
    if d.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut c = DMatrix::<f64>::zeros(m, m);
    for i in 0..m - 1 {
        c[(i, i + 1)] = 1.0;
    }
    for j in 0..m {
        c[(m - 1, j)] = -d[j];
    }
    Schur::try_new(c, f64::EPSILON, 2000)
        .map(|schur| schur.complex_eigenvalues().iter().copied().collect())
}

/// Roots of the monic polynomial; panics if the eigenvalue iteration fails
/// (does not happen for the well-scaled models this is used on).
pub fn roots(d: &[f64]) -> Vec<Complex<f64>> {
    try_roots(d).expect("companion eigenvalue iteration converges")
}

/// Largest root magnitude of the monic polynomial; +inf when the eigenvalue
/// iteration does not converge, so stability checks reject the candidate.
pub fn spectral_radius(d: &[f64]) -> f64 {
    match try_roots(d) {
        Some(roots) => roots.iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => f64::INFINITY,
    }
}
