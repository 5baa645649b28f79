//! Largest-eigenvalue routines for symmetric matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Matrices up to this order go straight to the dense eigensolver.
pub const DENSE_LIMIT: usize = 64;

#[derive(Debug, Clone)]
pub struct PowerIteration {
    pub value: f64,
    pub vector: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest eigenvalue of a symmetric matrix. Zero for an empty matrix.
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    if n <= DENSE_LIMIT {
        return dense_lambda_max(m);
    }
    let p = power_iteration(m, 1e-10, 10_000);
    if p.converged {
        p.value
    } else {
        dense_lambda_max(m)
    }
}

pub fn dense_lambda_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Power iteration on `M + sI`, with `s` the Gershgorin radius so the shifted spectrum is
/// nonnegative. Stops when the Rayleigh quotient changes by at most `rel_tol` relative.
pub fn power_iteration(m: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> PowerIteration {
    let n = m.nrows();
    let shift = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut value = v.dot(&(m * &v));
    for it in 1..=max_iter {
        let mut w = m * &v + &v * shift;
        let norm = w.norm();
        if norm == 0.0 {
            return PowerIteration {
                value: 0.0,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
        w /= norm;
        let next = w.dot(&(m * &w));
        let done = (next - value).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE);
        v = w;
        value = next;
        if done {
            return PowerIteration {
                value,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
    }
    PowerIteration {
        value,
        vector: v,
        iterations: max_iter,
        converged: false,
    }
}
