//! Jacobi-preconditioned conjugate gradients for symmetric positive definite
//! operators given as matrix-free closures.

use alloc::vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||` in the Euclidean norm.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` starting from the contents of `x`.
///
/// `diag` is the diagonal of `A` (all entries positive). A zero right-hand
/// side yields `x = 0` without iterating. Non-positive curvature `p.Ap <= 0`
/// is reported as [`Error::NotPositiveDefinite`].
pub fn solve(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    if diag.len() != n || x.len() != n {
        return Err(Error::GridMismatch);
    }
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            iteration: 0,
            curvature: diag[i],
        });
    }
    let b_norm = sqrt(dot(b, b));
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = sqrt(dot(&r, &r)) / b_norm;
    if res <= tol {
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: res,
        });
    }
    let mut z: alloc::vec::Vec<f64> = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::NotPositiveDefinite {
                iteration: it,
                curvature,
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = sqrt(dot(&r, &r)) / b_norm;
        if res <= tol {
            return Ok(CgOutcome {
                iterations: it,
                relative_residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn tridiag(x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            out[i] = 3.0 * x[i] - l - r;
        }
    }

    #[test]
    fn solves_spd_tridiagonal() {
        let n = 50;
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        tridiag(&exact, &mut b);
        let mut x = vec![0.0; n];
        let out = solve(tridiag, &vec![3.0; n], &b, &mut x, 1e-14, 200).unwrap();
        assert!(out.relative_residual <= 1e-14);
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![1.0; 5];
        let out = solve(tridiag, &[3.0; 5], &[0.0; 5], &mut x, 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn detects_indefinite_operator() {
        let neg = |x: &[f64], out: &mut [f64]| {
            for i in 0..x.len() {
                out[i] = -x[i];
            }
        };
        let mut x = vec![0.0; 3];
        let err = solve(neg, &[1.0; 3], &[1.0, 2.0, 3.0], &mut x, 1e-12, 10).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn reports_non_convergence() {
        let mut x = vec![0.0; 50];
        let b: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let err = solve(tridiag, &vec![3.0; 50], &b, &mut x, 1e-14, 2).unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 2, .. }));
    }
}
