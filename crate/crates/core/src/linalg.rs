//! Small dense-free linear algebra kernels: Jacobi-preconditioned conjugate
//! gradients for matrix-free SPD operators, and Sturm-sequence bisection for
//! symmetric tridiagonal matrices.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for SPD `A` given as `apply(x, out)`.
///
/// `x` holds the initial guess on entry. Iterates until
/// `‖b - A x‖ <= rel_tol ‖b‖`; returns the iteration count.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    inv_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iters: usize,
) -> Result<usize> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(0);
    }
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for k in 0..n {
        r[k] = b[k] - ap[k];
    }
    let target = rel_tol * b_norm;
    if dot(&r, &r).sqrt() <= target {
        return Ok(0);
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NumericalFailure(format!(
                "conjugate gradient hit non-positive curvature {pap:e}"
            )));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dot(&r, &r).sqrt() <= target {
            return Ok(it);
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NumericalFailure(format!(
        "conjugate gradient did not reach relative residual {rel_tol:e} in {max_iters} iterations"
    )))
}

/// Number of eigenvalues strictly below `x` of the symmetric tridiagonal
/// matrix with diagonal `diag` and off-diagonal `off` (`off.len() + 1 ==
/// diag.len()`), by counting negative pivots of `T - x I = L D L^T`.
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for (k, &a) in diag.iter().enumerate() {
        let e2 = if k == 0 { 0.0 } else { off[k - 1] * off[k - 1] };
        d = a - x - if k == 0 { 0.0 } else { e2 / d };
        if d == 0.0 {
            d = -f64::EPSILON * (a.abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by bisection on the
/// Sturm count, bracketed by Gershgorin discs.
pub fn smallest_tridiagonal_eigenvalue(diag: &[f64], off: &[f64]) -> Result<f64> {
    if diag.is_empty() || off.len() + 1 != diag.len() {
        return Err(Error::param(format!(
            "tridiagonal shape mismatch: {} diagonal vs {} off-diagonal entries",
            diag.len(),
            off.len()
        )));
    }
    let radius = |k: usize| {
        let left = if k > 0 { off[k - 1].abs() } else { 0.0 };
        let right = if k < off.len() { off[k].abs() } else { 0.0 };
        left + right
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (k, &a) in diag.iter().enumerate() {
        lo = lo.min(a - radius(k));
        hi = hi.max(a + radius(k));
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NumericalFailure("non-finite tridiagonal entries".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sturm_on_discrete_dirichlet_laplacian() {
        // tridiag(-1, 2, -1) of size n has eigenvalues 2 - 2 cos(k π / (n + 1)).
        let n = 50;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        let exact = |k: usize| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
        let min = smallest_tridiagonal_eigenvalue(&diag, &off).unwrap();
        assert!((min - exact(1)).abs() < 1e-13);
        assert_eq!(sturm_count(&diag, &off, 0.5 * (exact(3) + exact(4))), 3);
        assert_eq!(sturm_count(&diag, &off, 5.0), n);
        assert_eq!(sturm_count(&diag, &off, -1.0), 0);
    }

    #[test]
    fn tridiagonal_shape_checked() {
        assert!(smallest_tridiagonal_eigenvalue(&[1.0, 2.0], &[]).is_err());
        assert_eq!(smallest_tridiagonal_eigenvalue(&[3.0], &[]).unwrap(), 3.0);
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n = 40;
        let apply = |x: &[f64], out: &mut [f64]| {
            for k in 0..n {
                let left = if k > 0 { x[k - 1] } else { 0.0 };
                let right = if k + 1 < n { x[k + 1] } else { 0.0 };
                out[k] = (3.0 + k as f64) * x[k] - left - right;
            }
        };
        let inv_diag: Vec<f64> = (0..n).map(|k| 1.0 / (3.0 + k as f64)).collect();
        let b: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        let mut x = vec![0.0; n];
        pcg(apply, &inv_diag, &b, &mut x, 1e-12, 500).unwrap();
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        assert!(pcg(apply, &inv_diag, &b, &mut vec![0.0; n], 1e-14, 1).is_err());
    }
}
