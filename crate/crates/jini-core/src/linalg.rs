//! Minimal dense linear algebra for the normal-equation solves inside the
//! fitters. Matrices are row-major `Vec<f64>` slices; sizes stay small
//! (p is at most a few hundred), so a plain Cholesky factorization is all
//! that is needed.

use crate::math::sqrt;
use alloc::vec;
use alloc::vec::Vec;

/// Solves `a x = b` in place for a symmetric positive definite `a`
/// (row-major, `p` x `p`). Both `a` and `b` are overwritten; on success
/// `b` holds the solution. Returns `false` if the factorization hits a
/// non-positive pivot.
pub(crate) fn solve_spd(a: &mut [f64], p: usize, b: &mut [f64]) -> bool {
    debug_assert_eq!(a.len(), p * p);
    debug_assert_eq!(b.len(), p);
    // In-place lower Cholesky.
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = sqrt(d);
        a[j * p + j] = d;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    // Forward substitution L y = b.
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * p + k] * b[k];
        }
        b[i] = s / a[i * p + i];
    }
    // Back substitution L^T x = y.
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in (i + 1)..p {
            s -= a[k * p + i] * b[k];
        }
        b[i] = s / a[i * p + i];
    }
    true
}

/// Solves the ridge-stabilized system `(a + ridge I) x = b`, retrying with
/// a growing ridge if the factorization fails. Returns `None` when even a
/// heavily regularized system cannot be factorized.
pub(crate) fn solve_spd_regularized(a: &[f64], p: usize, b: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let mut scale = 0.0_f64;
    for j in 0..p {
        scale = scale.max(a[j * p + j].abs());
    }
    if scale == 0.0 {
        scale = 1.0;
    }
    let mut extra = 0.0_f64;
    for _ in 0..8 {
        let mut m = a.to_vec();
        let mut x = b.to_vec();
        let lambda = ridge + extra;
        if lambda > 0.0 {
            for j in 0..p {
                m[j * p + j] += lambda;
            }
        }
        if solve_spd(&mut m, p, &mut x) && x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
        extra = if extra == 0.0 { scale * 1e-10 } else { extra * 100.0 };
    }
    None
}

/// `x^T v` over matching slices.
#[inline]
pub(crate) fn dot(x: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in x.iter().zip(v) {
        s += a * b;
    }
    s
}

/// Euclidean norm.
#[inline]
pub(crate) fn l2_norm(x: &[f64]) -> f64 {
    sqrt(dot(x, x))
}

/// Accumulates `sum_i w_i x_i x_i^T` (upper triangle mirrored) and
/// `sum_i g_i x_i` over the rows of a row-major design.
pub(crate) fn weighted_normal_equations(
    x: &[f64],
    n: usize,
    p: usize,
    w: &[f64],
    g: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for i in 0..n {
        let row = &x[i * p..(i + 1) * p];
        let wi = w[i];
        let gi = g[i];
        for j in 0..p {
            rhs[j] += gi * row[j];
            let wj = wi * row[j];
            for k in j..p {
                a[j * p + k] += wj * row[k];
            }
        }
    }
    for j in 0..p {
        for k in (j + 1)..p {
            a[k * p + j] = a[j * p + k];
        }
    }
    (a, rhs)
}
