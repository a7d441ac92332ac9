//! Tiny dense linear algebra for the normal-equation fits in this crate.
//!
//! Everything here is fixed-size (N <= 4) Gaussian elimination with partial
//! pivoting — enough for quadratic and cubic least squares without pulling
//! in a matrix library.

// Dense elimination reads clearest with explicit row/column indices.
#![allow(clippy::needless_range_loop)]

/// Pivots below this fraction of the matrix's largest entry are treated as
/// zero — catches systems that are singular up to rounding, not just exact
/// zeros.
const PIVOT_RTOL: f64 = 1e-12;

/// Solves `a x = b`; `None` when the system is singular.
pub(crate) fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let pivot_tol = scale * PIVOT_RTOL;
    for col in 0..N {
        let pivot_row = (col..N).max_by(|&r, &s| {
            a[r][col]
                .abs()
                .partial_cmp(&a[s][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot_row][col].abs() < pivot_tol || !a[pivot_row][col].is_finite() {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..N {
            let factor = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut acc = b[row];
        for k in (row + 1)..N {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Inverse by solving against each unit vector; `None` when singular.
pub(crate) fn invert<const N: usize>(a: [[f64; N]; N]) -> Option<[[f64; N]; N]> {
    let mut inv = [[0.0; N]; N];
    for j in 0..N {
        let mut e = [0.0; N];
        e[j] = 1.0;
        let col = solve(a, e)?;
        for i in 0..N {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// Matrix 1-norm: maximum absolute column sum.
pub(crate) fn norm1<const N: usize>(a: &[[f64; N]; N]) -> f64 {
    (0..N)
        .map(|j| (0..N).map(|i| a[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number; `None` (treated as unbounded) when singular.
pub(crate) fn condition_1<const N: usize>(a: &[[f64; N]; N]) -> Option<f64> {
    Some(norm1(a) * norm1(&invert(*a)?))
}
