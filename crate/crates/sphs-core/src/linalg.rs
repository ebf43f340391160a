//! Just enough dense linear algebra for this crate: row-major mat-vec /
//! mat-mul helpers, Cholesky, and a cyclic Jacobi symmetric eigensolver.
//! Sizes here are small (state dimensions and snapshot counts), so plain
//! O(n³) routines without pivoting tricks are entirely adequate — and being
//! dependency-free keeps the crate `no_std`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Jacobi sweeps failed to drive the off-diagonal norm down (does not
    /// happen for finite symmetric input; kept as a guard).
    NoConvergence,
    /// Input dimensions are inconsistent with the stated shape.
    Shape,
}

impl core::fmt::Display for LinalgError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LinalgError::NoConvergence => write!(f, "jacobi eigensolver did not converge"),
            LinalgError::Shape => write!(f, "matrix shape mismatch"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LinalgError {}

/// `out = A x` for row-major `A` (`rows × cols`).
pub fn mat_vec(a: &[f64], x: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        out[r] = acc;
    }
}

/// `out = Aᵀ x` for row-major `A` (`rows × cols`), so `out` has length `cols`.
pub fn mat_t_vec(a: &[f64], x: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), rows);
    debug_assert_eq!(out.len(), cols);
    out.fill(0.0);
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        let xr = x[r];
        for c in 0..cols {
            out[c] += row[c] * xr;
        }
    }
}

/// Row-major `A (m×k) · B (k×n)`.
pub fn mat_mul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += ail * brow[j];
            }
        }
    }
    out
}

/// Row-major transpose.
pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Cholesky factor `L` (lower, row-major) of a symmetric matrix, or `None`
/// if a pivot is non-positive (i.e. the matrix is not positive definite).
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = math::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Eigendecomposition of a symmetric matrix.
pub struct SymEig {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Row-major `n × n`; column `j` is the eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
}

/// Cyclic Jacobi eigensolver for symmetric `A`.  Sweeps until the
/// off-diagonal Frobenius norm falls below `1e-12` of the matrix norm.
pub fn jacobi_eigh(a: &[f64], n: usize) -> Result<SymEig, LinalgError> {
    if a.len() != n * n {
        return Err(LinalgError::Shape);
    }
    if n == 0 {
        return Ok(SymEig { values: Vec::new(), vectors: Vec::new() });
    }
    let mut m = a.to_vec();
    // Symmetrize defensively; callers pass symmetric data up to roundoff.
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let fro = math::sqrt(m.iter().map(|x| x * x).sum::<f64>());
    let tol = 1e-12 * fro.max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * m[i * n + j] * m[i * n + j];
            }
        }
        if math::sqrt(off) <= tol {
            return Ok(sorted_eig(m, v, n));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + math::sqrt(1.0 + tau * tau))
                } else {
                    -1.0 / (-tau + math::sqrt(1.0 + tau * tau))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;

                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(LinalgError::NoConvergence)
}

fn sorted_eig(m: Vec<f64>, v: Vec<f64>, n: usize) -> SymEig {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j].partial_cmp(&m[i * n + i]).unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        values.push(m[src * n + src]);
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    SymEig { values, vectors }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &[f64], n: usize) -> Result<f64, LinalgError> {
    let eig = jacobi_eigh(a, n)?;
    Ok(eig.values.last().copied().unwrap_or(0.0))
}
