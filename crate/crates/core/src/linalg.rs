//! Small dense kernels for the m x m matrices of the compact representation,
//! and the tall `n x m` products that dominate the cost of a solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TrsError};

/// Relative tolerance under which two eigenvalues are considered equal.
pub const EIG_TIE_RTOL: f64 = 1e-10;

/// `|a - b| <= 1e-10 * max(1, |a|)`.
#[inline]
pub fn eig_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= EIG_TIE_RTOL * a.abs().max(1.0)
}

/// Eigendecomposition of a small symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. Only the upper triangle needs to be symmetric
/// with the lower one; the input is symmetrized first.
pub fn jacobi_eigh(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(TrsError::DimensionMismatch { expected: n, found: a.ncols() });
    }
    let mut w = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = w.norm().max(f64::MIN_POSITIVE);

    let mut converged = n <= 1;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += w[(p, q)] * w[(p, q)];
            }
        }
        if off.sqrt() <= 1e-300_f64.max(f64::EPSILON * 1e-3 * scale) {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(TrsError::EigenFailure(n));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(i, i)].total_cmp(&w[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| w[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok((values, vectors))
}

/// Upper-triangular `R` with `A = R^T R`.
///
/// Fails with the offending pivot index when a pivot drops to or below
/// `min_pivot`.
pub fn cholesky_upper(a: &DMatrix<f64>, min_pivot: f64) -> std::result::Result<DMatrix<f64>, (usize, f64)> {
    let n = a.nrows();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= r[(k, j)] * r[(k, j)];
        }
        let pivot = if d > 0.0 { d.sqrt() } else { 0.0 };
        if !(pivot > min_pivot) {
            return Err((j, pivot));
        }
        r[(j, j)] = pivot;
        for i in j + 1..n {
            let mut v = a[(j, i)];
            for k in 0..j {
                v -= r[(k, j)] * r[(k, i)];
            }
            r[(j, i)] = v / pivot;
        }
    }
    Ok(r)
}

/// Dot product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Rows per block in the tall kernels; keeps a block of every column in cache.
const ROW_BLOCK: usize = 2048;

/// `A^T v` for a tall column-major `A`, streaming `v` once.
pub fn tall_t_times(a: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    tall_t_times_with(a, v, &[]).0
}

/// `A^T v` together with `u^T v` for each `u` in `extra`, in one pass.
pub fn tall_t_times_with(a: &DMatrix<f64>, v: &[f64], extra: &[&[f64]]) -> (DVector<f64>, Vec<f64>) {
    assert_eq!(a.nrows(), v.len());
    assert!(extra.iter().all(|u| u.len() == v.len()));
    let (n, m) = a.shape();
    let mut acc = DVector::zeros(m);
    let mut dots = vec![0.0; extra.len()];
    for start in (0..n).step_by(ROW_BLOCK) {
        let end = (start + ROW_BLOCK).min(n);
        let vb = &v[start..end];
        for j in 0..m {
            acc[j] += dot(&a.as_slice()[j * n + start..j * n + end], vb);
        }
        for (d, u) in dots.iter_mut().zip(extra) {
            *d += dot(&u[start..end], vb);
        }
    }
    (acc, dots)
}

/// `out += A w` for a tall column-major `A`.
pub fn tall_times_add(a: &DMatrix<f64>, w: &[f64], out: &mut [f64]) {
    assert_eq!(a.ncols(), w.len());
    assert_eq!(a.nrows(), out.len());
    let n = a.nrows();
    for start in (0..n).step_by(ROW_BLOCK) {
        let end = (start + ROW_BLOCK).min(n);
        axpy_block(a, w, start, &mut out[start..end]);
    }
}

/// `scale * (A w - v)` in a single pass over `A` and `v`.
pub fn tall_affine(a: &DMatrix<f64>, w: &[f64], v: &[f64], scale: f64) -> DVector<f64> {
    assert_eq!(a.ncols(), w.len());
    assert_eq!(a.nrows(), v.len());
    let n = a.nrows();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(ROW_BLOCK) {
        let end = (start + ROW_BLOCK).min(n);
        let base = out.len();
        out.extend(v[start..end].iter().map(|x| -x));
        let block = &mut out[base..];
        axpy_block(a, w, start, block);
        for x in block.iter_mut() {
            *x *= scale;
        }
    }
    DVector::from_vec(out)
}

fn axpy_block(a: &DMatrix<f64>, w: &[f64], start: usize, block: &mut [f64]) {
    let n = a.nrows();
    for (j, &wj) in w.iter().enumerate() {
        let col = &a.as_slice()[j * n + start..j * n + start + block.len()];
        for (o, &x) in block.iter_mut().zip(col) {
            *o += wj * x;
        }
    }
}
