//! Small dense factorizations used by the encoding model and the fixtures.

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::sum;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Returns `None` when a pivot falls at or below `rel_tol` times the largest
/// diagonal entry, which is how rank deficiency is detected.
pub fn cholesky(a: &Matrix, rel_tol: f64) -> Option<Matrix> {
    let n = a.rows();
    let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0, f64::max);
    let floor = rel_tol * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j)[..j].to_vec();
        let d = a.get(j, j) - sum::dot(&lj, &lj);
        if !(d > floor) || d <= 0.0 {
            return None;
        }
        let djj = libm::sqrt(d);
        l.set(j, j, djj);
        for i in j + 1..n {
            let s = a.get(i, j) - sum::dot(&l.row(i)[..j], &lj);
            l.set(i, j, s / djj);
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` for every column of `b`.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    let mut x = Matrix::zeros(n, b.cols());
    let mut y = vec![0.0; n];
    for c in 0..b.cols() {
        for i in 0..n {
            let s = b.get(i, c) - sum::dot(&l.row(i)[..i], &y[..i]);
            y[i] = s / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    x
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors stored as columns.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let total = m.frobenius_norm();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if libm::sqrt(off) <= 1e-15 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = libm::copysign(1.0, theta) / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| m.get(i, i)).collect(), v)
}

/// Moore-Penrose solve `pinv(a) * b` for symmetric positive semi-definite `a`.
///
/// Eigenvalues at or below `rel_tol` times the largest are treated as zero.
/// Also returns the numerical rank.
pub fn psd_pinv_solve(a: &Matrix, b: &Matrix, rel_tol: f64) -> (Matrix, usize) {
    let (vals, vecs) = symmetric_eigen(a);
    let n = a.rows();
    let max = vals.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > rel_tol * max && vals[i] > 0.0).collect();
    // x = V diag(1/λ) Vᵀ b over the kept eigenpairs
    let vt = vecs.transpose();
    let mut x = Matrix::zeros(n, b.cols());
    let bt = b.transpose();
    for &k in &keep {
        let vk = vt.row(k);
        for c in 0..b.cols() {
            let coef = sum::dot(vk, bt.row(c)) / vals[k];
            for i in 0..n {
                let cur = x.get(i, c);
                x.set(i, c, cur + coef * vk[i]);
            }
        }
    }
    (x, keep.len())
}

/// Orthonormalizes the columns of a square matrix by modified Gram-Schmidt.
///
/// This is the Q factor of a QR decomposition with the sign convention
/// `diag(R) > 0`. Returns `None` if the columns are numerically dependent.
pub fn orthonormal_columns(a: &Matrix) -> Option<Matrix> {
    let mut cols: Vec<Vec<f64>> = (0..a.cols()).map(|j| a.column(j)).collect();
    for j in 0..cols.len() {
        for k in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let proj = sum::dot(&done[k], &rest[0]);
            for (x, q) in rest[0].iter_mut().zip(&done[k]) {
                *x -= proj * q;
            }
        }
        let norm = libm::sqrt(sum::dot(&cols[j], &cols[j]));
        if !(norm > 1e-12) {
            return None;
        }
        cols[j].iter_mut().for_each(|x| *x /= norm);
    }
    let mut q = Matrix::zeros(a.rows(), a.cols());
    for (j, c) in cols.iter().enumerate() {
        q.set_column(j, c);
    }
    Some(q)
}
