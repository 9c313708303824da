//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! implicit-shift QL iteration.
//!
//! Single-threaded and fully deterministic. Eigenvectors are stored as the
//! rows of a row-major buffer while iterating so that each plane rotation
//! touches two contiguous rows.

use crate::error::{KseError, Result};
use crate::matrix::Matrix;

const MAX_QL_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector for `eigenvalues[i]`.
    eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvector `i` (0-based) as an owned vector.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }

    /// `U diag(lambda) U^T`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.n();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..n)
                    .map(|k| self.eigenvectors[(i, k)] * self.eigenvalues[k] * self.eigenvectors[(j, k)])
                    .sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted descending (ties keep solver order). Each
/// eigenvector is sign-fixed so that its largest-magnitude entry is positive,
/// the lowest index winning ties.
pub fn symmetric_eigen(a: &Matrix) -> Result<EigenDecomposition> {
    check_input(a)?;
    let n = a.rows();
    let mut work = a.clone();
    let (mut d, mut e, reflectors) = tridiagonalize(&mut work);
    let mut basis_t = accumulate_transposed(&work, &reflectors, n);
    tql(&mut d, &mut e, Some(&mut basis_t))?;

    let order = descending_order(&d);
    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let v = basis_t.row(src);
        let sign = sign_of_largest(v);
        for (row, &x) in v.iter().enumerate() {
            eigenvectors[(row, col)] = sign * x;
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only, descending. Roughly a third of the work of [`symmetric_eigen`].
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    check_input(a)?;
    let mut work = a.clone();
    let (mut d, mut e, _) = tridiagonalize(&mut work);
    tql(&mut d, &mut e, None)?;
    d.sort_by(|x, y| y.total_cmp(x));
    Ok(d)
}

fn check_input(a: &Matrix) -> Result<()> {
    if !a.is_square() || a.rows() == 0 {
        return Err(KseError::input(format!(
            "eigendecomposition needs a non-empty square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.all_finite() {
        return Err(KseError::input("matrix has non-finite entries"));
    }
    let scale = a.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !a.is_symmetric_within(1e-12 * scale.max(1.0)) {
        return Err(KseError::input("matrix is not symmetric"));
    }
    Ok(())
}

fn descending_order(d: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    order
}

fn sign_of_largest(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}

/// Reduces the lower triangle of `a` to tridiagonal form `Q^T A Q = T`.
///
/// Returns the diagonal, the off-diagonal (`e[k] = T[k][k+1]`, `e[n-1] = 0`)
/// and the Householder scale `H_k = v^T v / 2` per step; the reflector
/// vectors are left in row `k`, columns `k+1..n` of `a`.
fn tridiagonalize(a: &mut Matrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut hs = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        d[k] = a[(k, k)];
        let m = k + 1;
        // Column k below the diagonal, read from the lower triangle and scaled
        // by its largest entry so that squaring cannot underflow.
        let scale = (m..n).map(|i| a[(i, k)].abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            e[k] = 0.0;
            hs[k] = 0.0;
            a.row_mut(k)[m..].fill(0.0);
            continue;
        }
        let mut norm2 = 0.0;
        for i in m..n {
            v[i] = a[(i, k)] / scale;
            norm2 += v[i] * v[i];
        }
        let norm = norm2.sqrt();
        let tail2 = norm2 - v[m] * v[m];
        if tail2 == 0.0 {
            // Already tridiagonal in this column.
            e[k] = a[(m, k)];
            hs[k] = 0.0;
            a.row_mut(k)[m..].fill(0.0);
            continue;
        }
        let alpha = if v[m] >= 0.0 { -norm } else { norm };
        v[m] -= alpha;
        let vtv: f64 = (m..n).map(|i| v[i] * v[i]).sum();
        let h = 0.5 * vtv;
        e[k] = alpha * scale;
        hs[k] = h;

        // p = A22 v / h, using only the lower triangle of A22.
        p[m..n].fill(0.0);
        for i in m..n {
            let row = &a.row(i)[m..i];
            let vi = v[i];
            let mut acc = 0.0;
            for (off, &aij) in row.iter().enumerate() {
                let j = m + off;
                acc += aij * v[j];
                p[j] += aij * vi;
            }
            p[i] += acc + a[(i, i)] * vi;
        }
        for pi in &mut p[m..n] {
            *pi /= h;
        }
        let kk: f64 = (m..n).map(|i| v[i] * p[i]).sum::<f64>() / (2.0 * h);
        for i in m..n {
            p[i] -= kk * v[i];
        }
        // A22 -= v q^T + q v^T on the lower triangle.
        for i in m..n {
            let (vi, qi) = (v[i], p[i]);
            let row = &mut a.row_mut(i)[m..=i];
            for (off, aij) in row.iter_mut().enumerate() {
                let j = m + off;
                *aij -= vi * p[j] + qi * v[j];
            }
        }
        let row = a.row_mut(k);
        row[m..n].copy_from_slice(&v[m..n]);
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2, n - 2)];
        e[n - 2] = a[(n - 1, n - 2)];
        d[n - 1] = a[(n - 1, n - 1)];
    } else {
        d[0] = a[(0, 0)];
    }
    e[n - 1] = 0.0;
    (d, e, hs)
}

/// Builds `Q^T` from the stored reflectors, `Q = H_0 H_1 ... H_{n-3}`.
fn accumulate_transposed(a: &Matrix, hs: &[f64], n: usize) -> Matrix {
    let mut q = Matrix::identity(n);
    let mut w = vec![0.0; n];
    for k in (0..n.saturating_sub(2)).rev() {
        let h = hs[k];
        if h == 0.0 {
            continue;
        }
        let m = k + 1;
        let v = &a.row(k)[m..n];
        // w = v^T Q[m.., m..]
        w[m..n].fill(0.0);
        for (off, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let qrow = &q.row(m + off)[m..n];
            for (wj, &qij) in w[m..n].iter_mut().zip(qrow) {
                *wj += vi * qij;
            }
        }
        for (off, &vi) in v.iter().enumerate() {
            let s = vi / h;
            let qrow = &mut q.row_mut(m + off)[m..n];
            for (qij, &wj) in qrow.iter_mut().zip(&w[m..n]) {
                *qij -= s * wj;
            }
        }
    }
    q.transpose()
}

/// Implicit-shift QL on a symmetric tridiagonal matrix. On return `d` holds
/// the (unsorted) eigenvalues; if `basis_t` is given, its rows are rotated
/// along so that row `i` becomes the eigenvector of `d[i]`.
fn tql(d: &mut [f64], e: &mut [f64], mut basis_t: Option<&mut Matrix>) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] == 0 guarantees m < n.
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_SWEEPS_PER_EIGENVALUE {
                    return Err(KseError::Numerical(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = basis_t.as_deref_mut() {
                        rotate_rows(z, i, s, c);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[inline]
fn rotate_rows(z: &mut Matrix, i: usize, s: f64, c: f64) {
    let n = z.cols();
    let (head, tail) = z.as_mut_slice().split_at_mut((i + 1) * n);
    let zi = &mut head[i * n..];
    let zi1 = &mut tail[..n];
    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}
