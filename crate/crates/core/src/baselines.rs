//! Comparison embeddings: centered kernel PCA, Laplacian eigenmaps, diffusion
//! maps and linear PCA.
//!
//! The kernel-based methods share the percentile bandwidth of the main
//! pipeline unless a fixed bandwidth is supplied, so that comparisons only
//! differ in how the kernel matrix is normalized.

use serde::{Deserialize, Serialize};

use crate::error::{KseError, Result};
use crate::kernels::{kernel_matrix_from_dists, pairwise_sq_dists, KernelMatrix, KernelSpec};
use crate::matrix::{DataMatrix, Matrix};
use crate::bandwidth::percentile_bandwidth;
use crate::spectral::{symmetric_eigen, BandwidthChoice, EigenDecomposition, Embedding, IndexSet};

/// Density-normalization exponent used by diffusion maps unless overridden.
pub const DEFAULT_ZETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineMethod {
    Kpca,
    LaplacianEigenmap,
    DiffusionMap { zeta: f64 },
    Pca,
}

impl BaselineMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaselineMethod::DiffusionMap { zeta } if !(*zeta >= 0.0 && zeta.is_finite()) => Err(
                KseError::input(format!("diffusion-map zeta must be nonnegative, got {zeta}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Double-centered kernel `K - 11^T K / n - K 11^T / n + 11^T K 11^T / n^2`.
pub fn kpca_center(k: &KernelMatrix) -> Matrix {
    let v = k.values();
    let n = k.n();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| v.row(i).iter().sum::<f64>() / nf).collect();
    // K is symmetric, so column means equal row means.
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let c = v[(i, j)] - row_means[i] - row_means[j] + grand;
            out[(i, j)] = c;
            out[(j, i)] = c;
        }
    }
    out
}

fn degrees(m: &Matrix) -> Result<Vec<f64>> {
    let d: Vec<f64> = (0..m.rows()).map(|i| m.row(i).iter().sum()).collect();
    if let Some(i) = d.iter().position(|&x| x.is_nan() || x <= 0.0) {
        return Err(KseError::degenerate(format!("node {i} has non-positive degree {}", d[i])));
    }
    Ok(d)
}

/// Random-walk graph Laplacian `I - D^{-1} K`.
pub fn graph_laplacian(k: &KernelMatrix) -> Result<Matrix> {
    let v = k.values();
    let d = degrees(v)?;
    let n = k.n();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            l[(i, j)] = delta - v[(i, j)] / d[i];
        }
    }
    Ok(l)
}

/// `D^{-zeta} K D^{-zeta}` and its degrees.
fn density_normalized(k: &Matrix, zeta: f64) -> Result<(Matrix, Vec<f64>)> {
    let d = degrees(k)?;
    let n = k.rows();
    let w: Vec<f64> = d.iter().map(|x| x.powf(-zeta)).collect();
    let mut kp = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            kp[(i, j)] = w[i] * k[(i, j)] * w[j];
        }
    }
    let dp = degrees(&kp)?;
    Ok((kp, dp))
}

/// Diffusion-map transition matrix `M = D'^{-1} K'` with `K' = D^{-zeta} K D^{-zeta}`.
pub fn diffusion_matrix(k: &KernelMatrix, zeta: f64) -> Result<Matrix> {
    BaselineMethod::DiffusionMap { zeta }.validate()?;
    let (kp, dp) = density_normalized(k.values(), zeta)?;
    let n = k.n();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = kp[(i, j)] / dp[i];
        }
    }
    Ok(m)
}

/// `D^{-1/2} A D^{-1/2}` for the given degrees.
fn symmetric_normalization(a: &Matrix, d: &[f64]) -> Matrix {
    let n = a.rows();
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = s[i] * a[(i, j)] * s[j];
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn check_dims(dims: usize, n: usize) -> Result<()> {
    if dims == 0 {
        return Err(KseError::input("embedding dimension must be at least 1"));
    }
    if dims > n {
        return Err(KseError::input(format!(
            "embedding dimension {dims} exceeds sample count {n}"
        )));
    }
    Ok(())
}

/// Columns `cols` of the eigenvector matrix, each multiplied by `row_scale[i]`
/// per row and by `col_scale[j]` per column.
fn scaled_columns(eig: &EigenDecomposition, cols: &[usize], row_scale: Option<&[f64]>, weight: bool) -> Matrix {
    let u = eig.eigenvectors();
    let mut out = Matrix::zeros(u.rows(), cols.len());
    for i in 0..u.rows() {
        let rs = row_scale.map_or(1.0, |s| s[i]);
        for (jj, &c) in cols.iter().enumerate() {
            let w = if weight { eig.eigenvalues()[c] } else { 1.0 };
            out[(i, jj)] = u[(i, c)] * rs * w;
        }
    }
    out
}

/// Sign convention for mapped-back vectors: largest-magnitude entry positive.
fn fix_column_signs(m: &mut Matrix) {
    for j in 0..m.cols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..m.rows() {
            let x = m[(i, j)];
            if x.abs() > best {
                best = x.abs();
                sign = if x < 0.0 { -1.0 } else { 1.0 };
            }
        }
        if sign < 0.0 {
            for i in 0..m.rows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

fn embedding(matrix: Matrix, eigenvalues_used: Vec<f64>, cols: &[usize]) -> Result<Embedding> {
    Ok(Embedding {
        indices: IndexSet::new(cols.iter().map(|c| c + 1).collect())?,
        matrix,
        eigenvalues_used,
    })
}

/// Baseline embedding of a precomputed kernel matrix. Not defined for PCA,
/// which works on the raw samples.
pub fn baseline_embed_kernel(method: BaselineMethod, k: &KernelMatrix, dims: usize) -> Result<Embedding> {
    method.validate()?;
    let n = k.n();
    check_dims(dims, n)?;
    match method {
        BaselineMethod::Kpca => {
            let centered = kpca_center(k).scale(1.0 / n as f64);
            let eig = symmetric_eigen(&centered)?;
            let cols: Vec<usize> = (0..dims).collect();
            let m = scaled_columns(&eig, &cols, None, true);
            embedding(m, cols.iter().map(|&c| eig.eigenvalues()[c]).collect(), &cols)
        }
        BaselineMethod::LaplacianEigenmap => {
            let d = degrees(k.values())?;
            let eig = symmetric_eigen(&symmetric_normalization(k.values(), &d))?;
            // The top eigenpair of D^{-1/2} K D^{-1/2} is the trivial zero-eigenvalue
            // direction of the Laplacian.
            let cols: Vec<usize> = (1..=dims).filter(|&c| c < n).collect();
            if cols.len() < dims {
                return Err(KseError::input(format!(
                    "Laplacian eigenmap can provide at most {} nontrivial dimensions",
                    n - 1
                )));
            }
            let inv_sqrt_d: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
            let mut m = scaled_columns(&eig, &cols, Some(&inv_sqrt_d), false);
            fix_column_signs(&mut m);
            let laplacian_eigs = cols.iter().map(|&c| 1.0 - eig.eigenvalues()[c]).collect();
            embedding(m, laplacian_eigs, &cols)
        }
        BaselineMethod::DiffusionMap { zeta } => {
            let (kp, dp) = density_normalized(k.values(), zeta)?;
            let eig = symmetric_eigen(&symmetric_normalization(&kp, &dp))?;
            let cols: Vec<usize> = (1..=dims).filter(|&c| c < n).collect();
            if cols.len() < dims {
                return Err(KseError::input(format!(
                    "diffusion map can provide at most {} nontrivial dimensions",
                    n - 1
                )));
            }
            // Right eigenvectors of M are D'^{-1/2} times those of the symmetric form.
            let inv_sqrt_d: Vec<f64> = dp.iter().map(|x| 1.0 / x.sqrt()).collect();
            let mut m = scaled_columns(&eig, &cols, Some(&inv_sqrt_d), true);
            fix_column_signs(&mut m);
            embedding(m, cols.iter().map(|&c| eig.eigenvalues()[c]).collect(), &cols)
        }
        BaselineMethod::Pca => Err(KseError::input("PCA operates on samples, not a kernel matrix")),
    }
}

/// Principal-component scores of the column-centered samples.
pub fn pca_embed(y: &DataMatrix, dims: usize) -> Result<Embedding> {
    let n = y.n_samples();
    let p = y.n_features();
    check_dims(dims, n)?;
    let mut c = y.matrix().clone();
    for j in 0..p {
        let mean = (0..n).map(|i| c[(i, j)]).sum::<f64>() / n as f64;
        for i in 0..n {
            c[(i, j)] -= mean;
        }
    }
    let cols: Vec<usize> = (0..dims).collect();
    let (scores, variances) = if p <= n {
        // Scores = Yc V from the covariance eigenvectors.
        let cov = c.transpose().matmul(&c)?.scale(1.0 / n as f64);
        let eig = symmetric_eigen(&symmetric_part(&cov))?;
        let usable = dims.min(p);
        let v = eig.eigenvectors().select_columns(&cols[..usable]);
        let mut s = Matrix::zeros(n, dims);
        let proj = c.matmul(&v)?;
        for i in 0..n {
            s.row_mut(i)[..usable].copy_from_slice(proj.row(i));
        }
        let mut vars: Vec<f64> = eig.eigenvalues()[..usable].to_vec();
        vars.resize(dims, 0.0);
        (s, vars)
    } else {
        // Gram route: Yc Yc^T = U S^2 U^T, scores = U S.
        let gram = c.matmul(&c.transpose())?;
        let eig = symmetric_eigen(&symmetric_part(&gram))?;
        let mut s = Matrix::zeros(n, dims);
        for (jj, &col) in cols.iter().enumerate() {
            let sv = eig.eigenvalues()[col].max(0.0).sqrt();
            for i in 0..n {
                s[(i, jj)] = eig.eigenvectors()[(i, col)] * sv;
            }
        }
        let vars = cols.iter().map(|&col| eig.eigenvalues()[col].max(0.0) / n as f64).collect();
        (s, vars)
    };
    let mut scores = scores;
    fix_column_signs(&mut scores);
    embedding(scores, variances, &cols)
}

fn symmetric_part(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..m.rows() {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Embeds samples with a baseline method.
///
/// Kernel methods build `K_n` with the percentile bandwidth at `omega`, or
/// with `bandwidth` when it is `BandwidthChoice::Fixed`.
pub fn baseline_embed(
    method: BaselineMethod,
    y: &DataMatrix,
    spec: &KernelSpec,
    bandwidth: BandwidthChoice,
    dims: usize,
) -> Result<Embedding> {
    method.validate()?;
    check_dims(dims, y.n_samples())?;
    if method == BaselineMethod::Pca {
        return pca_embed(y, dims);
    }
    let d = pairwise_sq_dists(y)?;
    let h = match bandwidth {
        BandwidthChoice::Percentile(omega) => percentile_bandwidth(&d, omega)?.h,
        BandwidthChoice::Fixed(h) => h,
    };
    let k = kernel_matrix_from_dists(&d, spec, h)?;
    baseline_embed_kernel(method, &k, dims)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::spectral::symmetric_eigenvalues;

    fn km(rows: &[&[f64]]) -> KernelMatrix {
        KernelMatrix::from_values(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn row_sums(m: &Matrix) -> Vec<f64> {
        (0..m.rows()).map(|i| m.row(i).iter().sum()).collect()
    }

    #[test]
    fn centering_examples() {
        let ones = KernelMatrix::from_values(Matrix::filled(5, 5, 1.0)).unwrap();
        assert!(kpca_center(&ones).as_slice().iter().all(|&x| x.abs() < 1e-15));

        let c = kpca_center(&KernelMatrix::from_values(Matrix::identity(2)).unwrap());
        assert_eq!(c.to_rows(), vec![vec![0.5, -0.5], vec![-0.5, 0.5]]);

        let k = km(&[&[1.0, 0.3, 0.1], &[0.3, 1.0, 0.6], &[0.1, 0.6, 1.0]]);
        let c = kpca_center(&k);
        assert!(row_sums(&c).iter().all(|s| s.abs() < 1e-15));
        assert!(c.as_slice().iter().sum::<f64>().abs() < 1e-14);
        let twice = kpca_center(&KernelMatrix::from_values(c.clone()).unwrap());
        assert!(twice.max_abs_diff(&c) < 1e-15);
    }

    #[test]
    fn laplacian_examples() {
        let ones = KernelMatrix::from_values(Matrix::filled(3, 3, 1.0)).unwrap();
        let l = graph_laplacian(&ones).unwrap();
        let expected = Matrix::identity(3).sub(&Matrix::filled(3, 3, 1.0 / 3.0)).unwrap();
        assert!(l.max_abs_diff(&expected) < 1e-15);

        let l = graph_laplacian(&KernelMatrix::from_values(Matrix::identity(4)).unwrap()).unwrap();
        assert!(l.as_slice().iter().all(|&x| x == 0.0));

        let k = km(&[&[1.0, 0.3, 0.1], &[0.3, 1.0, 0.6], &[0.1, 0.6, 1.0]]);
        let l = graph_laplacian(&k).unwrap();
        assert!(row_sums(&l).iter().all(|s| s.abs() < 1e-15));

        let zero = KernelMatrix::from_values(Matrix::zeros(2, 2)).unwrap();
        assert!(matches!(graph_laplacian(&zero), Err(KseError::Degenerate(_))));
    }

    #[test]
    fn diffusion_examples() {
        let ones = KernelMatrix::from_values(Matrix::filled(4, 4, 1.0)).unwrap();
        for zeta in [0.0, 0.5, 1.0, 2.0] {
            let m = diffusion_matrix(&ones, zeta).unwrap();
            assert!(m.max_abs_diff(&Matrix::filled(4, 4, 0.25)) < 1e-15);
        }
        let k = km(&[&[1.0, 0.3, 0.1], &[0.3, 1.0, 0.6], &[0.1, 0.6, 1.0]]);
        let m0 = diffusion_matrix(&k, 0.0).unwrap();
        let rw = Matrix::identity(3).sub(&graph_laplacian(&k).unwrap()).unwrap();
        assert!(m0.max_abs_diff(&rw) < 1e-15);
        for a in [0.2, 0.8] {
            let m = diffusion_matrix(&km(&[&[1.0, a], &[a, 1.0]]), 1.0).unwrap();
            for s in row_sums(&m) {
                assert_relative_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
        assert!(diffusion_matrix(&k, -1.0).is_err());
    }

    #[test]
    fn diffusion_spectrum_in_unit_interval() {
        let k = km(&[&[1.0, 0.3, 0.1], &[0.3, 1.0, 0.6], &[0.1, 0.6, 1.0]]);
        let (kp, dp) = density_normalized(k.values(), 1.0).unwrap();
        let eigs = symmetric_eigenvalues(&symmetric_normalization(&kp, &dp)).unwrap();
        assert_relative_eq!(eigs[0], 1.0, epsilon = 1e-12);
        assert!(eigs.iter().all(|&l| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&l)));
    }

    #[test]
    fn two_block_diffusion_splits_blocks() {
        // Strong within-block affinity, weak coupling across blocks.
        let n = 6;
        let mut v = Matrix::filled(n, n, 0.01);
        for i in 0..n {
            for j in 0..n {
                if (i < 3) == (j < 3) {
                    v[(i, j)] = 1.0;
                }
            }
        }
        let k = KernelMatrix::from_values(v).unwrap();
        let emb = baseline_embed_kernel(BaselineMethod::DiffusionMap { zeta: 1.0 }, &k, 1).unwrap();
        let col = emb.matrix.column(0);
        assert!(col[..3].iter().all(|&x| x * col[0] > 0.0));
        assert!(col[3..].iter().all(|&x| x * col[0] < 0.0));
        let emb = baseline_embed_kernel(BaselineMethod::LaplacianEigenmap, &k, 1).unwrap();
        let col = emb.matrix.column(0);
        assert!(col[..3].iter().all(|&x| x * col[0] > 0.0));
        assert!(col[3..].iter().all(|&x| x * col[0] < 0.0));
    }

    #[test]
    fn kpca_on_constant_kernel_is_zero() {
        let ones = KernelMatrix::from_values(Matrix::filled(5, 5, 1.0)).unwrap();
        let emb = baseline_embed_kernel(BaselineMethod::Kpca, &ones, 2).unwrap();
        assert!(emb.matrix.as_slice().iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn pca_on_a_line() {
        let ts = [-2.0, -0.5, 0.0, 1.0, 1.5];
        let dir = [0.6, 0.8, 0.0];
        let rows: Vec<Vec<f64>> = ts.iter().map(|t| dir.iter().map(|d| 1.0 + t * d).collect()).collect();
        let y = DataMatrix::from_rows(&rows).unwrap();
        let emb = pca_embed(&y, 2).unwrap();
        let mean = ts.iter().sum::<f64>() / 5.0;
        let s = emb.matrix.column(0);
        let sign = s[0].signum() * (ts[0] - mean).signum();
        for (a, t) in s.iter().zip(ts) {
            assert_relative_eq!(*a, sign * (t - mean), epsilon = 1e-12);
        }
        assert!(emb.eigenvalues_used[1].abs() < 1e-12);

        // n < p goes through the Gram route.
        let wide: Vec<Vec<f64>> = ts[..3].iter().map(|t| (0..8).map(|j| t * (j as f64 + 1.0)).collect()).collect();
        let emb = pca_embed(&DataMatrix::from_rows(&wide).unwrap(), 1).unwrap();
        let total: f64 = emb.matrix.column(0).iter().map(|x| x * x).sum();
        let c: Vec<f64> = ts[..3].iter().map(|t| t - (-2.5 / 3.0)).collect();
        let expected: f64 = c.iter().map(|x| x * x).sum::<f64>() * (1..=8).map(|j| (j * j) as f64).sum::<f64>();
        assert_relative_eq!(total, expected, epsilon = 1e-10);
    }

    #[test]
    fn dims_validation() {
        let y = DataMatrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert!(baseline_embed(BaselineMethod::Pca, &y, &KernelSpec::Gaussian, BandwidthChoice::Percentile(0.5), 4).is_err());
        assert!(baseline_embed(BaselineMethod::Kpca, &y, &KernelSpec::Gaussian, BandwidthChoice::Percentile(0.5), 0).is_err());
        assert!(baseline_embed(BaselineMethod::LaplacianEigenmap, &y, &KernelSpec::Gaussian, BandwidthChoice::Percentile(0.5), 3).is_err());
    }
}
