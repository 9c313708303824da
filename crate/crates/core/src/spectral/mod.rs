//! Eigendecomposition of the scaled kernel matrix, the eigenvalue-weighted
//! embedding and Nyström extension of the empirical eigenfunctions.

pub mod eigen;

use serde::{Deserialize, Serialize};

pub use eigen::{symmetric_eigen, symmetric_eigenvalues, EigenDecomposition};

use crate::bandwidth::{percentile_bandwidth, BandwidthResult};
use crate::error::{KseError, Result};
use crate::kernels::{kernel_matrix_from_dists, pairwise_sq_dists, KernelMatrix, KernelSpec};
use crate::matrix::{DataMatrix, Matrix};

/// Eigenvalues at or below this are treated as zero when dividing.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Relative standard deviation below which a leading eigenvector is flagged as constant.
pub const NEAR_CONSTANT_REL_STD: f64 = 1e-3;

/// Eigendecomposition of `n^{-1} K`.
pub fn sym_eig(k: &KernelMatrix) -> Result<EigenDecomposition> {
    symmetric_eigen(&k.scaled_by_n())
}

/// Ordered set of eigen-indices, 1-based (`{1, 2}` selects the two leading pairs).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(KseError::input("index set must be non-empty"));
        }
        if indices.contains(&0) {
            return Err(KseError::input("eigen-indices are 1-based; 0 is not allowed"));
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != indices.len() {
            return Err(KseError::input("eigen-indices must be distinct"));
        }
        Ok(IndexSet(indices))
    }

    /// `{1, ..., k}`.
    pub fn leading(k: usize) -> Result<Self> {
        IndexSet::new((1..=k).collect())
    }

    /// Parses a comma-separated list such as `1,2`.
    pub fn parse(s: &str) -> Result<Self> {
        let indices = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| KseError::input(format!("invalid eigen-index '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        IndexSet::new(indices)
    }

    pub fn one_based(&self) -> &[usize] {
        &self.0
    }

    pub fn zero_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i - 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_against(&self, n: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i > n) {
            Some(i) => Err(KseError::input(format!("eigen-index {i} exceeds sample count {n}"))),
            None => Ok(()),
        }
    }
}

/// Rows are the embedded samples; column `j` is `lambda_{i_j} u_{i_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub indices: IndexSet,
    pub matrix: Matrix,
    pub eigenvalues_used: Vec<f64>,
}

impl Embedding {
    /// `U_Omega Lambda_Omega` from a decomposition.
    pub fn from_decomposition(eig: &EigenDecomposition, indices: &IndexSet) -> Result<Self> {
        indices.check_against(eig.n())?;
        let cols = indices.zero_based();
        let mut matrix = eig.eigenvectors().select_columns(&cols);
        let eigenvalues_used: Vec<f64> = cols.iter().map(|&c| eig.eigenvalues()[c]).collect();
        for i in 0..matrix.rows() {
            for (j, &l) in eigenvalues_used.iter().enumerate() {
                matrix[(i, j)] *= l;
            }
        }
        Ok(Embedding {
            indices: indices.clone(),
            matrix,
            eigenvalues_used,
        })
    }
}

/// How the bandwidth of a model is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthChoice {
    Percentile(f64),
    Fixed(f64),
}

/// A fitted embedding: the training samples, kernel, bandwidth and full
/// decomposition of `n^{-1} K_n`. Immutable once built.
#[derive(Debug, Clone)]
pub struct EmbedModel {
    data: DataMatrix,
    spec: KernelSpec,
    bandwidth: f64,
    selection: Option<BandwidthResult>,
    decomposition: EigenDecomposition,
}

impl EmbedModel {
    pub fn fit(y: &DataMatrix, spec: &KernelSpec, choice: BandwidthChoice) -> Result<Self> {
        spec.validate()?;
        let d = pairwise_sq_dists(y)?;
        let (h, selection) = match choice {
            BandwidthChoice::Percentile(omega) => {
                let bw = percentile_bandwidth(&d, omega)?;
                (bw.h, Some(bw))
            }
            BandwidthChoice::Fixed(h) => (h, None),
        };
        let k = kernel_matrix_from_dists(&d, spec, h)?;
        let decomposition = sym_eig(&k)?;
        Ok(EmbedModel {
            data: y.clone(),
            spec: spec.clone(),
            bandwidth: h,
            selection,
            decomposition,
        })
    }

    pub fn data(&self) -> &DataMatrix {
        &self.data
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn bandwidth_selection(&self) -> Option<&BandwidthResult> {
        self.selection.as_ref()
    }

    pub fn decomposition(&self) -> &EigenDecomposition {
        &self.decomposition
    }

    pub fn embedding(&self, indices: &IndexSet) -> Result<Embedding> {
        Embedding::from_decomposition(&self.decomposition, indices)
    }

    /// Empirical eigenfunctions at a new point:
    /// `phi_i(x) = (lambda_i sqrt n)^{-1} sum_j f(||x - y_j|| / sqrt h) u_ij`.
    pub fn nystrom_extend(&self, x_new: &[f64], indices: &IndexSet) -> Result<Vec<f64>> {
        let n = self.data.n_samples();
        indices.check_against(n)?;
        if x_new.len() != self.data.n_features() {
            return Err(KseError::input(format!(
                "point has {} coordinates, model expects {}",
                x_new.len(),
                self.data.n_features()
            )));
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(KseError::input("point has non-finite coordinates"));
        }
        let cols = indices.zero_based();
        for &c in &cols {
            let l = self.decomposition.eigenvalues()[c];
            if l <= RANK_TOLERANCE {
                return Err(KseError::RankDeficient(format!(
                    "eigenvalue {} = {l:e} is too small to extend",
                    c + 1
                )));
            }
        }
        let inv_sqrt_h = 1.0 / self.bandwidth.sqrt();
        let row: Vec<f64> = (0..n)
            .map(|j| {
                let d2: f64 = x_new
                    .iter()
                    .zip(self.data.sample(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                self.spec.eval_unchecked(d2.sqrt() * inv_sqrt_h)
            })
            .collect();
        let u = self.decomposition.eigenvectors();
        let sqrt_n = (n as f64).sqrt();
        Ok(cols
            .iter()
            .map(|&c| {
                let s: f64 = row.iter().enumerate().map(|(j, k)| k * u[(j, c)]).sum();
                s / (self.decomposition.eigenvalues()[c] * sqrt_n)
            })
            .collect())
    }
}

/// Runs the full pipeline: percentile bandwidth, kernel matrix, decomposition, `U_Omega Lambda_Omega`.
pub fn embed(
    y: &DataMatrix,
    spec: &KernelSpec,
    omega: f64,
    indices: &IndexSet,
) -> Result<(Embedding, EmbedModel)> {
    indices.check_against(y.n_samples())?;
    let model = EmbedModel::fit(y, spec, BandwidthChoice::Percentile(omega))?;
    let emb = model.embedding(indices)?;
    Ok((emb, model))
}

/// Flags a leading eigenvector whose entries are nearly all equal, which
/// typically carries no structure (relative standard deviation below 1e-3).
pub fn leading_vector_near_constant(eig: &EigenDecomposition) -> bool {
    let v = eig.vector(0);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return false;
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs() < NEAR_CONSTANT_REL_STD
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn line_data(n: usize) -> DataMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.37, (i as f64 * 1.3).sin()]).collect();
        DataMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn index_set_parsing() {
        assert_eq!(IndexSet::parse("1, 2").unwrap().zero_based(), vec![0, 1]);
        assert!(IndexSet::parse("0,1").is_err());
        assert!(IndexSet::parse("1,1").is_err());
        assert!(IndexSet::parse("a").is_err());
        assert!(IndexSet::new(vec![]).is_err());
    }

    #[test]
    fn scaled_identity_kernel() {
        let k = KernelMatrix::from_values(Matrix::identity(3).scale(3.0)).unwrap();
        let eig = sym_eig(&k).unwrap();
        for &l in eig.eigenvalues() {
            assert_relative_eq!(l, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_kernel_embedding() {
        let k = KernelMatrix::from_values(Matrix::filled(4, 4, 1.0)).unwrap();
        let eig = sym_eig(&k).unwrap();
        let emb = Embedding::from_decomposition(&eig, &IndexSet::leading(1).unwrap()).unwrap();
        for i in 0..4 {
            assert_relative_eq!(emb.matrix[(i, 0)], 0.5, epsilon = 1e-14);
        }
        assert!(leading_vector_near_constant(&eig));
    }

    #[test]
    fn identical_points_are_degenerate() {
        let y = DataMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let err = embed(&y, &KernelSpec::Gaussian, 0.5, &IndexSet::leading(1).unwrap()).unwrap_err();
        assert!(matches!(err, KseError::Degenerate(_)));
    }

    #[test]
    fn index_out_of_range() {
        let y = line_data(5);
        assert!(embed(&y, &KernelSpec::Gaussian, 0.5, &IndexSet::new(vec![6]).unwrap()).is_err());
    }

    #[test]
    fn nystrom_reproduces_training_points() {
        let y = line_data(40);
        let (_, model) = embed(&y, &KernelSpec::Gaussian, 0.5, &IndexSet::leading(1).unwrap()).unwrap();
        let idx = IndexSet::leading(3).unwrap();
        let sqrt_n = 40f64.sqrt();
        for j in 0..40 {
            let phi = model.nystrom_extend(y.sample(j), &idx).unwrap();
            for (c, v) in phi.iter().enumerate() {
                let expected = sqrt_n * model.decomposition().eigenvectors()[(j, c)];
                assert!((v - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn nystrom_constant_kernel() {
        let y = line_data(10);
        let model = EmbedModel::fit(&y, &KernelSpec::Gaussian, BandwidthChoice::Fixed(1e300)).unwrap();
        let idx = IndexSet::leading(1).unwrap();
        for x in [[0.0, 0.0], [3.5, -1.0], [100.0, 7.0]] {
            let phi = model.nystrom_extend(&x, &idx).unwrap();
            assert_relative_eq!(phi[0], 1.0, epsilon = 1e-12);
        }
        let err = model.nystrom_extend(&[0.0, 0.0], &IndexSet::leading(2).unwrap()).unwrap_err();
        assert!(matches!(err, KseError::RankDeficient(_)));
        assert!(model.nystrom_extend(&[0.0], &idx).is_err());
    }
}
