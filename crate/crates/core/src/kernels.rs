//! Kernel families, pairwise squared distances and kernel-matrix construction.
//!
//! A kernel is a radial profile `f: [0, inf) -> [0, f(0)]` applied to the
//! scaled distance `||y_i - y_j|| / sqrt(h)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KseError, Result};
use crate::matrix::{DataMatrix, Matrix};

/// Radial kernel profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-x^2)`
    Gaussian,
    /// `exp(-x / ell)`
    Laplacian { ell: f64 },
    /// `(1 + x^2 / (2 alpha ell^2))^(-alpha)`
    RationalQuadratic { alpha: f64, ell: f64 },
    /// `(1 + sqrt(3) x / ell) exp(-sqrt(3) x / ell)`
    Matern32 { ell: f64 },
    /// `(1 - x)_+^(floor(alpha / 2) + 1)`
    Truncated { alpha: f64 },
    AdditiveMix { parts: Vec<KernelSpec> },
    MultiplicativeMix { parts: Vec<KernelSpec> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixMode {
    Additive,
    Multiplicative,
}

impl KernelSpec {
    pub fn laplacian(ell: f64) -> Result<Self> {
        let k = KernelSpec::Laplacian { ell };
        k.validate()?;
        Ok(k)
    }

    pub fn rational_quadratic(alpha: f64, ell: f64) -> Result<Self> {
        let k = KernelSpec::RationalQuadratic { alpha, ell };
        k.validate()?;
        Ok(k)
    }

    pub fn matern32(ell: f64) -> Result<Self> {
        let k = KernelSpec::Matern32 { ell };
        k.validate()?;
        Ok(k)
    }

    pub fn truncated(alpha: f64) -> Result<Self> {
        let k = KernelSpec::Truncated { alpha };
        k.validate()?;
        Ok(k)
    }

    /// Parses a family name as accepted on the command line. Parameters not
    /// used by the family are ignored.
    pub fn from_name(name: &str, ell: f64, alpha: f64) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelSpec::Gaussian),
            "laplacian" => KernelSpec::laplacian(ell),
            "rq" | "rational_quadratic" | "rational-quadratic" | "polynomial" => {
                KernelSpec::rational_quadratic(alpha, ell)
            }
            "matern32" | "matern" => KernelSpec::matern32(ell),
            "truncated" => KernelSpec::truncated(alpha),
            other => Err(KseError::input(format!("unknown kernel family '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(KseError::input(format!("kernel parameter {name} must be positive, got {v}")))
            }
        };
        match self {
            KernelSpec::Gaussian => Ok(()),
            KernelSpec::Laplacian { ell } | KernelSpec::Matern32 { ell } => positive("ell", *ell),
            KernelSpec::RationalQuadratic { alpha, ell } => {
                positive("alpha", *alpha)?;
                positive("ell", *ell)
            }
            KernelSpec::Truncated { alpha } => {
                if alpha.is_finite() && *alpha >= 0.0 {
                    Ok(())
                } else {
                    Err(KseError::input(format!(
                        "truncated kernel alpha must be nonnegative, got {alpha}"
                    )))
                }
            }
            KernelSpec::AdditiveMix { parts } | KernelSpec::MultiplicativeMix { parts } => {
                if parts.is_empty() {
                    return Err(KseError::input("kernel mixture needs at least one part"));
                }
                parts.iter().try_for_each(KernelSpec::validate)
            }
        }
    }

    /// Evaluates the profile at `x >= 0`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(KseError::input(format!(
                "kernel argument must be nonnegative, got {x}"
            )));
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        match self {
            KernelSpec::Gaussian => (-x * x).exp(),
            KernelSpec::Laplacian { ell } => (-x / ell).exp(),
            KernelSpec::RationalQuadratic { alpha, ell } => {
                (1.0 + x * x / (2.0 * alpha * ell * ell)).powf(-alpha)
            }
            KernelSpec::Matern32 { ell } => {
                let t = 3f64.sqrt() * x / ell;
                (1.0 + t) * (-t).exp()
            }
            KernelSpec::Truncated { alpha } => {
                let base = (1.0 - x).max(0.0);
                base.powi(truncated_exponent(*alpha))
            }
            KernelSpec::AdditiveMix { parts } => parts.iter().map(|k| k.eval_unchecked(x)).sum(),
            KernelSpec::MultiplicativeMix { parts } => {
                parts.iter().map(|k| k.eval_unchecked(x)).product()
            }
        }
    }

    /// Value at zero distance, which is also the maximum of every supported profile.
    pub fn f0(&self) -> f64 {
        self.eval_unchecked(0.0)
    }

    /// Whether the family is a single (non-mixed) kernel.
    pub fn is_single_family(&self) -> bool {
        !matches!(
            self,
            KernelSpec::AdditiveMix { .. } | KernelSpec::MultiplicativeMix { .. }
        )
    }
}

fn truncated_exponent(alpha: f64) -> i32 {
    (alpha / 2.0).floor() as i32 + 1
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian => write!(f, "gaussian"),
            KernelSpec::Laplacian { ell } => write!(f, "laplacian(ell={ell})"),
            KernelSpec::RationalQuadratic { alpha, ell } => {
                write!(f, "rational_quadratic(alpha={alpha}, ell={ell})")
            }
            KernelSpec::Matern32 { ell } => write!(f, "matern32(ell={ell})"),
            KernelSpec::Truncated { alpha } => write!(f, "truncated(alpha={alpha})"),
            KernelSpec::AdditiveMix { parts } | KernelSpec::MultiplicativeMix { parts } => {
                let op = if matches!(self, KernelSpec::AdditiveMix { .. }) { " + " } else { " * " };
                let names: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "({})", names.join(op))
            }
        }
    }
}

/// Combines kernels by summing or multiplying their profiles.
pub fn mix_kernels(parts: Vec<KernelSpec>, mode: MixMode) -> Result<KernelSpec> {
    let spec = match mode {
        MixMode::Additive => KernelSpec::AdditiveMix { parts },
        MixMode::Multiplicative => KernelSpec::MultiplicativeMix { parts },
    };
    spec.validate()?;
    Ok(spec)
}

/// Symmetric matrix of squared Euclidean distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix(Matrix);

impl DistMatrix {
    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Off-diagonal distances `d_ij`, `i < j`, in row order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            out.extend_from_slice(&self.0.row(i)[i + 1..]);
        }
        out
    }

    /// Wraps a precomputed matrix after checking symmetry, sign and the zero diagonal.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if !m.is_symmetric() {
            return Err(KseError::input("distance matrix must be square and symmetric"));
        }
        for i in 0..m.rows() {
            if m[(i, i)] != 0.0 {
                return Err(KseError::input("distance matrix must have a zero diagonal"));
            }
        }
        if m.as_slice().iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(KseError::input("distances must be finite and nonnegative"));
        }
        Ok(DistMatrix(m))
    }
}

/// All pairwise squared distances `||x_i - x_j||^2`.
///
/// Each pair is computed once by explicit subtraction and mirrored, so the
/// result is exactly symmetric and near-duplicates do not cancel.
pub fn pairwise_sq_dists(x: &DataMatrix) -> Result<DistMatrix> {
    let n = x.n_samples();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.sample(i);
            (i + 1..n)
                .map(|j| {
                    xi.iter()
                        .zip(x.sample(j))
                        .map(|(a, b)| {
                            let d = a - b;
                            d * d
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut d = Matrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    if !d.all_finite() {
        return Err(KseError::input("squared distances overflow; rescale the data"));
    }
    Ok(DistMatrix(d))
}

/// Symmetric kernel matrix together with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Matrix,
    bandwidth: Option<f64>,
    spec: Option<KernelSpec>,
}

impl KernelMatrix {
    /// Wraps an arbitrary symmetric matrix, e.g. a hand-built affinity.
    pub fn from_values(values: Matrix) -> Result<Self> {
        if !values.is_symmetric() {
            return Err(KseError::input("kernel matrix must be square and symmetric"));
        }
        if values.rows() == 0 {
            return Err(KseError::input("kernel matrix must be non-empty"));
        }
        if !values.all_finite() {
            return Err(KseError::input("kernel matrix has non-finite entries"));
        }
        Ok(KernelMatrix {
            values,
            bandwidth: None,
            spec: None,
        })
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn bandwidth(&self) -> Option<f64> {
        self.bandwidth
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        self.spec.as_ref()
    }

    /// `n^{-1} K`.
    pub fn scaled_by_n(&self) -> Matrix {
        self.values.scale(1.0 / self.n() as f64)
    }
}

/// `K(i, j) = f(||x_i - x_j|| / sqrt(h))`.
pub fn kernel_matrix(x: &DataMatrix, spec: &KernelSpec, h: f64) -> Result<KernelMatrix> {
    check_bandwidth(h)?;
    spec.validate()?;
    let d = pairwise_sq_dists(x)?;
    kernel_matrix_from_dists(&d, spec, h)
}

/// Kernel matrix from precomputed squared distances.
pub fn kernel_matrix_from_dists(d: &DistMatrix, spec: &KernelSpec, h: f64) -> Result<KernelMatrix> {
    check_bandwidth(h)?;
    spec.validate()?;
    let n = d.n();
    let f0 = spec.f0();
    let inv_sqrt_h = 1.0 / h.sqrt();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = d.matrix().row(i);
            row[i + 1..]
                .iter()
                .map(|&dij| spec.eval_unchecked(dij.sqrt() * inv_sqrt_h))
                .collect()
        })
        .collect();
    let mut k = Matrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        k[(i, i)] = f0;
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        values: k,
        bandwidth: Some(h),
        spec: Some(spec.clone()),
    })
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(KseError::input(format!("bandwidth must be positive and finite, got {h}")))
    }
}
