//! Closed-form spectrum of the Gaussian-kernel integral operator under a
//! Gaussian sampling measure, plus a brute-force numerical counterpart.
//!
//! Convention: the operator kernel here is `exp(-(x - y)^2 / (2 h))`. The
//! embedding pipeline's Gaussian kernel `exp(-d^2 / h_main)` corresponds to
//! `h = h_main / 2`; use [`operator_bandwidth_from_main`] to convert.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{KseError, Result};
use crate::matrix::Matrix;
use crate::spectral::symmetric_eigenvalues;

/// Largest eigenfunction index evaluated.
pub const MAX_EIGENFUNCTION_INDEX: usize = 150;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(KseError::input(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Maps a bandwidth of the pipeline's Gaussian kernel `exp(-d^2/h_main)` to the
/// operator convention `exp(-d^2/(2h))`.
pub fn operator_bandwidth_from_main(h_main: f64) -> f64 {
    h_main / 2.0
}

/// Inverse of [`operator_bandwidth_from_main`].
pub fn main_bandwidth_from_operator(h_operator: f64) -> f64 {
    2.0 * h_operator
}

/// `beta = 2 sigma^2 / h`.
pub fn beta(sigma2: f64, h: f64) -> f64 {
    2.0 * sigma2 / h
}

fn leading_and_ratio(sigma2: f64, h: f64) -> (f64, f64) {
    let b = beta(sigma2, h);
    let denom = 1.0 + b + (1.0 + 2.0 * b).sqrt();
    ((2.0 / denom).sqrt(), b / denom)
}

/// Geometric decay ratio `q = gamma_{i+1} / gamma_i`.
pub fn decay_ratio(sigma2: f64, h: f64) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    check_positive("h", h)?;
    Ok(leading_and_ratio(sigma2, h).1)
}

/// `gamma_i = sqrt(2 / (1 + beta + sqrt(1 + 2 beta))) * q^i`.
pub fn gaussian_operator_eigenvalue(sigma2: f64, h: f64, i: usize) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    check_positive("h", h)?;
    let (g0, q) = leading_and_ratio(sigma2, h);
    Ok(g0 * q.powi(i as i32))
}

/// Physicists' Hermite polynomial `H_i(x)` by the three-term recurrence.
pub fn hermite(i: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if i == 0 {
        return prev;
    }
    let mut cur = 2.0 * x;
    for k in 1..i {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_i(z) / sqrt(2^i i!)`, evaluated by a recurrence on the normalized
/// polynomials so large `i` neither overflows nor loses the scale.
fn normalized_hermite(i: usize, z: f64) -> f64 {
    let mut prev = 1.0;
    if i == 0 {
        return prev;
    }
    let mut cur = 2f64.sqrt() * z;
    for k in 1..i {
        let kf = k as f64;
        let next = z * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `i`-th eigenfunction, normalized in `L^2(N(0, sigma^2))`.
pub fn gaussian_operator_eigenfunction(sigma2: f64, h: f64, i: usize, x: f64) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    check_positive("h", h)?;
    if i > MAX_EIGENFUNCTION_INDEX {
        return Err(KseError::Range(format!(
            "eigenfunction index {i} exceeds the supported maximum {MAX_EIGENFUNCTION_INDEX}"
        )));
    }
    let b = beta(sigma2, h);
    let root = (1.0 + 2.0 * b).sqrt();
    let sigma = sigma2.sqrt();
    let z = (0.25 + b / 2.0).powf(0.25) * x / sigma;
    let envelope = (-(x * x) / (2.0 * sigma2) * (root - 1.0) / 2.0).exp();
    Ok((1.0 + 2.0 * b).powf(0.125) * envelope * normalized_hermite(i, z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpectrum {
    pub sigma2: f64,
    pub h: f64,
    pub beta: f64,
    pub ratio: f64,
    /// `gamma_0 >= gamma_1 >= ...`, truncated once the remaining tail falls below `tail_tol`.
    pub eigenvalues: Vec<f64>,
}

impl OperatorSpectrum {
    /// Eigenvalues until the geometric tail `gamma_k / (1 - q)` drops under `tail_tol` of the total.
    pub fn new(sigma2: f64, h: f64, tail_tol: f64) -> Result<Self> {
        check_positive("sigma2", sigma2)?;
        check_positive("h", h)?;
        check_positive("tail_tol", tail_tol)?;
        let (g0, q) = leading_and_ratio(sigma2, h);
        let total = g0 / (1.0 - q);
        let mut eigenvalues = Vec::new();
        let mut g = g0;
        while g / (1.0 - q) > tail_tol * total && eigenvalues.len() < 100_000 {
            eigenvalues.push(g);
            g *= q;
        }
        Ok(OperatorSpectrum {
            sigma2,
            h,
            beta: beta(sigma2, h),
            ratio: q,
            eigenvalues,
        })
    }

    /// Sum of the retained eigenvalues.
    pub fn truncated_trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Population eigen-gap `min(gamma_{i-1} - gamma_i, gamma_i - gamma_{i+1})`;
    /// for `i = 0` only the gap below is defined.
    pub fn eigengap(&self, i: usize) -> Option<f64> {
        let g = &self.eigenvalues;
        let below = g.get(i + 1).map(|next| g[i] - next)?;
        if i == 0 {
            return Some(below);
        }
        Some((g[i - 1] - g[i]).min(below))
    }

    pub fn eigenfunction(&self, i: usize, x: f64) -> Result<f64> {
        gaussian_operator_eigenfunction(self.sigma2, self.h, i, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIndexSpectrum {
    pub sigma2s: Vec<f64>,
    pub h: f64,
    /// `(multi-index, eigenvalue)` sorted by descending eigenvalue.
    pub entries: Vec<(Vec<usize>, f64)>,
}

/// Products of the per-coordinate spectra over all multi-indices of total
/// degree at most `max_total_degree`.
pub fn product_operator_spectrum(sigma2s: &[f64], h: f64, max_total_degree: usize) -> Result<MultiIndexSpectrum> {
    if sigma2s.is_empty() {
        return Err(KseError::input("need at least one component variance"));
    }
    for &s in sigma2s {
        check_positive("sigma2", s)?;
    }
    check_positive("h", h)?;
    let per_coord: Vec<Vec<f64>> = sigma2s
        .iter()
        .map(|&s| {
            (0..=max_total_degree)
                .map(|i| gaussian_operator_eigenvalue(s, h, i))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    let mut idx = vec![0usize; sigma2s.len()];
    enumerate_multi_indices(&mut idx, 0, max_total_degree, &mut |mi| {
        let value: f64 = mi.iter().enumerate().map(|(j, &i)| per_coord[j][i]).product();
        entries.push((mi.to_vec(), value));
    });
    // Stable sort keeps lexicographic order among equal eigenvalues.
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(MultiIndexSpectrum {
        sigma2s: sigma2s.to_vec(),
        h,
        entries,
    })
}

fn enumerate_multi_indices(idx: &mut [usize], pos: usize, budget: usize, visit: &mut impl FnMut(&[usize])) {
    if pos == idx.len() {
        visit(idx);
        return;
    }
    for i in 0..=budget {
        idx[pos] = i;
        enumerate_multi_indices(idx, pos + 1, budget - i, visit);
    }
    idx[pos] = 0;
}

/// Top-`k` eigenvalues of `n^{-1} K*` for `n` i.i.d. draws from `N(0, sigma^2)`
/// with the operator kernel `exp(-d^2 / (2h))`.
pub fn nystrom_oracle(seed: u64, sigma2: f64, h: f64, n: usize, k: usize) -> Result<Vec<f64>> {
    check_positive("sigma2", sigma2)?;
    check_positive("h", h)?;
    if n == 0 || n > 5000 {
        return Err(KseError::input(format!("sample size must be in 1..=5000, got {n}")));
    }
    if k == 0 || k > n {
        return Err(KseError::input(format!("k must be in 1..={n}, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| KseError::input(e.to_string()))?;
    let xs: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let mut m = Matrix::zeros(n, n);
    let nf = n as f64;
    for i in 0..n {
        m[(i, i)] = 1.0 / nf;
        for j in 0..i {
            let d = xs[i] - xs[j];
            let v = (-d * d / (2.0 * h)).exp() / nf;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut eigs = symmetric_eigenvalues(&m)?;
    eigs.truncate(k);
    Ok(eigs)
}
