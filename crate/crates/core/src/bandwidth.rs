//! Percentile bandwidth selection and the resampling selector for the percentile.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KseError, Result};
use crate::kernels::{kernel_matrix_from_dists, pairwise_sq_dists, DistMatrix, KernelSpec};
use crate::matrix::DataMatrix;
use crate::spectral::eigen::symmetric_eigenvalues;

/// Percentiles evaluated by the resampling selector when none are given.
pub const DEFAULT_OMEGA_GRID: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
/// Default eigen-ratio threshold `s`.
pub const DEFAULT_RATIO_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    /// Selected bandwidth `h_n`, the `order_index`-th smallest pairwise squared distance.
    pub h: f64,
    pub omega: f64,
    /// Number of pairs `n(n-1)/2`.
    pub pairs: usize,
    /// 1-based order statistic `k`.
    pub order_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaSelection {
    pub omega: f64,
    pub grid: Vec<f64>,
    /// Eigen-ratio count `k(omega_i)` for each grid entry.
    pub counts: Vec<usize>,
    pub ratio_threshold: f64,
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega < 1.0 {
        Ok(())
    } else {
        Err(KseError::input(format!("omega must lie in (0, 1), got {omega}")))
    }
}

/// Fraction of pairs `i < j` with `d_ij <= t`.
pub fn empirical_cdf(d: &DistMatrix, t: f64) -> Result<f64> {
    let n = d.n();
    if n < 2 {
        return Err(KseError::input("empirical CDF needs at least two samples"));
    }
    let pairs = n * (n - 1) / 2;
    let mut count = 0usize;
    for i in 0..n {
        count += d.matrix().row(i)[i + 1..].iter().filter(|&&dij| dij <= t).count();
    }
    Ok(count as f64 / pairs as f64)
}

/// Smallest `k` with `k / m >= omega`, evaluated in the same floating-point
/// form as [`empirical_cdf`] so that `cdf(h) >= omega` always holds.
fn order_index(omega: f64, m: usize) -> usize {
    let mf = m as f64;
    let mut k = ((omega * mf).ceil() as usize).clamp(1, m);
    while k > 1 && (k - 1) as f64 / mf >= omega {
        k -= 1;
    }
    while k < m && (k as f64) / mf < omega {
        k += 1;
    }
    k
}

/// The generalized inverse of the pairwise-distance CDF at `omega`: the
/// smallest observed `t` with `cdf(t) >= omega`.
pub fn percentile_bandwidth(d: &DistMatrix, omega: f64) -> Result<BandwidthResult> {
    check_omega(omega)?;
    let n = d.n();
    if n < 2 {
        return Err(KseError::input("bandwidth selection needs at least two samples"));
    }
    let mut dists = d.upper_triangle();
    let m = dists.len();
    if dists.iter().all(|&x| x == 0.0) {
        return Err(KseError::degenerate("all pairwise distances are zero"));
    }
    let k = order_index(omega, m);
    let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    let h = *kth;
    if h <= 0.0 {
        return Err(KseError::degenerate(format!(
            "the {omega}-percentile of pairwise distances is zero (too many duplicate samples)"
        )));
    }
    Ok(BandwidthResult {
        h,
        omega,
        pairs: m,
        order_index: k,
    })
}

/// Convenience wrapper computing distances first.
pub fn percentile_bandwidth_of(x: &DataMatrix, omega: f64) -> Result<BandwidthResult> {
    check_omega(omega)?;
    percentile_bandwidth(&pairwise_sq_dists(x)?, omega)
}

/// Largest `k` (1-based) with `lambda_k / lambda_{k+1} >= 1 + s`, or 0.
///
/// A zero successor counts as an infinite ratio when `lambda_k > 0`.
pub fn eigen_ratio_count(eigs: &[f64], s: f64) -> Result<usize> {
    if eigs.len() < 2 {
        return Err(KseError::input("eigen-ratio count needs at least two eigenvalues"));
    }
    if s.is_nan() || s <= 0.0 {
        return Err(KseError::input(format!("ratio threshold s must be positive, got {s}")));
    }
    if eigs.windows(2).any(|w| w[0] < w[1]) {
        return Err(KseError::input("eigenvalues must be sorted in descending order"));
    }
    let mut best = 0;
    for k in 0..eigs.len() - 1 {
        let (a, b) = (eigs[k], eigs[k + 1]);
        let passes = if b > 0.0 {
            a / b >= 1.0 + s
        } else {
            a > 0.0
        };
        if passes {
            best = k + 1;
        }
    }
    Ok(best)
}

/// Resampling choice of the percentile: for each candidate, count the
/// separated leading eigenvalues of the kernel matrix and take the largest
/// candidate among those with the highest count.
pub fn select_omega_resampling(
    x: &DataMatrix,
    spec: &KernelSpec,
    grid: &[f64],
    s: f64,
) -> Result<OmegaSelection> {
    if grid.is_empty() {
        return Err(KseError::input("omega grid must be non-empty"));
    }
    grid.iter().try_for_each(|&w| check_omega(w))?;
    spec.validate()?;
    let d = pairwise_sq_dists(x)?;
    let counts = grid
        .par_iter()
        .map(|&omega| {
            let bw = percentile_bandwidth(&d, omega)?;
            let k = kernel_matrix_from_dists(&d, spec, bw.h)?;
            // Round-off can leave tiny negative eigenvalues of a PSD kernel.
            let eigs: Vec<f64> = symmetric_eigenvalues(k.values())?
                .into_iter()
                .map(|l| l.max(0.0))
                .collect();
            eigen_ratio_count(&eigs, s)
        })
        .collect::<Result<Vec<usize>>>()?;
    let best = *counts.iter().max().expect("grid is non-empty");
    let omega = grid
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c == best)
        .map(|(&w, _)| w)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(OmegaSelection {
        omega,
        grid: grid.to_vec(),
        counts,
        ratio_threshold: s,
    })
}
