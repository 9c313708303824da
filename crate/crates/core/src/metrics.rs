//! Evaluation metrics: spectral error between kernel matrices, eigenvector
//! alignment, clustering and ordering scores, and k-means.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{KseError, Result};
use crate::matrix::Matrix;
use crate::spectral::symmetric_eigenvalues;

/// Above this size the spectral norm is computed by power iteration.
pub const DENSE_SPECTRAL_NORM_LIMIT: usize = 2000;
pub const POWER_ITERATION_TOL: f64 = 1e-9;
pub const POWER_ITERATION_MAX: usize = 10_000;

/// Operator norm `||A - B||` of the difference of two symmetric matrices.
pub fn spectral_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() || !a.is_square() {
        return Err(KseError::input(format!(
            "spectral error needs equal square matrices, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let diff = a.sub(b)?;
    if diff.rows() <= DENSE_SPECTRAL_NORM_LIMIT {
        spectral_norm_dense(&diff)
    } else {
        spectral_norm_power(&diff)
    }
}

/// Largest absolute eigenvalue from a full symmetric eigensolve.
pub fn spectral_norm_dense(m: &Matrix) -> Result<f64> {
    let eigs = symmetric_eigenvalues(m)?;
    Ok(eigs.first().map_or(0.0, |l| l.abs()).max(eigs.last().map_or(0.0, |l| l.abs())))
}

/// Largest absolute eigenvalue of a symmetric matrix by power iteration.
///
/// Uses `||M x||` for unit `x` as the estimate, which converges to the
/// spectral norm even when `+lambda` and `-lambda` are both dominant.
pub fn spectral_norm_power(m: &Matrix) -> Result<f64> {
    if !m.is_square() || m.rows() == 0 {
        return Err(KseError::input("power iteration needs a non-empty square matrix"));
    }
    let n = m.rows();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i % 7) as f64)).collect();
    normalize(&mut x);
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATION_MAX {
        let mut y = par_matvec(m, &x);
        let norm = normalize(&mut y);
        if norm == 0.0 {
            return Ok(0.0);
        }
        let converged = (norm - estimate).abs() <= POWER_ITERATION_TOL * norm.max(1e-300);
        estimate = norm;
        x = y;
        if converged {
            return Ok(estimate);
        }
    }
    Err(KseError::Numerical(format!(
        "power iteration did not converge in {POWER_ITERATION_MAX} iterations"
    )))
}

fn par_matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .into_par_iter()
        .map(|i| m.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
    norm
}

/// `<u, v>^2` for unit vectors; insensitive to the sign of either.
pub fn eigvec_alignment(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(KseError::input("vectors differ in length"));
    }
    for (name, w) in [("u", u), ("v", v)] {
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(KseError::input(format!("{name} is not a unit vector (norm {norm})")));
        }
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot * dot).min(1.0))
}

/// Cluster assignment, one non-negative id per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition(pub Vec<usize>);

impl Partition {
    /// Converts float labels (as read from CSV) to ids; they must be non-negative integers.
    pub fn from_labels(labels: &[f64]) -> Result<Self> {
        labels
            .iter()
            .map(|&l| {
                if l >= 0.0 && l.fract() == 0.0 && l < u32::MAX as f64 {
                    Ok(l as usize)
                } else {
                    Err(KseError::input(format!("label {l} is not a non-negative integer")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Partition)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        let mut ids = self.0.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Ranks of items, a permutation of `0..n` or real scores with ties.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordering(Vec<f64>);

impl Ordering {
    /// Converts scores to ranks; tied scores share their average rank.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(KseError::input("scores must be finite"));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
        let mut ranks = vec![0.0; scores.len()];
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && scores[order[end]] == scores[order[start]] {
                end += 1;
            }
            let avg = (start + end - 1) as f64 / 2.0;
            for &i in &order[start..end] {
                ranks[i] = avg;
            }
            start = end;
        }
        Ok(Ordering(ranks))
    }

    pub fn ranks(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Kendall's tau maximized over the sign of `scores`, for orderings read off
/// an eigenvector whose sign is arbitrary.
pub fn kendall_tau_either_sign(scores: &[f64], truth: &[f64]) -> Result<f64> {
    let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
    Ok(kendall_tau(scores, truth)?.max(kendall_tau(&flipped, truth)?))
}

fn choose2(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

/// Fraction of sample pairs on which two partitions agree (both together or both apart).
pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    if a.len() != b.len() {
        return Err(KseError::input(format!(
            "partitions differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.0.iter().zip(&b.0) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let together_both: f64 = joint.values().map(|&c| choose2(c)).sum();
    let together_a: f64 = ca.values().map(|&c| choose2(c)).sum();
    let together_b: f64 = cb.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let apart_both = total - together_a - together_b + together_both;
    Ok((together_both + apart_both) / total)
}

/// Mean silhouette of the points under the given labels (Euclidean distance).
/// Samples in singleton clusters contribute 0, as do samples with `a = b = 0`.
pub fn silhouette(points: &Matrix, labels: &Partition) -> Result<f64> {
    let n = points.rows();
    if labels.len() != n {
        return Err(KseError::input("label count does not match point count"));
    }
    let mut ids: Vec<usize> = labels.0.clone();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(KseError::input("silhouette needs at least two clusters"));
    }
    let slot: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(s, &id)| (id, s)).collect();
    let assign: Vec<usize> = labels.0.iter().map(|l| slot[l]).collect();
    let mut sizes = vec![0usize; ids.len()];
    for &s in &assign {
        sizes[s] += 1;
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = assign[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; ids.len()];
            for j in 0..n {
                if j != i {
                    let d: f64 = points
                        .row(i)
                        .iter()
                        .zip(points.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    sums[assign[j]] += d;
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..ids.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

/// Kendall rank correlation (tau-b, which reduces to tau-a without ties).
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(KseError::input(format!(
            "orderings differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(KseError::input("Kendall's tau needs at least two items"));
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_a, mut ties_b) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            match (da == 0.0, db == 0.0) {
                (true, true) => {
                    ties_a += 1;
                    ties_b += 1;
                }
                (true, false) => ties_a += 1,
                (false, true) => ties_b += 1,
                (false, false) => {
                    if (da > 0.0) == (db > 0.0) {
                        concordant += 1;
                    } else {
                        discordant += 1;
                    }
                }
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let denom = ((pairs - ties_a as f64) * (pairs - ties_b as f64)).sqrt();
    if denom == 0.0 {
        return Err(KseError::degenerate("an ordering is constant"));
    }
    Ok((concordant - discordant) as f64 / denom)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Angles of 2-D points around their coordinate-wise median.
pub fn embedding_angles(points: &Matrix) -> Result<Vec<f64>> {
    if points.cols() != 2 {
        return Err(KseError::input(format!(
            "angle extraction needs a 2-column embedding, got {}",
            points.cols()
        )));
    }
    let mx = median(&mut points.column(0));
    let my = median(&mut points.column(1));
    Ok((0..points.rows())
        .map(|i| (points[(i, 1)] - my).atan2(points[(i, 0)] - mx))
        .collect())
}

/// 0-based ranks, ties broken by position.
fn ordinal_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r;
    }
    ranks
}

/// Kendall's tau between a cyclic order and the truth, maximized over all
/// rotations of the cycle and both orientations.
pub fn circular_kendall(angles: &[f64], truth: &[f64]) -> Result<f64> {
    let n = angles.len();
    if n < 3 {
        return Err(KseError::input("circular Kendall's tau needs at least three items"));
    }
    if truth.len() != n {
        return Err(KseError::input("angle and truth lengths differ"));
    }
    if angles.iter().all(|&a| a == angles[0]) {
        return Err(KseError::degenerate("all angles are equal"));
    }
    let ranks = ordinal_ranks(angles);
    let candidates: Vec<(usize, bool)> = (0..n).flat_map(|s| [(s, false), (s, true)]).collect();
    let taus = candidates
        .par_iter()
        .map(|&(shift, reversed)| {
            let shifted: Vec<f64> = ranks
                .iter()
                .map(|&r| {
                    let r = if reversed { n - 1 - r } else { r };
                    ((r + shift) % n) as f64
                })
                .collect();
            kendall_tau(&shifted, truth)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(taus.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Partition,
    pub centroids: Matrix,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from a seeded k-means++ start.
///
/// Ties in the assignment step go to the lowest centroid index. An emptied
/// cluster is reseeded with the point farthest from its current centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(KseError::input(format!("k must be in 1..={n}, got {k}")));
    }
    if !points.all_finite() {
        return Err(KseError::input("points contain non-finite values"));
    }
    let dim = points.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Matrix::zeros(k, dim);

    // k-means++ seeding.
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let assignment: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best = (0, f64::INFINITY);
                for c in 0..k {
                    let d = sq_dist(points.row(i), centroids.row(c));
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best
            })
            .collect();
        let changed = assignment.iter().zip(&labels).any(|((c, _), l)| c != l);
        for (l, (c, _)) in labels.iter_mut().zip(&assignment) {
            *l = *c;
        }
        repair_empty_clusters(points, &centroids, &mut labels, k);
        centroids = update_centroids(points, &labels, k, &centroids);
        let objective: f64 = (0..n).map(|i| sq_dist(points.row(i), centroids.row(labels[i]))).sum();
        if let Some(&prev) = history.last() {
            debug_assert!(
                objective <= prev * (1.0 + 1e-12) + 1e-12,
                "k-means objective increased: {prev} -> {objective}"
            );
        }
        history.push(objective);
        if !changed {
            break;
        }
    }
    Ok(KMeansResult {
        labels: Partition(labels),
        centroids,
        objective_history: history,
        iterations,
    })
}

fn repair_empty_clusters(points: &Matrix, centroids: &Matrix, labels: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        // Farthest point among clusters that can spare one.
        let far = (0..points.rows())
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| (i, sq_dist(points.row(i), centroids.row(labels[i]))))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        match far {
            Some((i, _)) => labels[i] = empty,
            None => return,
        }
    }
}

fn update_centroids(points: &Matrix, labels: &[usize], k: usize, previous: &Matrix) -> Matrix {
    let dim = points.cols();
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &x) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            sums.row_mut(c).copy_from_slice(previous.row(c));
        } else {
            for s in sums.row_mut(c) {
                *s /= count as f64;
            }
        }
    }
    sums
}
