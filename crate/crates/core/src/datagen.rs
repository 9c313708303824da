//! Simulation designs: latent manifold samplers, the additive Gaussian noise
//! model with zero-padded ambient embedding, noiseless references and the
//! theoretical rate helpers.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, purpose,
//! index)`, so sample `i` is the same regardless of how many other samples
//! are drawn or in which order.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::percentile_bandwidth_of;
use crate::error::{KseError, Result};
use crate::io::read_csv_matrix;
use crate::matrix::{DataMatrix, Matrix};

const STREAM_LATENT: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_ROTATION: u64 = 3;

/// Independent reproducible stream for `(seed, purpose, index)`.
fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) ^ index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    /// Two disc eyes, an outer ring and a lower-half mouth arc in the plane.
    Smiley,
    /// Ring radius 2, tube radius 0.8 in R^3.
    Torus,
    /// Cassini-oval curve in R^3.
    Cassini,
    /// Uniform mixture of spheres of radii 1..6 in R^6.
    NestedSpheres,
    /// Six unit-covariance Gaussians centered at the basis vectors of R^6.
    Gmm6,
}

impl Manifold {
    pub const ALL: [Manifold; 5] = [
        Manifold::Smiley,
        Manifold::Torus,
        Manifold::Cassini,
        Manifold::NestedSpheres,
        Manifold::Gmm6,
    ];

    /// Intrinsic coordinate dimension `r` of the latent samples.
    pub fn latent_dim(self) -> usize {
        match self {
            Manifold::Smiley => 2,
            Manifold::Torus | Manifold::Cassini => 3,
            Manifold::NestedSpheres | Manifold::Gmm6 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Manifold::Smiley => "smiley",
            Manifold::Torus => "torus",
            Manifold::Cassini => "cassini",
            Manifold::NestedSpheres => "nested_spheres",
            Manifold::Gmm6 => "gmm6",
        }
    }

    /// Whether labels are cluster ids (as opposed to a continuous parameter).
    pub fn has_cluster_labels(self) -> bool {
        matches!(self, Manifold::Smiley | Manifold::NestedSpheres | Manifold::Gmm6)
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Manifold {
    type Err = KseError;

    fn from_str(s: &str) -> Result<Self> {
        Manifold::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('_', "-") == s)
            .ok_or_else(|| KseError::input(format!("unknown manifold '{s}'")))
    }
}

/// Latent samples with per-sample labels: a region/cluster id, or the
/// angle parameter for the torus (ring angle) and the Cassini oval.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub points: Matrix,
    pub labels: Vec<f64>,
}

fn in_smiley(x: f64, y: f64) -> Option<usize> {
    let r2 = x * x + y * y;
    if (x - 0.5).powi(2) + (y - 0.5).powi(2) <= 0.1 {
        Some(0)
    } else if (x + 0.5).powi(2) + (y - 0.5).powi(2) <= 0.1 {
        Some(1)
    } else if (1.8..=2.0).contains(&r2) {
        Some(2)
    } else if (0.9..=1.1).contains(&r2) && y <= 0.0 {
        Some(3)
    } else {
        None
    }
}

/// Region index (0: right eye, 1: left eye, 2: outer ring, 3: mouth) of a
/// planar point, if it lies on the smiley face.
pub fn smiley_region(x: f64, y: f64) -> Option<usize> {
    in_smiley(x, y)
}

fn sample_one(m: Manifold, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    match m {
        Manifold::Smiley => {
            let bound = 2f64.sqrt();
            loop {
                let x = rng.random_range(-bound..bound);
                let y = rng.random_range(-bound..bound);
                if let Some(region) = in_smiley(x, y) {
                    return (vec![x, y], region as f64);
                }
            }
        }
        Manifold::Torus => {
            // Area element is proportional to (2 + 0.8 cos u).
            let u = loop {
                let u = rng.random_range(0.0..2.0 * PI);
                let accept: f64 = rng.random_range(0.0..2.8);
                if accept <= 2.0 + 0.8 * u.cos() {
                    break u;
                }
            };
            let v = rng.random_range(0.0..2.0 * PI);
            let ring = 2.0 + 0.8 * u.cos();
            (vec![ring * v.cos(), ring * v.sin(), 0.8 * u.sin()], v)
        }
        Manifold::Cassini => {
            let t: f64 = rng.random_range(0.0..2.0 * PI);
            let c = (2.0 * t).cos();
            let r = (c + (c * c + 0.2).sqrt()).sqrt();
            (vec![r * t.cos(), r * t.sin(), 0.3 * (t + PI).sin()], t)
        }
        Manifold::NestedSpheres => {
            let k = rng.random_range(0..6usize);
            let g: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let radius = (k + 1) as f64;
            (g.iter().map(|x| radius * x / norm).collect(), k as f64)
        }
        Manifold::Gmm6 => {
            let k = rng.random_range(0..6usize);
            let mut x: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            x[k] += 1.0;
            (x, k as f64)
        }
    }
}

/// `n` i.i.d. draws from the named latent distribution.
pub fn sample_manifold(m: Manifold, n: usize, seed: u64) -> Result<LatentSample> {
    if n == 0 {
        return Err(KseError::input("sample size must be positive"));
    }
    let draws: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| sample_one(m, &mut stream(seed, STREAM_LATENT, i as u64)))
        .collect();
    let r = m.latent_dim();
    let mut points = Matrix::zeros(n, r);
    let mut labels = Vec::with_capacity(n);
    for (i, (x, l)) in draws.into_iter().enumerate() {
        points.row_mut(i).copy_from_slice(&x);
        labels.push(l);
    }
    Ok(LatentSample { points, labels })
}

/// Reads an external point cloud (e.g. the mammoth) to use as latent samples.
pub fn load_pointcloud(path: &Path, has_header: bool) -> Result<Matrix> {
    read_csv_matrix(path, has_header)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    /// Ambient dimension; `None` means `floor(n / 5)`.
    pub p: Option<usize>,
    /// Signal scale `n^scale_exponent` unless `scale` is set.
    pub scale_exponent: f64,
    pub scale: Option<f64>,
    pub sigma: f64,
    pub seed: u64,
    pub rotate: bool,
}

impl SimulationConfig {
    /// Defaults of the manifold experiments: `p = floor(n/5)`, scale `n^{2/3}`, unit noise.
    pub fn new(n: usize, seed: u64) -> Self {
        SimulationConfig {
            n,
            p: None,
            scale_exponent: 2.0 / 3.0,
            scale: None,
            sigma: 1.0,
            seed,
            rotate: false,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.p.unwrap_or(self.n / 5)
    }

    pub fn signal_scale(&self) -> f64 {
        self.scale.unwrap_or_else(|| (self.n as f64).powf(self.scale_exponent))
    }

    fn validate(&self, r: usize) -> Result<()> {
        if self.n < 2 {
            return Err(KseError::input("simulation needs n >= 2"));
        }
        let p = self.ambient_dim();
        if p < r {
            return Err(KseError::input(format!(
                "ambient dimension p = {p} is below the latent dimension r = {r}"
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(KseError::input(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        let s = self.signal_scale();
        if !(s.is_finite() && s > 0.0) {
            return Err(KseError::input(format!("signal scale must be positive, got {s}")));
        }
        Ok(())
    }
}

/// Clean samples `X`, noisy observations `Y = X + Z` and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPair {
    pub clean: DataMatrix,
    pub noisy: DataMatrix,
    pub labels: Vec<f64>,
}

/// Uniformly random `p x p` orthogonal matrix (QR of a Gaussian matrix with
/// the sign of `R`'s diagonal absorbed into `Q`).
pub fn random_orthogonal(p: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, STREAM_ROTATION, 0);
    // Columns as rows for contiguous Gram-Schmidt.
    let mut cols: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..p {
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj: f64 = done[k].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                for (x, q) in rest[0].iter_mut().zip(&done[k]) {
                    *x -= proj * q;
                }
            }
        }
        let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    let mut q = Matrix::zeros(p, p);
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            q[(i, j)] = v;
        }
    }
    q
}

/// Pads scaled latent points with zeros to `p` coordinates, adds
/// `N(0, sigma^2)` noise and optionally rotates both by a common orthogonal matrix.
pub fn embed_and_noise(latent: &LatentSample, config: &SimulationConfig) -> Result<SimulatedPair> {
    let r = latent.points.cols();
    let n = latent.points.rows();
    if n != config.n {
        return Err(KseError::input(format!(
            "latent sample has {n} points but the configuration asks for {}",
            config.n
        )));
    }
    config.validate(r)?;
    let p = config.ambient_dim();
    let scale = config.signal_scale();
    let mut clean = Matrix::zeros(n, p);
    for i in 0..n {
        for (j, &v) in latent.points.row(i).iter().enumerate() {
            clean[(i, j)] = scale * v;
        }
    }
    let sigma = config.sigma;
    let noise_rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if sigma == 0.0 {
                return vec![0.0; p];
            }
            let mut rng = stream(config.seed, STREAM_NOISE, i as u64);
            (0..p).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    let mut noisy = clean.clone();
    for (i, z) in noise_rows.iter().enumerate() {
        for (y, dz) in noisy.row_mut(i).iter_mut().zip(z) {
            *y += dz;
        }
    }
    if config.rotate {
        let q = random_orthogonal(p, config.seed);
        clean = clean.matmul(&q)?;
        noisy = noisy.matmul(&q)?;
    }
    Ok(SimulatedPair {
        clean: DataMatrix::new(clean)?,
        noisy: DataMatrix::new(noisy)?,
        labels: latent.labels.clone(),
    })
}

/// Samples a manifold and applies the noise model in one step.
pub fn simulate(m: Manifold, config: &SimulationConfig) -> Result<SimulatedPair> {
    let latent = sample_manifold(m, config.n, config.seed)?;
    embed_and_noise(&latent, config)
}

/// The bandwidth rule applied to clean samples.
pub fn noiseless_bandwidth(x: &DataMatrix, omega: f64) -> Result<f64> {
    Ok(percentile_bandwidth_of(x, omega)?.h)
}

/// `sigma / sqrt(sum theta) + sigma^2 p / sum theta`.
pub fn psi_rate(sigma: f64, thetas: &[f64], p: usize) -> Result<f64> {
    if thetas.is_empty() {
        return Err(KseError::input("signal strengths must be non-empty"));
    }
    let total: f64 = thetas.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(KseError::input("total signal strength must be positive"));
    }
    if sigma.is_nan() || sigma < 0.0 {
        return Err(KseError::input("sigma must be nonnegative"));
    }
    Ok(sigma / total.sqrt() + sigma * sigma * p as f64 / total)
}

/// Convergence exponent from the kernel's Hölder parameters `nu0`, `tau0`.
pub fn rate_exponent(nu0: f64, tau0: f64) -> Result<f64> {
    if !(tau0 > 0.0 && tau0 <= 1.0) {
        return Err(KseError::input(format!("tau0 must lie in (0, 1], got {tau0}")));
    }
    if nu0.is_nan() || nu0 < 0.0 {
        return Err(KseError::input(format!("nu0 must be nonnegative, got {nu0}")));
    }
    Ok(if nu0 >= tau0 { tau0 } else { (tau0 + nu0) / 2.0 })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::kernels::pairwise_sq_dists;

    #[test]
    fn torus_points_on_surface() {
        let s = sample_manifold(Manifold::Torus, 500, 7).unwrap();
        for i in 0..500 {
            let x = s.points.row(i);
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!(((rho - 2.0).powi(2) + x[2] * x[2] - 0.64).abs() < 1e-10);
        }
    }

    #[test]
    fn nested_sphere_norms_match_labels() {
        let s = sample_manifold(Manifold::NestedSpheres, 600, 3).unwrap();
        for i in 0..600 {
            let norm = s.points.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - (s.labels[i] + 1.0)).abs() < 1e-10);
        }
        let mut counts = [0usize; 6];
        for l in &s.labels {
            counts[*l as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 60));
    }

    #[test]
    fn smiley_points_in_regions() {
        let s = sample_manifold(Manifold::Smiley, 1000, 1).unwrap();
        for i in 0..1000 {
            let x = s.points.row(i);
            assert_eq!(smiley_region(x[0], x[1]), Some(s.labels[i] as usize));
        }
    }

    #[test]
    fn cassini_parameterization() {
        let s = sample_manifold(Manifold::Cassini, 200, 2).unwrap();
        for i in 0..200 {
            let t = s.labels[i];
            let x = s.points.row(i);
            assert!((x[2] + 0.3 * t.sin()).abs() < 1e-12);
            assert!((0.0..2.0 * PI).contains(&t));
        }
    }

    #[test]
    fn manifold_names() {
        for m in Manifold::ALL {
            assert_eq!(m.name().parse::<Manifold>().unwrap(), m);
        }
        assert!("unknown".parse::<Manifold>().is_err());
    }

    #[test]
    fn per_sample_streams_are_prefix_stable() {
        let a = sample_manifold(Manifold::Torus, 10, 5).unwrap();
        let b = sample_manifold(Manifold::Torus, 20, 5).unwrap();
        for i in 0..10 {
            assert_eq!(a.points.row(i), b.points.row(i));
        }
    }

    #[test]
    fn noiseless_config() {
        let mut cfg = SimulationConfig::new(50, 9);
        cfg.sigma = 0.0;
        let pair = simulate(Manifold::Smiley, &cfg).unwrap();
        assert_eq!(pair.clean, pair.noisy);
        assert_eq!(pair.clean.n_features(), 10);
        let x = pair.clean.sample(3);
        assert!(x[2..].iter().all(|&v| v == 0.0));
        let h = noiseless_bandwidth(&pair.clean, 0.5).unwrap();
        assert_eq!(h, percentile_bandwidth_of(&pair.noisy, 0.5).unwrap().h);
        let scaled = noiseless_bandwidth(&pair.clean.scaled(3.0).unwrap(), 0.5).unwrap();
        assert_relative_eq!(scaled, 9.0 * h, max_relative = 1e-12);
    }

    #[test]
    fn rotation_preserves_distances() {
        let mut cfg = SimulationConfig::new(60, 4);
        let plain = simulate(Manifold::Torus, &cfg).unwrap();
        cfg.rotate = true;
        let rotated = simulate(Manifold::Torus, &cfg).unwrap();
        let d1 = pairwise_sq_dists(&plain.noisy).unwrap();
        let d2 = pairwise_sq_dists(&rotated.noisy).unwrap();
        let scale = d1.matrix().as_slice().iter().fold(0.0f64, |m, x| m.max(*x));
        assert!(d1.matrix().max_abs_diff(d2.matrix()) <= 1e-8 * scale.max(1.0));

        let q = random_orthogonal(12, 8);
        let qtq = q.transpose().matmul(&q).unwrap();
        assert!(qtq.max_abs_diff(&Matrix::identity(12)) < 1e-12);
    }

    #[test]
    fn noise_energy_concentrates() {
        let cfg = SimulationConfig::new(500, 42);
        let pair = simulate(Manifold::Smiley, &cfg).unwrap();
        let p = cfg.ambient_dim() as f64;
        let mut total = 0.0;
        for i in 0..500 {
            total += pair
                .noisy
                .sample(i)
                .iter()
                .zip(pair.clean.sample(i))
                .map(|(y, x)| (y - x).powi(2))
                .sum::<f64>();
        }
        let mean = total / 500.0;
        assert!((mean - p).abs() < 3.0 * (2.0 * p).sqrt() / 500f64.sqrt());
    }

    #[test]
    fn config_errors() {
        let cfg = SimulationConfig::new(10, 1);
        // p = 2 < r = 3
        assert!(simulate(Manifold::Torus, &cfg).is_err());
        let latent = sample_manifold(Manifold::Smiley, 5, 1).unwrap();
        assert!(embed_and_noise(&latent, &cfg).is_err());
    }

    #[test]
    fn rate_helpers() {
        assert_eq!(psi_rate(0.0, &[5.0], 10).unwrap(), 0.0);
        assert_relative_eq!(psi_rate(1.0, &[100.0], 10).unwrap(), 0.2, epsilon = 1e-15);
        assert_relative_eq!(psi_rate(2.0, &[100.0, 300.0], 20).unwrap(), 0.3, epsilon = 1e-15);
        assert!(psi_rate(1.0, &[], 3).is_err());
        assert_eq!(rate_exponent(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(rate_exponent(0.0, 1.0).unwrap(), 0.5);
        assert_eq!(rate_exponent(0.5, 0.5).unwrap(), 0.5);
        assert!(rate_exponent(0.5, 1.5).is_err());
        assert!(rate_exponent(0.5, 0.0).is_err());
    }
}
