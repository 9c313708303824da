//! Simulation experiments behind the `bench` and `cluster` commands.

use serde::Serialize;

use crate::bandwidth::percentile_bandwidth_of;
use crate::baselines::{baseline_embed, BaselineMethod, DEFAULT_ZETA};
use crate::datagen::{simulate, Manifold, SimulationConfig};
use crate::error::{KseError, Result};
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::matrix::DataMatrix;
use crate::metrics::{kmeans, rand_index, spectral_error, Partition};
use crate::spectral::{BandwidthChoice, EmbedModel, IndexSet};

/// Seed of replicate `rep` at sample size `n`, derived from a base seed.
pub fn replicate_seed(base: u64, n: usize, rep: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((n as u64) << 20)
        .wrapping_add(rep as u64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub manifold: Manifold,
    pub kernel: KernelSpec,
    /// Second kernel evaluated on the same data; its error is divided by the primary one.
    pub compare: Option<KernelSpec>,
    pub omega: f64,
    pub seed: u64,
    pub sigma: f64,
    pub scale_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub seed: u64,
    /// Bandwidth from the noisy samples.
    pub h_noisy: f64,
    /// Bandwidth from the clean samples.
    pub h_clean: f64,
    /// `||K_n / n - K*_n / n||` for the primary kernel.
    pub error: f64,
    pub compare_error: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSummary {
    pub n: usize,
    pub median_error: f64,
    pub median_ratio: Option<f64>,
}

/// Spectral error of one kernel for a simulated pair at the given percentile.
pub fn kernel_error(clean: &DataMatrix, noisy: &DataMatrix, spec: &KernelSpec, h_noisy: f64, h_clean: f64) -> Result<f64> {
    let n = noisy.n_samples() as f64;
    let k = kernel_matrix(noisy, spec, h_noisy)?.values().scale(1.0 / n);
    let k_star = kernel_matrix(clean, spec, h_clean)?.values().scale(1.0 / n);
    spectral_error(&k, &k_star)
}

/// Spectral error between noisy and clean kernel matrices over sizes and replicates.
pub fn convergence_bench(cfg: &ConvergenceConfig) -> Result<(Vec<ConvergenceRecord>, Vec<SizeSummary>)> {
    if cfg.sizes.is_empty() || cfg.reps == 0 {
        return Err(KseError::input("bench needs at least one size and one replicate"));
    }
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for &n in &cfg.sizes {
        let mut errors = Vec::new();
        let mut ratios = Vec::new();
        for rep in 0..cfg.reps {
            let seed = replicate_seed(cfg.seed, n, rep);
            let sim_cfg = SimulationConfig {
                sigma: cfg.sigma,
                scale_exponent: cfg.scale_exponent,
                ..SimulationConfig::new(n, seed)
            };
            let pair = simulate(cfg.manifold, &sim_cfg)?;
            let h_noisy = percentile_bandwidth_of(&pair.noisy, cfg.omega)?.h;
            let h_clean = percentile_bandwidth_of(&pair.clean, cfg.omega)?.h;
            let error = kernel_error(&pair.clean, &pair.noisy, &cfg.kernel, h_noisy, h_clean)?;
            let compare_error = cfg
                .compare
                .as_ref()
                .map(|spec| kernel_error(&pair.clean, &pair.noisy, spec, h_noisy, h_clean))
                .transpose()?;
            let ratio = compare_error.map(|c| c / error);
            errors.push(error);
            ratios.extend(ratio);
            records.push(ConvergenceRecord {
                n,
                p: sim_cfg.ambient_dim(),
                rep,
                seed,
                h_noisy,
                h_clean,
                error,
                compare_error,
                ratio,
            });
        }
        summaries.push(SizeSummary {
            n,
            median_error: median(&errors),
            median_ratio: (!ratios.is_empty()).then(|| median(&ratios)),
        });
    }
    Ok((records, summaries))
}

/// Embedding method compared in clustering experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterMethod {
    /// Percentile-bandwidth kernel embedding.
    Proposed,
    /// Kernel embedding with the bandwidth fixed to the ambient dimension.
    ProposedFixedP,
    Kpca,
    Laplacian,
    Diffusion,
    Pca,
}

impl ClusterMethod {
    pub const ALL: [ClusterMethod; 6] = [
        ClusterMethod::Proposed,
        ClusterMethod::ProposedFixedP,
        ClusterMethod::Kpca,
        ClusterMethod::Laplacian,
        ClusterMethod::Diffusion,
        ClusterMethod::Pca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClusterMethod::Proposed => "proposed",
            ClusterMethod::ProposedFixedP => "proposed-hp",
            ClusterMethod::Kpca => "kpca",
            ClusterMethod::Laplacian => "laplacian",
            ClusterMethod::Diffusion => "diffusion",
            ClusterMethod::Pca => "pca",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        ClusterMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| KseError::input(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub method: ClusterMethod,
    pub kernel: KernelSpec,
    pub omega: f64,
    /// Index set for the kernel embedding; baselines use its size.
    pub dims: IndexSet,
    pub clusters: usize,
    pub seed: u64,
}

/// Embeds `y` with the configured method and clusters the embedding with k-means.
pub fn cluster_samples(y: &DataMatrix, cfg: &ClusterConfig) -> Result<Partition> {
    let embedding = match cfg.method {
        ClusterMethod::Proposed | ClusterMethod::ProposedFixedP => {
            let choice = if cfg.method == ClusterMethod::Proposed {
                BandwidthChoice::Percentile(cfg.omega)
            } else {
                BandwidthChoice::Fixed(y.n_features() as f64)
            };
            EmbedModel::fit(y, &cfg.kernel, choice)?.embedding(&cfg.dims)?
        }
        other => {
            let method = match other {
                ClusterMethod::Kpca => BaselineMethod::Kpca,
                ClusterMethod::Laplacian => BaselineMethod::LaplacianEigenmap,
                ClusterMethod::Diffusion => BaselineMethod::DiffusionMap { zeta: DEFAULT_ZETA },
                _ => BaselineMethod::Pca,
            };
            baseline_embed(method, y, &cfg.kernel, BandwidthChoice::Percentile(cfg.omega), cfg.dims.len())?
        }
    };
    Ok(kmeans(&embedding.matrix, cfg.clusters, cfg.seed, 300)?.labels)
}

/// Rand index of the clustering of `y` against known labels.
pub fn cluster_rand(y: &DataMatrix, truth: &Partition, cfg: &ClusterConfig) -> Result<(Partition, f64)> {
    let predicted = cluster_samples(y, cfg)?;
    let ri = rand_index(truth, &predicted)?;
    Ok((predicted, ri))
}
