//! Kernel-spectral embedding of high-dimensional noisy data with a
//! percentile-chosen bandwidth.
//!
//! The pipeline: pick the bandwidth `h` as the `omega`-percentile of pairwise
//! squared distances, build `K(i, j) = f(|y_i - y_j| / sqrt(h))`, and embed with
//! the eigenvalue-weighted eigenvectors of `K / n` on a chosen index set.

pub mod bandwidth;
pub mod baselines;
pub mod bench;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod io;
pub mod kernels;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod report;
pub mod spectral;

pub use bandwidth::{percentile_bandwidth, select_omega_resampling, BandwidthResult, OmegaSelection};
pub use baselines::{baseline_embed, BaselineMethod};
pub use datagen::{simulate, Manifold, SimulatedPair, SimulationConfig};
pub use error::{KseError, Result};
pub use kernels::{kernel_matrix, pairwise_sq_dists, DistMatrix, KernelMatrix, KernelSpec, MixMode};
pub use matrix::{DataMatrix, Matrix};
pub use metrics::{kendall_tau, kmeans, rand_index, silhouette, spectral_error, Partition};
pub use report::RunReport;
pub use spectral::{embed, symmetric_eigen, BandwidthChoice, EigenDecomposition, EmbedModel, Embedding, IndexSet};
