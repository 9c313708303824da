//! Command-line interface for the `kse` binary.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::bandwidth::{percentile_bandwidth_of, select_omega_resampling, DEFAULT_OMEGA_GRID, DEFAULT_RATIO_S};
use crate::bench::{cluster_rand, convergence_bench, ClusterConfig, ClusterMethod, ConvergenceConfig};
use crate::datagen::{simulate, Manifold, SimulationConfig};
use crate::error::{KseError, Result};
use crate::io::{format_number, read_csv_matrix, read_labels, write_atomic, write_csv_column, write_csv_matrix};
use crate::kernels::KernelSpec;
use crate::matrix::DataMatrix;
use crate::metrics::{rand_index, silhouette, Partition};
use crate::oracle::{decay_ratio, gaussian_operator_eigenvalue};
use crate::report::RunReport;
use crate::spectral::{BandwidthChoice, EmbedModel, IndexSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kse", version, about = "Kernel-spectral embedding of high-dimensional noisy data")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true, env = "KSE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed the samples of a CSV file.
    Embed(EmbedArgs),
    /// Simulate clean and noisy samples from a manifold.
    Simulate(SimulateArgs),
    /// Print the percentile bandwidth of a CSV file as JSON.
    Bandwidth(BandwidthArgs),
    /// Spectral error of noisy against clean kernel matrices across sample sizes.
    Bench(BenchArgs),
    /// Cluster an embedding with k-means and score it against labels.
    Cluster(ClusterArgs),
    /// Print the closed-form Gaussian operator eigenvalues.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// gaussian, laplacian, rq, matern32 or truncated.
    #[arg(long, default_value = "gaussian")]
    pub kernel: String,
    /// Length scale for laplacian, rq and matern32.
    #[arg(long, default_value_t = 1.0)]
    pub ell: f64,
    /// Shape parameter for rq and truncated.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec> {
        KernelSpec::from_name(&self.kernel, self.ell, self.alpha)
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// The input has a header row.
    #[arg(long)]
    pub header: bool,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Percentile of pairwise squared distances used as the bandwidth.
    #[arg(long, value_parser = parse_omega, conflicts_with_all = ["omega_auto", "h"])]
    pub omega: Option<f64>,
    /// Choose the percentile by the eigen-ratio resampling rule.
    #[arg(long, conflicts_with = "h")]
    pub omega_auto: bool,
    /// Candidate percentiles for --omega-auto.
    #[arg(long, value_delimiter = ',', value_parser = parse_omega, requires = "omega_auto")]
    pub omega_grid: Option<Vec<f64>>,
    /// Eigen-ratio threshold for --omega-auto.
    #[arg(long, value_parser = parse_positive, requires = "omega_auto")]
    pub ratio_s: Option<f64>,
    /// Fixed bandwidth instead of a percentile.
    #[arg(long, value_parser = parse_positive)]
    pub h: Option<f64>,
    /// 1-based eigenvector indices, e.g. 1,2.
    #[arg(long, default_value = "1,2")]
    pub dims: String,
    /// Embedding CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// All eigenvalues of K/n, one per row.
    #[arg(long)]
    pub eigenvalues: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_manifold)]
    pub manifold: Manifold,
    #[arg(long, value_parser = parse_min2)]
    pub n: usize,
    /// Ambient dimension (default n/5).
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_nonnegative)]
    pub sigma: f64,
    /// Signal scale is n^scale_exponent unless --scale is given.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub scale_exponent: f64,
    #[arg(long, value_parser = parse_positive)]
    pub scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Apply a random rotation to both clean and noisy samples.
    #[arg(long)]
    pub rotate: bool,
    /// Directory receiving clean.csv, noisy.csv and labels.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub header: bool,
    #[arg(long, value_parser = parse_omega, default_value_t = 0.5)]
    pub omega: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Sample sizes, e.g. 500,1000,2000.
    #[arg(long, value_delimiter = ',', value_parser = parse_min2, default_value = "500,1000,2000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    #[arg(long, value_parser = parse_manifold, default_value = "smiley")]
    pub manifold: Manifold,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Second kernel for the error-ratio series (same --ell and --alpha).
    #[arg(long)]
    pub compare_kernel: Option<String>,
    #[arg(long, value_parser = parse_omega, default_value_t = 0.5)]
    pub omega: f64,
    #[arg(long, default_value_t = 1.0, value_parser = parse_nonnegative)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub scale_exponent: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-replicate CSV table.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// proposed, proposed-hp, kpca, laplacian, diffusion or pca.
    #[arg(long, default_value = "proposed", value_parser = parse_method)]
    pub method: ClusterMethod,
    /// Samples to cluster; otherwise --simulate is required.
    #[arg(long, conflicts_with = "simulate", required_unless_present_any = ["simulate", "predicted"])]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
    /// Reference labels, one per row.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Score this label file against --labels instead of clustering.
    #[arg(long, requires = "labels")]
    pub predicted: Option<PathBuf>,
    /// Simulate the samples from this manifold.
    #[arg(long, value_parser = parse_manifold)]
    pub simulate: Option<Manifold>,
    #[arg(long, default_value_t = 300, value_parser = parse_min2)]
    pub n: usize,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub scale: Option<f64>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_nonnegative)]
    pub sigma: f64,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_parser = parse_omega, default_value_t = 0.5)]
    pub omega: f64,
    /// 1-based eigenvector indices; baselines use as many leading dimensions.
    #[arg(long)]
    pub dims: Option<String>,
    /// Number of clusters (default: distinct reference labels).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Predicted labels CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Variance of the Gaussian design.
    #[arg(long, value_parser = parse_positive)]
    pub sigma2: f64,
    /// Operator bandwidth in exp(-d^2 / (2h)).
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true)]
    pub h: f64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=150))]
    pub top: u64,
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn parse_omega(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn parse_nonnegative(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be nonnegative"))
    }
}

fn parse_min2(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        _ => Err(format!("'{s}' must be an integer of at least 2")),
    }
}

fn parse_manifold(s: &str) -> std::result::Result<Manifold, String> {
    s.parse().map_err(|e: KseError| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<ClusterMethod, String> {
    ClusterMethod::from_name(s).map_err(|e| e.to_string())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let echo: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| dispatch(cli.command, echo)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(command: Command, echo: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let mut report = RunReport::new(echo);
    let report_path = match command {
        Command::Embed(a) => run_embed(a, &mut report)?,
        Command::Simulate(a) => run_simulate(a, &mut report)?,
        Command::Bandwidth(a) => return run_bandwidth(a),
        Command::Bench(a) => Some(run_bench(a, &mut report)?),
        Command::Cluster(a) => run_cluster(a, &mut report)?,
        Command::Oracle(a) => return run_oracle(a),
    };
    if let Some(path) = report_path {
        report.wall_clock_seconds = start.elapsed().as_secs_f64();
        report.write(&path)?;
    }
    Ok(())
}

fn read_data(path: &Path, header: bool) -> Result<DataMatrix> {
    DataMatrix::new(read_csv_matrix(path, header)?)
}

fn run_embed(a: EmbedArgs, report: &mut RunReport) -> Result<Option<PathBuf>> {
    let spec = a.kernel.spec()?;
    let y = read_data(&a.input, a.header)?;
    let dims = IndexSet::parse(&a.dims)?;
    dims.check_against(y.n_samples())?;
    report.set_config("input", a.input.display().to_string());
    report.set_config("kernel", &spec);
    report.set_config("dims", dims.one_based());

    let choice = if let Some(h) = a.h {
        BandwidthChoice::Fixed(h)
    } else if a.omega_auto {
        let grid = a.omega_grid.clone().unwrap_or_else(|| DEFAULT_OMEGA_GRID.to_vec());
        let s = a.ratio_s.unwrap_or(DEFAULT_RATIO_S);
        let sel = select_omega_resampling(&y, &spec, &grid, s)?;
        report.set_config("omega_grid", &sel.grid);
        report.set_config("omega_counts", &sel.counts);
        report.set_config("ratio_s", s);
        BandwidthChoice::Percentile(sel.omega)
    } else {
        BandwidthChoice::Percentile(a.omega.unwrap_or(0.5))
    };
    let model = EmbedModel::fit(&y, &spec, choice)?;
    if let BandwidthChoice::Percentile(omega) = choice {
        report.set_config("omega", omega);
    }
    report.set_config("h_n", model.bandwidth());
    let emb = model.embedding(&dims)?;
    write_csv_matrix(&a.out, &emb.matrix, None)?;
    if let Some(path) = &a.eigenvalues {
        write_csv_column(path, model.decomposition().eigenvalues(), None)?;
    }
    report.set_metric("n", y.n_samples() as f64);
    report.set_metric("p", y.n_features() as f64);
    for (i, l) in dims.one_based().iter().zip(&emb.eigenvalues_used) {
        report.set_metric(&format!("lambda_{i}"), *l);
    }
    Ok(a.report)
}

fn run_simulate(a: SimulateArgs, report: &mut RunReport) -> Result<Option<PathBuf>> {
    let cfg = SimulationConfig {
        n: a.n,
        p: a.p,
        scale_exponent: a.scale_exponent,
        scale: a.scale,
        sigma: a.sigma,
        seed: a.seed,
        rotate: a.rotate,
    };
    let pair = simulate(a.manifold, &cfg)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| KseError::io(&a.out_dir, e))?;
    write_csv_matrix(&a.out_dir.join("clean.csv"), pair.clean.matrix(), None)?;
    write_csv_matrix(&a.out_dir.join("noisy.csv"), pair.noisy.matrix(), None)?;
    write_csv_column(&a.out_dir.join("labels.csv"), &pair.labels, None)?;
    report.set_config("manifold", a.manifold);
    report.set_config("simulation", &cfg);
    report.set_metric("p", cfg.ambient_dim() as f64);
    report.set_metric("signal_scale", cfg.signal_scale());
    Ok(a.report)
}

fn run_bandwidth(a: BandwidthArgs) -> Result<()> {
    let y = read_data(&a.input, a.header)?;
    let bw = percentile_bandwidth_of(&y, a.omega)?;
    let text = serde_json::to_string(&bw).map_err(|e| KseError::Numerical(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run_bench(a: BenchArgs, report: &mut RunReport) -> Result<PathBuf> {
    let kernel = a.kernel.spec()?;
    let compare = a
        .compare_kernel
        .as_deref()
        .map(|name| KernelSpec::from_name(name, a.kernel.ell, a.kernel.alpha))
        .transpose()?;
    let cfg = ConvergenceConfig {
        sizes: a.sizes.clone(),
        reps: a.reps as usize,
        manifold: a.manifold,
        kernel,
        compare,
        omega: a.omega,
        seed: a.seed,
        sigma: a.sigma,
        scale_exponent: a.scale_exponent,
    };
    let (records, summaries) = convergence_bench(&cfg)?;
    report.set_config("sizes", &cfg.sizes);
    report.set_config("reps", cfg.reps);
    report.set_config("manifold", cfg.manifold);
    report.set_config("kernel", &cfg.kernel);
    report.set_config("compare_kernel", &cfg.compare);
    report.set_config("omega", cfg.omega);
    report.set_config("sigma", cfg.sigma);
    report.set_config("scale_exponent", cfg.scale_exponent);
    report.set_config("seed", cfg.seed);
    for s in &summaries {
        report.set_metric(&format!("median_error_n{}", s.n), s.median_error);
        if let Some(r) = s.median_ratio {
            report.set_metric(&format!("median_ratio_n{}", s.n), r);
        }
    }
    report.replicates = records
        .iter()
        .map(|r| serde_json::to_value(r).unwrap_or_default())
        .collect();
    if let Some(path) = &a.table {
        let mut text = String::from("n,p,rep,seed,h_noisy,h_clean,error,compare_error,ratio\n");
        for r in &records {
            let opt = |v: Option<f64>| v.map(format_number).unwrap_or_default();
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.n,
                r.p,
                r.rep,
                r.seed,
                format_number(r.h_noisy),
                format_number(r.h_clean),
                format_number(r.error),
                opt(r.compare_error),
                opt(r.ratio)
            ));
        }
        write_atomic(path, text.as_bytes())?;
    }
    Ok(a.out)
}

fn run_cluster(a: ClusterArgs, report: &mut RunReport) -> Result<Option<PathBuf>> {
    if let Some(pred_path) = &a.predicted {
        let labels_path = a.labels.as_ref().expect("clap enforces --labels");
        let truth = Partition::from_labels(&read_labels(labels_path, a.header)?)?;
        let predicted = Partition::from_labels(&read_labels(pred_path, a.header)?)?;
        let ri = rand_index(&truth, &predicted)?;
        report.set_metric("rand_index", ri);
        println!("rand_index,{ri:.6}");
        return Ok(a.report);
    }

    let (y, truth) = if let Some(manifold) = a.simulate {
        let cfg = SimulationConfig {
            p: a.p,
            scale: a.scale,
            sigma: a.sigma,
            ..SimulationConfig::new(a.n, a.seed)
        };
        let pair = simulate(manifold, &cfg)?;
        report.set_config("simulate", manifold);
        report.set_config("simulation", &cfg);
        let truth = if manifold.has_cluster_labels() {
            Some(Partition::from_labels(&pair.labels)?)
        } else {
            None
        };
        (pair.noisy, truth)
    } else {
        let input = a.input.as_ref().expect("clap enforces --input or --simulate");
        let y = read_data(input, a.header)?;
        let truth = a
            .labels
            .as_ref()
            .map(|p| read_labels(p, a.header).and_then(|l| Partition::from_labels(&l)))
            .transpose()?;
        (y, truth)
    };
    if let Some(t) = &truth {
        if t.len() != y.n_samples() {
            return Err(KseError::input(format!(
                "{} labels for {} samples",
                t.len(),
                y.n_samples()
            )));
        }
    }
    let k = match (a.k, &truth) {
        (Some(k), _) => k,
        (None, Some(t)) => t.n_clusters(),
        (None, None) => return Err(KseError::input("--k is required without reference labels")),
    };
    let dims = match &a.dims {
        Some(d) => IndexSet::parse(d)?,
        None => IndexSet::leading(k.min(y.n_samples()))?,
    };
    let cfg = ClusterConfig {
        method: a.method,
        kernel: a.kernel.spec()?,
        omega: a.omega,
        dims,
        clusters: k,
        seed: a.seed,
    };
    report.set_config("method", cfg.method.name());
    report.set_config("kernel", &cfg.kernel);
    report.set_config("omega", cfg.omega);
    report.set_config("dims", cfg.dims.one_based());
    report.set_config("k", k);
    report.set_config("seed", a.seed);

    let predicted = match &truth {
        Some(t) => {
            let (pred, ri) = cluster_rand(&y, t, &cfg)?;
            report.set_metric("rand_index", ri);
            println!("rand_index,{ri:.6}");
            pred
        }
        None => crate::bench::cluster_samples(&y, &cfg)?,
    };
    if predicted.n_clusters() >= 2 {
        report.set_metric("silhouette", silhouette(y.matrix(), &predicted)?);
    }
    if let Some(out) = &a.out {
        let text: String = predicted.0.iter().map(|l| format!("{l}\n")).collect();
        write_atomic(out, text.as_bytes())?;
    }
    Ok(a.report)
}

fn run_oracle(a: OracleArgs) -> Result<()> {
    let mut out = String::from("name,value\n");
    for i in 0..a.top as usize {
        let g = gaussian_operator_eigenvalue(a.sigma2, a.h, i)?;
        out.push_str(&format!("gamma_{i},{g:.6}\n"));
    }
    out.push_str(&format!("q,{:.6}\n", decay_ratio(a.sigma2, a.h)?));
    print!("{out}");
    Ok(())
}
