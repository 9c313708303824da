//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kse::bandwidth::{empirical_cdf, percentile_bandwidth, percentile_bandwidth_of};
use kse::baselines::{diffusion_matrix, graph_laplacian, kpca_center};
use kse::bench::{cluster_rand, convergence_bench, median, ClusterConfig, ClusterMethod, ConvergenceConfig};
use kse::datagen::{simulate, Manifold, SimulationConfig};
use kse::kernels::{kernel_matrix, pairwise_sq_dists, KernelSpec};
use kse::matrix::{DataMatrix, Matrix};
use kse::metrics::{kendall_tau, kmeans, rand_index, silhouette, spectral_error, Partition};
use kse::oracle::{gaussian_operator_eigenvalue, hermite, nystrom_oracle, OperatorSpectrum};
use kse::spectral::{embed, symmetric_eigen, symmetric_eigenvalues, IndexSet};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_eigenvalues() -> Outcome {
    let got = nystrom_oracle(2024, 1.0, 2.0, 2000, 3).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, g) in got.iter().enumerate() {
        let want = gaussian_operator_eigenvalue(1.0, 2.0, i).unwrap();
        ok &= (g - want).abs() <= 0.05;
        parts.push(format!("{g:.4} vs {want:.4}"));
    }
    check(ok, parts.join(", "))
}

fn smiley_bench(sizes: Vec<usize>, omega: f64, compare: Option<KernelSpec>, seed: u64) -> Result<Vec<kse::bench::SizeSummary>, String> {
    let cfg = ConvergenceConfig {
        sizes,
        reps: 5,
        manifold: Manifold::Smiley,
        kernel: KernelSpec::Gaussian,
        compare,
        omega,
        seed,
        sigma: 1.0,
        scale_exponent: 2.0 / 3.0,
    };
    convergence_bench(&cfg).map(|(_, s)| s).map_err(|e| e.to_string())
}

fn error_decay() -> Outcome {
    let s = smiley_bench(vec![500, 2000], 0.5, None, 11)?;
    check(
        s[1].median_error < s[0].median_error,
        format!("median error {:.4} at n=500, {:.4} at n=2000", s[0].median_error, s[1].median_error),
    )
}

fn omega_robustness() -> Outcome {
    let mut medians = Vec::new();
    for omega in [0.25, 0.5, 0.75] {
        medians.push(smiley_bench(vec![1000], omega, None, 12)?[0].median_error);
    }
    let max = medians.iter().cloned().fold(f64::MIN, f64::max);
    let min = medians.iter().cloned().fold(f64::MAX, f64::min);
    check(
        max / min < 3.0,
        format!("medians {medians:.4?}, max/min {:.3}", max / min),
    )
}

fn bandwidth_endpoints() -> Outcome {
    let pair = simulate(Manifold::Torus, &SimulationConfig::new(100, 7)).map_err(|e| e.to_string())?;
    let x = &pair.clean;
    let p = x.n_features() as f64;
    let k = kernel_matrix(x, &KernelSpec::Gaussian, p).map_err(|e| e.to_string())?;
    let mut max_off = 0.0f64;
    for i in 0..100 {
        for j in 0..100 {
            if i != j {
                max_off = max_off.max(k.values()[(i, j)]);
            }
        }
    }
    let k_big = kernel_matrix(x, &KernelSpec::Gaussian, 100f64.powi(5)).map_err(|e| e.to_string())?;
    let eigs = symmetric_eigenvalues(&k_big.scaled_by_n()).map_err(|e| e.to_string())?;
    let ratio = eigs[1] / eigs[0];
    check(
        max_off < 0.01 && ratio < 0.05,
        format!("h=p: max off-diagonal {max_off:.3e}; h=n^5: lambda2/lambda1 {ratio:.3e}"),
    )
}

fn nystrom_identity() -> Outcome {
    let pair = simulate(Manifold::Torus, &SimulationConfig::new(200, 3)).map_err(|e| e.to_string())?;
    let omega = IndexSet::leading(10).unwrap();
    let (_, model) = embed(&pair.noisy, &KernelSpec::Gaussian, 0.5, &omega).map_err(|e| e.to_string())?;
    let u = model.decomposition().eigenvectors();
    let sqrt_n = 200f64.sqrt();
    let mut worst = 0.0f64;
    for j in 0..200 {
        let phi = model.nystrom_extend(pair.noisy.sample(j), &omega).map_err(|e| e.to_string())?;
        for (c, v) in phi.iter().enumerate() {
            worst = worst.max((v - sqrt_n * u[(j, c)]).abs());
        }
    }
    check(worst <= 1e-8, format!("max deviation {worst:.2e} over 200 points, 10 eigenfunctions"))
}

fn clustering_advantage() -> Outcome {
    let mut proposed = Vec::new();
    let mut pca = Vec::new();
    for seed in 0..10u64 {
        let cfg = SimulationConfig {
            p: Some(300),
            scale: Some(10.0),
            ..SimulationConfig::new(300, 100 + seed)
        };
        let pair = simulate(Manifold::NestedSpheres, &cfg).map_err(|e| e.to_string())?;
        let truth = Partition::from_labels(&pair.labels).map_err(|e| e.to_string())?;
        for (method, out) in [(ClusterMethod::Proposed, &mut proposed), (ClusterMethod::Pca, &mut pca)] {
            let c = ClusterConfig {
                method,
                kernel: KernelSpec::Gaussian,
                omega: 0.5,
                dims: IndexSet::leading(6).unwrap(),
                clusters: 6,
                seed,
            };
            out.push(cluster_rand(&pair.noisy, &truth, &c).map_err(|e| e.to_string())?.1);
        }
    }
    let (mp, mq) = (median(&proposed), median(&pca));
    check(mp >= mq, format!("median Rand: proposed {mp:.4}, PCA {mq:.4}"))
}

fn kernel_rate_ordering() -> Outcome {
    let s = smiley_bench(vec![500, 2000], 0.5, Some(KernelSpec::laplacian(1.0).unwrap()), 13)?;
    let r500 = s[0].median_ratio.unwrap();
    let r2000 = s[1].median_ratio.unwrap();
    check(
        r2000 >= 0.8 * r500,
        format!("Laplacian/Gaussian error ratio {r500:.4} at n=500, {r2000:.4} at n=2000"),
    )
}

fn invariant_suite() -> Outcome {
    let mut failures: Vec<String> = Vec::new();
    let mut record = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let pair = simulate(Manifold::Torus, &SimulationConfig::new(120, 21)).map_err(|e| e.to_string())?;
    let y = &pair.noisy;
    let h = percentile_bandwidth_of(y, 0.5).unwrap().h;
    let k = kernel_matrix(y, &KernelSpec::Gaussian, h).unwrap();

    // Kernel: symmetric, PSD, rotation invariant.
    record("kernel symmetry", k.values().is_symmetric());
    let eigs = symmetric_eigenvalues(&k.scaled_by_n()).unwrap();
    record("kernel PSD", *eigs.last().unwrap() >= -1e-10);
    record("eigenvalue range", eigs[0] <= 1.0 + 1e-12);
    let q = kse::datagen::random_orthogonal(y.n_features(), 5);
    let rotated = DataMatrix::new(y.matrix().matmul(&q).unwrap()).unwrap();
    let k_rot = kernel_matrix(&rotated, &KernelSpec::Gaussian, h).unwrap();
    record("rotation invariance", k_rot.values().max_abs_diff(k.values()) <= 1e-10);

    // Bandwidth: monotone in omega, scale equivariant, consistent with the CDF.
    let d = pairwise_sq_dists(y).unwrap();
    let hs: Vec<f64> = [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|&w| percentile_bandwidth(&d, w).unwrap().h).collect();
    record("bandwidth monotonicity", hs.windows(2).all(|w| w[0] <= w[1]));
    let scaled = percentile_bandwidth_of(&y.scaled(3.0).unwrap(), 0.5).unwrap().h;
    record("bandwidth scale equivariance", (scaled - 9.0 * h).abs() <= 1e-9 * scaled);
    for &w in &[0.1, 0.5, 0.9] {
        let bw = percentile_bandwidth(&d, w).unwrap();
        record("bandwidth CDF consistency", empirical_cdf(&d, bw.h).unwrap() >= w);
    }

    // Eigendecomposition.
    let scaled_k = k.scaled_by_n();
    let eig = symmetric_eigen(&scaled_k).unwrap();
    let u = eig.eigenvectors();
    let utu = u.transpose().matmul(u).unwrap();
    record("orthonormality", utu.max_abs_diff(&Matrix::identity(120)) <= 1e-8);
    record("reconstruction", eig.reconstruct().max_abs_diff(&scaled_k) <= 1e-8);

    // Weyl bound.
    let mut e = Matrix::zeros(120, 120);
    for i in 0..120 {
        for j in 0..=i {
            let v = 1e-3 * (((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5);
            e[(i, j)] = v;
            e[(j, i)] = v;
        }
    }
    let perturbed = scaled_k.add(&e).unwrap();
    let shifted = symmetric_eigenvalues(&perturbed).unwrap();
    let bound = spectral_error(&perturbed, &scaled_k).unwrap();
    record("Weyl bound", eigs.iter().zip(&shifted).all(|(a, b)| (a - b).abs() <= bound + 1e-12));

    // Baselines.
    let kc = kpca_center(&k);
    let max_row_sum = (0..120).map(|i| kc.row(i).iter().sum::<f64>().abs()).fold(0.0, f64::max);
    record("kPCA zero sums", max_row_sum <= 1e-10);
    let lap = graph_laplacian(&k).unwrap();
    let l1 = (0..120).map(|i| lap.row(i).iter().sum::<f64>().abs()).fold(0.0, f64::max);
    record("Laplacian kills constants", l1 <= 1e-12);
    let dm = diffusion_matrix(&k, 1.0).unwrap();
    let dm1 = (0..120).map(|i| (dm.row(i).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    record("diffusion row-stochastic", dm1 <= 1e-12);

    // Oracle.
    let spec = OperatorSpectrum::new(1.0, 2.0, 1e-12).unwrap();
    record("oracle trace identity", (spec.truncated_trace() - 1.0).abs() <= 1e-10);
    let explicit = |i: usize, x: f64| match i {
        0 => 1.0,
        1 => 2.0 * x,
        2 => 4.0 * x * x - 2.0,
        3 => 8.0 * x.powi(3) - 12.0 * x,
        _ => 16.0 * x.powi(4) - 48.0 * x * x + 12.0,
    };
    let herm_ok = (0..5).all(|i| {
        [-1.3, -0.2, 0.0, 0.7, 2.1]
            .iter()
            .all(|&x| (hermite(i, x) - explicit(i, x)).abs() <= 1e-12 * (1.0 + explicit(i, x).abs()))
    });
    record("Hermite recurrence", herm_ok);

    // Metrics.
    let km = kmeans(y.matrix(), 4, 3, 300).unwrap();
    record(
        "k-means monotone",
        km.objective_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
    );
    record(
        "Rand examples",
        rand_index(&Partition(vec![0, 0, 0]), &Partition(vec![0, 1, 2])).unwrap() == 0.0
            && rand_index(&Partition(vec![1, 1, 2]), &Partition(vec![1, 1, 2])).unwrap() == 1.0,
    );
    record(
        "Kendall examples",
        (kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 4.0 / 6.0).abs() < 1e-15
            && kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() == -1.0,
    );
    let pts = Matrix::from_rows(&[[0.0], [0.1], [10.0], [10.1]]).unwrap();
    record("Silhouette example", silhouette(&pts, &Partition(vec![0, 0, 1, 1])).unwrap() > 0.95);

    check(
        failures.is_empty(),
        if failures.is_empty() {
            "all invariants hold".to_string()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn run_kse(dir: &Path, args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kse"))
        .current_dir(dir)
        .args(["--threads", threads])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("kse {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

/// Report JSON minus the fields that legitimately vary (command echo and timing).
fn stable_report(p: &Path) -> Result<serde_json::Value, String> {
    let mut v: serde_json::Value = serde_json::from_slice(&read(p)?).map_err(|e| e.to_string())?;
    let obj = v.as_object_mut().ok_or("report is not an object")?;
    obj.remove("command");
    obj.remove("wall_clock_seconds");
    Ok(v)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [("a", "1"), ("b", "1"), ("c", "8")];
    for (tag, threads) in runs {
        let d = dir.path().join(tag);
        std::fs::create_dir_all(&d).map_err(|e| e.to_string())?;
        run_kse(&d, &["simulate", "--manifold", "torus", "--n", "300", "--seed", "42", "--out-dir", "sim"], threads)?;
        run_kse(
            &d,
            &["embed", "--input", "sim/noisy.csv", "--omega", "0.5", "--dims", "1,2,3", "--out", "emb.csv",
              "--eigenvalues", "eig.csv", "--report", "embed.json"],
            threads,
        )?;
        run_kse(
            &d,
            &["bench", "--sizes", "200,300", "--reps", "2", "--manifold", "smiley", "--compare-kernel", "laplacian",
              "--seed", "5", "--out", "bench.json", "--table", "bench.csv"],
            threads,
        )?;
    }
    let files = ["sim/clean.csv", "sim/noisy.csv", "sim/labels.csv", "emb.csv", "eig.csv", "bench.csv"];
    let mut mismatches = Vec::new();
    for other in ["b", "c"] {
        for f in files {
            if read(&dir.path().join("a").join(f))? != read(&dir.path().join(other).join(f))? {
                mismatches.push(format!("{other}/{f}"));
            }
        }
        for f in ["embed.json", "bench.json"] {
            if stable_report(&dir.path().join("a").join(f))? != stable_report(&dir.path().join(other).join(f))? {
                mismatches.push(format!("{other}/{f}"));
            }
        }
    }
    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "simulate, embed and bench identical across runs and 1 vs 8 threads".to_string()
        } else {
            format!("differences in {}", mismatches.join(", "))
        },
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle eigenvalue convergence", Duration::from_secs(60), oracle_eigenvalues),
        ("spectral error decays with n", Duration::from_secs(300), error_decay),
        ("robustness to the percentile", Duration::from_secs(180), omega_robustness),
        ("bandwidth degeneracy endpoints", Duration::from_secs(10), bandwidth_endpoints),
        ("Nystrom identity at training points", Duration::from_secs(5), nystrom_identity),
        ("nonlinear clustering advantage", Duration::from_secs(300), clustering_advantage),
        ("kernel rate ordering", Duration::from_secs(300), kernel_rate_ordering),
        ("invariant suite", Duration::from_secs(60), invariant_suite),
        ("determinism", Duration::from_secs(300), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let over = elapsed > *budget;
        let (status, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; exceeded {budget:?}")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {}: {status} {name} ({:.1}s): {detail}", i + 1, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
