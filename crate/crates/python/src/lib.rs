//! Python bindings for `kse`.
//!
//! Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use kse::bandwidth::BandwidthResult;
use kse::datagen::{Manifold, SimulationConfig};
use kse::spectral::{BandwidthChoice, IndexSet};
use kse::{DataMatrix, KseError, Matrix};

fn to_py(err: KseError) -> PyErr {
    match err {
        KseError::Numerical(_) | KseError::RankDeficient(_) => PyArithmeticError::new_err(err.to_string()),
        KseError::Io { .. } => PyOSError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

fn data(rows: Vec<Vec<f64>>) -> PyResult<DataMatrix> {
    DataMatrix::new(matrix(rows)?).map_err(to_py)
}

fn indices(dims: Vec<usize>) -> PyResult<IndexSet> {
    IndexSet::new(dims).map_err(to_py)
}

/// A kernel family with its parameters.
#[pyclass(name = "Kernel", frozen, from_py_object)]
#[derive(Clone)]
struct PyKernel {
    spec: kse::KernelSpec,
}

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (name = "gaussian", ell = 1.0, alpha = 1.0))]
    fn new(name: &str, ell: f64, alpha: f64) -> PyResult<Self> {
        let spec = kse::KernelSpec::from_name(name, ell, alpha).map_err(to_py)?;
        Ok(PyKernel { spec })
    }

    /// Profile value `f(x)` for `x >= 0`.
    fn __call__(&self, x: f64) -> PyResult<f64> {
        self.spec.eval(x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Kernel({})", self.spec)
    }
}

#[pyclass(name = "Bandwidth", frozen, get_all)]
struct PyBandwidth {
    h: f64,
    omega: f64,
    pairs: usize,
    order_index: usize,
}

impl From<BandwidthResult> for PyBandwidth {
    fn from(b: BandwidthResult) -> Self {
        PyBandwidth {
            h: b.h,
            omega: b.omega,
            pairs: b.pairs,
            order_index: b.order_index,
        }
    }
}

#[pymethods]
impl PyBandwidth {
    fn __repr__(&self) -> String {
        format!(
            "Bandwidth(h={}, omega={}, pairs={}, order_index={})",
            self.h, self.omega, self.pairs, self.order_index
        )
    }
}

/// `omega`-percentile of the pairwise squared distances.
#[pyfunction]
fn percentile_bandwidth(py: Python<'_>, samples: Vec<Vec<f64>>, omega: f64) -> PyResult<PyBandwidth> {
    let y = data(samples)?;
    py.detach(|| kse::bandwidth::percentile_bandwidth_of(&y, omega))
        .map(PyBandwidth::from)
        .map_err(to_py)
}

#[pyfunction]
fn kernel_matrix(py: Python<'_>, samples: Vec<Vec<f64>>, kernel: PyKernel, h: f64) -> PyResult<Vec<Vec<f64>>> {
    let y = data(samples)?;
    py.detach(|| kse::kernel_matrix(&y, &kernel.spec, h))
        .map(|k| k.values().to_rows())
        .map_err(to_py)
}

/// Eigenvalues (descending) and eigenvectors (as columns) of a symmetric matrix.
#[pyfunction]
fn symmetric_eigen(py: Python<'_>, a: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let a = matrix(a)?;
    let eig = py.detach(|| kse::symmetric_eigen(&a)).map_err(to_py)?;
    Ok((eig.eigenvalues().to_vec(), eig.eigenvectors().to_rows()))
}

/// A fitted kernel-spectral embedding.
#[pyclass(name = "EmbedModel", frozen)]
struct PyEmbedModel {
    model: kse::EmbedModel,
}

#[pymethods]
impl PyEmbedModel {
    /// Fits on `samples` with the `omega`-percentile bandwidth, or with `h` when given.
    #[new]
    #[pyo3(signature = (samples, kernel = None, omega = 0.5, h = None))]
    fn new(py: Python<'_>, samples: Vec<Vec<f64>>, kernel: Option<PyKernel>, omega: f64, h: Option<f64>) -> PyResult<Self> {
        let y = data(samples)?;
        let spec = kernel.map_or(kse::KernelSpec::Gaussian, |k| k.spec);
        let choice = match h {
            Some(h) => BandwidthChoice::Fixed(h),
            None => BandwidthChoice::Percentile(omega),
        };
        let model = py.detach(|| kse::EmbedModel::fit(&y, &spec, choice)).map_err(to_py)?;
        Ok(PyEmbedModel { model })
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.model.bandwidth()
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.model.data().n_samples()
    }

    /// All eigenvalues of `K / n`, descending.
    fn eigenvalues(&self) -> Vec<f64> {
        self.model.decomposition().eigenvalues().to_vec()
    }

    /// Rows are samples; column `j` is `lambda_i u_i` for the `j`-th 1-based index in `dims`.
    #[pyo3(signature = (dims = vec![1, 2]))]
    fn embedding(&self, dims: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let emb = self.model.embedding(&indices(dims)?).map_err(to_py)?;
        Ok(emb.matrix.to_rows())
    }

    /// Empirical eigenfunctions at a new point.
    #[pyo3(signature = (x, dims = vec![1]))]
    fn nystrom(&self, x: Vec<f64>, dims: Vec<usize>) -> PyResult<Vec<f64>> {
        self.model.nystrom_extend(&x, &indices(dims)?).map_err(to_py)
    }
}

/// Closed-form eigenvalues of the Gaussian operator under `N(0, sigma2)`.
#[pyfunction]
#[pyo3(signature = (sigma2, h, top = 3))]
fn operator_eigenvalues(sigma2: f64, h: f64, top: usize) -> PyResult<Vec<f64>> {
    (0..top)
        .map(|i| kse::oracle::gaussian_operator_eigenvalue(sigma2, h, i).map_err(to_py))
        .collect()
}

#[pyfunction]
fn operator_eigenfunction(sigma2: f64, h: f64, i: usize, x: f64) -> PyResult<f64> {
    kse::oracle::gaussian_operator_eigenfunction(sigma2, h, i, x).map_err(to_py)
}

/// Returns `(clean, noisy, labels)`.
#[pyfunction]
#[pyo3(signature = (manifold, n, seed = 0, p = None, sigma = 1.0, scale = None, scale_exponent = 2.0 / 3.0, rotate = false))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn simulate(
    py: Python<'_>,
    manifold: &str,
    n: usize,
    seed: u64,
    p: Option<usize>,
    sigma: f64,
    scale: Option<f64>,
    scale_exponent: f64,
    rotate: bool,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let m: Manifold = manifold.parse().map_err(to_py)?;
    let cfg = SimulationConfig {
        n,
        p,
        scale_exponent,
        scale,
        sigma,
        seed,
        rotate,
    };
    let pair = py.detach(|| kse::simulate(m, &cfg)).map_err(to_py)?;
    Ok((pair.clean.matrix().to_rows(), pair.noisy.matrix().to_rows(), pair.labels))
}

#[pyfunction]
fn spectral_error(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    kse::spectral_error(&matrix(a)?, &matrix(b)?).map_err(to_py)
}

#[pyfunction]
fn rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    kse::rand_index(&kse::Partition(a), &kse::Partition(b)).map_err(to_py)
}

#[pyfunction]
fn kendall_tau(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    kse::kendall_tau(&a, &b).map_err(to_py)
}

#[pyfunction]
fn silhouette(points: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    kse::silhouette(&matrix(points)?, &kse::Partition(labels)).map_err(to_py)
}

/// Cluster labels from seeded k-means++ and Lloyd iterations.
#[pyfunction]
#[pyo3(signature = (points, k, seed = 0, max_iter = 300))]
fn kmeans(py: Python<'_>, points: Vec<Vec<f64>>, k: usize, seed: u64, max_iter: usize) -> PyResult<Vec<usize>> {
    let m = matrix(points)?;
    py.detach(|| kse::kmeans(&m, k, seed, max_iter))
        .map(|r| r.labels.0)
        .map_err(to_py)
}

#[pymodule]
fn kse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyBandwidth>()?;
    m.add_class::<PyEmbedModel>()?;
    m.add_function(wrap_pyfunction!(percentile_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_eigen, m)?)?;
    m.add_function(wrap_pyfunction!(operator_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(operator_eigenfunction, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_error, m)?)?;
    m.add_function(wrap_pyfunction!(rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    Ok(())
}
