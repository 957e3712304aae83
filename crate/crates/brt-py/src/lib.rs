//! Python extension module exposing the rose-tree clustering library:
//! the beta-Bernoulli and GP-experts models, greedy tree construction,
//! hyperparameter optimization, the exhaustive-search oracle, synthetic
//! data generation, and tree serialization.

use std::sync::Arc;

use num_bigint::BigUint;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::conversion::IntoPyObjectExt;
use pyo3::prelude::*;

use brt::bernoulli::Hyperparams;
use brt::builder::{build, BuildMode};
use brt::datagen;
use brt::gp;
use brt::hyperopt;
use brt::math::AscentOptions;
use brt::model::ClusterModel;
use brt::oracle;
use brt::partition::{count_partitions, enumerate_partitions};
use brt::tree::RoseTree;
use brt::{BetaBernoulli, ClusterStats};
use brt_cli::{build_document, export_newick, HyperDoc, TreeDocument};

fn to_py_err(e: brt::Error) -> PyErr {
    use brt::Error::*;
    match e {
        NonFiniteLikelihood | NotPositiveDefinite => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn cli_to_py_err(e: brt_cli::CliError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<BuildMode> {
    match mode {
        "rose" => Ok(BuildMode::Rose),
        "binary" => Ok(BuildMode::BinaryOnly),
        other => Err(PyValueError::new_err(format!(
            "mode must be 'rose' or 'binary', got '{other}'"
        ))),
    }
}

/// Beta-Bernoulli likelihood over a binary data matrix.
#[pyclass(name = "BetaBernoulli", frozen)]
struct PyBetaBernoulli {
    model: BetaBernoulli,
    hyper: Hyperparams,
    rows: Vec<Vec<f64>>,
}

#[pymethods]
impl PyBetaBernoulli {
    /// BetaBernoulli(data, gamma=0.5, alpha=None, beta=None)
    ///
    /// `data` is a list of equal-length 0/1 rows; `alpha`/`beta` default
    /// to uniform priors.
    #[new]
    #[pyo3(signature = (data, gamma = 0.5, alpha = None, beta = None))]
    fn new(
        data: Vec<Vec<u8>>,
        gamma: f64,
        alpha: Option<Vec<f64>>,
        beta: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let dims = data.first().map_or(0, |r| r.len());
        let alpha = alpha.unwrap_or_else(|| vec![1.0; dims]);
        let beta = beta.unwrap_or_else(|| vec![1.0; dims]);
        let hyper = Hyperparams::new(gamma, alpha, beta).map_err(to_py_err)?;
        let rows = data
            .iter()
            .map(|r| r.iter().map(|&b| b as f64).collect())
            .collect();
        let model = BetaBernoulli::from_hyper(data, &hyper).map_err(to_py_err)?;
        Ok(Self { model, hyper, rows })
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.model.n_points()
    }

    #[getter]
    fn dims(&self) -> usize {
        self.model.dims()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.hyper.gamma
    }

    /// Greedy tree construction; mode is 'rose' or 'binary'.
    #[pyo3(signature = (mode = "rose"))]
    fn build(&self, mode: &str) -> PyResult<PyRoseTree> {
        let tree = build(&self.model, self.hyper.gamma, parse_mode(mode)?).map_err(to_py_err)?;
        Ok(self.wrap(tree, self.hyper.clone()))
    }

    /// Exhaustive-search optimum over all rose trees (n ≤ 8).
    fn optimal_tree(&self) -> PyResult<(PyRoseTree, f64)> {
        let (tree, score) =
            oracle::optimal_tree(&self.model, self.hyper.gamma).map_err(to_py_err)?;
        Ok((self.wrap(tree, self.hyper.clone()), score))
    }

    /// Alternating tree/hyperparameter fit. Returns the best tree plus a
    /// dict with the fitted hyperparameters and the per-round score log.
    #[pyo3(signature = (max_rounds = 10, mode = "rose"))]
    fn optimize(&self, py: Python<'_>, max_rounds: usize, mode: &str) -> PyResult<(PyRoseTree, Py<PyAny>)> {
        let outcome = hyperopt::em_alternation(
            self.model.clone(),
            self.hyper.gamma,
            parse_mode(mode)?,
            max_rounds,
            1e-6,
            AscentOptions::default(),
        )
        .map_err(to_py_err)?;
        let fitted = Hyperparams::new(
            outcome.gamma,
            outcome.model.alpha().to_vec(),
            outcome.model.beta().to_vec(),
        )
        .map_err(to_py_err)?;
        let info = pyo3::types::PyDict::new(py);
        info.set_item("gamma", outcome.gamma)?;
        info.set_item("alpha", outcome.model.alpha().to_vec())?;
        info.set_item("beta", outcome.model.beta().to_vec())?;
        info.set_item("best_score", outcome.best_score)?;
        info.set_item(
            "rounds",
            outcome
                .rounds
                .iter()
                .map(|r| (r.round, r.build_score, r.optimized_score, r.best_so_far))
                .collect::<Vec<_>>(),
        )?;
        Ok((self.wrap(outcome.tree, fitted), info.unbind().into()))
    }
}

impl PyBetaBernoulli {
    fn wrap(&self, tree: Arc<RoseTree<ClusterStats>>, hyper: Hyperparams) -> PyRoseTree {
        let doc = build_document(
            &tree,
            HyperDoc::BetaBernoulli {
                gamma: hyper.gamma,
                alpha: hyper.alpha.clone(),
                beta: hyper.beta.clone(),
            },
            &self.rows,
            self.model.dims(),
            None,
        );
        PyRoseTree { tree, doc }
    }
}

/// An immutable scored rose tree over binary data.
#[pyclass(name = "RoseTree", frozen)]
struct PyRoseTree {
    tree: Arc<RoseTree<ClusterStats>>,
    doc: TreeDocument,
}

#[pymethods]
impl PyRoseTree {
    #[getter]
    fn n_leaves(&self) -> usize {
        self.tree.n_leaves()
    }

    /// log p(𝒟|T), the mixture over tree-consistent partitions.
    #[getter]
    fn log_marginal(&self) -> f64 {
        self.tree.log_marginal()
    }

    /// Number of partitions the tree mixes over.
    fn n_partitions(&self) -> BigUint {
        count_partitions(&self.tree)
    }

    /// All tree-consistent partitions as lists of blocks (n ≤ 8 or so).
    fn partitions(&self) -> Vec<Vec<Vec<usize>>> {
        enumerate_partitions(&self.tree)
            .iter()
            .map(|p| p.blocks().to_vec())
            .collect()
    }

    /// Nested (children, leaf) structure: leaves are data indices,
    /// internal nodes are lists.
    fn structure(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        fn convert(py: Python<'_>, node: &RoseTree<ClusterStats>) -> PyResult<Py<PyAny>> {
            if let Some(i) = node.data_index() {
                return i.into_py_any(py);
            }
            let children = node
                .children()
                .iter()
                .map(|c| convert(py, c))
                .collect::<PyResult<Vec<_>>>()?;
            children.into_py_any(py)
        }
        convert(py, &self.tree)
    }

    /// Per-node responsibilities keyed by node id.
    fn responsibilities(&self) -> std::collections::HashMap<u64, f64> {
        hyperopt::responsibilities(&self.tree)
            .into_iter()
            .map(|(k, v)| (k, v.value()))
            .collect()
    }

    /// Newick serialization with log-marginal and mixing annotations.
    fn newick(&self) -> PyResult<String> {
        export_newick(&self.doc).map_err(cli_to_py_err)
    }

    /// Versioned JSON tree document.
    fn to_json(&self) -> PyResult<String> {
        self.doc.to_json().map_err(cli_to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "RoseTree(n_leaves={}, log_marginal={:.6}, partitions={})",
            self.tree.n_leaves(),
            self.tree.log_marginal(),
            count_partitions(&self.tree)
        )
    }
}

/// Mixture of GP experts over (x, y) pairs.
#[pyclass(name = "GpExperts", frozen)]
struct PyGpExperts {
    model: gp::GpExperts,
    gamma: f64,
}

#[pymethods]
impl PyGpExperts {
    /// GpExperts(inputs, outputs, gamma=0.5, length_scale=0.3,
    ///           signal_variance=1.0, noise_variance=0.1,
    ///           optimize_kernel=False)
    #[new]
    #[pyo3(signature = (
        inputs,
        outputs,
        gamma = 0.5,
        length_scale = 0.3,
        signal_variance = 1.0,
        noise_variance = 0.1,
        optimize_kernel = false
    ))]
    fn new(
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
        gamma: f64,
        length_scale: f64,
        signal_variance: f64,
        noise_variance: f64,
        optimize_kernel: bool,
    ) -> PyResult<Self> {
        let mut kernel = gp::KernelParams::new(length_scale, signal_variance, noise_variance)
            .map_err(to_py_err)?;
        if optimize_kernel {
            kernel = gp::optimize_kernel(&inputs, &outputs, kernel, AscentOptions::default())
                .map_err(to_py_err)?;
        }
        let prior = gp::InputPriorParams::from_data(&inputs).map_err(to_py_err)?;
        let model = gp::GpExperts::new(inputs, outputs, kernel, prior).map_err(to_py_err)?;
        Ok(Self { model, gamma })
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.model.n_points()
    }

    #[getter]
    fn kernel(&self) -> (f64, f64, f64) {
        let k = self.model.kernel();
        (k.length_scale, k.signal_variance, k.noise_variance)
    }

    /// Marginal of all points pooled into one GP cluster.
    fn pooled_log_marginal(&self) -> PyResult<f64> {
        self.model.pooled_log_f().map_err(to_py_err)
    }

    fn build(&self) -> PyResult<PyGpTree> {
        let tree = build(&self.model, self.gamma, BuildMode::Rose).map_err(to_py_err)?;
        Ok(PyGpTree {
            tree,
            model: self.model.clone(),
        })
    }
}

/// A scored GP-experts tree supporting density regression queries.
#[pyclass(name = "GpTree", frozen)]
struct PyGpTree {
    tree: Arc<RoseTree<gp::GpStats>>,
    model: gp::GpExperts,
}

#[pymethods]
impl PyGpTree {
    #[getter]
    fn n_leaves(&self) -> usize {
        self.tree.n_leaves()
    }

    #[getter]
    fn log_marginal(&self) -> f64 {
        self.tree.log_marginal()
    }

    /// Posterior cluster weights for a new input, keyed by node id.
    fn cluster_weights(&self, x_new: Vec<f64>) -> PyResult<std::collections::HashMap<u64, f64>> {
        gp::cluster_posterior_weights(&self.tree, &self.model, &x_new).map_err(to_py_err)
    }

    /// Predictive density p(y|x) evaluated over a grid of y values.
    fn predictive_density(&self, x_new: Vec<f64>, y_grid: Vec<f64>) -> PyResult<Vec<f64>> {
        gp::predictive_density(&self.tree, &self.model, &x_new, &y_grid).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "GpTree(n_leaves={}, log_marginal={:.4})",
            self.tree.n_leaves(),
            self.tree.log_marginal()
        )
    }
}

/// π = 1 − (1 − γ)^(n_children − 1).
#[pyfunction]
fn mixing_proportion(n_children: usize, gamma: f64) -> PyResult<f64> {
    if n_children < 2 {
        return Err(PyValueError::new_err(
            "mixing proportion is defined for internal nodes (n_children >= 2)",
        ));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(PyValueError::new_err("gamma must lie in (0, 1)"));
    }
    Ok(brt::mixing_proportion(n_children, gamma))
}

/// Number of rose trees over n labeled leaves.
#[pyfunction]
fn count_rose_trees(n: usize) -> PyResult<BigUint> {
    if n == 0 {
        return Err(PyValueError::new_err("n must be at least 1"));
    }
    Ok(oracle::count_rose_trees(n))
}

/// Binary dataset drawn from the generative model: a uniformly random
/// rose tree over n points, a tree-consistent partition, then per-block
/// Bernoulli parameters. Deterministic given the seed.
#[pyfunction]
#[pyo3(signature = (n, dims, gamma = 0.5, seed = 0))]
fn sample_dataset(n: usize, dims: usize, gamma: f64, seed: u64) -> PyResult<Vec<Vec<u8>>> {
    let mut rng = datagen::trial_rng(seed, 1, 0);
    let shape =
        datagen::random_rose_tree(&(0..n).collect::<Vec<_>>(), &mut rng).map_err(to_py_err)?;
    let hyper = Hyperparams::uniform(gamma, dims).map_err(to_py_err)?;
    datagen::sample_dataset_with_rng(&shape, &hyper, dims, &mut rng).map_err(to_py_err)
}

/// The handcrafted 48×12 three-block toy matrix.
#[pyfunction]
#[pyo3(signature = (seed = 1729))]
fn toy_dataset(seed: u64) -> Vec<Vec<u8>> {
    datagen::toy_dataset(seed)
}

/// Two interlaced noisy curves for density regression; returns
/// (inputs, outputs).
#[pyfunction]
#[pyo3(signature = (n, noise_sd = 0.05, seed = 0))]
fn interlaced_curves(n: usize, noise_sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    datagen::interlaced_curves(n, noise_sd, seed)
}

/// Average excess bits per data vector of greedy trees against optima
/// (inputs in nats).
#[pyfunction]
fn delta_l(log_p_optimal: Vec<f64>, log_p_greedy: Vec<f64>, points_per_dataset: usize) -> PyResult<f64> {
    oracle::delta_l(&log_p_optimal, &log_p_greedy, points_per_dataset).map_err(to_py_err)
}

#[pymodule]
fn brt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBetaBernoulli>()?;
    m.add_class::<PyRoseTree>()?;
    m.add_class::<PyGpExperts>()?;
    m.add_class::<PyGpTree>()?;
    m.add_function(wrap_pyfunction!(mixing_proportion, m)?)?;
    m.add_function(wrap_pyfunction!(count_rose_trees, m)?)?;
    m.add_function(wrap_pyfunction!(sample_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(toy_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(interlaced_curves, m)?)?;
    m.add_function(wrap_pyfunction!(delta_l, m)?)?;
    Ok(())
}
