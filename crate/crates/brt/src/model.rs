//! Abstract cluster-likelihood interface.
//!
//! A model owns the dataset and scores sets of points through additive
//! (or accumulated) sufficient statistics. The tree machinery is generic
//! over it, so the beta-Bernoulli model and the GP-experts model share one
//! construction algorithm.

use crate::error::Result;

/// A cluster marginal likelihood f(𝒟) over subsets of the model's dataset.
pub trait ClusterModel {
    /// Per-cluster accumulated state; merging two clusters merges states.
    type Stats: Clone;

    /// Number of data points in the dataset the model wraps.
    fn n_points(&self) -> usize;

    /// Statistics of the singleton cluster `{x_index}`.
    fn leaf_stats(&self, index: usize) -> Result<Self::Stats>;

    /// Statistics of the union of two disjoint clusters.
    fn merge_stats(&self, a: &Self::Stats, b: &Self::Stats) -> Result<Self::Stats>;

    /// log f(cluster). Must be finite for every reachable cluster.
    fn log_f(&self, stats: &Self::Stats) -> Result<f64>;
}

/// Differentiability in the likelihood hyperparameters, for gradient-based
/// fitting. Hyperparameters are exposed as a flat positive vector.
pub trait GradientModel: ClusterModel + Sized {
    /// Current hyperparameter values (all strictly positive).
    fn hyper_values(&self) -> Vec<f64>;

    /// A copy of the model with replaced hyperparameter values.
    fn with_hyper_values(&self, values: &[f64]) -> Result<Self>;

    /// ∂ log f(cluster) / ∂ hyperparameter, aligned with `hyper_values`.
    fn log_f_grad(&self, stats: &Self::Stats) -> Result<Vec<f64>>;
}
