//! Bayesian rose trees: hierarchical clustering with arbitrary branching.
//!
//! A rose tree over a dataset is interpreted as a mixture over the
//! partitions consistent with it; the marginal likelihood of the data
//! under a tree is computable by dynamic programming, and trees are found
//! by a greedy agglomerative search over join, absorb, and collapse
//! merges. Non-binary nodes let the model collapse cascades that binary
//! hierarchical clustering is forced to hallucinate, so the chosen trees
//! are simpler and at least as probable.
//!
//! The crate provides:
//!
//! * [`tree`] — rose trees, mixing proportions, and the cached marginal;
//! * [`partition`] — tree-consistent partitions, their priors and
//!   likelihoods, and a brute-force mixture evaluation used as an oracle;
//! * [`bernoulli`] — the beta-Bernoulli cluster marginal for binary data;
//! * [`builder`] — the greedy construction (join/absorb/collapse; a
//!   join-only mode reproduces constant-γ binary clustering);
//! * [`hyperopt`] — responsibilities, marginal gradients, Brent's method
//!   for γ, gradient ascent for likelihood hyperparameters, and the
//!   alternating fit;
//! * [`oracle`] — exhaustive enumeration over small leaf sets, the
//!   maximum-likelihood tree, and the optimality experiment;
//! * [`gp`] — the mixture of Gaussian-process experts for density
//!   regression;
//! * [`datagen`] — synthetic data drawn from the generative model.

pub mod bernoulli;
pub mod builder;
pub mod datagen;
pub mod error;
pub mod gp;
pub mod hyperopt;
pub mod math;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod tree;

pub use bernoulli::{BetaBernoulli, ClusterStats, Hyperparams};
pub use builder::{build, BuildMode, MergeOp};
pub use error::{Error, Result};
pub use model::{ClusterModel, GradientModel};
pub use partition::{
    brute_force_marginal, count_partitions, enumerate_partitions, partition_log_likelihood,
    partition_prior, Partition,
};
pub use tree::{mixing_proportion, NodeId, RoseTree, TreeFactory, TreeShape};
