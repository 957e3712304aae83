//! Rose trees with cached cluster statistics and marginal likelihoods.
//!
//! A rose tree is either a leaf holding one data point or an internal node
//! with at least two child subtrees over disjoint data points. Every node
//! caches its cluster statistics, log f(leaves(T)), and the tree marginal
//! log p(leaves(T)|T), computed bottom-up at construction; nodes are
//! immutable afterwards.

use std::cell::Cell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::math::log_sum_exp2;
use crate::model::ClusterModel;

/// Opaque node identifier, unique within one factory's trees.
pub type NodeId = u64;

/// Prior probability that the leaves under a node with `n_children`
/// subtrees stay in one cluster: π = 1 − (1 − γ)^{n_children − 1}.
///
/// Leaves have no mixing proportion; calling this with fewer than two
/// children is a contract violation.
pub fn mixing_proportion(n_children: usize, gamma: f64) -> f64 {
    assert!(
        n_children >= 2,
        "mixing proportion is defined for internal nodes only"
    );
    debug_assert!(gamma > 0.0 && gamma < 1.0);
    -(((n_children - 1) as f64) * (-gamma).ln_1p()).exp_m1()
}

/// log(1 − π) = (n_children − 1) · log(1 − γ), computed without cancellation.
pub fn log_one_minus_pi(n_children: usize, gamma: f64) -> f64 {
    assert!(n_children >= 2);
    ((n_children - 1) as f64) * (-gamma).ln_1p()
}

/// log π for an internal node with `n_children` subtrees.
pub fn log_pi(n_children: usize, gamma: f64) -> f64 {
    (-log_one_minus_pi(n_children, gamma).exp_m1()).ln()
}

#[derive(Debug)]
pub enum TreeKind<S> {
    Leaf { data_index: usize },
    Internal { children: Vec<Arc<RoseTree<S>>> },
}

/// One node of a rose tree, owning its subtrees.
#[derive(Debug)]
pub struct RoseTree<S> {
    id: NodeId,
    kind: TreeKind<S>,
    n_leaves: usize,
    min_leaf: usize,
    stats: S,
    log_f: f64,
    log_p: f64,
    /// Σ over children of log p(leaves(T_i)|T_i); meaningless for leaves.
    log_split: f64,
    /// Mixing proportion of this node; 1 for leaves by convention.
    pi: f64,
}

impl<S> RoseTree<S> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn kind(&self) -> &TreeKind<S> {
        &self.kind
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, TreeKind::Leaf { .. })
    }

    /// Data index for a leaf, `None` for an internal node.
    pub fn data_index(&self) -> Option<usize> {
        match self.kind {
            TreeKind::Leaf { data_index } => Some(data_index),
            TreeKind::Internal { .. } => None,
        }
    }

    /// Child subtrees (empty slice for a leaf).
    pub fn children(&self) -> &[Arc<RoseTree<S>>] {
        match &self.kind {
            TreeKind::Leaf { .. } => &[],
            TreeKind::Internal { children } => children,
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    /// Smallest data index under this node.
    pub fn min_leaf(&self) -> usize {
        self.min_leaf
    }

    pub fn stats(&self) -> &S {
        &self.stats
    }

    /// Cached log f(leaves(T)).
    pub fn log_f(&self) -> f64 {
        self.log_f
    }

    /// Cached log p(leaves(T)|T), the mixture over tree-consistent
    /// partitions evaluated by dynamic programming.
    pub fn log_marginal(&self) -> f64 {
        self.log_p
    }

    /// Σ over children of their cached log marginals.
    pub fn log_split(&self) -> f64 {
        self.log_split
    }

    /// Mixing proportion π of this node (1 for leaves by convention).
    pub fn pi(&self) -> f64 {
        self.pi
    }

    /// Sorted data indices under this node.
    pub fn leaf_indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_leaves);
        self.collect_leaves(&mut out);
        out.sort_unstable();
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match &self.kind {
            TreeKind::Leaf { data_index } => out.push(*data_index),
            TreeKind::Internal { children } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    /// Visits every node in preorder.
    pub fn for_each_node(&self, f: &mut impl FnMut(&RoseTree<S>)) {
        f(self);
        for c in self.children() {
            c.for_each_node(f);
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.for_each_node(&mut |_| n += 1);
        n
    }

    pub fn max_arity(&self) -> usize {
        let mut k = 0;
        self.for_each_node(&mut |t| k = k.max(t.children().len()));
        k
    }

    /// Topology of this tree, dropping statistics and caches.
    pub fn to_shape(&self) -> TreeShape {
        match &self.kind {
            TreeKind::Leaf { data_index } => TreeShape::Leaf(*data_index),
            TreeKind::Internal { children } => {
                TreeShape::Node(children.iter().map(|c| c.to_shape()).collect())
            }
        }
    }
}

/// Recomputes log p(leaves(T)|T) under a different γ, reusing the cached
/// log f values (which do not depend on γ).
pub fn log_marginal_with_gamma<S>(tree: &RoseTree<S>, gamma: f64) -> f64 {
    match &tree.kind {
        TreeKind::Leaf { .. } => tree.log_f,
        TreeKind::Internal { children } => {
            let split: f64 = children
                .iter()
                .map(|c| log_marginal_with_gamma(c, gamma))
                .sum();
            let k = children.len();
            log_sum_exp2(
                log_pi(k, gamma) + tree.log_f,
                log_one_minus_pi(k, gamma) + split,
            )
        }
    }
}

/// Pure tree topology: leaves carry data indices, internal nodes carry
/// child lists. Used for enumeration, random generation, and re-scoring a
/// fixed structure under new hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeShape {
    Leaf(usize),
    Node(Vec<TreeShape>),
}

impl TreeShape {
    pub fn n_leaves(&self) -> usize {
        match self {
            TreeShape::Leaf(_) => 1,
            TreeShape::Node(children) => children.iter().map(|c| c.n_leaves()).sum(),
        }
    }

    pub fn min_leaf(&self) -> usize {
        match self {
            TreeShape::Leaf(i) => *i,
            TreeShape::Node(children) => {
                children.iter().map(|c| c.min_leaf()).min().unwrap_or(usize::MAX)
            }
        }
    }

    /// Sorted data indices under this shape.
    pub fn leaf_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out.sort_unstable();
        out
    }

    fn collect(&self, out: &mut Vec<usize>) {
        match self {
            TreeShape::Leaf(i) => out.push(*i),
            TreeShape::Node(children) => {
                for c in children {
                    c.collect(out);
                }
            }
        }
    }

    /// Recursively sorts children by smallest contained data index.
    pub fn canonicalized(self) -> TreeShape {
        match self {
            TreeShape::Leaf(i) => TreeShape::Leaf(i),
            TreeShape::Node(children) => {
                let mut children: Vec<TreeShape> =
                    children.into_iter().map(|c| c.canonicalized()).collect();
                children.sort_by_key(|c| c.min_leaf());
                TreeShape::Node(children)
            }
        }
    }

    /// Checks arity and leaf-disjointness invariants.
    pub fn validate(&self) -> Result<()> {
        if let TreeShape::Node(children) = self {
            if children.len() < 2 {
                return Err(Error::InvalidArgument(
                    "internal nodes need at least 2 children".into(),
                ));
            }
            for c in children {
                c.validate()?;
            }
        }
        let leaves = self.leaf_indices();
        if leaves.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::OverlappingLeaves);
        }
        Ok(())
    }
}

/// Builds rose-tree nodes against a fixed model and γ, assigning ids and
/// computing caches bottom-up.
pub struct TreeFactory<'a, M: ClusterModel> {
    model: &'a M,
    gamma: f64,
    next_id: Cell<NodeId>,
}

impl<'a, M: ClusterModel> TreeFactory<'a, M> {
    pub fn new(model: &'a M, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidHyper(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        Ok(Self {
            model,
            gamma,
            next_id: Cell::new(0),
        })
    }

    pub fn model(&self) -> &M {
        self.model
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn take_id(&self) -> NodeId {
        let id = self.next_id.get();
        self.next_id.set(id + 1);
        id
    }

    fn checked(log_value: f64) -> Result<f64> {
        if log_value.is_nan() || log_value == f64::INFINITY {
            Err(Error::NonFiniteLikelihood)
        } else {
            Ok(log_value)
        }
    }

    /// Leaf node for one data point.
    pub fn leaf(&self, data_index: usize) -> Result<Arc<RoseTree<M::Stats>>> {
        let stats = self.model.leaf_stats(data_index)?;
        let log_f = Self::checked(self.model.log_f(&stats)?)?;
        Ok(Arc::new(RoseTree {
            id: self.take_id(),
            kind: TreeKind::Leaf { data_index },
            n_leaves: 1,
            min_leaf: data_index,
            stats,
            log_f,
            log_p: log_f,
            log_split: f64::NAN,
            pi: 1.0,
        }))
    }

    /// Internal node over the given subtrees. Children are stored sorted
    /// by smallest contained data index; their leaf sets must be disjoint.
    pub fn internal(
        &self,
        mut children: Vec<Arc<RoseTree<M::Stats>>>,
    ) -> Result<Arc<RoseTree<M::Stats>>> {
        if children.len() < 2 {
            return Err(Error::InvalidMerge(
                "internal nodes need at least 2 children".into(),
            ));
        }
        children.sort_by_key(|c| c.min_leaf());

        let mut leaves: Vec<usize> = Vec::with_capacity(children.iter().map(|c| c.n_leaves).sum());
        for c in &children {
            c.collect_leaves(&mut leaves);
        }
        leaves.sort_unstable();
        if leaves.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::OverlappingLeaves);
        }

        let mut stats = self
            .model
            .merge_stats(&children[0].stats, &children[1].stats)?;
        for c in &children[2..] {
            stats = self.model.merge_stats(&stats, &c.stats)?;
        }
        let log_f = Self::checked(self.model.log_f(&stats)?)?;
        let log_split: f64 = children.iter().map(|c| c.log_p).sum();
        let k = children.len();
        let log_p = Self::checked(log_sum_exp2(
            log_pi(k, self.gamma) + log_f,
            log_one_minus_pi(k, self.gamma) + log_split,
        ))?;

        Ok(Arc::new(RoseTree {
            id: self.take_id(),
            n_leaves: leaves.len(),
            min_leaf: children[0].min_leaf,
            kind: TreeKind::Internal { children },
            stats,
            log_f,
            log_p,
            log_split,
            pi: mixing_proportion(k, self.gamma),
        }))
    }

    /// Materializes a topology into a fully scored tree.
    pub fn from_shape(&self, shape: &TreeShape) -> Result<Arc<RoseTree<M::Stats>>> {
        match shape {
            TreeShape::Leaf(i) => self.leaf(*i),
            TreeShape::Node(children) => {
                let built = children
                    .iter()
                    .map(|c| self.from_shape(c))
                    .collect::<Result<Vec<_>>>()?;
                self.internal(built)
            }
        }
    }
}

/// Re-scores a tree's topology under a (possibly different) model and γ.
pub fn rescore<M: ClusterModel>(
    tree: &RoseTree<impl Clone>,
    model: &M,
    gamma: f64,
) -> Result<Arc<RoseTree<M::Stats>>> {
    TreeFactory::new(model, gamma)?.from_shape(&tree.to_shape())
}
