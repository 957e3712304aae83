//! Greedy agglomerative construction of rose trees.
//!
//! Starting from one tree per data point, repeatedly applies the merge
//! (pair of trees plus operator) with the highest marginal likelihood
//! ratio until a single tree remains. Joins create a new binary node;
//! absorbs adopt one tree as an extra child of the other's root; collapses
//! fuse both roots' child lists. Restricting to joins recovers the
//! constant-π binary baseline.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::math::log_sum_exp2;
use crate::model::ClusterModel;
use crate::tree::{log_one_minus_pi, log_pi, NodeId, RoseTree, TreeFactory};

/// Which merge operators the search may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuildMode {
    /// Join, both absorb directions, and collapse.
    Rose,
    /// Join only; every internal node stays binary (the constant-γ
    /// binary-clustering baseline).
    BinaryOnly,
}

/// Merge operator applied to an (unordered) pair of trees, stored with
/// the smaller root id on the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeOp {
    /// New node with both trees as children.
    Join,
    /// Right tree becomes one more child of the left root.
    AbsorbIntoLeft,
    /// Left tree becomes one more child of the right root.
    AbsorbIntoRight,
    /// Both roots are removed and their child lists fused.
    Collapse,
}

impl MergeOp {
    pub const ALL: [MergeOp; 4] = [
        MergeOp::Join,
        MergeOp::AbsorbIntoLeft,
        MergeOp::AbsorbIntoRight,
        MergeOp::Collapse,
    ];

    /// Preference under exact score ties: operators producing fewer
    /// partitions win (collapse, then absorb, then join).
    fn simplicity_rank(self) -> u8 {
        match self {
            MergeOp::Collapse => 3,
            MergeOp::AbsorbIntoLeft => 2,
            MergeOp::AbsorbIntoRight => 1,
            MergeOp::Join => 0,
        }
    }

    fn valid_for<S>(self, left: &RoseTree<S>, right: &RoseTree<S>) -> bool {
        match self {
            MergeOp::Join => true,
            MergeOp::AbsorbIntoLeft => !left.is_leaf(),
            MergeOp::AbsorbIntoRight => !right.is_leaf(),
            MergeOp::Collapse => !left.is_leaf() && !right.is_leaf(),
        }
    }
}

/// A scored merge proposal in the search frontier. Candidates referring
/// to trees no longer in the forest are stale and skipped on pop.
#[derive(Debug, Clone, Copy)]
pub struct MergeCandidate {
    pub log_ratio: f64,
    pub op: MergeOp,
    pub left: NodeId,
    pub right: NodeId,
}

impl MergeCandidate {
    /// Stale once either endpoint has been merged away.
    pub fn is_stale<M: ClusterModel>(&self, forest: &Forest<M>) -> bool {
        !forest.live.contains_key(&self.left) || !forest.live.contains_key(&self.right)
    }
}

impl PartialEq for MergeCandidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for MergeCandidate {}

impl PartialOrd for MergeCandidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MergeCandidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_ratio
            .total_cmp(&other.log_ratio)
            .then_with(|| self.op.simplicity_rank().cmp(&other.op.simplicity_rank()))
            .then_with(|| (other.left, other.right).cmp(&(self.left, self.right)))
    }
}

/// The set of live trees plus the candidate priority queue.
pub struct Forest<M: ClusterModel> {
    live: HashMap<NodeId, Arc<RoseTree<M::Stats>>>,
    heap: BinaryHeap<MergeCandidate>,
    mode: BuildMode,
}

impl<M: ClusterModel> Forest<M> {
    fn new(mode: BuildMode) -> Self {
        Self {
            live: HashMap::new(),
            heap: BinaryHeap::new(),
            mode,
        }
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    /// Number of non-stale candidates currently queued.
    pub fn live_candidate_count(&self) -> usize {
        self.heap.iter().filter(|c| !c.is_stale(self)).count()
    }

    fn push_candidates(
        &mut self,
        factory: &TreeFactory<M>,
        a: &Arc<RoseTree<M::Stats>>,
        b: &Arc<RoseTree<M::Stats>>,
    ) -> Result<()> {
        let (left, right) = if a.id() < b.id() { (a, b) } else { (b, a) };
        let ops: &[MergeOp] = match self.mode {
            BuildMode::Rose => &MergeOp::ALL,
            BuildMode::BinaryOnly => &[MergeOp::Join],
        };
        for &op in ops {
            if !op.valid_for(left.as_ref(), right.as_ref()) {
                continue;
            }
            let log_ratio = score_merge(factory, left, right, op)?;
            self.heap.push(MergeCandidate {
                log_ratio,
                op,
                left: left.id(),
                right: right.id(),
            });
        }
        Ok(())
    }

    /// Scores the freshly merged tree against every live tree and queues
    /// the results; candidates touching its constituents are already stale
    /// because those ids were removed.
    pub fn refresh_candidates(
        &mut self,
        factory: &TreeFactory<M>,
        merged: &Arc<RoseTree<M::Stats>>,
    ) -> Result<()> {
        let partners: Vec<Arc<RoseTree<M::Stats>>> = self.live.values().cloned().collect();
        for partner in partners {
            self.push_candidates(factory, merged, &partner)?;
        }
        self.live.insert(merged.id(), merged.clone());
        Ok(())
    }

    fn pop_live(&mut self) -> Option<MergeCandidate> {
        while let Some(candidate) = self.heap.pop() {
            if !candidate.is_stale(self) {
                return Some(candidate);
            }
        }
        None
    }
}

/// Scores a proposed merge without materializing the merged node:
/// log p(leaves(T_m)|T_m) − log p(leaves(T_i)|T_i) − log p(leaves(T_j)|T_j).
///
/// The merged marginal only needs the merged cluster statistics plus the
/// operands' cached marginals, so each call costs one model evaluation.
pub fn score_merge<M: ClusterModel>(
    factory: &TreeFactory<M>,
    left: &Arc<RoseTree<M::Stats>>,
    right: &Arc<RoseTree<M::Stats>>,
    op: MergeOp,
) -> Result<f64> {
    if !op.valid_for(left.as_ref(), right.as_ref()) {
        return Err(Error::InvalidMerge(format!(
            "{op:?} requires internal-node operands"
        )));
    }
    let model = factory.model();
    let gamma = factory.gamma();
    let stats = model.merge_stats(left.stats(), right.stats())?;
    let log_f = model.log_f(&stats)?;
    if log_f.is_nan() {
        return Err(Error::NonFiniteLikelihood);
    }
    let (arity, log_split) = match op {
        MergeOp::Join => (2, left.log_marginal() + right.log_marginal()),
        MergeOp::AbsorbIntoLeft => (
            left.children().len() + 1,
            left.log_split() + right.log_marginal(),
        ),
        MergeOp::AbsorbIntoRight => (
            right.children().len() + 1,
            left.log_marginal() + right.log_split(),
        ),
        MergeOp::Collapse => (
            left.children().len() + right.children().len(),
            left.log_split() + right.log_split(),
        ),
    };
    let log_p = log_sum_exp2(
        log_pi(arity, gamma) + log_f,
        log_one_minus_pi(arity, gamma) + log_split,
    );
    Ok(log_p - left.log_marginal() - right.log_marginal())
}

/// Materializes the merge of two trees under the given operator.
pub fn apply_merge<M: ClusterModel>(
    factory: &TreeFactory<M>,
    left: &Arc<RoseTree<M::Stats>>,
    right: &Arc<RoseTree<M::Stats>>,
    op: MergeOp,
) -> Result<Arc<RoseTree<M::Stats>>> {
    if !op.valid_for(left.as_ref(), right.as_ref()) {
        return Err(Error::InvalidMerge(format!(
            "{op:?} requires internal-node operands"
        )));
    }
    let children = match op {
        MergeOp::Join => vec![left.clone(), right.clone()],
        MergeOp::AbsorbIntoLeft => {
            let mut c = left.children().to_vec();
            c.push(right.clone());
            c
        }
        MergeOp::AbsorbIntoRight => {
            let mut c = right.children().to_vec();
            c.push(left.clone());
            c
        }
        MergeOp::Collapse => {
            let mut c = left.children().to_vec();
            c.extend_from_slice(right.children());
            c
        }
    };
    factory.internal(children)
}

/// log of the likelihood ratio for an already-materialized merge.
pub fn log_likelihood_ratio<S>(
    merged: &RoseTree<S>,
    left: &RoseTree<S>,
    right: &RoseTree<S>,
) -> f64 {
    merged.log_marginal() - left.log_marginal() - right.log_marginal()
}

/// Greedily builds a single rose tree over all of the model's data points
/// with exactly n − 1 merges. Ties on the likelihood ratio prefer the
/// operator producing fewer partitions, then the lower id pair, so the
/// result is deterministic.
pub fn build<M: ClusterModel>(
    model: &M,
    gamma: f64,
    mode: BuildMode,
) -> Result<Arc<RoseTree<M::Stats>>> {
    let factory = TreeFactory::new(model, gamma)?;
    build_with_factory(&factory, mode)
}

/// As [`build`], but reusing a caller-provided factory (and hence its
/// node-id sequence).
pub fn build_with_factory<M: ClusterModel>(
    factory: &TreeFactory<M>,
    mode: BuildMode,
) -> Result<Arc<RoseTree<M::Stats>>> {
    let n = factory.model().n_points();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if n == 1 {
        return factory.leaf(0);
    }

    let mut forest = Forest::new(mode);
    let leaves: Vec<Arc<RoseTree<M::Stats>>> = (0..n)
        .map(|i| factory.leaf(i))
        .collect::<Result<Vec<_>>>()?;
    for (i, a) in leaves.iter().enumerate() {
        forest.live.insert(a.id(), a.clone());
        for b in &leaves[i + 1..] {
            // Leaves only admit joins, so mode does not matter here.
            let log_ratio = score_merge(factory, a, b, MergeOp::Join)?;
            forest.heap.push(MergeCandidate {
                log_ratio,
                op: MergeOp::Join,
                left: a.id().min(b.id()),
                right: a.id().max(b.id()),
            });
        }
    }
    forest.live.insert(leaves[n - 1].id(), leaves[n - 1].clone());

    let mut merges = 0_usize;
    while forest.live_count() > 1 {
        let candidate = forest
            .pop_live()
            .ok_or_else(|| Error::InvalidMerge("candidate queue exhausted early".into()))?;
        let left = forest.live.remove(&candidate.left).expect("live checked");
        let right = forest.live.remove(&candidate.right).expect("live checked");
        let merged = apply_merge(factory, &left, &right, candidate.op)?;
        forest.refresh_candidates(factory, &merged)?;
        merges += 1;
        // Live leaf sets always partition the dataset.
        debug_assert_eq!(
            forest.live.values().map(|t| t.n_leaves()).sum::<usize>(),
            n
        );
    }
    debug_assert_eq!(merges, n - 1);

    let (_, root) = forest.live.drain().next().expect("one tree remains");
    Ok(root)
}
