//! Tree-consistent partitions and the partition-space view of the marginal.
//!
//! A rose tree represents a mixture over the partitions obtained by
//! recursively deciding, at each node, whether to keep its leaves together
//! or split them into the children. This module enumerates that set,
//! evaluates partition priors and likelihoods, and sums them directly as a
//! brute-force oracle for the dynamic-programming marginal.

use std::collections::HashSet;

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::ClusterModel;
use crate::tree::{mixing_proportion, RoseTree, TreeKind};

/// A division of data indices into disjoint non-empty blocks, kept in
/// canonical form: each block sorted, blocks ordered by first element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &i in block {
                if !seen.insert(i) {
                    return Err(Error::InvalidPartition(format!(
                        "index {i} appears in two blocks"
                    )));
                }
            }
        }
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    /// The one-block partition of a ground set.
    pub fn complete(ground: Vec<usize>) -> Result<Self> {
        Self::new(vec![ground])
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Sorted union of all blocks.
    pub fn ground_set(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.blocks.iter().flatten().cloned().collect();
        all.sort_unstable();
        all
    }

    fn contains_block(&self, block: &[usize]) -> bool {
        self.blocks.iter().any(|b| b == block)
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rendered: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        write!(f, "{{{}}}", rendered.join("|"))
    }
}

/// All partitions consistent with the tree: the complete partition plus
/// every combination of the children's consistent partitions. Output size
/// is exponential in general; callers bound the tree.
pub fn enumerate_partitions<S>(tree: &RoseTree<S>) -> Vec<Partition> {
    fn blocks_of<S>(tree: &RoseTree<S>) -> Vec<Vec<Vec<usize>>> {
        match tree.kind() {
            TreeKind::Leaf { data_index } => vec![vec![vec![*data_index]]],
            TreeKind::Internal { children } => {
                let mut out = vec![vec![tree.leaf_indices()]];
                let child_sets: Vec<Vec<Vec<Vec<usize>>>> =
                    children.iter().map(|c| blocks_of(c)).collect();
                let mut combos: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
                for set in child_sets {
                    let mut next = Vec::with_capacity(combos.len() * set.len());
                    for prefix in &combos {
                        for choice in &set {
                            let mut merged = prefix.clone();
                            merged.extend(choice.iter().cloned());
                            next.push(merged);
                        }
                    }
                    combos = next;
                }
                out.extend(combos);
                out
            }
        }
    }
    blocks_of(tree)
        .into_iter()
        .map(|blocks| Partition::new(blocks).expect("tree leaves are disjoint"))
        .collect()
}

/// Number of partitions consistent with the tree:
/// 1 for a leaf, otherwise 1 + Π over children of their counts.
pub fn count_partitions<S>(tree: &RoseTree<S>) -> BigUint {
    match tree.kind() {
        TreeKind::Leaf { .. } => BigUint::from(1_u32),
        TreeKind::Internal { children } => {
            let product = children
                .iter()
                .map(|c| count_partitions(c.as_ref()))
                .fold(BigUint::from(1_u32), |acc, c| acc * c);
            BigUint::from(1_u32) + product
        }
    }
}

/// Prior mass of a tree-consistent partition:
/// Π over split ancestors of (1 − π_A) times Π over frontier subtrees of
/// π_S, with leaf subtrees contributing factor 1. Sums to 1 over the
/// partitions consistent with the tree.
pub fn partition_prior<S>(tree: &RoseTree<S>, phi: &Partition, gamma: f64) -> Result<f64> {
    if phi.ground_set() != tree.leaf_indices() {
        return Err(Error::InconsistentPartition);
    }

    fn walk<S>(node: &RoseTree<S>, phi: &Partition, gamma: f64) -> Result<f64> {
        let leaves = node.leaf_indices();
        if phi.contains_block(&leaves) {
            return Ok(match node.kind() {
                TreeKind::Leaf { .. } => 1.0,
                TreeKind::Internal { children } => mixing_proportion(children.len(), gamma),
            });
        }
        match node.kind() {
            TreeKind::Leaf { .. } => Err(Error::InconsistentPartition),
            TreeKind::Internal { children } => {
                let mut prob = 1.0 - mixing_proportion(children.len(), gamma);
                for c in children {
                    prob *= walk(c, phi, gamma)?;
                }
                Ok(prob)
            }
        }
    }
    walk(tree, phi, gamma)
}

/// log p(𝒟|φ) = Σ over blocks of log f(block).
pub fn partition_log_likelihood<M: ClusterModel>(phi: &Partition, model: &M) -> Result<f64> {
    let mut total = 0.0;
    for block in phi.blocks() {
        let mut stats = model.leaf_stats(block[0])?;
        for &i in &block[1..] {
            stats = model.merge_stats(&stats, &model.leaf_stats(i)?)?;
        }
        total += model.log_f(&stats)?;
    }
    if total.is_nan() {
        return Err(Error::NonFiniteLikelihood);
    }
    Ok(total)
}

/// Evaluates the marginal log p(𝒟|T) by explicit summation over all
/// tree-consistent partitions. Refuses trees whose partition count exceeds
/// `limit`. This is the enumeration oracle for the cached DP marginal.
pub fn brute_force_marginal<M: ClusterModel>(
    tree: &RoseTree<M::Stats>,
    model: &M,
    gamma: f64,
    limit: u64,
) -> Result<f64> {
    let count = count_partitions(tree);
    if count > BigUint::from(limit) {
        return Err(Error::PartitionBound {
            count: count.to_string(),
            limit,
        });
    }
    let mut terms = Vec::new();
    for phi in enumerate_partitions(tree) {
        let prior = partition_prior(tree, &phi, gamma)?;
        terms.push(prior.ln() + partition_log_likelihood(&phi, model)?);
    }
    Ok(log_sum_exp(&terms))
}
