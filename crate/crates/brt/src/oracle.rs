//! Exhaustive search over rose trees on small leaf sets.
//!
//! Enumerates every rose tree over a leaf set (recursing over set
//! partitions, in canonical child order so each unordered tree appears
//! once), finds the maximum-likelihood tree, and runs the greedy-versus-
//! optimal experiment measured in excess bits per data vector.

use std::sync::Arc;

use num_bigint::BigUint;

use crate::bernoulli::{BetaBernoulli, Hyperparams};
use crate::builder::{build, BuildMode};
use crate::datagen::{random_rose_tree, sample_dataset_with_rng, trial_rng};
use crate::error::{Error, Result};
use crate::math::log_sum_exp2;
use crate::model::ClusterModel;
use crate::tree::{log_one_minus_pi, log_pi, RoseTree, TreeFactory, TreeShape};

/// Largest leaf set the exhaustive machinery accepts.
pub const MAX_EXHAUSTIVE_LEAVES: usize = 8;

/// Visits every partition of `items` into at least `min_blocks` non-empty
/// blocks, via restricted-growth strings. Blocks arrive ordered by their
/// smallest element.
pub fn for_each_set_partition<T: Clone>(
    items: &[T],
    min_blocks: usize,
    visit: &mut dyn FnMut(&[Vec<T>]),
) {
    let n = items.len();
    if n == 0 {
        return;
    }
    // rgs[i] = block index of item i; rgs[i] ≤ 1 + max(rgs[..i]).
    fn recurse<T: Clone>(
        items: &[T],
        rgs: &mut Vec<usize>,
        max_used: usize,
        min_blocks: usize,
        visit: &mut dyn FnMut(&[Vec<T>]),
    ) {
        if rgs.len() == items.len() {
            let n_blocks = max_used + 1;
            if n_blocks >= min_blocks {
                let mut blocks: Vec<Vec<T>> = vec![Vec::new(); n_blocks];
                for (i, &b) in rgs.iter().enumerate() {
                    blocks[b].push(items[i].clone());
                }
                visit(&blocks);
            }
            return;
        }
        for b in 0..=max_used + 1 {
            rgs.push(b);
            recurse(items, rgs, max_used.max(b), min_blocks, visit);
            rgs.pop();
        }
    }
    let mut rgs = vec![0];
    recurse(items, &mut rgs, 0, min_blocks, visit);
}

/// The (lazily enumerated) space of all rose trees over a leaf set.
pub struct TreeSpace {
    leaves: Vec<usize>,
}

impl TreeSpace {
    pub fn new(mut leaves: Vec<usize>) -> Result<Self> {
        leaves.sort_unstable();
        if leaves.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate leaf index".into()));
        }
        if leaves.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if leaves.len() > MAX_EXHAUSTIVE_LEAVES {
            return Err(Error::LeafBound {
                n: leaves.len(),
                max: MAX_EXHAUSTIVE_LEAVES,
            });
        }
        Ok(Self { leaves })
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    /// Streams every rose tree over the leaf set exactly once, in
    /// canonical (children by smallest leaf) order.
    pub fn for_each(&self, visit: &mut dyn FnMut(&TreeShape)) {
        visit_trees(&self.leaves, visit);
    }

    /// Materializes the whole enumeration; callers keep the leaf count
    /// small.
    pub fn shapes(&self) -> Vec<TreeShape> {
        let mut out = Vec::new();
        self.for_each(&mut |t| out.push(t.clone()));
        out
    }
}

fn visit_trees(leaves: &[usize], visit: &mut dyn FnMut(&TreeShape)) {
    if leaves.len() == 1 {
        visit(&TreeShape::Leaf(leaves[0]));
        return;
    }
    for_each_set_partition(leaves, 2, &mut |blocks| {
        let mut acc: Vec<TreeShape> = Vec::with_capacity(blocks.len());
        visit_product(blocks, &mut acc, visit);
    });
}

/// Cross product over the blocks' subtree choices.
fn visit_product(
    blocks: &[Vec<usize>],
    acc: &mut Vec<TreeShape>,
    visit: &mut dyn FnMut(&TreeShape),
) {
    if acc.len() == blocks.len() {
        visit(&TreeShape::Node(acc.clone()));
        return;
    }
    let next = acc.len();
    // Temporarily move acc into the closure through a raw split: recursion
    // needs both the accumulator and the visitor mutably.
    let block = &blocks[next];
    let mut inner = |subtree: &TreeShape| {
        acc.push(subtree.clone());
        visit_product(blocks, acc, visit);
        acc.pop();
    };
    // Single leaf blocks short-circuit without recursion.
    if block.len() == 1 {
        inner(&TreeShape::Leaf(block[0]));
    } else {
        visit_trees(block, &mut inner);
    }
}

/// Number of rose trees over n labeled leaves, via the recurrence over
/// integer partitions: R(1) = 1 and, for n ≥ 2,
/// R(n) = Σ over block-size multisets {λ} of (set partitions with those
/// sizes) · Π R(λ_i).
pub fn count_rose_trees(n: usize) -> BigUint {
    assert!(n >= 1);
    let mut factorial = vec![BigUint::from(1_u32)];
    for k in 1..=n {
        let next = &factorial[k - 1] * BigUint::from(k as u32);
        factorial.push(next);
    }
    let mut counts: Vec<BigUint> = vec![BigUint::from(0_u32); n + 1];
    counts[1] = BigUint::from(1_u32);

    // Integer partitions of m into parts ≤ cap, at least 2 parts.
    fn partitions(m: usize, cap: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if m == 0 {
            if current.len() >= 2 {
                out.push(current.clone());
            }
            return;
        }
        for part in (1..=cap.min(m)).rev() {
            current.push(part);
            partitions(m - part, part, current, out);
            current.pop();
        }
    }

    for m in 2..=n {
        let mut parts = Vec::new();
        partitions(m, m - 1, &mut Vec::new(), &mut parts);
        let mut total = BigUint::from(0_u32);
        for lambda in parts {
            // #set partitions with sizes λ = m! / (Π λ_i! · Π mult_j!).
            let mut denom = BigUint::from(1_u32);
            for &part in &lambda {
                denom *= &factorial[part];
            }
            let mut run = 1_usize;
            for w in lambda.windows(2) {
                if w[0] == w[1] {
                    run += 1;
                } else {
                    denom *= &factorial[run];
                    run = 1;
                }
            }
            denom *= &factorial[run];
            let mut term = &factorial[m] / denom;
            for &part in &lambda {
                term *= &counts[part];
            }
            total += term;
        }
        counts[m] = total;
    }
    counts[n].clone()
}

/// Postorder-flattened tree over leaves 0..n, for fast repeated scoring.
/// Leaves push their subset log f; an internal node of arity k pops k
/// child marginals and pushes the mixture.
struct FlatNode {
    mask: u16,
    arity: u8,
}

pub(crate) struct ShapeArena {
    nodes: Vec<FlatNode>,
    bounds: Vec<u32>,
}

impl ShapeArena {
    /// Enumerates and flattens every rose tree over 0..n.
    pub(crate) fn build(n: usize) -> Result<Self> {
        let leaves: Vec<usize> = (0..n).collect();
        let space = TreeSpace::new(leaves)?;
        let mut arena = ShapeArena {
            nodes: Vec::new(),
            bounds: vec![0],
        };
        space.for_each(&mut |shape| {
            flatten(shape, &mut arena.nodes);
            arena.bounds.push(arena.nodes.len() as u32);
        });
        Ok(arena)
    }

    pub(crate) fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    fn slice(&self, i: usize) -> &[FlatNode] {
        &self.nodes[self.bounds[i] as usize..self.bounds[i + 1] as usize]
    }

    /// Marginal log p under the subset table `log_f` (indexed by leaf
    /// bitmask) and per-arity log mixing terms.
    pub(crate) fn score(&self, i: usize, log_f: &[f64], mix: &[(f64, f64)], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        for node in self.slice(i) {
            if node.arity == 0 {
                stack.push(log_f[node.mask as usize]);
            } else {
                let mut split = 0.0;
                for _ in 0..node.arity {
                    split += stack.pop().expect("postorder stack underflow");
                }
                let (lp, lq) = mix[node.arity as usize];
                stack.push(log_sum_exp2(
                    lp + log_f[node.mask as usize],
                    lq + split,
                ));
            }
        }
        debug_assert_eq!(stack.len(), 1);
        stack[0]
    }

    /// Partition count of the i-th tree (small for n ≤ 8).
    fn partition_count(&self, i: usize) -> u64 {
        let mut stack: Vec<u64> = Vec::new();
        for node in self.slice(i) {
            if node.arity == 0 {
                stack.push(1);
            } else {
                let mut product = 1_u64;
                for _ in 0..node.arity {
                    product *= stack.pop().expect("postorder stack underflow");
                }
                stack.push(1 + product);
            }
        }
        stack[0]
    }

    /// Rebuilds the i-th tree as a structured shape.
    fn to_shape(&self, i: usize) -> TreeShape {
        let mut stack: Vec<TreeShape> = Vec::new();
        for node in self.slice(i) {
            if node.arity == 0 {
                stack.push(TreeShape::Leaf(node.mask.trailing_zeros() as usize));
            } else {
                let at = stack.len() - node.arity as usize;
                let children = stack.split_off(at);
                stack.push(TreeShape::Node(children));
            }
        }
        stack.pop().expect("non-empty shape")
    }
}

fn flatten(shape: &TreeShape, out: &mut Vec<FlatNode>) -> u16 {
    match shape {
        TreeShape::Leaf(i) => {
            let mask = 1_u16 << *i;
            out.push(FlatNode { mask, arity: 0 });
            mask
        }
        TreeShape::Node(children) => {
            let mut mask = 0_u16;
            for c in children {
                mask |= flatten(c, out);
            }
            out.push(FlatNode {
                mask,
                arity: children.len() as u8,
            });
            mask
        }
    }
}

/// log f for every non-empty subset of the model's points, indexed by
/// bitmask.
pub(crate) fn subset_log_f<M: ClusterModel>(model: &M, n: usize) -> Result<Vec<f64>> {
    let size = 1_usize << n;
    let mut stats: Vec<Option<M::Stats>> = vec![None; size];
    let mut log_f = vec![0.0; size];
    for i in 0..n {
        let s = model.leaf_stats(i)?;
        log_f[1 << i] = model.log_f(&s)?;
        stats[1 << i] = Some(s);
    }
    for mask in 1..size {
        if mask.count_ones() < 2 {
            continue;
        }
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let merged = model.merge_stats(
            stats[rest].as_ref().expect("filled in mask order"),
            stats[low].as_ref().expect("single bits filled"),
        )?;
        log_f[mask] = model.log_f(&merged)?;
        if log_f[mask].is_nan() {
            return Err(Error::NonFiniteLikelihood);
        }
        stats[mask] = Some(merged);
    }
    Ok(log_f)
}

pub(crate) fn mixing_table(n: usize, gamma: f64) -> Vec<(f64, f64)> {
    let mut mix = vec![(0.0, 0.0); n + 1];
    for k in 2..=n {
        mix[k] = (log_pi(k, gamma), log_one_minus_pi(k, gamma));
    }
    mix
}

/// Maximum-likelihood rose tree over all of the model's points, found by
/// scoring the complete enumeration. Ties prefer fewer partitions, then
/// the earlier tree in canonical enumeration order.
pub fn optimal_tree<M: ClusterModel>(
    model: &M,
    gamma: f64,
) -> Result<(Arc<RoseTree<M::Stats>>, f64)> {
    let n = model.n_points();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if n > MAX_EXHAUSTIVE_LEAVES {
        return Err(Error::LeafBound {
            n,
            max: MAX_EXHAUSTIVE_LEAVES,
        });
    }
    let factory = TreeFactory::new(model, gamma)?;
    if n == 1 {
        let leaf = factory.leaf(0)?;
        let score = leaf.log_marginal();
        return Ok((leaf, score));
    }
    let arena = ShapeArena::build(n)?;
    let log_f = subset_log_f(model, n)?;
    let mix = mixing_table(n, gamma);
    let mut stack = Vec::with_capacity(2 * n);

    let mut best_idx = 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_partitions = u64::MAX;
    for i in 0..arena.len() {
        let score = arena.score(i, &log_f, &mix, &mut stack);
        if score > best_score {
            best_score = score;
            best_idx = i;
            best_partitions = u64::MAX;
        } else if score == best_score {
            if best_partitions == u64::MAX {
                best_partitions = arena.partition_count(best_idx);
            }
            let candidate_partitions = arena.partition_count(i);
            if candidate_partitions < best_partitions {
                best_idx = i;
                best_partitions = candidate_partitions;
            }
        }
    }
    let tree = factory.from_shape(&arena.to_shape(best_idx))?;
    debug_assert!((tree.log_marginal() - best_score).abs() < 1e-9);
    Ok((tree, best_score))
}

/// Average excess bits per data vector of greedy trees relative to the
/// optimal trees: (1/(l·N)) Σ log₂ p(𝒟|T*) − log₂ p(𝒟|T). Inputs are in
/// nats; `points_per_dataset` is l.
pub fn delta_l(
    log_p_optimal: &[f64],
    log_p_greedy: &[f64],
    points_per_dataset: usize,
) -> Result<f64> {
    if log_p_optimal.len() != log_p_greedy.len() {
        return Err(Error::LengthMismatch(format!(
            "{} optimal scores vs {} greedy scores",
            log_p_optimal.len(),
            log_p_greedy.len()
        )));
    }
    if log_p_optimal.is_empty() || points_per_dataset == 0 {
        return Err(Error::InvalidArgument(
            "delta_l needs at least one dataset and a positive l".into(),
        ));
    }
    let n = log_p_optimal.len() as f64;
    let l = points_per_dataset as f64;
    let sum: f64 = log_p_optimal
        .iter()
        .zip(log_p_greedy)
        .map(|(o, g)| (o - g) / std::f64::consts::LN_2)
        .sum();
    Ok(sum / (l * n))
}

/// Configuration of the greedy-versus-optimal experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub trials: usize,
    pub dims: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: 8,
            trials: 100,
            dims: 64,
            gamma: 0.5,
            seed: 0,
        }
    }
}

/// One row of the experiment report: per-dataset-size mean Δ_l with
/// standard errors for the rose and binary-only builders, plus how often
/// each reached the exhaustive optimum.
#[derive(Debug, Clone)]
pub struct DeltaRow {
    pub n: usize,
    pub trials: usize,
    pub delta_rose_mean: f64,
    pub delta_rose_se: f64,
    pub delta_binary_mean: f64,
    pub delta_binary_se: f64,
    pub rose_optimum_rate: f64,
    pub binary_optimum_rate: f64,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the optimality experiment: for each dataset size, draws datasets
/// from uniformly random rose trees (uniform beta priors), builds greedy
/// rose and binary-only trees, and compares both against the exhaustive
/// optimum in bits per data vector.
pub fn optimality_experiment(cfg: &ExperimentConfig) -> Result<Vec<DeltaRow>> {
    if cfg.n_min < 2 || cfg.n_max > MAX_EXHAUSTIVE_LEAVES || cfg.n_min > cfg.n_max {
        return Err(Error::InvalidArgument(format!(
            "dataset sizes must satisfy 2 <= n_min <= n_max <= {MAX_EXHAUSTIVE_LEAVES}"
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let hyper = Hyperparams::uniform(cfg.gamma, cfg.dims)?;
    let mut rows = Vec::new();
    for n in cfg.n_min..=cfg.n_max {
        let arena = ShapeArena::build(n)?;
        let mix = mixing_table(n, cfg.gamma);
        let mut stack = Vec::with_capacity(2 * n);

        let mut rose_delta = Vec::with_capacity(cfg.trials);
        let mut binary_delta = Vec::with_capacity(cfg.trials);
        let mut rose_hits = 0_usize;
        let mut binary_hits = 0_usize;

        for trial in 0..cfg.trials {
            let mut rng = trial_rng(cfg.seed, n as u64, trial as u64);
            let shape = random_rose_tree(&(0..n).collect::<Vec<_>>(), &mut rng)?;
            let data = sample_dataset_with_rng(&shape, &hyper, cfg.dims, &mut rng)?;
            let model = BetaBernoulli::from_hyper(data, &hyper)?;

            let rose = build(&model, cfg.gamma, BuildMode::Rose)?;
            let binary = build(&model, cfg.gamma, BuildMode::BinaryOnly)?;

            let log_f = subset_log_f(&model, n)?;
            let mut opt = f64::NEG_INFINITY;
            for i in 0..arena.len() {
                let s = arena.score(i, &log_f, &mix, &mut stack);
                if s > opt {
                    opt = s;
                }
            }

            let per_vec = |score: f64| (opt - score) / std::f64::consts::LN_2 / n as f64;
            rose_delta.push(per_vec(rose.log_marginal()));
            binary_delta.push(per_vec(binary.log_marginal()));
            if rose.log_marginal() >= opt - 1e-9 {
                rose_hits += 1;
            }
            if binary.log_marginal() >= opt - 1e-9 {
                binary_hits += 1;
            }
        }

        let (rose_mean, rose_se) = mean_and_se(&rose_delta);
        let (binary_mean, binary_se) = mean_and_se(&binary_delta);
        rows.push(DeltaRow {
            n,
            trials: cfg.trials,
            delta_rose_mean: rose_mean,
            delta_rose_se: rose_se,
            delta_binary_mean: binary_mean,
            delta_binary_se: binary_se,
            rose_optimum_rate: rose_hits as f64 / cfg.trials as f64,
            binary_optimum_rate: binary_hits as f64 / cfg.trials as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::count_partitions;
    use std::collections::HashSet;

    #[test]
    fn set_partitions_of_three() {
        let mut all = Vec::new();
        for_each_set_partition(&[0, 1, 2], 1, &mut |blocks| all.push(blocks.to_vec()));
        assert_eq!(all.len(), 5); // Bell(3)
        let mut ge2 = Vec::new();
        for_each_set_partition(&[0, 1, 2], 2, &mut |blocks| ge2.push(blocks.to_vec()));
        assert_eq!(ge2.len(), 4);
        for blocks in &ge2 {
            assert!(blocks.len() >= 2);
        }
    }

    #[test]
    fn tree_space_counts_match_known_values() {
        // 1, 1, 4, 26, 236 rose trees over 1..=5 leaves.
        let expected = [1_usize, 1, 4, 26, 236];
        for (n, &want) in (1..=5).zip(&expected) {
            let space = TreeSpace::new((0..n).collect()).unwrap();
            let mut count = 0;
            space.for_each(&mut |_| count += 1);
            assert_eq!(count, want, "n={n}");
        }
    }

    #[test]
    fn enumeration_has_no_duplicates_and_is_canonical() {
        let space = TreeSpace::new((0..4).collect()).unwrap();
        let shapes = space.shapes();
        let mut seen = HashSet::new();
        for s in &shapes {
            s.validate().unwrap();
            assert_eq!(s.clone().canonicalized(), *s, "non-canonical {s:?}");
            assert!(seen.insert(format!("{s:?}")), "duplicate {s:?}");
        }
        assert_eq!(shapes.len(), 26);
    }

    #[test]
    fn count_matches_enumeration_up_to_six() {
        for n in 1..=6 {
            let space = TreeSpace::new((0..n).collect()).unwrap();
            let mut count = 0_u64;
            space.for_each(&mut |_| count += 1);
            assert_eq!(count_rose_trees(n), BigUint::from(count), "n={n}");
        }
    }

    #[test]
    fn count_small_values() {
        assert_eq!(count_rose_trees(1), BigUint::from(1_u32));
        assert_eq!(count_rose_trees(2), BigUint::from(1_u32));
        assert_eq!(count_rose_trees(3), BigUint::from(4_u32));
        assert_eq!(count_rose_trees(8), BigUint::from(660_032_u32));
    }

    #[test]
    fn tree_space_rejects_oversized_sets() {
        assert!(matches!(
            TreeSpace::new((0..9).collect()),
            Err(Error::LeafBound { .. })
        ));
        assert!(TreeSpace::new(vec![0, 0]).is_err());
    }

    #[test]
    fn arena_scores_match_materialized_trees() {
        let data = vec![
            vec![1, 0, 1],
            vec![0, 1, 1],
            vec![1, 1, 0],
            vec![0, 0, 0],
        ];
        let model = BetaBernoulli::with_uniform_prior(data).unwrap();
        let gamma = 0.4;
        let n = 4;
        let arena = ShapeArena::build(n).unwrap();
        let log_f = subset_log_f(&model, n).unwrap();
        let mix = mixing_table(n, gamma);
        let mut stack = Vec::new();
        let factory = TreeFactory::new(&model, gamma).unwrap();
        for i in 0..arena.len() {
            let fast = arena.score(i, &log_f, &mix, &mut stack);
            let tree = factory.from_shape(&arena.to_shape(i)).unwrap();
            assert!(
                (fast - tree.log_marginal()).abs() < 1e-10,
                "tree {i}: {fast} vs {}",
                tree.log_marginal()
            );
            assert_eq!(
                BigUint::from(arena.partition_count(i)),
                count_partitions(&tree)
            );
        }
    }

    #[test]
    fn optimal_tree_two_points_is_the_join() {
        let model =
            BetaBernoulli::with_uniform_prior(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let (tree, score) = optimal_tree(&model, 0.5).unwrap();
        assert_eq!(tree.children().len(), 2);
        assert!((score - tree.log_marginal()).abs() < 1e-12);
    }

    #[test]
    fn optimal_tree_flattens_duplicates() {
        let model = BetaBernoulli::with_uniform_prior(vec![vec![1, 1, 1, 1]; 4]).unwrap();
        let (tree, _) = optimal_tree(&model, 0.5).unwrap();
        assert_eq!(tree.children().len(), 4, "expected the flat 4-ary root");
        assert!(tree.children().iter().all(|c| c.is_leaf()));
    }

    #[test]
    fn optimal_score_bounds_greedy_score() {
        for seed in 0..5 {
            let mut rng = trial_rng(900, 6, seed);
            let shape = random_rose_tree(&(0..6).collect::<Vec<_>>(), &mut rng).unwrap();
            let hyper = Hyperparams::uniform(0.5, 8).unwrap();
            let data = sample_dataset_with_rng(&shape, &hyper, 8, &mut rng).unwrap();
            let model = BetaBernoulli::from_hyper(data, &hyper).unwrap();
            let greedy = build(&model, 0.5, BuildMode::Rose).unwrap();
            let (_, opt) = optimal_tree(&model, 0.5).unwrap();
            assert!(opt >= greedy.log_marginal() - 1e-9);
        }
    }

    #[test]
    fn delta_l_basics() {
        assert_eq!(delta_l(&[0.0, -1.0], &[0.0, -1.0], 4).unwrap(), 0.0);
        // A gap of g nats over one dataset of l points is g / (l ln 2) bits.
        let g = 1.7;
        let got = delta_l(&[-3.0], &[-3.0 - g], 8).unwrap();
        assert!((got - g / (8.0 * std::f64::consts::LN_2)).abs() < 1e-12);
        assert!(delta_l(&[0.0], &[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn delta_l_invariant_to_dataset_order() {
        let opt = [0.0, -2.0, -5.0];
        let greedy = [-1.0, -2.5, -5.0];
        let a = delta_l(&opt, &greedy, 3).unwrap();
        let b = delta_l(&[-5.0, 0.0, -2.0], &[-5.0, -1.0, -2.5], 3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn experiment_smoke_small() {
        let cfg = ExperimentConfig {
            n_min: 2,
            n_max: 4,
            trials: 5,
            dims: 8,
            gamma: 0.5,
            seed: 7,
        };
        let rows = optimality_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert!(row.delta_rose_mean >= 0.0);
            assert!(row.delta_binary_mean >= 0.0);
            assert!(row.rose_optimum_rate >= 0.0 && row.rose_optimum_rate <= 1.0);
        }
        // n = 2: the only greedy outcome is the only tree.
        assert_eq!(rows[0].delta_rose_mean, 0.0);
        assert_eq!(rows[0].rose_optimum_rate, 1.0);
    }
}
