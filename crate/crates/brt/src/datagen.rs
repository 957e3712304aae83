//! Synthetic data: draws from the generative model itself (random tree
//! structures, then partitions, then per-block Bernoulli parameters), the
//! handcrafted three-block toy matrix, and the two-interlaced-curves
//! regression set.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::Beta;

use crate::bernoulli::Hyperparams;
use crate::error::{Error, Result};
use crate::oracle::{count_rose_trees, for_each_set_partition, MAX_EXHAUSTIVE_LEAVES};
use crate::partition::Partition;
use crate::tree::{mixing_proportion, TreeShape};

/// Deterministic per-trial generator derived from a master seed.
pub fn trial_rng(seed: u64, stream: u64, trial: u64) -> ChaCha8Rng {
    let mixed = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ trial.wrapping_mul(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Uniform draw over all rose trees on the given leaf set, by recursively
/// sampling a root partition with probability proportional to the number
/// of trees it can head. Exact for the sizes the exhaustive oracle covers.
pub fn random_rose_tree(leaves: &[usize], rng: &mut impl Rng) -> Result<TreeShape> {
    if leaves.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if leaves.len() > MAX_EXHAUSTIVE_LEAVES {
        return Err(Error::LeafBound {
            n: leaves.len(),
            max: MAX_EXHAUSTIVE_LEAVES,
        });
    }
    let mut sorted = leaves.to_vec();
    sorted.sort_unstable();
    sample_tree(&sorted, rng)
}

fn trees_under(block_sizes: &[usize]) -> f64 {
    block_sizes
        .iter()
        .map(|&s| {
            let c = count_rose_trees(s);
            // Counts stay far below 2^53 within the exhaustive bound.
            c.to_string().parse::<f64>().expect("small count")
        })
        .product()
}

fn sample_tree(leaves: &[usize], rng: &mut impl Rng) -> Result<TreeShape> {
    if leaves.len() == 1 {
        return Ok(TreeShape::Leaf(leaves[0]));
    }
    let mut partitions: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for_each_set_partition(leaves, 2, &mut |blocks| {
        weights.push(trees_under(&blocks.iter().map(|b| b.len()).collect::<Vec<_>>()));
        partitions.push(blocks.to_vec());
    });
    let total: f64 = weights.iter().sum();
    let mut draw = rng.random::<f64>() * total;
    let mut chosen = partitions.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 {
            chosen = i;
            break;
        }
    }
    let children = partitions[chosen]
        .iter()
        .map(|block| sample_tree(block, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(TreeShape::Node(children))
}

/// Draws a tree-consistent partition by the generative recursion: at each
/// node keep the leaves together with probability π, otherwise recurse
/// into the children.
pub fn sample_partition(shape: &TreeShape, gamma: f64, rng: &mut impl Rng) -> Partition {
    fn blocks(shape: &TreeShape, gamma: f64, rng: &mut impl Rng, out: &mut Vec<Vec<usize>>) {
        match shape {
            TreeShape::Leaf(i) => out.push(vec![*i]),
            TreeShape::Node(children) => {
                let pi = mixing_proportion(children.len(), gamma);
                if rng.random::<f64>() < pi {
                    out.push(shape.leaf_indices());
                } else {
                    for c in children {
                        blocks(c, gamma, rng, out);
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    blocks(shape, gamma, rng, &mut out);
    Partition::new(out).expect("tree blocks are disjoint")
}

/// Samples a binary dataset from the mixture: a partition drawn through
/// the tree, then per-block beta-distributed Bernoulli parameters in each
/// dimension. The tree's leaves must be exactly 0..n; row i of the result
/// corresponds to leaf i. Deterministic given the seed.
pub fn sample_dataset(
    shape: &TreeShape,
    hyper: &Hyperparams,
    dims: usize,
    seed: u64,
) -> Result<Vec<Vec<u8>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_dataset_with_rng(shape, hyper, dims, &mut rng)
}

pub fn sample_dataset_with_rng(
    shape: &TreeShape,
    hyper: &Hyperparams,
    dims: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<u8>>> {
    hyper.validate()?;
    if dims == 0 || hyper.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: hyper.dims(),
        });
    }
    let n = shape.n_leaves();
    if shape.leaf_indices() != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidArgument(
            "tree leaves must be exactly 0..n".into(),
        ));
    }
    let partition = sample_partition(shape, hyper.gamma, rng);
    let mut rows = vec![vec![0_u8; dims]; n];
    for block in partition.blocks() {
        for dim in 0..dims {
            let beta = Beta::new(hyper.alpha[dim], hyper.beta[dim])
                .map_err(|e| Error::InvalidHyper(e.to_string()))?;
            let theta: f64 = rng.sample(beta);
            for &row in block {
                rows[row][dim] = (rng.random::<f64>() < theta) as u8;
            }
        }
    }
    Ok(rows)
}

/// Dimensions of the handcrafted toy matrix: three classes of 16 rows,
/// each putting its ones inside its own 4-column block.
pub const TOY_ROWS: usize = 48;
pub const TOY_COLS: usize = 12;

/// Binary toy matrix where ones only appear in three disjoint column
/// blocks, one block per class. Within-block bits are drawn at 0.9, all
/// other bits are zero; deterministic given the seed.
pub fn toy_dataset(seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = 3;
    let per_class = TOY_ROWS / classes;
    let block = TOY_COLS / classes;
    let mut rows = Vec::with_capacity(TOY_ROWS);
    for class in 0..classes {
        for _ in 0..per_class {
            let mut row = vec![0_u8; TOY_COLS];
            for col in class * block..(class + 1) * block {
                row[col] = (rng.random::<f64>() < 0.9) as u8;
            }
            rows.push(row);
        }
    }
    rows
}

/// Two interlaced curves for density regression: y = sin(2πx) on
/// x ∈ [0, 0.7] and y = −sin(2πx) on x ∈ [0.3, 1], with Gaussian output
/// noise. The curves overlap (and cross) in the middle, so the
/// conditional density there is bimodal. Returns (inputs, outputs).
pub fn interlaced_curves(n: usize, noise_sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    let gaussian = statrs::distribution::Normal::new(0.0, noise_sd.max(1e-12)).unwrap();
    for i in 0..n {
        let (x, y) = if i % 2 == 0 {
            let x = 0.7 * rng.random::<f64>();
            (x, (std::f64::consts::TAU * x).sin())
        } else {
            let x = 0.3 + 0.7 * rng.random::<f64>();
            (x, -(std::f64::consts::TAU * x).sin())
        };
        inputs.push(vec![x]);
        outputs.push(y + rng.sample(gaussian));
    }
    (inputs, outputs)
}
