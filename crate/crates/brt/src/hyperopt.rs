//! Hyperparameter fitting on a fixed tree, and the alternating loop that
//! interleaves tree construction with hyperparameter updates.
//!
//! The gradient of log p(𝒟|T) in the likelihood hyperparameters follows a
//! single bottom-up recursion weighted by per-node responsibilities; γ is
//! fitted separately by scalar search since the marginal is cheap to
//! re-evaluate in γ alone.

use std::collections::HashMap;
use std::sync::Arc;

use crate::builder::{build, BuildMode};
use crate::error::{Error, Result};
use crate::math::{brent_maximize, gradient_ascent, AscentOptions};
use crate::model::{ClusterModel, GradientModel};
use crate::tree::{log_marginal_with_gamma, rescore, NodeId, RoseTree, TreeKind};

/// Posterior weight of "keep this node's leaves in one cluster":
/// r = π f(leaves(T)) / p(leaves(T)|T). Leaves get 1 by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Responsibility(f64);

impl Responsibility {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn node_responsibility<S>(node: &RoseTree<S>) -> f64 {
    if node.is_leaf() {
        return 1.0;
    }
    let log_r = node.pi().ln() + node.log_f() - node.log_marginal();
    log_r.exp().clamp(0.0, 1.0)
}

/// Responsibilities for every node, keyed by node id, computed from the
/// tree's caches.
pub fn responsibilities<S>(tree: &RoseTree<S>) -> HashMap<NodeId, Responsibility> {
    let mut out = HashMap::new();
    tree.for_each_node(&mut |node| {
        out.insert(node.id(), Responsibility(node_responsibility(node)));
    });
    out
}

/// Value and gradient of log p(𝒟|T) in the model's hyperparameters, for
/// the tree's topology evaluated afresh under `model` and `gamma`:
/// ∂log p/∂β = r_T ∂log f(leaves(T))/∂β + (1 − r_T) Σ over children.
pub fn grad_log_marginal<M: GradientModel>(
    tree: &RoseTree<impl Clone>,
    model: &M,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    let scored = rescore(tree, model, gamma)?;
    fn walk<M: GradientModel>(node: &RoseTree<M::Stats>, model: &M) -> Result<(f64, Vec<f64>)> {
        let grad_f = model.log_f_grad(node.stats())?;
        match node.kind() {
            TreeKind::Leaf { .. } => Ok((node.log_marginal(), grad_f)),
            TreeKind::Internal { children } => {
                let r = node_responsibility(node);
                let mut grad = vec![0.0; grad_f.len()];
                for c in children {
                    let (_, child_grad) = walk(c, model)?;
                    for (g, cg) in grad.iter_mut().zip(&child_grad) {
                        *g += cg;
                    }
                }
                for (g, gf) in grad.iter_mut().zip(&grad_f) {
                    *g = r * gf + (1.0 - r) * *g;
                }
                Ok((node.log_marginal(), grad))
            }
        }
    }
    walk(&scored, model)
}

/// Bounds on γ during optimization; the interval is open in the model so
/// the search stays strictly inside.
pub const GAMMA_EPS: f64 = 1e-6;

/// Maximizes log p(𝒟|T) over γ for a fixed tree, reusing the cached
/// per-node log f values. A coarse grid pass brackets the best region
/// before Brent's method refines it, guarding against multiple local
/// maxima. Returns the located γ*.
pub fn optimize_gamma<S>(tree: &RoseTree<S>, tol: f64) -> f64 {
    if tree.is_leaf() {
        // No mixing proportion appears; the objective is constant.
        return 0.5;
    }
    let objective = |g: f64| log_marginal_with_gamma(tree, g);
    let (lo, hi) = (GAMMA_EPS, 1.0 - GAMMA_EPS);
    let coarse = 64_usize;
    let mut best_i = 0_usize;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..=coarse {
        let g = lo + (hi - lo) * (i as f64) / (coarse as f64);
        let v = objective(g);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let step = (hi - lo) / (coarse as f64);
    let bracket_lo = (lo + step * (best_i.saturating_sub(1)) as f64).max(lo);
    let bracket_hi = (lo + step * (best_i + 1) as f64).min(hi);
    let (gamma_star, _) = brent_maximize(objective, bracket_lo, bracket_hi, tol, 200);
    gamma_star
}

/// Gradient ascent on log p(𝒟|T) in log-parameterized likelihood
/// hyperparameters (tree fixed). Backtracking keeps the objective
/// non-decreasing. Returns the refitted model and the final objective.
pub fn optimize_hypers<M: GradientModel>(
    tree: &RoseTree<impl Clone>,
    model: &M,
    gamma: f64,
    opts: AscentOptions,
) -> Result<(M, f64)> {
    let theta0: Vec<f64> = model.hyper_values().iter().map(|v| v.ln()).collect();
    let eval = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let values: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let candidate = model.with_hyper_values(&values)?;
        let (value, grad_values) = grad_log_marginal(tree, &candidate, gamma)?;
        // Chain rule: d/d(ln h) = h · d/dh.
        let grad_theta = grad_values
            .iter()
            .zip(&values)
            .map(|(g, v)| g * v)
            .collect();
        Ok((value, grad_theta))
    };
    let (theta, value) = gradient_ascent(eval, theta0, opts)?;
    let values: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
    Ok((model.with_hyper_values(&values)?, value))
}

/// One round of the alternating fit.
#[derive(Debug, Clone)]
pub struct EmRound {
    pub round: usize,
    /// Score of the tree built with the round's incoming hyperparameters.
    pub build_score: f64,
    /// Score after refitting γ and the likelihood hyperparameters.
    pub optimized_score: f64,
    /// Best score seen up to and including this round.
    pub best_so_far: f64,
}

/// Outcome of [`em_alternation`]: the best-scoring tree and
/// hyperparameters seen, plus the per-round score log.
#[derive(Debug)]
pub struct EmOutcome<M: ClusterModel> {
    pub tree: Arc<RoseTree<M::Stats>>,
    pub model: M,
    pub gamma: f64,
    pub best_score: f64,
    pub rounds: Vec<EmRound>,
}

/// Alternates greedy tree construction with hyperparameter optimization:
/// build a tree under the current hyperparameters, then refit γ (scalar
/// search) and the likelihood hyperparameters (gradient ascent) on that
/// tree. Keeps the best (tree, hyperparameters) pair seen; stops after
/// `max_rounds` or as soon as a round fails to improve it.
pub fn em_alternation<M: GradientModel + Clone>(
    model: M,
    gamma: f64,
    mode: BuildMode,
    max_rounds: usize,
    gamma_tol: f64,
    ascent: AscentOptions,
) -> Result<EmOutcome<M>> {
    if max_rounds == 0 {
        return Err(Error::InvalidArgument("max_rounds must be at least 1".into()));
    }
    let mut cur_model = model.clone();
    let mut cur_gamma = gamma;

    let mut best: Option<EmOutcome<M>> = None;
    let mut rounds = Vec::new();

    for round in 1..=max_rounds {
        let tree = build(&cur_model, cur_gamma, mode)?;
        let build_score = tree.log_marginal();

        let gamma_star = optimize_gamma(tree.as_ref(), gamma_tol);
        let (new_model, _) = optimize_hypers(tree.as_ref(), &cur_model, gamma_star, ascent)?;
        let rescored = rescore(tree.as_ref(), &new_model, gamma_star)?;
        let optimized_score = rescored.log_marginal();

        let (round_best_score, round_best) = if optimized_score >= build_score {
            (
                optimized_score,
                (rescored, new_model.clone(), gamma_star),
            )
        } else {
            (build_score, (tree, cur_model.clone(), cur_gamma))
        };

        let improved = best
            .as_ref()
            .map_or(true, |b| round_best_score > b.best_score);
        let best_so_far = best
            .as_ref()
            .map_or(round_best_score, |b| b.best_score.max(round_best_score));
        rounds.push(EmRound {
            round,
            build_score,
            optimized_score,
            best_so_far,
        });
        if improved {
            let (tree, model, gamma) = round_best;
            best = Some(EmOutcome {
                tree,
                model,
                gamma,
                best_score: round_best_score,
                rounds: Vec::new(),
            });
        } else {
            break;
        }

        cur_model = new_model;
        cur_gamma = gamma_star;
    }

    let mut outcome = best.expect("at least one round ran");
    outcome.rounds = rounds;
    Ok(outcome)
}
