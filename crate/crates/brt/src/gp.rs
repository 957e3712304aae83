//! Mixture of Gaussian-process experts over rose trees, for nonparametric
//! density regression.
//!
//! Each cluster owns a Gaussian density over its inputs (conjugate
//! Gaussian-inverse-Wishart prior, marginalized in closed form) and a
//! zero-mean GP over its outputs given inputs; the joint cluster marginal
//! is their product. Prediction at a new input mixes cluster-wise GP
//! posteriors with weights from responsibilities recomputed with the new
//! input appended to each node's input marginal.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::math::{gradient_ascent, log_sum_exp, log_sum_exp2, AscentOptions};
use crate::model::{ClusterModel, GradientModel};
use crate::tree::{NodeId, RoseTree};

/// Squared-exponential kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(length_scale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let p = Self {
            length_scale,
            signal_variance,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.signal_variance > 0.0 && self.noise_variance > 0.0) {
            return Err(Error::InvalidHyper(
                "kernel parameters must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// k(x, x′) = signal_variance · exp(−‖x − x′‖² / (2 · length_scale²)).
/// Noise is added separately on gram-matrix diagonals.
pub fn se_kernel(x: &[f64], x_prime: &[f64], params: &KernelParams) -> f64 {
    debug_assert_eq!(x.len(), x_prime.len());
    let d2: f64 = x
        .iter()
        .zip(x_prime)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    params.signal_variance * (-d2 / (2.0 * params.length_scale * params.length_scale)).exp()
}

fn gram(inputs: &[&[f64]], params: &KernelParams) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = se_kernel(inputs[i], inputs[j], params);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += params.noise_variance;
    }
    k
}

/// Cholesky with a single jitter retry (1e-8 · signal variance on the
/// diagonal); a second failure is a hard error.
fn cholesky_with_jitter(mut k: DMatrix<f64>, params: &KernelParams) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    match k.clone().cholesky() {
        Some(c) => Ok(c),
        None => {
            let jitter = 1e-8 * params.signal_variance;
            for i in 0..k.nrows() {
                k[(i, i)] += jitter;
            }
            k.cholesky().ok_or(Error::NotPositiveDefinite)
        }
    }
}

/// log N(outputs; 0, K) where K is the noisy gram matrix of the inputs.
/// Empty clusters contribute log 1 = 0.
pub fn gp_log_marginal(inputs: &[&[f64]], outputs: &[f64], params: &KernelParams) -> Result<f64> {
    if inputs.len() != outputs.len() {
        return Err(Error::LengthMismatch(format!(
            "{} inputs vs {} outputs",
            inputs.len(),
            outputs.len()
        )));
    }
    let n = outputs.len();
    if n == 0 {
        return Ok(0.0);
    }
    let chol = cholesky_with_jitter(gram(inputs, params), params)?;
    let y = DVector::from_column_slice(outputs);
    let alpha = chol.solve(&y);
    let ln_det_half: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
    Ok(-0.5 * y.dot(&alpha) - ln_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Value and gradient of the GP log marginal in
/// (length_scale, signal_variance, noise_variance), via the trace
/// identity ∂ log N / ∂θ = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ).
pub fn gp_log_marginal_with_grad(
    inputs: &[&[f64]],
    outputs: &[f64],
    params: &KernelParams,
) -> Result<(f64, [f64; 3])> {
    let n = outputs.len();
    if n == 0 {
        return Ok((0.0, [0.0; 3]));
    }
    let chol = cholesky_with_jitter(gram(inputs, params), params)?;
    let y = DVector::from_column_slice(outputs);
    let alpha = chol.solve(&y);
    let ln_det_half: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
    let value =
        -0.5 * y.dot(&alpha) - ln_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let k_inv = chol.inverse();
    let ell = params.length_scale;
    let mut grad = [0.0_f64; 3];
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = inputs[i]
                .iter()
                .zip(inputs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let k_se = params.signal_variance * (-d2 / (2.0 * ell * ell)).exp();
            let weight = alpha[i] * alpha[j] - k_inv[(i, j)];
            grad[0] += weight * k_se * d2 / (ell * ell * ell);
            grad[1] += weight * k_se / params.signal_variance;
            if i == j {
                grad[2] += weight;
            }
        }
    }
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok((value, grad))
}

/// Gaussian-inverse-Wishart prior over a cluster's input Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPriorParams {
    pub mean_location: DVector<f64>,
    pub scale_count: f64,
    pub dof: f64,
    pub scale_matrix: DMatrix<f64>,
}

fn ln_multigamma(p: usize, a: f64) -> f64 {
    let mut out = 0.25 * (p * (p - 1)) as f64 * std::f64::consts::PI.ln();
    for j in 1..=p {
        out += ln_gamma(a + 0.5 * (1.0 - j as f64));
    }
    out
}

fn ln_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok((0..m.nrows()).map(|i| 2.0 * chol.l_dirty()[(i, i)].ln()).sum())
}

impl InputPriorParams {
    pub fn new(
        mean_location: DVector<f64>,
        scale_count: f64,
        dof: f64,
        scale_matrix: DMatrix<f64>,
    ) -> Result<Self> {
        let p = mean_location.len();
        if scale_matrix.nrows() != p || scale_matrix.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: scale_matrix.nrows(),
            });
        }
        if !(scale_count > 0.0) {
            return Err(Error::InvalidHyper("scale_count must be positive".into()));
        }
        if !(dof > p as f64 - 1.0) {
            return Err(Error::InvalidHyper(format!(
                "dof must exceed p − 1 = {}",
                p as f64 - 1.0
            )));
        }
        // Positive definiteness check up front.
        ln_det_spd(&scale_matrix)?;
        Ok(Self {
            mean_location,
            scale_count,
            dof,
            scale_matrix,
        })
    }

    /// Data-driven default: prior mean at the sample mean, unit
    /// pseudo-count, dof p + 2, and a diagonal scale matching per-
    /// dimension sample variances (so the prior expected covariance is
    /// the empirical diagonal).
    pub fn from_data(inputs: &[Vec<f64>]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = inputs[0].len();
        let n = inputs.len() as f64;
        let mut mean = DVector::zeros(p);
        for x in inputs {
            if x.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: x.len(),
                });
            }
            mean += DVector::from_column_slice(x);
        }
        mean /= n;
        let mut var = DVector::from_element(p, 0.0);
        for x in inputs {
            for j in 0..p {
                var[j] += (x[j] - mean[j]).powi(2);
            }
        }
        let mut scale = DMatrix::zeros(p, p);
        for j in 0..p {
            scale[(j, j)] = (var[j] / n.max(2.0 - 1.0)).max(1e-6);
        }
        Self::new(mean, 1.0, p as f64 + 2.0, scale)
    }

    pub fn dim(&self) -> usize {
        self.mean_location.len()
    }

    /// Updated prior after observing the given points.
    pub fn posterior(&self, inputs: &[&[f64]]) -> Result<Self> {
        let p = self.dim();
        let n = inputs.len() as f64;
        if inputs.is_empty() {
            return Ok(self.clone());
        }
        let mut mean = DVector::zeros(p);
        for x in inputs {
            mean += DVector::from_column_slice(x);
        }
        mean /= n;
        let mut scatter = DMatrix::zeros(p, p);
        for x in inputs {
            let d = DVector::from_column_slice(x) - &mean;
            scatter += &d * d.transpose();
        }
        let kappa_n = self.scale_count + n;
        let diff = &mean - &self.mean_location;
        let scale_n = &self.scale_matrix
            + scatter
            + (self.scale_count * n / kappa_n) * (&diff * diff.transpose());
        Ok(Self {
            mean_location: (self.scale_count * &self.mean_location + n * mean) / kappa_n,
            scale_count: kappa_n,
            dof: self.dof + n,
            scale_matrix: scale_n,
        })
    }

    /// log density of the prior (or posterior) predictive for one point —
    /// a multivariate Student-t.
    pub fn log_predictive_one(&self, x: &[f64]) -> Result<f64> {
        let p = self.dim();
        if x.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: x.len(),
            });
        }
        let nu = self.dof - p as f64 + 1.0;
        let sigma = &self.scale_matrix * ((self.scale_count + 1.0) / (self.scale_count * nu));
        let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let ln_det = (0..p).map(|i| 2.0 * chol.l_dirty()[(i, i)].ln()).sum::<f64>();
        let diff = DVector::from_column_slice(x) - &self.mean_location;
        let maha = diff.dot(&chol.solve(&diff));
        Ok(ln_gamma(0.5 * (nu + p as f64))
            - ln_gamma(0.5 * nu)
            - 0.5 * p as f64 * (nu * std::f64::consts::PI).ln()
            - 0.5 * ln_det
            - 0.5 * (nu + p as f64) * (maha / nu).ln_1p())
    }
}

/// Closed-form marginal of the inputs under Gaussian likelihood with the
/// Gaussian-inverse-Wishart prior; zero points yield log 1 = 0.
pub fn input_log_marginal(inputs: &[&[f64]], prior: &InputPriorParams) -> Result<f64> {
    let n = inputs.len();
    if n == 0 {
        return Ok(0.0);
    }
    let p = prior.dim();
    for x in inputs {
        if x.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: x.len(),
            });
        }
    }
    let post = prior.posterior(inputs)?;
    let nf = n as f64;
    let pf = p as f64;
    Ok(-0.5 * nf * pf * std::f64::consts::PI.ln()
        + 0.5 * pf * (prior.scale_count.ln() - post.scale_count.ln())
        + ln_multigamma(p, 0.5 * post.dof)
        - ln_multigamma(p, 0.5 * prior.dof)
        + 0.5 * prior.dof * ln_det_spd(&prior.scale_matrix)?
        - 0.5 * post.dof * ln_det_spd(&post.scale_matrix)?)
}

/// Refuse GP datasets above this size by default (the unapproximated
/// algorithm is O(n⁵ log n) end to end).
pub const DEFAULT_GP_POINT_GUARD: usize = 300;

/// Cluster membership for the GP model: sorted point indices. No finite
/// sufficient statistics exist for a GP, so clusters carry their points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GpStats {
    indices: Vec<u32>,
}

impl GpStats {
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// Joint input/output cluster model: Gaussian over inputs times GP over
/// outputs given inputs (both marginalized), pluggable into the generic
/// tree builder.
#[derive(Debug, Clone)]
pub struct GpExperts {
    inputs: Vec<Vec<f64>>,
    outputs_centered: Vec<f64>,
    output_mean: f64,
    kernel: KernelParams,
    input_prior: InputPriorParams,
}

impl GpExperts {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
        kernel: KernelParams,
        input_prior: InputPriorParams,
    ) -> Result<Self> {
        Self::with_point_guard(inputs, outputs, kernel, input_prior, DEFAULT_GP_POINT_GUARD)
    }

    pub fn with_point_guard(
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
        kernel: KernelParams,
        input_prior: InputPriorParams,
        guard: usize,
    ) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::LengthMismatch(format!(
                "{} inputs vs {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if inputs.len() > guard {
            return Err(Error::GpSizeGuard {
                n: inputs.len(),
                max: guard,
            });
        }
        kernel.validate()?;
        let p = input_prior.dim();
        for x in &inputs {
            if x.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite input value".into()));
            }
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite output value".into()));
        }
        // Zero-mean GP convention: center outputs by the training mean.
        let output_mean = outputs.iter().sum::<f64>() / outputs.len() as f64;
        let outputs_centered = outputs.iter().map(|y| y - output_mean).collect();
        Ok(Self {
            inputs,
            outputs_centered,
            output_mean,
            kernel,
            input_prior,
        })
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn with_kernel(&self, kernel: KernelParams) -> Result<Self> {
        kernel.validate()?;
        let mut m = self.clone();
        m.kernel = kernel;
        Ok(m)
    }

    pub fn input_prior(&self) -> &InputPriorParams {
        &self.input_prior
    }

    pub fn output_mean(&self) -> f64 {
        self.output_mean
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    fn gather(&self, stats: &GpStats) -> (Vec<&[f64]>, Vec<f64>) {
        let xs: Vec<&[f64]> = stats
            .indices
            .iter()
            .map(|&i| self.inputs[i as usize].as_slice())
            .collect();
        let ys: Vec<f64> = stats
            .indices
            .iter()
            .map(|&i| self.outputs_centered[i as usize])
            .collect();
        (xs, ys)
    }

    /// Input-side marginal of a cluster.
    pub fn cluster_input_log_f(&self, stats: &GpStats) -> Result<f64> {
        let (xs, _) = self.gather(stats);
        input_log_marginal(&xs, &self.input_prior)
    }

    /// Output-side (GP) marginal of a cluster.
    pub fn cluster_output_log_f(&self, stats: &GpStats) -> Result<f64> {
        let (xs, ys) = self.gather(stats);
        gp_log_marginal(&xs, &ys, &self.kernel)
    }

    /// Joint cluster marginal: input part plus output part.
    pub fn cluster_log_f(&self, stats: &GpStats) -> Result<f64> {
        Ok(self.cluster_input_log_f(stats)? + self.cluster_output_log_f(stats)?)
    }

    /// f over all points pooled into one cluster (the single-GP baseline).
    pub fn pooled_log_f(&self) -> Result<f64> {
        let stats = GpStats {
            indices: (0..self.inputs.len() as u32).collect(),
        };
        self.cluster_log_f(&stats)
    }

    /// Change of the cluster's input marginal when `x_new` joins it.
    fn input_append_delta(&self, stats: &GpStats, x_new: &[f64]) -> Result<f64> {
        let (xs, _) = self.gather(stats);
        let mut appended = xs.clone();
        appended.push(x_new);
        Ok(input_log_marginal(&appended, &self.input_prior)?
            - input_log_marginal(&xs, &self.input_prior)?)
    }

    /// GP posterior mean and observation variance at `x_new`, conditioned
    /// on the cluster's pairs (in original output units).
    pub fn posterior_mean_var(&self, stats: &GpStats, x_new: &[f64]) -> Result<(f64, f64)> {
        let (xs, ys) = self.gather(stats);
        let n = xs.len();
        if n == 0 {
            return Ok((
                self.output_mean,
                self.kernel.signal_variance + self.kernel.noise_variance,
            ));
        }
        let chol = cholesky_with_jitter(gram(&xs, &self.kernel), &self.kernel)?;
        let y = DVector::from_column_slice(&ys);
        let alpha = chol.solve(&y);
        let k_star = DVector::from_iterator(n, xs.iter().map(|x| se_kernel(x, x_new, &self.kernel)));
        let mean = k_star.dot(&alpha) + self.output_mean;
        let var = self.kernel.signal_variance + self.kernel.noise_variance
            - k_star.dot(&chol.solve(&k_star));
        Ok((mean, var.max(1e-12)))
    }
}

impl ClusterModel for GpExperts {
    type Stats = GpStats;

    fn n_points(&self) -> usize {
        self.inputs.len()
    }

    fn leaf_stats(&self, index: usize) -> Result<GpStats> {
        if index >= self.inputs.len() {
            return Err(Error::InvalidArgument(format!("no data point {index}")));
        }
        Ok(GpStats {
            indices: vec![index as u32],
        })
    }

    fn merge_stats(&self, a: &GpStats, b: &GpStats) -> Result<GpStats> {
        let mut indices = Vec::with_capacity(a.indices.len() + b.indices.len());
        let (mut i, mut j) = (0, 0);
        while i < a.indices.len() && j < b.indices.len() {
            if a.indices[i] < b.indices[j] {
                indices.push(a.indices[i]);
                i += 1;
            } else {
                indices.push(b.indices[j]);
                j += 1;
            }
        }
        indices.extend_from_slice(&a.indices[i..]);
        indices.extend_from_slice(&b.indices[j..]);
        Ok(GpStats { indices })
    }

    fn log_f(&self, stats: &GpStats) -> Result<f64> {
        self.cluster_log_f(stats)
    }
}

impl GradientModel for GpExperts {
    fn hyper_values(&self) -> Vec<f64> {
        vec![
            self.kernel.length_scale,
            self.kernel.signal_variance,
            self.kernel.noise_variance,
        ]
    }

    fn with_hyper_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: values.len(),
            });
        }
        self.with_kernel(KernelParams::new(values[0], values[1], values[2])?)
    }

    fn log_f_grad(&self, stats: &GpStats) -> Result<Vec<f64>> {
        // The input marginal does not depend on the kernel.
        let (xs, ys) = self.gather(stats);
        let (_, grad) = gp_log_marginal_with_grad(&xs, &ys, &self.kernel)?;
        Ok(grad.to_vec())
    }
}

/// Fits kernel parameters on one pooled cluster by backtracking gradient
/// ascent in log-parameterization.
pub fn optimize_kernel(
    inputs: &[Vec<f64>],
    outputs: &[f64],
    params0: KernelParams,
    opts: AscentOptions,
) -> Result<KernelParams> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mean = outputs.iter().sum::<f64>() / outputs.len() as f64;
    let centered: Vec<f64> = outputs.iter().map(|y| y - mean).collect();
    let xs: Vec<&[f64]> = inputs.iter().map(|x| x.as_slice()).collect();
    let theta0 = vec![
        params0.length_scale.ln(),
        params0.signal_variance.ln(),
        params0.noise_variance.ln(),
    ];
    let eval = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let params = KernelParams::new(theta[0].exp(), theta[1].exp(), theta[2].exp())?;
        let (value, grad) = gp_log_marginal_with_grad(&xs, &centered, &params)?;
        Ok((
            value,
            vec![
                grad[0] * params.length_scale,
                grad[1] * params.signal_variance,
                grad[2] * params.noise_variance,
            ],
        ))
    };
    let (theta, _) = gradient_ascent(eval, theta0, opts)?;
    KernelParams::new(theta[0].exp(), theta[1].exp(), theta[2].exp())
}

struct NodeTilde {
    log_f_tilde: f64,
    log_p_tilde: f64,
}

fn fill_tilde(
    node: &RoseTree<GpStats>,
    model: &GpExperts,
    x_new: &[f64],
    out: &mut HashMap<NodeId, NodeTilde>,
) -> Result<f64> {
    let log_f_tilde = node.log_f() + model.input_append_delta(node.stats(), x_new)?;
    let log_p_tilde = if node.is_leaf() {
        log_f_tilde
    } else {
        // Split term: the new input joins exactly one child's subtree.
        let mut branch_terms = Vec::with_capacity(node.children().len());
        for c in node.children() {
            let child_tilde = fill_tilde(c, model, x_new, out)?;
            branch_terms.push(child_tilde + node.log_split() - c.log_marginal());
        }
        log_sum_exp2(
            node.pi().ln() + log_f_tilde,
            (1.0 - node.pi()).ln() + log_sum_exp(&branch_terms),
        )
    };
    out.insert(
        node.id(),
        NodeTilde {
            log_f_tilde,
            log_p_tilde,
        },
    );
    Ok(log_p_tilde)
}

fn descend_weights(
    node: &RoseTree<GpStats>,
    mass: f64,
    tilde: &HashMap<NodeId, NodeTilde>,
    weights: &mut HashMap<NodeId, f64>,
) {
    let t = &tilde[&node.id()];
    if node.is_leaf() {
        weights.insert(node.id(), mass);
        return;
    }
    let r = (node.pi().ln() + t.log_f_tilde - t.log_p_tilde)
        .exp()
        .clamp(0.0, 1.0);
    weights.insert(node.id(), mass * r);
    let rest = mass * (1.0 - r);
    let branch_logits: Vec<f64> = node
        .children()
        .iter()
        .map(|c| tilde[&c.id()].log_p_tilde + node.log_split() - c.log_marginal())
        .collect();
    let norm = log_sum_exp(&branch_logits);
    for (c, logit) in node.children().iter().zip(&branch_logits) {
        descend_weights(c, rest * (logit - norm).exp(), tilde, weights);
    }
}

/// Posterior probability that a new input belongs to each node's cluster.
///
/// Responsibilities are recomputed with the new input appended to every
/// node's input marginal; descending from the root, a node keeps the
/// remaining mass with its recomputed responsibility and passes the rest
/// to its children in proportion to their appended-input marginals. The
/// weights are nonnegative and sum to one.
pub fn cluster_posterior_weights(
    tree: &RoseTree<GpStats>,
    model: &GpExperts,
    x_new: &[f64],
) -> Result<HashMap<NodeId, f64>> {
    let mut tilde = HashMap::new();
    fill_tilde(tree, model, x_new, &mut tilde)?;
    let mut weights = HashMap::new();
    descend_weights(tree, 1.0, &tilde, &mut weights);
    Ok(weights)
}

fn normal_density(y: f64, mean: f64, var: f64) -> f64 {
    (-0.5 * (y - mean) * (y - mean) / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Mixture-of-Gaussians predictive density p(y | x_new, 𝒟) evaluated on a
/// grid of outputs: cluster weights from [`cluster_posterior_weights`],
/// one GP posterior per node.
pub fn predictive_density(
    tree: &Arc<RoseTree<GpStats>>,
    model: &GpExperts,
    x_new: &[f64],
    y_grid: &[f64],
) -> Result<Vec<f64>> {
    let weights = cluster_posterior_weights(tree, model, x_new)?;
    let mut components: Vec<(f64, f64, f64)> = Vec::new();
    let mut err = None;
    tree.for_each_node(&mut |node| {
        if err.is_some() {
            return;
        }
        let w = weights[&node.id()];
        if w <= 0.0 {
            return;
        }
        match model.posterior_mean_var(node.stats(), x_new) {
            Ok((mean, var)) => components.push((w, mean, var)),
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(y_grid
        .iter()
        .map(|&y| {
            components
                .iter()
                .map(|&(w, mean, var)| w * normal_density(y, mean, var))
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build, BuildMode};
    use crate::datagen::interlaced_curves;

    fn params() -> KernelParams {
        KernelParams::new(0.5, 2.0, 0.1).unwrap()
    }

    fn prior_1d() -> InputPriorParams {
        InputPriorParams::new(
            DVector::from_column_slice(&[0.0]),
            1.0,
            3.0,
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn kernel_basics() {
        let p = params();
        let x = [0.3, -0.2];
        assert!((se_kernel(&x, &x, &p) - p.signal_variance).abs() < 1e-15);
        let far = [1e6, -1e6];
        assert!(se_kernel(&x, &far, &p).abs() < 1e-300);
        let y = [0.1, 0.4];
        assert_eq!(se_kernel(&x, &y, &p), se_kernel(&y, &x, &p));
        assert!(KernelParams::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn gp_single_point_closed_form() {
        let p = params();
        let y = 0.7;
        let direct = normal_density(y, 0.0, p.signal_variance + p.noise_variance).ln();
        let got = gp_log_marginal(&[&[0.0][..]], &[y], &p).unwrap();
        assert!((got - direct).abs() < 1e-12);
    }

    #[test]
    fn gp_identical_inputs_concentrate_on_equal_outputs() {
        let p = KernelParams::new(0.5, 2.0, 1e-6).unwrap();
        let xs = [&[0.2][..], &[0.2][..]];
        let equal = gp_log_marginal(&xs, &[0.5, 0.5], &p).unwrap();
        let differing = gp_log_marginal(&xs, &[0.5, -0.5], &p).unwrap();
        assert!(equal > differing + 10.0);
    }

    /// Dense evaluation through determinant and explicit inverse, as an
    /// independent route for the factorized computation.
    fn dense_log_marginal(inputs: &[&[f64]], outputs: &[f64], p: &KernelParams) -> f64 {
        let n = outputs.len();
        let k = gram(inputs, p);
        let det = k.determinant();
        let inv = k.try_inverse().unwrap();
        let y = DVector::from_column_slice(outputs);
        let quad = y.dot(&(&inv * &y));
        -0.5 * quad - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn gp_matches_dense_evaluation() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let p = params();
        let inputs: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random::<f64>() * 2.0]).collect();
        let outputs: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
        let xs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
        let fast = gp_log_marginal(&xs, &outputs, &p).unwrap();
        let dense = dense_log_marginal(&xs, &outputs, &p);
        assert!((fast - dense).abs() < 1e-8, "{fast} vs {dense}");
    }

    #[test]
    fn gp_gradient_matches_finite_differences() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let inputs: Vec<Vec<f64>> = (0..6).map(|_| vec![2.0 * rng.random::<f64>()]).collect();
            let outputs: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
            let xs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
            let p = KernelParams::new(
                0.3 + rng.random::<f64>(),
                0.5 + rng.random::<f64>(),
                0.05 + 0.2 * rng.random::<f64>(),
            )
            .unwrap();
            let (_, grad) = gp_log_marginal_with_grad(&xs, &outputs, &p).unwrap();
            let fields = [p.length_scale, p.signal_variance, p.noise_variance];
            for j in 0..3 {
                let h = 1e-6 * fields[j].max(1.0);
                let mut bump = fields;
                bump[j] += h;
                let hi = gp_log_marginal(
                    &xs,
                    &outputs,
                    &KernelParams::new(bump[0], bump[1], bump[2]).unwrap(),
                )
                .unwrap();
                bump[j] -= 2.0 * h;
                let lo = gp_log_marginal(
                    &xs,
                    &outputs,
                    &KernelParams::new(bump[0], bump[1], bump[2]).unwrap(),
                )
                .unwrap();
                let fd = (hi - lo) / (2.0 * h);
                let denom = grad[j].abs().max(1e-6);
                assert!(
                    ((grad[j] - fd) / denom).abs() < 1e-5,
                    "param {j}: {} vs {fd}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn input_marginal_empty_is_zero() {
        assert_eq!(input_log_marginal(&[], &prior_1d()).unwrap(), 0.0);
    }

    #[test]
    fn input_marginal_single_point_matches_student_t() {
        let prior = prior_1d();
        for &x in &[0.0, 0.7, -1.3] {
            let direct = input_log_marginal(&[&[x][..]], &prior).unwrap();
            let t = prior.log_predictive_one(&[x]).unwrap();
            assert!((direct - t).abs() < 1e-10, "x={x}: {direct} vs {t}");
        }
    }

    #[test]
    fn input_marginal_single_point_matches_quadrature_1d() {
        // p(x) = ∫ N(x; μ0, σ²(1 + 1/κ0)) InvGamma(σ²; ν0/2, Λ0/2) dσ²
        // (the inner μ integral done analytically).
        let prior = InputPriorParams::new(
            DVector::from_column_slice(&[0.4]),
            2.0,
            5.0,
            DMatrix::from_element(1, 1, 1.5),
        )
        .unwrap();
        let x = 0.9;
        let (a, b) = (0.5 * prior.dof, 0.5 * prior.scale_matrix[(0, 0)]);
        let integrand = |s2: f64| {
            let var = s2 * (1.0 + 1.0 / prior.scale_count);
            let inv_gamma = (a * b.ln() - ln_gamma(a) - (a + 1.0) * s2.ln() - b / s2).exp();
            normal_density(x, prior.mean_location[0], var) * inv_gamma
        };
        // Simpson over a wide σ² window.
        let (lo, hi, steps) = (1e-6, 60.0, 400_000);
        let h = (hi - lo) / steps as f64;
        let mut acc = integrand(lo) + integrand(hi);
        for k in 1..steps {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * integrand(lo + k as f64 * h);
        }
        let quad = (acc * h / 3.0).ln();
        let exact = input_log_marginal(&[&[x][..]], &prior).unwrap();
        assert!((exact - quad).abs() < 1e-6, "{exact} vs {quad}");
    }

    #[test]
    fn input_marginal_chains_through_posterior_predictives() {
        let prior = prior_1d();
        let pts = [[0.3], [-0.6], [1.1]];
        let direct = input_log_marginal(
            &pts.iter().map(|p| p.as_slice()).collect::<Vec<_>>(),
            &prior,
        )
        .unwrap();
        let mut chained = 0.0;
        let mut current = prior.clone();
        for p in &pts {
            chained += current.log_predictive_one(p).unwrap();
            current = current.posterior(&[p.as_slice()]).unwrap();
        }
        assert!((direct - chained).abs() < 1e-9, "{direct} vs {chained}");
    }

    #[test]
    fn input_prior_validation() {
        assert!(InputPriorParams::new(
            DVector::from_column_slice(&[0.0]),
            0.0,
            3.0,
            DMatrix::from_element(1, 1, 1.0)
        )
        .is_err());
        assert!(InputPriorParams::new(
            DVector::from_column_slice(&[0.0, 0.0]),
            1.0,
            0.5,
            DMatrix::identity(2, 2)
        )
        .is_err());
        assert!(InputPriorParams::new(
            DVector::from_column_slice(&[0.0]),
            1.0,
            3.0,
            DMatrix::from_element(1, 1, -1.0)
        )
        .is_err());
    }

    fn tiny_model() -> GpExperts {
        let inputs = vec![vec![0.0], vec![0.1], vec![0.9], vec![1.0]];
        let outputs = vec![0.8, 0.9, -0.7, -0.8];
        GpExperts::new(inputs, outputs, params(), prior_1d()).unwrap()
    }

    #[test]
    fn cluster_log_f_factorizes() {
        let m = tiny_model();
        let stats = m
            .merge_stats(&m.leaf_stats(0).unwrap(), &m.leaf_stats(2).unwrap())
            .unwrap();
        let joint = m.cluster_log_f(&stats).unwrap();
        let parts = m.cluster_input_log_f(&stats).unwrap() + m.cluster_output_log_f(&stats).unwrap();
        assert_eq!(joint, parts);
    }

    #[test]
    fn merged_stats_stay_sorted() {
        let m = tiny_model();
        let a = m
            .merge_stats(&m.leaf_stats(3).unwrap(), &m.leaf_stats(0).unwrap())
            .unwrap();
        let b = m.merge_stats(&a, &m.leaf_stats(1).unwrap()).unwrap();
        assert_eq!(b.indices(), &[0, 1, 3]);
    }

    #[test]
    fn point_guard_is_enforced() {
        let inputs = vec![vec![0.0]; 10];
        let outputs = vec![0.0; 10];
        assert!(matches!(
            GpExperts::with_point_guard(inputs, outputs, params(), prior_1d(), 5),
            Err(Error::GpSizeGuard { .. })
        ));
    }

    #[test]
    fn weights_sum_to_one_and_favor_the_right_mode() {
        let (inputs, outputs) = interlaced_curves(60, 0.05, 3);
        let prior = InputPriorParams::from_data(&inputs).unwrap();
        let kernel = KernelParams::new(0.2, 1.0, 0.01).unwrap();
        let model = GpExperts::new(inputs, outputs, kernel, prior).unwrap();
        let tree = build(&model, 0.5, BuildMode::Rose).unwrap();

        for &x in &[0.05_f64, 0.5, 0.95] {
            let weights = cluster_posterior_weights(&tree, &model, &[x]).unwrap();
            let total: f64 = weights.values().sum();
            assert!((total - 1.0).abs() < 1e-12, "x={x}: total {total}");
            assert!(weights.values().all(|&w| w >= 0.0));
        }

        // Deep inside the first curve's exclusive input range, the heaviest
        // cluster should contain only first-curve points (even indices).
        let weights = cluster_posterior_weights(&tree, &model, &[0.05]).unwrap();
        let mut best: (f64, Option<Vec<usize>>) = (-1.0, None);
        tree.for_each_node(&mut |node| {
            let w = weights[&node.id()];
            if w > best.0 && node.n_leaves() >= 3 {
                best = (w, Some(node.leaf_indices()));
            }
        });
        let members = best.1.expect("some cluster carries weight");
        let first_curve = members.iter().filter(|&&i| i % 2 == 0).count();
        assert!(
            first_curve * 2 >= members.len(),
            "expected mostly first-curve members, got {members:?}"
        );
    }

    #[test]
    fn single_leaf_tree_gets_weight_one() {
        let m = GpExperts::new(vec![vec![0.0]], vec![0.3], params(), prior_1d()).unwrap();
        let tree = build(&m, 0.5, BuildMode::Rose).unwrap();
        let w = cluster_posterior_weights(&tree, &m, &[0.2]).unwrap();
        assert_eq!(w.len(), 1);
        assert!((w[&tree.id()] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn predictive_density_integrates_to_one() {
        let (inputs, outputs) = interlaced_curves(50, 0.05, 11);
        let prior = InputPriorParams::from_data(&inputs).unwrap();
        let kernel = KernelParams::new(0.2, 1.0, 0.01).unwrap();
        let model = GpExperts::new(inputs, outputs, kernel, prior).unwrap();
        let tree = build(&model, 0.5, BuildMode::Rose).unwrap();
        let grid: Vec<f64> = (0..801).map(|i| -4.0 + i as f64 * 0.01).collect();
        for &x in &[0.1_f64, 0.4, 0.8] {
            let density = predictive_density(&tree, &model, &[x], &grid).unwrap();
            let integral: f64 = density.windows(2).map(|w| 0.005 * (w[0] + w[1])).sum();
            assert!((integral - 1.0).abs() < 1e-3, "x={x}: integral {integral}");
        }
    }

    #[test]
    fn predictive_density_bimodal_in_the_overlap() {
        let (inputs, outputs) = interlaced_curves(80, 0.04, 19);
        let prior = InputPriorParams::from_data(&inputs).unwrap();
        let kernel = KernelParams::new(0.15, 1.0, 0.01).unwrap();
        let model = GpExperts::new(inputs, outputs, kernel, prior).unwrap();
        let tree = build(&model, 0.5, BuildMode::Rose).unwrap();
        // At x = 0.4 the two curves sit near ±sin(0.8π) ≈ ±0.588.
        let grid: Vec<f64> = (0..401).map(|i| -2.0 + i as f64 * 0.01).collect();
        let density = predictive_density(&tree, &model, &[0.4], &grid).unwrap();
        let value_at = |y: f64| {
            let idx = ((y + 2.0) / 0.01).round() as usize;
            density[idx]
        };
        let upper = value_at(0.588);
        let lower = value_at(-0.588);
        let middle = value_at(0.0);
        assert!(
            upper > middle && lower > middle,
            "expected bimodality: f(+m)={upper}, f(0)={middle}, f(−m)={lower}"
        );
    }

    #[test]
    fn single_cluster_predictive_reduces_to_gp_posterior() {
        // Single-cluster data (one smooth curve) with γ → 1: all weight
        // stays at the root, and the mixture is one GP's predictive.
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let inputs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random::<f64>()]).collect();
        let outputs: Vec<f64> = inputs
            .iter()
            .map(|x| (std::f64::consts::TAU * x[0]).sin() + 0.02 * (rng.random::<f64>() - 0.5))
            .collect();
        let prior = InputPriorParams::from_data(&inputs).unwrap();
        let kernel = KernelParams::new(0.3, 1.0, 0.05).unwrap();
        let model = GpExperts::new(inputs, outputs, kernel, prior).unwrap();
        let tree = build(&model, 1.0 - 1e-13, BuildMode::Rose).unwrap();
        let x = [0.35];
        let weights = cluster_posterior_weights(&tree, &model, &x).unwrap();
        assert!(
            weights[&tree.id()] > 0.9999,
            "root weight {}",
            weights[&tree.id()]
        );
        let grid = [-0.5, 0.0, 0.5];
        let density = predictive_density(&tree, &model, &x, &grid).unwrap();
        let (mean, var) = model.posterior_mean_var(tree.stats(), &x).unwrap();
        for (y, d) in grid.iter().zip(&density) {
            assert!((d - normal_density(*y, mean, var)).abs() < 1e-3);
        }
    }

    #[test]
    fn optimize_kernel_improves_or_keeps_objective() {
        let (inputs, outputs) = interlaced_curves(30, 0.05, 31);
        let p0 = KernelParams::new(1.0, 1.0, 1.0).unwrap();
        let fitted = optimize_kernel(&inputs, &outputs, p0, AscentOptions::default()).unwrap();
        let xs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
        let mean = outputs.iter().sum::<f64>() / outputs.len() as f64;
        let centered: Vec<f64> = outputs.iter().map(|y| y - mean).collect();
        let before = gp_log_marginal(&xs, &centered, &p0).unwrap();
        let after = gp_log_marginal(&xs, &centered, &fitted).unwrap();
        assert!(after >= before - 1e-12);
    }

    #[test]
    fn tree_level_kernel_fit_improves_tree_marginal() {
        use crate::hyperopt::optimize_hypers;
        let (inputs, outputs) = interlaced_curves(30, 0.05, 53);
        let prior = InputPriorParams::from_data(&inputs).unwrap();
        let kernel = KernelParams::new(1.0, 1.0, 0.5).unwrap();
        let model = GpExperts::new(inputs, outputs, kernel, prior).unwrap();
        let gamma = 0.5;
        let tree = build(&model, gamma, BuildMode::Rose).unwrap();
        let before = tree.log_marginal();
        let opts = AscentOptions {
            max_steps: 25,
            ..AscentOptions::default()
        };
        let (fitted, after) = optimize_hypers(tree.as_ref(), &model, gamma, opts).unwrap();
        assert!(after >= before - 1e-9, "{after} < {before}");
        assert!(fitted.kernel().validate().is_ok());
    }

    #[test]
    fn mixture_tree_beats_single_gp_on_interlaced_curves() {
        let (inputs, outputs) = interlaced_curves(60, 0.05, 41);
        let prior = InputPriorParams::from_data(&inputs).unwrap();
        let p0 = KernelParams::new(0.5, 1.0, 0.1).unwrap();
        let kernel = optimize_kernel(&inputs, &outputs, p0, AscentOptions::default()).unwrap();
        let model = GpExperts::new(inputs, outputs, kernel, prior).unwrap();
        let single = model.pooled_log_f().unwrap();
        let tree = build(&model, 0.5, BuildMode::Rose).unwrap();
        assert!(
            tree.log_marginal() > single,
            "tree {} vs single GP {single}",
            tree.log_marginal()
        );
    }
}
