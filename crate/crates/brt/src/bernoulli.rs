//! Beta-Bernoulli cluster marginal likelihood over binary vectors.
//!
//! Each dimension is an independent Bernoulli with a beta(α_i, β_i) prior;
//! integrating the parameters out gives a closed form in terms of beta
//! functions, evaluated here with log-gamma arithmetic.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::model::{ClusterModel, GradientModel};

/// Additive sufficient statistics of a cluster of binary vectors:
/// the point count and the per-dimension count of ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterStats {
    pub n_points: u64,
    pub ones: Vec<u32>,
}

impl ClusterStats {
    /// Empty cluster (identity element for merging).
    pub fn empty(dims: usize) -> Self {
        Self {
            n_points: 0,
            ones: vec![0; dims],
        }
    }

    /// Statistics of a single binary vector. Entries must be 0 or 1.
    pub fn from_point(x: &[f64]) -> Result<Self> {
        let mut ones = Vec::with_capacity(x.len());
        for (col, &v) in x.iter().enumerate() {
            if v == 0.0 {
                ones.push(0);
            } else if v == 1.0 {
                ones.push(1);
            } else {
                return Err(Error::NonBinaryEntry {
                    row: 0,
                    col,
                    value: v,
                });
            }
        }
        Ok(Self { n_points: 1, ones })
    }

    pub fn dims(&self) -> usize {
        self.ones.len()
    }

    /// Componentwise sum of two stats (disjoint cluster union).
    pub fn merged(&self, other: &Self) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(Self {
            n_points: self.n_points + other.n_points,
            ones: self
                .ones
                .iter()
                .zip(&other.ones)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// Hyperparameters of the Bernoulli tree model: the structure parameter γ
/// and the per-dimension beta prior parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub gamma: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Hyperparams {
    pub fn new(gamma: f64, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let h = Self { gamma, alpha, beta };
        h.validate()?;
        Ok(h)
    }

    /// Uniform beta priors (α_i = β_i = 1) in `dims` dimensions.
    pub fn uniform(gamma: f64, dims: usize) -> Result<Self> {
        Self::new(gamma, vec![1.0; dims], vec![1.0; dims])
    }

    pub fn dims(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidHyper(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.alpha.len() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha.len(),
                found: self.beta.len(),
            });
        }
        if self.alpha.iter().chain(&self.beta).any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidHyper(
                "alpha and beta entries must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Beta-Bernoulli model over a binary data matrix.
#[derive(Debug, Clone)]
pub struct BetaBernoulli {
    data: Vec<Vec<u8>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Per-dimension log B(α_i, β_i), cached.
    ln_beta_prior: Vec<f64>,
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

impl BetaBernoulli {
    /// Wraps a binary matrix (entries 0/1) with per-dimension beta priors.
    pub fn new(data: Vec<Vec<u8>>, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let dims = alpha.len();
        if beta.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: beta.len(),
            });
        }
        if alpha.iter().chain(&beta).any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidHyper(
                "alpha and beta entries must be strictly positive".into(),
            ));
        }
        for (row, x) in data.iter().enumerate() {
            if x.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: x.len(),
                });
            }
            if let Some(col) = x.iter().position(|&v| v > 1) {
                return Err(Error::NonBinaryEntry {
                    row,
                    col,
                    value: x[col] as f64,
                });
            }
        }
        let ln_beta_prior = alpha
            .iter()
            .zip(&beta)
            .map(|(&a, &b)| ln_beta(a, b))
            .collect();
        Ok(Self {
            data,
            alpha,
            beta,
            ln_beta_prior,
        })
    }

    /// Uniform-prior convenience constructor.
    pub fn with_uniform_prior(data: Vec<Vec<u8>>) -> Result<Self> {
        let dims = data.first().map_or(0, |r| r.len());
        Self::new(data, vec![1.0; dims], vec![1.0; dims])
    }

    pub fn from_hyper(data: Vec<Vec<u8>>, hyper: &Hyperparams) -> Result<Self> {
        hyper.validate()?;
        Self::new(data, hyper.alpha.clone(), hyper.beta.clone())
    }

    pub fn dims(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn data(&self) -> &[Vec<u8>] {
        &self.data
    }

    /// log f(𝒟) = Σ_i log B(α_i + n_i, β_i + N − n_i) − log B(α_i, β_i).
    pub fn cluster_log_f(&self, stats: &ClusterStats) -> Result<f64> {
        if stats.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: stats.dims(),
            });
        }
        let n = stats.n_points as f64;
        let mut total = 0.0;
        for i in 0..self.dims() {
            let ones = stats.ones[i] as f64;
            total += ln_beta(self.alpha[i] + ones, self.beta[i] + n - ones) - self.ln_beta_prior[i];
        }
        Ok(total)
    }

    /// Gradient of `cluster_log_f` in (α_1..α_d, β_1..β_d) order:
    /// ∂/∂α_i = ψ(α_i+n_i) − ψ(α_i+β_i+N) − ψ(α_i) + ψ(α_i+β_i),
    /// and symmetrically for β_i with N − n_i.
    pub fn cluster_log_f_grad(&self, stats: &ClusterStats) -> Result<Vec<f64>> {
        if stats.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: stats.dims(),
            });
        }
        let d = self.dims();
        let n = stats.n_points as f64;
        let mut grad = vec![0.0; 2 * d];
        for i in 0..d {
            let (a, b) = (self.alpha[i], self.beta[i]);
            let ones = stats.ones[i] as f64;
            let psi_total = digamma(a + b + n);
            let psi_prior = digamma(a + b);
            grad[i] = digamma(a + ones) - psi_total - digamma(a) + psi_prior;
            grad[d + i] = digamma(b + n - ones) - psi_total - digamma(b) + psi_prior;
        }
        Ok(grad)
    }
}

impl ClusterModel for BetaBernoulli {
    type Stats = ClusterStats;

    fn n_points(&self) -> usize {
        self.data.len()
    }

    fn leaf_stats(&self, index: usize) -> Result<ClusterStats> {
        let row = self
            .data
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("no data row {index}")))?;
        Ok(ClusterStats {
            n_points: 1,
            ones: row.iter().map(|&b| b as u32).collect(),
        })
    }

    fn merge_stats(&self, a: &ClusterStats, b: &ClusterStats) -> Result<ClusterStats> {
        a.merged(b)
    }

    fn log_f(&self, stats: &ClusterStats) -> Result<f64> {
        self.cluster_log_f(stats)
    }
}

impl GradientModel for BetaBernoulli {
    fn hyper_values(&self) -> Vec<f64> {
        self.alpha.iter().chain(&self.beta).cloned().collect()
    }

    fn with_hyper_values(&self, values: &[f64]) -> Result<Self> {
        let d = self.dims();
        if values.len() != 2 * d {
            return Err(Error::DimensionMismatch {
                expected: 2 * d,
                found: values.len(),
            });
        }
        Self::new(
            self.data.clone(),
            values[..d].to_vec(),
            values[d..].to_vec(),
        )
    }

    fn log_f_grad(&self, stats: &ClusterStats) -> Result<Vec<f64>> {
        self.cluster_log_f_grad(stats)
    }
}
