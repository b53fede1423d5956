//! Tanh-squashed diagonal Gaussian policies.
//!
//! The network emits `[mean | log_std]`; an action is
//! `tanh(mean + exp(log_std) · noise)` with `noise ~ N(0, I)` supplied by the
//! caller. The log-density carries the change-of-variables term
//! `log(1 − tanh(u)²)`, evaluated as `2·(ln 2 − u − softplus(−2u))` so it stays
//! finite when the tanh saturates.

use std::f64::consts::{LN_2, PI};

use rand::Rng;

use super::graph::{tanh, Graph, Tensor, Var};
use super::mlp::{Activation, MlpParams, MlpVars};
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Largest magnitude a sampled action may take; keeps samples strictly inside `(−1, 1)`.
pub const ACTION_LIMIT: f64 = 1.0 - 1e-12;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianHead {
    /// Splits a raw network output and clamps the log standard deviation.
    pub fn from_output(out: &[f64]) -> Result<Self> {
        if !out.len().is_multiple_of(2) || out.is_empty() {
            return Err(Error::config(format!(
                "gaussian head needs an even, non-empty output, got {}",
                out.len()
            )));
        }
        let k = out.len() / 2;
        Ok(Self {
            mean: out[..k].to_vec(),
            log_std: out[k..].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `tanh(mean)`: the deterministic action used for deployment and for the
    /// distance statistic of the adaptive controller.
    pub fn mean_action(&self) -> Vec<f64> {
        self.mean
            .iter()
            .map(|&m| tanh(m).clamp(-ACTION_LIMIT, ACTION_LIMIT))
            .collect()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 − tanh(u)²)`.
pub fn log_tanh_jacobian(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Reparameterized sample from a squashed Gaussian head.
pub fn sample_action(head: &GaussianHead, noise: &[f64]) -> Result<(Vec<f64>, f64)> {
    if noise.len() != head.dim() || head.log_std.len() != head.dim() {
        return Err(Error::Dimension {
            context: "gaussian noise",
            expected: head.dim(),
            got: noise.len(),
        });
    }
    let mut action = Vec::with_capacity(head.dim());
    let mut log_prob = 0.0;
    for ((&m, &ls), &n) in head.mean.iter().zip(&head.log_std).zip(noise) {
        let ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        let u = m + ls.exp() * n;
        action.push(tanh(u).clamp(-ACTION_LIMIT, ACTION_LIMIT));
        log_prob += -0.5 * n * n - ls - HALF_LN_2PI - log_tanh_jacobian(u);
    }
    Ok((action, log_prob))
}

/// Trainable leaves and outputs of a policy sample recorded on a graph.
#[derive(Debug, Clone)]
pub struct GraphSample {
    /// `B × k` squashed actions.
    pub action: Var,
    /// `B × 1` log-densities.
    pub log_prob: Var,
    pub vars: MlpVars,
}

/// A state-conditioned squashed Gaussian: an MLP producing `[mean | log_std]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: MlpParams,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Ok(Self {
            net: MlpParams::new(&sizes, activation, rng)?,
        })
    }

    pub fn from_net(net: MlpParams) -> Result<Self> {
        if !net.output_size().is_multiple_of(2) {
            return Err(Error::config("policy network output size must be even"));
        }
        Ok(Self { net })
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_size() / 2
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_size()
    }

    pub fn head(&self, obs: &[f64]) -> Result<GaussianHead> {
        GaussianHead::from_output(&self.net.forward(obs)?)
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.head(obs)?.mean_action())
    }

    /// Batched reparameterized samples without recording a graph.
    /// Returns `(B × k actions, B × 1 log-probs)`.
    pub fn sample_batch(&self, obs: &Tensor, noise: &Tensor) -> Result<(Tensor, Tensor)> {
        let k = self.action_dim();
        if noise.dim() != (obs.nrows(), k) {
            return Err(Error::Graph(format!(
                "noise shape {:?} for batch of {} with action dim {k}",
                noise.dim(),
                obs.nrows()
            )));
        }
        let out = self.net.forward_batch(obs)?;
        let mut actions = Tensor::zeros((obs.nrows(), k));
        let mut log_probs = Tensor::zeros((obs.nrows(), 1));
        for r in 0..obs.nrows() {
            let mut lp = 0.0;
            for c in 0..k {
                let ls = out[[r, k + c]].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let n = noise[[r, c]];
                let u = out[[r, c]] + ls.exp() * n;
                actions[[r, c]] = tanh(u);
                lp += -0.5 * n * n - ls - HALF_LN_2PI - log_tanh_jacobian(u);
            }
            log_probs[[r, 0]] = lp;
        }
        Ok((actions, log_probs))
    }

    /// Records a reparameterized sample for a batch of observations on `g`.
    pub fn sample_graph(&self, g: &mut Graph, obs: Var, noise: &Tensor, trainable: bool) -> Result<GraphSample> {
        let k = self.action_dim();
        let rows = g.value(obs).nrows();
        if noise.dim() != (rows, k) {
            return Err(Error::Graph(format!(
                "noise shape {:?} for batch of {rows} with action dim {k}",
                noise.dim()
            )));
        }
        let (out, vars) = self.net.forward_graph(g, obs, trainable)?;
        let mean = g.columns(out, 0, k)?;
        let log_std = g.columns(out, k, 2 * k)?;
        let log_std = g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
        let std = g.exp(log_std);
        let noise_var = g.constant(noise.clone());
        let spread = g.mul(std, noise_var)?;
        let u = g.add(mean, spread)?;
        let action = g.tanh(u);

        // log N(noise) − Σ log_std − Σ log(1 − tanh²u)
        let base = noise.mapv(|n| -0.5 * n * n - HALF_LN_2PI);
        let base = g.constant(base);
        let neg_2u = g.scale(u, -2.0);
        let sp = g.softplus(neg_2u);
        let u_plus_sp = g.add(u, sp)?;
        let ln2 = g.constant(Tensor::from_elem((rows, k), LN_2));
        let half_jac = g.sub(ln2, u_plus_sp)?;
        let jac = g.scale(half_jac, 2.0);
        let per_dim = g.sub(base, log_std)?;
        let per_dim = g.sub(per_dim, jac)?;
        let log_prob = g.row_sum(per_dim);
        Ok(GraphSample { action, log_prob, vars })
    }
}

/// Log-density of a `N(0, I)` draw in `dim` dimensions, used by tests and reports.
pub fn standard_normal_log_density(noise: &[f64]) -> f64 {
    noise.iter().map(|n| -0.5 * n * n - 0.5 * (2.0 * PI).ln()).sum()
}
