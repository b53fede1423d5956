use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Activation, GaussianPolicy, MlpParams, Parameters};

/// SAC hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    pub tau: f64,
    pub gamma: f64,
    pub initial_alpha: f64,
    /// Defaults to `−action_dim` when absent.
    pub target_entropy: Option<f64>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            learning_rate: 3e-4,
            batch_size: 256,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            tau: 0.005,
            gamma: 0.99,
            initial_alpha: 1.0,
            target_entropy: None,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::config("sac.hidden sizes must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("sac.learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("sac.batch_size must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("sac.buffer_capacity must be positive"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("sac.tau must lie in (0, 1]"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("sac.gamma must lie in (0, 1)"));
        }
        if !(self.initial_alpha.is_finite() && self.initial_alpha > 0.0) {
            return Err(Error::config("sac.initial_alpha must be positive"));
        }
        Ok(())
    }
}

/// Every learned quantity of an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBundle {
    pub actor: GaussianPolicy,
    pub adversary: GaussianPolicy,
    pub critics: [MlpParams; 2],
    pub target_critics: [MlpParams; 2],
    pub log_temperature: f64,
    pub target_entropy: f64,
    pub tau: f64,
    pub gamma: f64,
}

impl AgentBundle {
    /// Fresh networks; the adversary mirrors the actor's architecture and the
    /// target critics start as exact copies of the critics.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, cfg: &SacConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let actor = GaussianPolicy::new(obs_dim, action_dim, &cfg.hidden, cfg.activation, rng)?;
        let adversary = GaussianPolicy::new(obs_dim, action_dim, &cfg.hidden, cfg.activation, rng)?;
        let mut critic_sizes = vec![obs_dim + action_dim];
        critic_sizes.extend_from_slice(&cfg.hidden);
        critic_sizes.push(1);
        let c1 = MlpParams::new(&critic_sizes, cfg.activation, rng)?;
        let c2 = MlpParams::new(&critic_sizes, cfg.activation, rng)?;
        Ok(Self {
            actor,
            adversary,
            target_critics: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            log_temperature: cfg.initial_alpha.ln(),
            target_entropy: cfg.target_entropy.unwrap_or(-(action_dim as f64)),
            tau: cfg.tau,
            gamma: cfg.gamma,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_temperature.exp()
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.action_dim()
    }

    pub fn all_finite(&self) -> bool {
        self.actor.net.all_finite()
            && self.adversary.net.all_finite()
            && self.critics.iter().all(|c| c.all_finite())
            && self.target_critics.iter().all(|c| c.all_finite())
            && self.log_temperature.is_finite()
    }

    /// SHA-256 over the bit patterns of every parameter, truncated to 64 bits.
    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        let nets = [
            &self.actor.net,
            &self.adversary.net,
            &self.critics[0],
            &self.critics[1],
            &self.target_critics[0],
            &self.target_critics[1],
        ];
        for net in nets {
            for t in net.tensors() {
                for v in t.iter() {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
        h.update(self.log_temperature.to_bits().to_le_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}
