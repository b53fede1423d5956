//! Interaction and update loop.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{AgentBundle, SacConfig};
use super::buffer::{ReplayBuffer, Transition};
use super::losses::{critic_loss, normal_tensor, policy_losses, soft_update, temperature_loss, LossNoise};
use crate::adapt::{action_distance, mix_actions, update_coefficient, AdaptState};
use crate::env::{observe, reset, step, EnvParams, EnvState};
use crate::error::{Error, Result};
use crate::nn::{optimizer_step, sample_action, GaussianPolicy, OptState, Tensor};

/// How the executed mixing weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EpsilonMode {
    /// The controller's ε.
    Adaptive,
    /// A constant ε.
    Fixed { epsilon: f64 },
    /// ε drawn uniformly from `[lo, hi]` at the start of every episode.
    Random { lo: f64, hi: f64 },
    /// ε = 0.
    Off,
}

impl EpsilonMode {
    pub fn name(&self) -> &'static str {
        match self {
            EpsilonMode::Adaptive => "adaptive",
            EpsilonMode::Fixed { .. } => "fixed",
            EpsilonMode::Random { .. } => "random",
            EpsilonMode::Off => "off",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EpsilonMode::Fixed { epsilon } if !(0.0..=1.0).contains(&epsilon) => Err(Error::config(format!(
                "fixed epsilon must lie in [0, 1], got {epsilon}"
            ))),
            EpsilonMode::Random { lo, hi } if !(0.0 <= lo && lo <= hi && hi <= 1.0) => Err(Error::config(format!(
                "random epsilon range [{lo}, {hi}] must lie in [0, 1]"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvParams,
    pub total_steps: usize,
    pub seed: u64,
    pub sac: SacConfig,
    /// Initial controller state (ε₀, β, c, rule).
    pub adapt: AdaptState,
    pub mode: EpsilonMode,
    /// How many of the most recent episode-end snapshots to retain.
    pub snapshot_episodes: usize,
    /// Record a parameter checksum after every step.
    pub record_checksums: bool,
}

impl TrainConfig {
    pub fn new(env: EnvParams, total_steps: usize, seed: u64) -> Self {
        Self {
            env,
            total_steps,
            seed,
            sac: SacConfig::default(),
            adapt: AdaptState::default(),
            mode: EpsilonMode::Adaptive,
            snapshot_episodes: 10,
            record_checksums: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sac.validate()?;
        self.adapt.validate()?;
        self.mode.validate()
    }
}

/// One row of the training trace. Optional fields are blank in the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub episode: usize,
    /// Set on the last step of an episode.
    pub episode_return: Option<f64>,
    /// The ε actually used to mix this step's action.
    pub epsilon: f64,
    pub d: f64,
    pub d_avg: f64,
    pub b: f64,
    pub update: Option<UpdateStats>,
    pub alpha: f64,
}

pub const TRACE_HEADER: &str =
    "step,episode,return,epsilon,d,d_avg,b,critic_loss_1,critic_loss_2,actor_loss,adversary_loss,alpha";

impl TraceRow {
    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let u = self.update.as_ref();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.episode,
            opt(self.episode_return),
            self.epsilon,
            self.d,
            self.d_avg,
            self.b,
            opt(u.map(|u| u.critic_losses[0])),
            opt(u.map(|u| u.critic_losses[1])),
            opt(u.map(|u| u.actor_loss)),
            opt(u.map(|u| u.adversary_loss)),
            self.alpha
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_losses: [f64; 2],
    pub actor_loss: f64,
    pub adversary_loss: f64,
    pub temperature_loss: f64,
}

/// Agent state captured at the end of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub episode: usize,
    pub step: usize,
    pub bundle: AgentBundle,
    pub adapt: AdaptState,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: AgentBundle,
    pub adapt: AdaptState,
    pub trace: Vec<TraceRow>,
    pub episode_returns: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub checksums: Vec<u64>,
}

/// Result of one environment interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Collected {
    pub transition: Transition,
    pub adapt: AdaptState,
    pub next_state: EnvState,
    pub done: bool,
    pub d: f64,
    pub b: f64,
    pub epsilon: f64,
}

/// Observe, update the controller from the mean-action distance, sample both
/// policies, mix with the updated ε (or `epsilon_override`), and step.
pub fn collect_step(
    bundle: &AgentBundle,
    adapt: AdaptState,
    params: &EnvParams,
    env_state: &EnvState,
    noise_actor: &[f64],
    noise_adversary: &[f64],
    epsilon_override: Option<f64>,
) -> Result<Collected> {
    let obs = observe(params.env, env_state);
    let head = bundle.actor.head(&obs)?;
    let head_bar = bundle.adversary.head(&obs)?;
    let d = action_distance(&head.mean_action(), &head_bar.mean_action())?;
    let (adapt, b) = update_coefficient(adapt, d);
    let epsilon = epsilon_override.unwrap_or(adapt.epsilon);
    let (a, _) = sample_action(&head, noise_actor)?;
    let (a_bar, _) = sample_action(&head_bar, noise_adversary)?;
    let mixed = mix_actions(epsilon, &a, &a_bar)?;
    let out = step(env_state, params, &mixed)?;
    Ok(Collected {
        transition: Transition {
            state: obs,
            mixed_action: mixed,
            reward: out.reward,
            next_state: observe(params.env, &out.next_state),
            // time limits truncate rather than terminate
            done: false,
        },
        adapt,
        next_state: out.next_state,
        done: out.done,
        d,
        b,
        epsilon,
    })
}

/// Deterministic deployment returns: protagonist mean action, no adversary,
/// one episode per reset seed.
pub fn evaluate_policy(policy: &GaussianPolicy, params: &EnvParams, reset_seeds: &[u64]) -> Result<Vec<f64>> {
    reset_seeds
        .iter()
        .map(|&seed| {
            let mut state = reset(params, seed);
            let mut total = 0.0;
            loop {
                let action = policy.mean_action(&observe(params.env, &state))?;
                let out = step(&state, params, &action)?;
                total += out.reward;
                state = out.next_state;
                if out.done {
                    return Ok(total);
                }
            }
        })
        .collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_INIT: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_BATCH: u64 = 3;
const STREAM_EPSILON: u64 = 4;
const STREAM_WARMUP: u64 = 5;

/// Reset seeds drawn by a training run with master seed `seed`, in episode order.
pub fn episode_reset_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = stream(seed, STREAM_ENV);
    (0..episodes).map(|_| rng.random()).collect()
}

struct Optimizers {
    actor: OptState,
    adversary: OptState,
    critics: [OptState; 2],
    temperature: OptState,
}

/// Step-wise training driver. The trace survives an aborted run.
pub struct Trainer {
    cfg: TrainConfig,
    bundle: AgentBundle,
    adapt: AdaptState,
    opt: Optimizers,
    buffer: ReplayBuffer,
    env_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
    epsilon_rng: ChaCha8Rng,
    warmup_rng: ChaCha8Rng,
    env_state: Option<EnvState>,
    episode: usize,
    episode_return: f64,
    episode_epsilon: f64,
    steps_done: usize,
    trace: Vec<TraceRow>,
    episode_returns: Vec<f64>,
    snapshots: VecDeque<Snapshot>,
    checksums: Vec<u64>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let env = cfg.env.env;
        let mut init_rng = stream(cfg.seed, STREAM_INIT);
        let bundle = AgentBundle::new(env.obs_dim(), env.action_dim(), &cfg.sac, &mut init_rng)?;
        let lr = cfg.sac.learning_rate;
        let opt = Optimizers {
            actor: OptState::new(&bundle.actor.net, lr),
            adversary: OptState::new(&bundle.adversary.net, lr),
            critics: [
                OptState::new(&bundle.critics[0], lr),
                OptState::new(&bundle.critics[1], lr),
            ],
            temperature: OptState::new(&Tensor::zeros((1, 1)), lr),
        };
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.sac.buffer_capacity)?,
            env_rng: stream(cfg.seed, STREAM_ENV),
            policy_rng: stream(cfg.seed, STREAM_POLICY),
            batch_rng: stream(cfg.seed, STREAM_BATCH),
            epsilon_rng: stream(cfg.seed, STREAM_EPSILON),
            warmup_rng: stream(cfg.seed, STREAM_WARMUP),
            adapt: cfg.adapt,
            bundle,
            opt,
            env_state: None,
            episode: 0,
            episode_return: 0.0,
            episode_epsilon: 0.0,
            steps_done: 0,
            trace: Vec::new(),
            episode_returns: Vec::new(),
            snapshots: VecDeque::new(),
            checksums: Vec::new(),
            cfg,
        })
    }

    pub fn bundle(&self) -> &AgentBundle {
        &self.bundle
    }

    pub fn adapt(&self) -> &AdaptState {
        &self.adapt
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn is_finished(&self) -> bool {
        self.steps_done >= self.cfg.total_steps
    }

    fn applied_epsilon(&self) -> Option<f64> {
        match self.cfg.mode {
            EpsilonMode::Adaptive => None,
            EpsilonMode::Fixed { epsilon } => Some(epsilon),
            EpsilonMode::Random { .. } => Some(self.episode_epsilon),
            EpsilonMode::Off => Some(0.0),
        }
    }

    /// One environment step plus, past warmup, one gradient update.
    pub fn step_once(&mut self) -> Result<()> {
        let t = self.steps_done;
        let params = self.cfg.env;
        let state = match self.env_state.take() {
            Some(s) => s,
            None => {
                if let EpsilonMode::Random { lo, hi } = self.cfg.mode {
                    self.episode_epsilon = self.epsilon_rng.random_range(lo..=hi);
                }
                self.episode_return = 0.0;
                reset(&params, self.env_rng.random())
            }
        };
        let k = params.env.action_dim();
        let warm = t < self.cfg.sac.warmup_steps;

        let collected = if warm {
            // uniform exploration; the controller is held still
            let obs = observe(params.env, &state);
            let d = action_distance(
                &self.bundle.actor.mean_action(&obs)?,
                &self.bundle.adversary.mean_action(&obs)?,
            )?;
            let action: Vec<f64> = (0..k).map(|_| self.warmup_rng.random_range(-1.0..=1.0)).collect();
            let out = step(&state, &params, &action)?;
            Collected {
                transition: Transition {
                    state: obs,
                    mixed_action: action,
                    reward: out.reward,
                    next_state: observe(params.env, &out.next_state),
                    done: false,
                },
                adapt: self.adapt,
                next_state: out.next_state,
                done: out.done,
                d,
                b: 0.0,
                epsilon: self.applied_epsilon().unwrap_or(self.adapt.epsilon),
            }
        } else {
            let noise = normal_tensor(&mut self.policy_rng, 2, k);
            let (na, nb) = (noise.row(0).to_vec(), noise.row(1).to_vec());
            collect_step(
                &self.bundle,
                self.adapt,
                &params,
                &state,
                &na,
                &nb,
                self.applied_epsilon(),
            )?
        };
        self.adapt = collected.adapt;
        self.episode_return += collected.transition.reward;
        self.buffer.push(collected.transition);

        let update = if !warm && self.buffer.len() >= self.cfg.sac.batch_size {
            Some(self.update(collected.epsilon)?)
        } else {
            None
        };

        let episode_return = collected.done.then_some(self.episode_return);
        self.trace.push(TraceRow {
            step: t,
            episode: self.episode,
            episode_return,
            epsilon: collected.epsilon,
            d: collected.d,
            d_avg: self.adapt.d_avg,
            b: collected.b,
            update,
            alpha: self.bundle.alpha(),
        });
        if collected.done {
            self.episode_returns.push(self.episode_return);
            if self.cfg.snapshot_episodes > 0 {
                if self.snapshots.len() == self.cfg.snapshot_episodes {
                    self.snapshots.pop_front();
                }
                self.snapshots.push_back(Snapshot {
                    episode: self.episode,
                    step: t,
                    bundle: self.bundle.clone(),
                    adapt: self.adapt,
                });
            }
            self.episode += 1;
        } else {
            self.env_state = Some(collected.next_state);
        }
        if self.cfg.record_checksums {
            self.checksums.push(self.bundle.checksum());
        }
        self.steps_done += 1;
        Ok(())
    }

    /// Critic step, then both policies against the refreshed critics, then
    /// the temperature, then the target blend.
    fn update(&mut self, epsilon: f64) -> Result<UpdateStats> {
        let t = self.steps_done;
        let k = self.cfg.env.env.action_dim();
        let batch = self.buffer.sample(self.cfg.sac.batch_size, &mut self.batch_rng)?;
        let noise = LossNoise::sample(&mut self.batch_rng, batch.len(), k);

        let critic = critic_loss(&self.bundle, epsilon, &batch, &noise)?;
        ensure_finite(t, "critic loss", &critic.losses)?;
        let [g0, g1] = critic.grads;
        optimizer_step(&mut self.bundle.critics[0], &g0, &mut self.opt.critics[0])?;
        optimizer_step(&mut self.bundle.critics[1], &g1, &mut self.opt.critics[1])?;

        let pol = policy_losses(&self.bundle, epsilon, &batch.states, &noise.actor, &noise.adversary)?;
        ensure_finite(t, "policy loss", &[pol.actor.loss, pol.adversary.loss])?;
        optimizer_step(&mut self.bundle.actor.net, &pol.actor.grads, &mut self.opt.actor)?;
        optimizer_step(
            &mut self.bundle.adversary.net,
            &pol.adversary.grads,
            &mut self.opt.adversary,
        )?;

        let (temp_loss, temp_grad) = temperature_loss(&self.bundle, &pol.log_probs)?;
        ensure_finite(t, "temperature loss", &[temp_loss])?;
        let mut log_alpha = Tensor::from_elem((1, 1), self.bundle.log_temperature);
        optimizer_step(
            &mut log_alpha,
            &[Tensor::from_elem((1, 1), temp_grad)],
            &mut self.opt.temperature,
        )?;
        self.bundle.log_temperature = log_alpha[[0, 0]];

        soft_update(&mut self.bundle)?;
        if !self.bundle.all_finite() {
            return Err(Error::NonFinite(format!("step {t}: parameters left the finite range")));
        }
        Ok(UpdateStats {
            critic_losses: critic.losses,
            actor_loss: pol.actor.loss,
            adversary_loss: pol.adversary.loss,
            temperature_loss: temp_loss,
        })
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step_once()?;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            bundle: self.bundle,
            adapt: self.adapt,
            trace: self.trace,
            episode_returns: self.episode_returns,
            snapshots: self.snapshots.into_iter().collect(),
            checksums: self.checksums,
        }
    }
}

fn ensure_finite(step: usize, what: &str, values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("step {step}: {what} is {v}")));
    }
    Ok(())
}

/// Runs a full training job.
pub fn train(cfg: TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg)?;
    trainer.run()?;
    Ok(trainer.into_outcome())
}
