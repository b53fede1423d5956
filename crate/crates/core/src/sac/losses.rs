//! The four A2P-SAC objectives and the soft target update.
//!
//! Notation: `ε` is the current adversarial coefficient, `α = exp(log α)` the
//! temperature, `f_φ(δ; s)` and `f̄_φ̄(δ; s)` reparameterized protagonist and
//! adversary samples, and `mix = (1 − ε)·f_φ + ε·f̄_φ̄`.
//!
//! * target:     `V̂(s') = min_i Q̄_i(s', mix') − (1 − ε)·α·log π(a'|s')`
//! * critic:     `½·mean (Q_i(s, a_stored) − (r + γ·(1 − done)·V̂(s')))²`
//! * actor:      `mean (1 − ε)·α·log π(f_φ|s) − min_i Q_i(s, mix)`
//! * adversary:  `mean min_i Q_i(s, mix)`
//! * temperature:`mean −α·log π(f_φ|s) − α·H₀`, differentiated in `log α`
//!
//! Noise is passed in explicitly so every loss is a deterministic function of
//! the parameters, which is what the finite-difference checks rely on.

use ndarray::Zip;
use rand::Rng;
use rand_distr::StandardNormal;

use super::agent::AgentBundle;
use super::buffer::Batch;
use crate::error::{Error, Result};
use crate::nn::{Graph, MlpParams, Tensor, Var};

/// Standard-normal draws for one update.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNoise {
    pub next_actor: Tensor,
    pub next_adversary: Tensor,
    pub actor: Tensor,
    pub adversary: Tensor,
}

pub fn normal_tensor<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    Tensor::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

impl LossNoise {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, batch: usize, action_dim: usize) -> Self {
        Self {
            next_actor: normal_tensor(rng, batch, action_dim),
            next_adversary: normal_tensor(rng, batch, action_dim),
            actor: normal_tensor(rng, batch, action_dim),
            adversary: normal_tensor(rng, batch, action_dim),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(())
}

fn mix(epsilon: f64, a: &Tensor, a_bar: &Tensor) -> Tensor {
    let mut out = a * (1.0 - epsilon);
    out.scaled_add(epsilon, a_bar);
    out
}

fn critic_input(states: &Tensor, actions: &Tensor) -> Result<Tensor> {
    ndarray::concatenate(ndarray::Axis(1), &[states.view(), actions.view()]).map_err(|e| Error::Graph(e.to_string()))
}

fn min_twin(q1: &Tensor, q2: &Tensor) -> Tensor {
    let mut out = q1.clone();
    Zip::from(&mut out).and(q2).for_each(|a, &b| *a = a.min(b));
    out
}

/// Soft state values `V̂(s')` for a batch of next states, `B × 1`.
pub fn target_values(
    bundle: &AgentBundle,
    epsilon: f64,
    next_states: &Tensor,
    noise_actor: &Tensor,
    noise_adversary: &Tensor,
) -> Result<Tensor> {
    check_epsilon(epsilon)?;
    let (a, log_pi) = bundle.actor.sample_batch(next_states, noise_actor)?;
    let (a_bar, _) = bundle.adversary.sample_batch(next_states, noise_adversary)?;
    let input = critic_input(next_states, &mix(epsilon, &a, &a_bar))?;
    let q1 = bundle.target_critics[0].forward_batch(&input)?;
    let q2 = bundle.target_critics[1].forward_batch(&input)?;
    let entropy_weight = (1.0 - epsilon) * bundle.alpha();
    Ok(min_twin(&q1, &q2) - &(log_pi * entropy_weight))
}

/// Single-state convenience wrapper around [`target_values`].
pub fn target_value(
    bundle: &AgentBundle,
    epsilon: f64,
    next_state: &[f64],
    noise_actor: &[f64],
    noise_adversary: &[f64],
) -> Result<f64> {
    let row = |v: &[f64]| Tensor::from_shape_vec((1, v.len()), v.to_vec()).map_err(|e| Error::Graph(e.to_string()));
    let v = target_values(
        bundle,
        epsilon,
        &row(next_state)?,
        &row(noise_actor)?,
        &row(noise_adversary)?,
    )?;
    Ok(v[[0, 0]])
}

/// Bellman targets `r + γ·(1 − done)·V̂(s')`.
pub fn bellman_targets(bundle: &AgentBundle, epsilon: f64, batch: &Batch, noise: &LossNoise) -> Result<Tensor> {
    let v = target_values(
        bundle,
        epsilon,
        &batch.next_states,
        &noise.next_actor,
        &noise.next_adversary,
    )?;
    let mut y = batch.rewards.clone();
    Zip::from(&mut y)
        .and(&batch.dones)
        .and(&v)
        .for_each(|y, &d, &v| *y += bundle.gamma * (1.0 - d) * v);
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub losses: [f64; 2],
    /// Gradients for `critics[0]` and `critics[1]`, in parameter order.
    pub grads: [Vec<Tensor>; 2],
}

/// Squared Bellman residual of each online critic on the stored transitions.
pub fn critic_loss(bundle: &AgentBundle, epsilon: f64, batch: &Batch, noise: &LossNoise) -> Result<CriticLoss> {
    if batch.is_empty() {
        return Err(Error::config("critic loss needs a non-empty batch"));
    }
    let y = bellman_targets(bundle, epsilon, batch, noise)?;
    critic_loss_with_targets(bundle, batch, &y)
}

/// Critic loss against precomputed (constant) targets.
pub fn critic_loss_with_targets(bundle: &AgentBundle, batch: &Batch, targets: &Tensor) -> Result<CriticLoss> {
    let mut g = Graph::new();
    let input = g.constant(critic_input(&batch.states, &batch.actions)?);
    let y = g.constant(targets.clone());
    let mut losses = [0.0; 2];
    let mut loss_vars = Vec::with_capacity(2);
    let mut net_vars = Vec::with_capacity(2);
    for (i, critic) in bundle.critics.iter().enumerate() {
        let (q, vars) = critic.forward_graph(&mut g, input, true)?;
        let residual = g.sub(q, y)?;
        let sq = g.square(residual);
        let m = g.mean(sq)?;
        let l = g.scale(m, 0.5);
        losses[i] = g.scalar(l)?;
        loss_vars.push(l);
        net_vars.push(vars);
    }
    // parameters are disjoint, so one sweep over the sum yields both gradients
    let total = g.add(loss_vars[0], loss_vars[1])?;
    let grads = g.backward(total)?;
    Ok(CriticLoss {
        losses,
        grads: [
            net_vars[0].collect(&grads, &bundle.critics[0]),
            net_vars[1].collect(&grads, &bundle.critics[1]),
        ],
    })
}

#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub loss: f64,
    pub grads: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct PolicyLosses {
    pub actor: PolicyLoss,
    pub adversary: PolicyLoss,
    /// `log π(f_φ(δ; s) | s)` per sample, `B × 1`; feeds the temperature loss.
    pub log_probs: Tensor,
    /// `min_i Q_i(s, mix)` averaged over the batch.
    pub q_mean: f64,
}

struct PolicyGraph {
    g: Graph,
    q_min: Var,
    log_prob: Var,
    actor_vars: Option<crate::nn::MlpVars>,
    adversary_vars: Option<crate::nn::MlpVars>,
}

fn frozen_q(g: &mut Graph, critic: &MlpParams, input: Var) -> Result<Var> {
    Ok(critic.forward_graph(g, input, false)?.0)
}

/// Records `min_i Q_i(s, mix)` with the chosen policies trainable.
fn policy_graph(
    bundle: &AgentBundle,
    epsilon: f64,
    states: &Tensor,
    noise_actor: &Tensor,
    noise_adversary: &Tensor,
    train_actor: bool,
    train_adversary: bool,
) -> Result<PolicyGraph> {
    check_epsilon(epsilon)?;
    if states.nrows() == 0 {
        return Err(Error::config("policy losses need a non-empty batch"));
    }
    let mut g = Graph::new();
    let s = g.constant(states.clone());
    let a = bundle.actor.sample_graph(&mut g, s, noise_actor, train_actor)?;
    let a_bar = bundle
        .adversary
        .sample_graph(&mut g, s, noise_adversary, train_adversary)?;
    let own = g.scale(a.action, 1.0 - epsilon);
    let other = g.scale(a_bar.action, epsilon);
    let mixed = g.add(own, other)?;
    let input = g.concat(s, mixed)?;
    let q1 = frozen_q(&mut g, &bundle.critics[0], input)?;
    let q2 = frozen_q(&mut g, &bundle.critics[1], input)?;
    let q_min = g.min(q1, q2)?;
    Ok(PolicyGraph {
        g,
        q_min,
        log_prob: a.log_prob,
        actor_vars: train_actor.then_some(a.vars),
        adversary_vars: train_adversary.then_some(a_bar.vars),
    })
}

fn actor_objective(pg: &mut PolicyGraph, epsilon: f64, alpha: f64) -> Result<Var> {
    let g = &mut pg.g;
    let entropy = g.scale(pg.log_prob, (1.0 - epsilon) * alpha);
    let per_sample = g.sub(entropy, pg.q_min)?;
    g.mean(per_sample)
}

/// Protagonist objective; the adversary sample is held constant.
pub fn actor_loss(
    bundle: &AgentBundle,
    epsilon: f64,
    states: &Tensor,
    noise_actor: &Tensor,
    noise_adversary: &Tensor,
) -> Result<PolicyLoss> {
    let mut pg = policy_graph(bundle, epsilon, states, noise_actor, noise_adversary, true, false)?;
    let loss = actor_objective(&mut pg, epsilon, bundle.alpha())?;
    let grads = pg.g.backward(loss)?;
    let vars = pg.actor_vars.as_ref().expect("actor recorded as trainable");
    Ok(PolicyLoss {
        loss: pg.g.scalar(loss)?,
        grads: vars.collect(&grads, &bundle.actor.net),
    })
}

/// Adversary objective; the protagonist sample is held constant.
pub fn adversary_loss(
    bundle: &AgentBundle,
    epsilon: f64,
    states: &Tensor,
    noise_actor: &Tensor,
    noise_adversary: &Tensor,
) -> Result<PolicyLoss> {
    let mut pg = policy_graph(bundle, epsilon, states, noise_actor, noise_adversary, false, true)?;
    let loss = pg.g.mean(pg.q_min)?;
    let grads = pg.g.backward(loss)?;
    let vars = pg.adversary_vars.as_ref().expect("adversary recorded as trainable");
    Ok(PolicyLoss {
        loss: pg.g.scalar(loss)?,
        grads: vars.collect(&grads, &bundle.adversary.net),
    })
}

/// Both policy objectives from one recorded graph.
///
/// The adversary's loss is the negated Q-term of the actor's loss and the
/// entropy term does not involve the adversary, so its gradient is the exact
/// negation of the actor-loss gradient with respect to the adversary leaves.
pub fn policy_losses(
    bundle: &AgentBundle,
    epsilon: f64,
    states: &Tensor,
    noise_actor: &Tensor,
    noise_adversary: &Tensor,
) -> Result<PolicyLosses> {
    let mut pg = policy_graph(bundle, epsilon, states, noise_actor, noise_adversary, true, true)?;
    let loss = actor_objective(&mut pg, epsilon, bundle.alpha())?;
    let grads = pg.g.backward(loss)?;
    let actor_vars = pg.actor_vars.as_ref().expect("actor recorded as trainable");
    let adversary_vars = pg.adversary_vars.as_ref().expect("adversary recorded as trainable");
    let adversary_grads = adversary_vars
        .collect(&grads, &bundle.adversary.net)
        .into_iter()
        .map(|t| -t)
        .collect();
    let q_values = pg.g.value(pg.q_min);
    let q_mean = q_values.sum() / q_values.len() as f64;
    Ok(PolicyLosses {
        actor: PolicyLoss {
            loss: pg.g.scalar(loss)?,
            grads: actor_vars.collect(&grads, &bundle.actor.net),
        },
        adversary: PolicyLoss {
            loss: q_mean,
            grads: adversary_grads,
        },
        log_probs: pg.g.value(pg.log_prob).clone(),
        q_mean,
    })
}

/// Temperature objective for given policy log-densities.
/// Returns `(loss, ∂loss/∂log α)`.
pub fn temperature_loss(bundle: &AgentBundle, log_probs: &Tensor) -> Result<(f64, f64)> {
    if log_probs.is_empty() {
        return Err(Error::config("temperature loss needs a non-empty batch"));
    }
    let mut g = Graph::new();
    let log_alpha = g.param(Tensor::from_elem((1, 1), bundle.log_temperature));
    let alpha = g.exp(log_alpha);
    let shifted = g.constant(log_probs.mapv(|lp| lp + bundle.target_entropy));
    let weighted = g.mul_scalar(shifted, alpha)?;
    let neg = g.scale(weighted, -1.0);
    let loss = g.mean(neg)?;
    let grads = g.backward(loss)?;
    let grad = grads.get(log_alpha).map(|t| t[[0, 0]]).unwrap_or(0.0);
    Ok((g.scalar(loss)?, grad))
}

/// Temperature objective using fresh actor samples on `batch.states`.
pub fn temperature_loss_on_batch(bundle: &AgentBundle, batch: &Batch, noise_actor: &Tensor) -> Result<(f64, f64)> {
    let (_, log_probs) = bundle.actor.sample_batch(&batch.states, noise_actor)?;
    temperature_loss(bundle, &log_probs)
}

/// `θ̄_i ← τ·θ_i + (1 − τ)·θ̄_i` for both critics.
pub fn soft_update(bundle: &mut AgentBundle) -> Result<()> {
    let tau = bundle.tau;
    for (target, online) in bundle.target_critics.iter_mut().zip(&bundle.critics) {
        target.blend_from(online, tau)?;
    }
    Ok(())
}
