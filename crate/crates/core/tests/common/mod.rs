//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use a2p::nn::{MlpParams, Parameters, Tensor};
use a2p::sac::{actor_loss, adversary_loss, critic_loss, temperature_loss, AgentBundle, Batch, LossNoise, SacConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1e-3)`: relative error with a floor so that
/// near-zero derivatives are compared absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central differences of `f` over every scalar in `net`, returned in
/// parameter order alongside the flattened analytic gradient.
pub fn max_rel_err_over_net<F>(net: &MlpParams, analytic: &[Tensor], mut f: F) -> f64
where
    F: FnMut(&MlpParams) -> f64,
{
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    assert_eq!(
        analytic.len(),
        probe.tensors().len(),
        "one analytic gradient per tensor"
    );
    for (t, grad) in analytic.iter().enumerate() {
        let len = probe.tensors()[t].len();
        for k in 0..len {
            let orig = probe.tensors()[t].as_slice().unwrap()[k];
            probe.tensors_mut()[t].as_slice_mut().unwrap()[k] = orig + FD_STEP;
            let up = f(&probe);
            probe.tensors_mut()[t].as_slice_mut().unwrap()[k] = orig - FD_STEP;
            let down = f(&probe);
            probe.tensors_mut()[t].as_slice_mut().unwrap()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = grad.as_slice().unwrap()[k];
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

pub struct Fixture {
    pub bundle: AgentBundle,
    pub epsilon: f64,
    pub batch: Batch,
    pub noise: LossNoise,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// Small random agent and batch: 1–3 state dims, 1–2 action dims, one
/// hidden layer of 3–5 units, batch 2–4.
pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = rng.random_range(1..=3);
    let act = rng.random_range(1..=2);
    let hidden = rng.random_range(3..=5);
    let b = rng.random_range(2..=4);
    let cfg = SacConfig {
        hidden: vec![hidden],
        ..SacConfig::default()
    };
    let mut bundle = AgentBundle::new(obs, act, &cfg, &mut rng).unwrap();
    bundle.log_temperature = rng.random_range(-2.0..0.5);
    let epsilon = rng.random_range(0.0..1.0);
    let batch = Batch {
        states: uniform(&mut rng, b, obs, -1.0, 1.0),
        actions: uniform(&mut rng, b, act, -0.9, 0.9),
        rewards: uniform(&mut rng, b, 1, -1.0, 1.0),
        next_states: uniform(&mut rng, b, obs, -1.0, 1.0),
        dones: Tensor::from_shape_simple_fn((b, 1), || if rng.random_bool(0.3) { 1.0 } else { 0.0 }),
    };
    let noise = LossNoise::sample(&mut rng, b, act);
    Fixture {
        bundle,
        epsilon,
        batch,
        noise,
    }
}

/// Worst relative error of each loss gradient against central differences:
/// `[critic, actor, adversary, temperature]`.
pub fn gradient_errors(fx: &Fixture) -> [f64; 4] {
    let (bundle, eps, batch, noise) = (&fx.bundle, fx.epsilon, &fx.batch, &fx.noise);

    let cl = critic_loss(bundle, eps, batch, noise).unwrap();
    let mut critic = 0.0f64;
    for i in 0..2 {
        critic = critic.max(max_rel_err_over_net(&bundle.critics[i], &cl.grads[i], |net| {
            let mut b = bundle.clone();
            b.critics[i] = net.clone();
            critic_loss(&b, eps, batch, noise).unwrap().losses[i]
        }));
    }

    let states = &batch.states;
    let al = actor_loss(bundle, eps, states, &noise.actor, &noise.adversary).unwrap();
    let actor = max_rel_err_over_net(&bundle.actor.net, &al.grads, |net| {
        let mut b = bundle.clone();
        b.actor.net = net.clone();
        actor_loss(&b, eps, states, &noise.actor, &noise.adversary)
            .unwrap()
            .loss
    });

    let dl = adversary_loss(bundle, eps, states, &noise.actor, &noise.adversary).unwrap();
    let adversary = max_rel_err_over_net(&bundle.adversary.net, &dl.grads, |net| {
        let mut b = bundle.clone();
        b.adversary.net = net.clone();
        adversary_loss(&b, eps, states, &noise.actor, &noise.adversary)
            .unwrap()
            .loss
    });

    let (_, log_probs) = bundle.actor.sample_batch(states, &noise.actor).unwrap();
    let (_, grad) = temperature_loss(bundle, &log_probs).unwrap();
    let at = |la: f64| {
        let mut b = bundle.clone();
        b.log_temperature = la;
        temperature_loss(&b, &log_probs).unwrap().0
    };
    let lt = bundle.log_temperature;
    let numeric = (at(lt + FD_STEP) - at(lt - FD_STEP)) / (2.0 * FD_STEP);
    [critic, actor, adversary, rel_err(grad, numeric)]
}
