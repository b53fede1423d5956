//! Independent numerical oracles: hand-rolled arithmetic, closed forms and
//! quadrature, written without calling the code under test.

use a2p::env::{
    reset, step, EnvId, EnvParams, EnvState, PENDULUM_GRAVITY, PENDULUM_LENGTH, POINT_MASS_NOMINAL_DAMPING,
};
use a2p::nn::{sample_action, Activation, GaussianHead, GaussianPolicy, MlpParams, Tensor};
use a2p::sac::{critic_loss, soft_update, temperature_loss, AgentBundle, Batch, LossNoise, SacConfig};
use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn forward_matches_hand_rolled_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = MlpParams::new(&[2, 5, 3, 2], Activation::Tanh, &mut rng).unwrap();
    let x = [0.1, -0.2];
    let mut h: Vec<f64> = x.to_vec();
    let n = net.weights().len();
    for l in 0..n {
        let w = &net.weights()[l];
        let b = &net.biases()[l];
        let mut z = vec![0.0; w.ncols()];
        for j in 0..w.ncols() {
            let mut acc = b[[0, j]];
            for i in 0..w.nrows() {
                acc += h[i] * w[[i, j]];
            }
            z[j] = if l + 1 < n { acc.tanh() } else { acc };
        }
        h = z;
    }
    let got = net.forward(&x).unwrap();
    for (g, e) in got.iter().zip(&h) {
        assert!((g - e).abs() < 1e-14, "{g} vs {e}");
    }
}

fn squashed_log_density(a: f64, mean: f64, log_std: f64) -> f64 {
    let u = a.atanh();
    let s = log_std.exp();
    let z = (u - mean) / s;
    -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - log_std - (1.0 - a * a).ln()
}

#[test]
fn squashed_density_integrates_to_one() {
    let (mean, log_std) = (0.3, -1.0);
    let head = GaussianHead::from_output(&[mean, log_std]).unwrap();
    let (action, log_prob) = sample_action(&head, &[0.5]).unwrap();
    let expected_a = (mean + log_std.exp() * 0.5).tanh();
    assert!((action[0] - expected_a).abs() < 1e-15);
    assert!((log_prob - squashed_log_density(expected_a, mean, log_std)).abs() < 1e-9);

    // Simpson's rule over (−1, 1) using the library's log-density at each grid point
    let n = 20_000;
    let (lo, hi) = (-1.0 + 1e-12, 1.0 - 1e-12);
    let h = (hi - lo) / n as f64;
    let s = log_std.exp();
    let density = |a: f64| {
        let noise = (a.atanh() - mean) / s;
        sample_action(&head, &[noise]).unwrap().1.exp()
    };
    let mut total = density(lo) + density(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        total += w * density(lo + k as f64 * h);
    }
    let integral = total * h / 3.0;
    assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
}

#[test]
fn frictionless_pendulum_conserves_energy() {
    // Rod about its end: ½θ̇² + (3g/2l)·cos θ is conserved by θ̈ = (3g/2l)·sin θ.
    // The integrator is leapfrog with the stored velocity half a step behind the
    // angle, so the velocity at θ_n is the mean of the stored velocities at n and n + 1.
    let params = EnvParams::nominal(EnvId::Pendulum).with_params(1.0, 0.0).unwrap();
    let k = 3.0 * PENDULUM_GRAVITY / (2.0 * PENDULUM_LENGTH);
    for theta0 in [2.5, 1.0] {
        let mut states = vec![EnvState {
            coords: vec![theta0, 0.0],
            step_index: 0,
        }];
        for _ in 0..201 {
            let next = step(states.last().unwrap(), &params, &[0.0]).unwrap().next_state;
            states.push(next);
        }
        let energy: Vec<f64> = states
            .windows(2)
            .map(|w| {
                let v = 0.5 * (w[0].coords[1] + w[1].coords[1]);
                0.5 * v * v + k * w[0].coords[0].cos()
            })
            .collect();
        let e0 = energy[0];
        let drift = energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
        // relative to the swing energy above the bottom, which does not depend on the zero of potential
        let swing = e0 + k;
        assert!(
            drift < 0.02 * swing,
            "θ0 {theta0}: drift {drift} of swing energy {swing}"
        );
        assert!(drift < 0.02 * e0.abs());
    }
}

#[test]
fn heavier_point_mass_moves_less_per_closed_form() {
    let force = [0.7, -0.4];
    let k = 40;
    let displacement = |mass: f64| {
        let params = EnvParams::nominal(EnvId::PointMass).with_params(mass, 1.0).unwrap();
        let mut s = EnvState {
            coords: vec![0.1, 0.1, 0.0, 0.0],
            step_index: 0,
        };
        for _ in 0..k {
            s = step(&s, &params, &force).unwrap().next_state;
        }
        (s.coords[0] - 0.1, s.coords[1] - 0.1, params.dt)
    };
    let closed = |mass: f64, f: f64, dt: f64| {
        // v_{j+1} = r·v_j + f·dt/m, x_{j+1} = x_j + dt·v_{j+1}, v_0 = 0
        let c = POINT_MASS_NOMINAL_DAMPING;
        let r = 1.0 - c * dt / mass;
        let vinf = f / c;
        dt * vinf * (k as f64 - r * (1.0 - r.powi(k)) / (1.0 - r))
    };
    let (x1, y1, dt) = displacement(1.0);
    let (x2, y2, _) = displacement(2.0);
    assert!((x1 - closed(1.0, force[0], dt)).abs() < 1e-12);
    assert!((y2 - closed(2.0, force[1], dt)).abs() < 1e-12);
    assert!(x2.abs() < x1.abs() && y2.abs() < y1.abs());
}

#[test]
fn distinct_seeds_give_distinct_resets() {
    for env in [EnvId::Pendulum, EnvId::PointMass] {
        let p = EnvParams::nominal(env);
        let mut seen: Vec<Vec<u64>> = (0..1000u64)
            .map(|s| reset(&p, s).coords.iter().map(|c| c.to_bits()).collect())
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 1000);
    }
}

fn linear(w: &[f64], b: f64, inputs: usize) -> MlpParams {
    let weights = Tensor::from_shape_vec((inputs, w.len() / inputs), w.to_vec()).unwrap();
    let biases = Tensor::from_elem((1, w.len() / inputs), b);
    MlpParams::from_tensors(
        &[inputs, w.len() / inputs],
        Activation::Tanh,
        vec![weights],
        vec![biases],
    )
    .unwrap()
}

/// Scalar state, scalar action, every network linear.
fn scalar_bundle() -> AgentBundle {
    AgentBundle {
        // [mean, log_std] = [0.5·s + 0.1, −0.2·s − 1]
        actor: GaussianPolicy::from_net(
            MlpParams::from_tensors(
                &[1, 2],
                Activation::Tanh,
                vec![array![[0.5, -0.2]]],
                vec![array![[0.1, -1.0]]],
            )
            .unwrap(),
        )
        .unwrap(),
        adversary: GaussianPolicy::from_net(
            MlpParams::from_tensors(
                &[1, 2],
                Activation::Tanh,
                vec![array![[-0.3, 0.1]]],
                vec![array![[0.0, -0.5]]],
            )
            .unwrap(),
        )
        .unwrap(),
        critics: [linear(&[1.0, 2.0], 0.5, 2), linear(&[-1.0, 0.5], 0.0, 2)],
        target_critics: [linear(&[0.8, 1.5], 0.2, 2), linear(&[0.9, -1.0], 0.1, 2)],
        log_temperature: (0.2f64).ln(),
        target_entropy: -1.0,
        tau: 0.005,
        gamma: 0.9,
    }
}

#[test]
fn critic_loss_matches_hand_arithmetic() {
    let b = scalar_bundle();
    let eps = 0.25;
    let batch = Batch {
        states: array![[0.3], [-0.6]],
        actions: array![[0.2], [-0.9]],
        rewards: array![[1.0], [-0.5]],
        next_states: array![[0.4], [0.0]],
        dones: array![[0.0], [1.0]],
    };
    let noise = LossNoise {
        next_actor: array![[0.7], [-1.1]],
        next_adversary: array![[-0.2], [0.4]],
        actor: array![[0.0], [0.0]],
        adversary: array![[0.0], [0.0]],
    };
    // transition 1 bootstraps, transition 2 is terminal
    let s1: f64 = 0.4;
    let (mu, ls) = (0.5 * s1 + 0.1, -0.2 * s1 - 1.0);
    let u = mu + ls.exp() * 0.7;
    let a = u.tanh();
    let log_pi = -0.5 * 0.7f64 * 0.7 - 0.5 * (2.0 * std::f64::consts::PI).ln() - ls - (1.0 - a * a).ln();
    let (mu_b, ls_b) = (-0.3 * s1, 0.1 * s1 - 0.5);
    let a_bar = (mu_b + ls_b.exp() * -0.2f64).tanh();
    let mixed = 0.75 * a + 0.25 * a_bar;
    let tq1 = 0.8 * s1 + 1.5 * mixed + 0.2;
    let tq2 = 0.9 * s1 - 1.0 * mixed + 0.1;
    let v = tq1.min(tq2) - 0.75 * 0.2 * log_pi;
    let y = [1.0 + 0.9 * v, -0.5];
    let q1 = [0.3 + 2.0 * 0.2 + 0.5, -0.6 + 2.0 * -0.9 + 0.5];
    let q2 = [-0.3 + 0.5 * 0.2, 0.6 + 0.5 * -0.9];
    let hand = |q: [f64; 2]| 0.25 * ((q[0] - y[0]).powi(2) + (q[1] - y[1]).powi(2));
    let got = critic_loss(&b, eps, &batch, &noise).unwrap();
    assert!(
        (got.losses[0] - hand(q1)).abs() < 1e-12,
        "{} vs {}",
        got.losses[0],
        hand(q1)
    );
    assert!((got.losses[1] - hand(q2)).abs() < 1e-12);
    // ∂/∂bias of ½·mean(q − y)² is mean(q − y)
    let db = 0.5 * ((q1[0] - y[0]) + (q1[1] - y[1]));
    assert!((got.grads[0][1][[0, 0]] - db).abs() < 1e-12);
}

#[test]
fn temperature_loss_matches_hand_computation() {
    let b = scalar_bundle();
    let log_probs = array![[0.3], [-1.4], [2.0]];
    let (loss, grad) = temperature_loss(&b, &log_probs).unwrap();
    let alpha = 0.2;
    let hand = -alpha * ((0.3 - 1.0) + (-1.4 - 1.0) + (2.0 - 1.0)) / 3.0;
    assert!((loss - hand).abs() < 1e-15);
    // d/d(log α) of −α·c is −α·c
    assert!((grad - hand).abs() < 1e-15);
}

#[test]
fn soft_update_converges_geometrically() {
    let mut b = scalar_bundle();
    let online = b.critics[0].weights()[0].clone();
    let gap0 = &b.target_critics[0].weights()[0] - &online;
    let k = 500;
    for _ in 0..k {
        soft_update(&mut b).unwrap();
    }
    let gap = &b.target_critics[0].weights()[0] - &online;
    let rate = (1.0 - 0.005f64).powi(k);
    for (g, g0) in gap.iter().zip(gap0.iter()) {
        assert!((g - rate * g0).abs() < 1e-12 * (1.0 + g0.abs()), "{g} vs {}", rate * g0);
    }
}

#[test]
fn default_networks_are_finite_for_a_fresh_bundle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = AgentBundle::new(3, 1, &SacConfig::default(), &mut rng).unwrap();
    assert!(b.all_finite());
    assert_eq!(b.target_entropy, -1.0);
}
