//! Adaptive adversarial coefficient controller.
//!
//! Each environment step feeds the distance `d` between the protagonist's and
//! the adversary's deterministic actions into a momentum average `d_avg`. The
//! signed change `Δ = d_avg − d` drives the mixing weight `ε`:
//!
//! ```text
//! b      = sgn(Δ) · σ(|Δ|)
//! ε'     = clamp(ε + c·b, 0, 1)
//! d_avg' = β·d_avg + (1 − β)·d
//! ```
//!
//! `σ` is the logistic function and `sgn(0) = 0`, so `b` jumps by `±½` around
//! `Δ = 0`. [`SignalShape::Centered`] swaps in `2σ(x) − 1`, which is continuous,
//! and `sign_flip` negates `b` (ε shrinks as the actions draw closer).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignalShape {
    /// `sgn(Δ)·σ(|Δ|)`.
    #[default]
    Logistic,
    /// `sgn(Δ)·(2σ(|Δ|) − 1)`.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SignalRule {
    pub shape: SignalShape,
    pub sign_flip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptState {
    pub epsilon: f64,
    pub d_avg: f64,
    pub beta: f64,
    pub c: f64,
    pub update_count: u64,
    pub rule: SignalRule,
}

/// `ε₀ = 0.1`, `d_avg₀ = 0`, `β = 0.5`, `c = 0.01`.
impl Default for AdaptState {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            d_avg: 0.0,
            beta: 0.5,
            c: 0.01,
            update_count: 0,
            rule: SignalRule::default(),
        }
    }
}

impl AdaptState {
    pub fn new(epsilon0: f64, beta: f64, c: f64) -> Result<Self> {
        let s = Self {
            epsilon: epsilon0,
            beta,
            c,
            ..Self::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_rule(mut self, rule: SignalRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config(format!(
                "epsilon0 must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::config(format!(
                "c must be a non-negative number, got {}",
                self.c
            )));
        }
        if !(self.d_avg.is_finite() && self.d_avg >= 0.0) {
            return Err(Error::config(format!("d_avg must be non-negative, got {}", self.d_avg)));
        }
        Ok(())
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Euclidean distance `√Σ(a_i − ā_i)²`.
pub fn action_distance(a: &[f64], a_bar: &[f64]) -> Result<f64> {
    if a.len() != a_bar.len() {
        return Err(Error::Dimension {
            context: "action distance",
            expected: a.len(),
            got: a_bar.len(),
        });
    }
    Ok(a.iter().zip(a_bar).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Performance signal `b` for `Δ = d_avg − d`.
pub fn signal(rule: SignalRule, delta: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    let magnitude = match rule.shape {
        SignalShape::Logistic => logistic(delta.abs()),
        SignalShape::Centered => 2.0 * logistic(delta.abs()) - 1.0,
    };
    let b = delta.signum() * magnitude;
    if rule.sign_flip {
        -b
    } else {
        b
    }
}

/// One controller step. Returns the new state and the signal `b` it applied.
///
/// `d` must be finite and non-negative.
pub fn update_coefficient(state: AdaptState, d: f64) -> (AdaptState, f64) {
    debug_assert!(d.is_finite() && d >= 0.0, "distance must be finite and >= 0, got {d}");
    let b = signal(state.rule, state.d_avg - d);
    let next = AdaptState {
        epsilon: (state.epsilon + state.c * b).clamp(0.0, 1.0),
        d_avg: state.beta * state.d_avg + (1.0 - state.beta) * d,
        update_count: state.update_count + 1,
        ..state
    };
    (next, b)
}

/// `(1 − ε)·a + ε·ā`, componentwise, clamped to `[−1, 1]`.
pub fn mix_actions(epsilon: f64, a: &[f64], a_bar: &[f64]) -> Result<Vec<f64>> {
    if a.len() != a_bar.len() {
        return Err(Error::Dimension {
            context: "action mixing",
            expected: a.len(),
            got: a_bar.len(),
        });
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(a.iter()
        .zip(a_bar)
        .map(|(&x, &y)| ((1.0 - epsilon) * x + epsilon * y).clamp(-1.0, 1.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        assert_eq!(action_distance(&[0.3, -0.2], &[0.3, -0.2]).unwrap(), 0.0);
        assert_eq!(action_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(action_distance(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn distance_matches_direct_summation() {
        let a = [0.12, -0.5, 0.93, -0.01, 0.4, 0.77];
        let b = [-0.3, 0.25, 0.9, 0.6, -0.8, 0.1];
        let mut acc = 0.0;
        for i in 0..6 {
            let diff = a[i] - b[i];
            acc += diff * diff;
        }
        assert!((action_distance(&a, &b).unwrap() - acc.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_delta_is_a_fixed_point() {
        let s = AdaptState {
            d_avg: 0.7,
            ..AdaptState::default()
        };
        let (n, b) = update_coefficient(s, 0.7);
        assert_eq!(b, 0.0);
        assert_eq!(n.epsilon, s.epsilon);
        assert_eq!(n.d_avg, s.d_avg);
        assert_eq!(n.update_count, 1);
    }

    #[test]
    fn worked_example() {
        let s = AdaptState {
            epsilon: 0.1,
            d_avg: 1.0,
            beta: 0.5,
            c: 0.01,
            ..AdaptState::default()
        };
        let (n, b) = update_coefficient(s, 0.5);
        let sigma = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((b - sigma).abs() < 1e-15);
        assert!((b - 0.62246).abs() < 1e-5);
        assert_eq!(n.d_avg, 0.75);
        assert!((n.epsilon - (0.1 + 0.01 * sigma)).abs() < 1e-12);
        assert!((n.epsilon - 0.10622).abs() < 1e-5);
    }

    #[test]
    fn clamps_at_both_ends() {
        let top = AdaptState {
            epsilon: 0.999,
            d_avg: 50.0,
            ..AdaptState::default()
        };
        assert_eq!(update_coefficient(top, 0.0).0.epsilon, 1.0);
        let bottom = AdaptState {
            epsilon: 0.0,
            d_avg: 0.0,
            ..AdaptState::default()
        };
        assert_eq!(update_coefficient(bottom, 1.0).0.epsilon, 0.0);
    }

    #[test]
    fn sign_flip_and_centered_shape() {
        let flip = SignalRule {
            shape: SignalShape::Logistic,
            sign_flip: true,
        };
        assert!((signal(flip, 0.5) + logistic(0.5)).abs() < 1e-15);
        let centered = SignalRule {
            shape: SignalShape::Centered,
            sign_flip: false,
        };
        assert!(signal(centered, 1e-9).abs() < 1e-9);
        assert!((signal(centered, -2.0) + (2.0 * logistic(2.0) - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn mixing_examples() {
        let a = [0.8, -0.4];
        let ab = [0.0, 0.4];
        assert_eq!(mix_actions(0.0, &a, &ab).unwrap(), a.to_vec());
        assert_eq!(mix_actions(1.0, &a, &ab).unwrap(), ab.to_vec());
        let m = mix_actions(0.25, &a, &ab).unwrap();
        assert!((m[0] - 0.6).abs() < 1e-15 && (m[1] + 0.2).abs() < 1e-15);
        assert!(mix_actions(0.5, &a, &[0.0]).is_err());
        assert!(mix_actions(1.5, &a, &ab).is_err());
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(AdaptState::new(1.2, 0.5, 0.01).is_err());
        assert!(AdaptState::new(0.1, -0.1, 0.01).is_err());
        assert!(AdaptState::new(0.1, 0.5, -1.0).is_err());
        assert!(AdaptState::new(0.1, 0.5, 0.01).is_ok());
    }

    #[test]
    fn moving_average_converges_geometrically() {
        let mut s = AdaptState {
            d_avg: 3.0,
            beta: 0.5,
            ..AdaptState::default()
        };
        let target = 0.4;
        for k in 1..=40 {
            s = update_coefficient(s, target).0;
            let expected = 0.5f64.powi(k) * (3.0 - target);
            assert!(((s.d_avg - target).abs() - expected).abs() <= 1e-15 + 1e-12 * expected);
        }
    }

    proptest! {
        #[test]
        fn epsilon_stays_in_unit_interval(
            eps0 in 0.0f64..=1.0,
            beta in 0.0f64..=1.0,
            c in 0.0f64..2.0,
            flip in any::<bool>(),
            ds in prop::collection::vec(0.0f64..10.0, 1..200),
        ) {
            let rule = SignalRule { shape: SignalShape::Logistic, sign_flip: flip };
            let mut s = AdaptState::new(eps0, beta, c).unwrap().with_rule(rule);
            for d in ds {
                s = update_coefficient(s, d).0;
                prop_assert!((0.0..=1.0).contains(&s.epsilon));
                prop_assert!(s.d_avg >= 0.0);
            }
        }

        #[test]
        fn mixed_action_lies_between_inputs(
            eps in 0.0f64..=1.0,
            pairs in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..6),
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let m = mix_actions(eps, &a, &b).unwrap();
            for i in 0..a.len() {
                let lo = a[i].min(b[i]) - 1e-15;
                let hi = a[i].max(b[i]) + 1e-15;
                prop_assert!(m[i] >= lo && m[i] <= hi);
            }
        }

        #[test]
        fn larger_drop_never_gives_smaller_signal(d_avg in 0.0f64..5.0, x in 0.0f64..5.0, y in 0.0f64..5.0) {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let s = AdaptState { d_avg: d_avg + hi, ..AdaptState::default() };
            // Δ_small = lo, Δ_large = hi
            let b_small = update_coefficient(s, d_avg + hi - lo).1;
            let b_large = update_coefficient(s, d_avg).1;
            prop_assert!(b_large >= b_small - 1e-12);
        }
    }
}
