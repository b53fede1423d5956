//! Continuous-control tasks with mass and friction multipliers.
//!
//! Both tasks integrate with semi-implicit Euler (velocity first, then
//! position from the new velocity) and never terminate early: an episode is
//! exactly `horizon` steps long.
//!
//! **Pendulum** (`coords = [θ, θ̇]`, θ = 0 upright):
//! `θ̈ = (3g/2l)·sin θ + 3u/(m l²) − (k_f/m)·θ̇` with `u = 2·action`, `g = 10`,
//! `l = 1`, `m = mass_rel`, `k_f = 0.1·friction_rel`, `θ̇ ∈ [−8, 8]`.
//! Reward `−(θ² + 0.1·θ̇² + 0.001·u²)` on the pre-step state.
//!
//! **Point mass** (`coords = [px, py, vx, vy]`):
//! `v̇ = (F − c·v)/m` with `F = action`, `m = mass_rel`, `c = 0.5·friction_rel`,
//! each velocity component clamped to `±5`. Reward
//! `−‖p − (0.8, 0.8)‖ − 0.01·‖action‖²` on the pre-step state.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PENDULUM_GRAVITY: f64 = 10.0;
pub const PENDULUM_LENGTH: f64 = 1.0;
pub const PENDULUM_MAX_SPEED: f64 = 8.0;
pub const PENDULUM_MAX_TORQUE: f64 = 2.0;
pub const PENDULUM_NOMINAL_DAMPING: f64 = 0.1;

pub const POINT_MASS_GOAL: [f64; 2] = [0.8, 0.8];
pub const POINT_MASS_START_MAX: f64 = 0.2;
pub const POINT_MASS_MAX_SPEED: f64 = 5.0;
pub const POINT_MASS_NOMINAL_DAMPING: f64 = 0.5;

/// Lower bound of a single pendulum reward.
pub const PENDULUM_MIN_REWARD: f64 = -(PI * PI + 0.1 * PENDULUM_MAX_SPEED * PENDULUM_MAX_SPEED + 0.001 * 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Pendulum,
    #[serde(alias = "point-mass")]
    PointMass,
}

impl EnvId {
    pub fn obs_dim(self) -> usize {
        match self {
            EnvId::Pendulum => 3,
            EnvId::PointMass => 4,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvId::Pendulum => 1,
            EnvId::PointMass => 2,
        }
    }

    pub fn default_horizon(self) -> usize {
        match self {
            EnvId::Pendulum => 200,
            EnvId::PointMass => 150,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvId::Pendulum => "pendulum",
            EnvId::PointMass => "pointmass",
        })
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvId::Pendulum),
            "pointmass" | "point-mass" => Ok(EnvId::PointMass),
            other => Err(Error::config(format!("unknown environment `{other}`"))),
        }
    }
}

/// One dynamics variant of a task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    pub env: EnvId,
    pub mass_rel: f64,
    pub friction_rel: f64,
    pub dt: f64,
    pub horizon: usize,
}

impl EnvParams {
    pub fn nominal(env: EnvId) -> Self {
        Self {
            env,
            mass_rel: 1.0,
            friction_rel: 1.0,
            dt: 0.05,
            horizon: env.default_horizon(),
        }
    }

    /// Same task with new multipliers; `dt` and horizon are kept.
    pub fn with_params(&self, mass_rel: f64, friction_rel: f64) -> Result<Self> {
        if !(mass_rel.is_finite() && mass_rel > 0.0) {
            return Err(Error::config(format!("mass_rel must be positive, got {mass_rel}")));
        }
        if !(friction_rel.is_finite() && friction_rel >= 0.0) {
            return Err(Error::config(format!(
                "friction_rel must be non-negative, got {friction_rel}"
            )));
        }
        Ok(Self {
            mass_rel,
            friction_rel,
            ..*self
        })
    }

    pub fn is_nominal(&self) -> bool {
        self.mass_rel == 1.0 && self.friction_rel == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        self.with_params(self.mass_rel, self.friction_rel)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        Ok(())
    }
}

/// `env_id:mass_rel:friction_rel`, e.g. `pendulum:0.8:1.2`.
impl fmt::Display for EnvParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.env, self.mass_rel, self.friction_rel)
    }
}

impl FromStr for EnvParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(format!(
                "environment variant `{s}` is not env:mass:friction"
            )));
        }
        let env: EnvId = parts[0].parse()?;
        let num = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| Error::config(format!("bad multiplier `{p}` in `{s}`")))
        };
        EnvParams::nominal(env).with_params(num(parts[1])?, num(parts[2])?)
    }
}

/// The default 11-point multiplier axis `0.5, 0.6, …, 1.5`.
pub fn default_axis() -> Vec<f64> {
    (5..=15).map(|i| i as f64 / 10.0).collect()
}

/// All `mass × friction` variants of `base`, mass-major.
pub fn perturbation_grid(base: &EnvParams, masses: &[f64], frictions: &[f64]) -> Result<Vec<EnvParams>> {
    let mut out = Vec::with_capacity(masses.len() * frictions.len());
    for &m in masses {
        for &f in frictions {
            out.push(base.with_params(m, f)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub coords: Vec<f64>,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Initial state: pendulum `θ ~ U(−π, π]`, `θ̇ ~ U[−1, 1]`; point mass
/// `p ~ U[0, 0.2]²` at rest. Deterministic per seed.
pub fn reset(params: &EnvParams, seed: u64) -> EnvState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = match params.env {
        EnvId::Pendulum => {
            let u: f64 = rng.random();
            let theta = PI - 2.0 * PI * u;
            let theta_dot = rng.random_range(-1.0..=1.0);
            vec![theta, theta_dot]
        }
        EnvId::PointMass => {
            let x = rng.random_range(0.0..=POINT_MASS_START_MAX);
            let y = rng.random_range(0.0..=POINT_MASS_START_MAX);
            vec![x, y, 0.0, 0.0]
        }
    };
    EnvState { coords, step_index: 0 }
}

/// Policy input for a state.
pub fn observe(env: EnvId, state: &EnvState) -> Vec<f64> {
    match env {
        EnvId::Pendulum => {
            let (theta, theta_dot) = (state.coords[0], state.coords[1]);
            vec![theta.cos(), theta.sin(), theta_dot]
        }
        EnvId::PointMass => state.coords.clone(),
    }
}

pub fn step(state: &EnvState, params: &EnvParams, action: &[f64]) -> Result<StepResult> {
    let env = params.env;
    if action.len() != env.action_dim() {
        return Err(Error::Dimension {
            context: "environment action",
            expected: env.action_dim(),
            got: action.len(),
        });
    }
    let expected_coords = match env {
        EnvId::Pendulum => 2,
        EnvId::PointMass => 4,
    };
    if state.coords.len() != expected_coords {
        return Err(Error::Dimension {
            context: "environment state",
            expected: expected_coords,
            got: state.coords.len(),
        });
    }
    let dt = params.dt;
    let (coords, reward) = match env {
        EnvId::Pendulum => {
            let (theta, theta_dot) = (state.coords[0], state.coords[1]);
            let u = PENDULUM_MAX_TORQUE * action[0].clamp(-1.0, 1.0);
            let m = params.mass_rel;
            let l = PENDULUM_LENGTH;
            let kf = PENDULUM_NOMINAL_DAMPING * params.friction_rel;
            let reward = -(wrap_angle(theta).powi(2) + 0.1 * theta_dot * theta_dot + 0.001 * u * u);
            let accel = 3.0 * PENDULUM_GRAVITY / (2.0 * l) * theta.sin() + 3.0 * u / (m * l * l) - kf / m * theta_dot;
            let new_dot = (theta_dot + accel * dt).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
            let new_theta = wrap_angle(theta + new_dot * dt);
            (vec![new_theta, new_dot], reward)
        }
        EnvId::PointMass => {
            let m = params.mass_rel;
            let c = POINT_MASS_NOMINAL_DAMPING * params.friction_rel;
            let (p, v) = state.coords.split_at(2);
            let dist = ((p[0] - POINT_MASS_GOAL[0]).powi(2) + (p[1] - POINT_MASS_GOAL[1]).powi(2)).sqrt();
            let effort: f64 = action.iter().map(|a| a * a).sum();
            let reward = -dist - 0.01 * effort;
            let mut next = vec![0.0; 4];
            for i in 0..2 {
                let force = action[i].clamp(-1.0, 1.0);
                let nv = (v[i] + (force - c * v[i]) / m * dt).clamp(-POINT_MASS_MAX_SPEED, POINT_MASS_MAX_SPEED);
                next[2 + i] = nv;
                next[i] = p[i] + nv * dt;
            }
            (next, reward)
        }
    };
    if !reward.is_finite() || coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::EnvFault {
            step: state.step_index,
            reason: format!("non-finite state {coords:?} (check dt = {dt})"),
        });
    }
    let step_index = state.step_index + 1;
    Ok(StepResult {
        next_state: EnvState { coords, step_index },
        reward,
        done: step_index >= params.horizon,
    })
}
