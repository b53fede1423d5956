//! Brute-force checks of the adversarial Bellman operator on small finite games.
//!
//! A game has `n` states, a protagonist/adversary action grid of `m` scalars in
//! `[−1, 1]`, and a finer grid of `mix_resolution` points onto which the mixed
//! action `(1 − ε)·a + ε·ā` is snapped by nearest neighbour. Rewards and
//! transitions are indexed by the snapped mixed action.
//!
//! For `Q[s, a, ā]` and a protagonist `π` the operator is
//!
//! ```text
//! (BQ)[s, a, ā] = r(s, k) + γ · Σ_{s'} P(s' | s, k) · min_{ā'} Σ_{a'} π(a' | s') · Q[s', a', ā']
//! ```
//!
//! with `k = snap((1 − ε)·a + ε·ā)` and the min taken over the whole grid.

use std::fmt::Write as _;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type QTable = Array3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularGame {
    pub n_states: usize,
    pub action_grid: Vec<f64>,
    pub mix_grid: Vec<f64>,
    /// `[s, k, s']`
    pub transition: Array3<f64>,
    /// `[s, k]`
    pub reward: Array2<f64>,
    pub gamma: f64,
}

/// Evenly spaced points from −1 to 1 inclusive.
pub fn linspace_unit(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect(),
    }
}

impl TabularGame {
    pub fn new(
        action_grid: Vec<f64>,
        mix_grid: Vec<f64>,
        transition: Array3<f64>,
        reward: Array2<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let n = reward.nrows();
        let g = Self {
            n_states: n,
            action_grid,
            mix_grid,
            transition,
            reward,
            gamma,
        };
        g.validate()?;
        Ok(g)
    }

    /// A random game: rewards uniform in `[−1, 1]`, transition rows from
    /// normalized uniform weights.
    pub fn random(seed: u64, n_states: usize, n_actions: usize, mix_resolution: usize, gamma: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = mix_resolution;
        let reward = Array2::from_shape_simple_fn((n_states, k), || rng.random_range(-1.0..=1.0));
        let mut transition = Array3::zeros((n_states, k, n_states));
        for s in 0..n_states {
            for j in 0..k {
                let w: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 1e-3).collect();
                let total: f64 = w.iter().sum();
                for (t, wt) in w.iter().enumerate() {
                    transition[[s, j, t]] = wt / total;
                }
            }
        }
        Self::new(
            linspace_unit(n_actions),
            linspace_unit(mix_resolution),
            transition,
            reward,
            gamma,
        )
    }

    pub fn n_actions(&self) -> usize {
        self.action_grid.len()
    }

    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n_states, self.mix_grid.len());
        if n == 0 || self.action_grid.is_empty() || k == 0 {
            return Err(Error::config("a game needs states, actions and a mixing grid"));
        }
        if self.reward.dim() != (n, k) || self.transition.dim() != (n, k, n) {
            return Err(Error::config("reward or transition tensor has the wrong shape"));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self
            .action_grid
            .iter()
            .chain(&self.mix_grid)
            .any(|a| !(-1.0..=1.0).contains(a))
        {
            return Err(Error::config("grid points must lie in [-1, 1]"));
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::config("rewards must be finite"));
        }
        for s in 0..n {
            for j in 0..k {
                let row = self.transition.slice(ndarray::s![s, j, ..]);
                if row.iter().any(|&p| p.is_nan() || p < 0.0) || (row.sum() - 1.0).abs() > 1e-12 {
                    return Err(Error::config(format!(
                        "transition row ({s}, {j}) is not a distribution"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nearest mixing-grid index; ties go to the lower index.
    pub fn snap(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &g) in self.mix_grid.iter().enumerate() {
            let d = (g - x).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// `[a, ā] → k` for a given ε.
    pub fn mix_indices(&self, epsilon: f64) -> Array2<usize> {
        let m = self.n_actions();
        Array2::from_shape_fn((m, m), |(a, b)| {
            self.snap((1.0 - epsilon) * self.action_grid[a] + epsilon * self.action_grid[b])
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicyPair {
    /// `[s, a]`, rows sum to one.
    pub protagonist: Array2<f64>,
    /// Adversary grid index per state.
    pub adversary: Vec<usize>,
}

impl TabularPolicyPair {
    pub fn validate(&self, game: &TabularGame) -> Result<()> {
        let (n, m) = (game.n_states, game.n_actions());
        if self.protagonist.dim() != (n, m) || self.adversary.len() != n {
            return Err(Error::config("policy shapes do not match the game"));
        }
        for row in self.protagonist.rows() {
            if row.iter().any(|&p| p.is_nan() || p < 0.0) || (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::config("protagonist rows must be distributions"));
            }
        }
        if self.adversary.iter().any(|&i| i >= m) {
            return Err(Error::config("adversary index out of range"));
        }
        Ok(())
    }

    /// Random stochastic protagonist and random adversary.
    pub fn random<R: Rng + ?Sized>(game: &TabularGame, rng: &mut R) -> Self {
        let (n, m) = (game.n_states, game.n_actions());
        let mut protagonist = Array2::from_shape_simple_fn((n, m), || rng.random::<f64>() + 1e-3);
        for mut row in protagonist.rows_mut() {
            let total = row.sum();
            row /= total;
        }
        Self {
            protagonist,
            adversary: (0..n).map(|_| rng.random_range(0..m)).collect(),
        }
    }

    /// Deterministic protagonist with uniformly drawn actions.
    pub fn random_greedy<R: Rng + ?Sized>(game: &TabularGame, rng: &mut R) -> Self {
        let (n, m) = (game.n_states, game.n_actions());
        let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        Self {
            protagonist: one_hot(&picks, m),
            adversary: (0..n).map(|_| rng.random_range(0..m)).collect(),
        }
    }

    /// Index of a deterministic protagonist's action, if it is one-hot.
    pub fn greedy_action(&self, s: usize) -> Option<usize> {
        let row = self.protagonist.row(s);
        let hot: Vec<usize> = (0..row.len()).filter(|&a| row[a] == 1.0).collect();
        (hot.len() == 1 && row.iter().filter(|&&p| p != 0.0).count() == 1).then(|| hot[0])
    }
}

pub fn one_hot(picks: &[usize], m: usize) -> Array2<f64> {
    let mut p = Array2::zeros((picks.len(), m));
    for (s, &a) in picks.iter().enumerate() {
        p[[s, a]] = 1.0;
    }
    p
}

/// Which adversary response the operator uses at the next state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryModel {
    /// Exact min over the action grid.
    GridMin,
    /// The pair's deterministic adversary.
    Fixed,
}

/// `V(s) = min_ā Σ_a π(a|s)·Q[s, a, ā]` (or at the fixed adversary's action).
pub fn state_values(q: &QTable, policies: &TabularPolicyPair, model: AdversaryModel) -> Vec<f64> {
    let (n, m, _) = q.dim();
    (0..n)
        .map(|s| {
            let value_at = |b: usize| (0..m).map(|a| policies.protagonist[[s, a]] * q[[s, a, b]]).sum::<f64>();
            match model {
                AdversaryModel::GridMin => (0..m).map(value_at).fold(f64::INFINITY, f64::min),
                AdversaryModel::Fixed => value_at(policies.adversary[s]),
            }
        })
        .collect()
}

fn operator_with(
    game: &TabularGame,
    policies: &TabularPolicyPair,
    epsilon: f64,
    q: &QTable,
    model: AdversaryModel,
    gamma: f64,
) -> QTable {
    let (n, m) = (game.n_states, game.n_actions());
    let v = state_values(q, policies, model);
    let mix = game.mix_indices(epsilon);
    // expected next value per (s, k), shared by every (a, ā) that snaps to k
    let k = game.mix_grid.len();
    let mut cont = Array2::zeros((n, k));
    for s in 0..n {
        for j in 0..k {
            cont[[s, j]] = (0..n).map(|t| game.transition[[s, j, t]] * v[t]).sum::<f64>();
        }
    }
    Array3::from_shape_fn((n, m, m), |(s, a, b)| {
        let j = mix[[a, b]];
        game.reward[[s, j]] + gamma * cont[[s, j]]
    })
}

fn check_inputs(game: &TabularGame, policies: &TabularPolicyPair, epsilon: f64, q: &QTable) -> Result<()> {
    policies.validate(game)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let m = game.n_actions();
    if q.dim() != (game.n_states, m, m) {
        return Err(Error::config("Q table shape does not match the game"));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Q table contains a non-finite entry".into()));
    }
    Ok(())
}

/// One application of the operator with the grid-min adversary.
pub fn apply_operator(game: &TabularGame, policies: &TabularPolicyPair, epsilon: f64, q: &QTable) -> Result<QTable> {
    apply_operator_as(game, policies, epsilon, q, AdversaryModel::GridMin)
}

pub fn apply_operator_as(
    game: &TabularGame,
    policies: &TabularPolicyPair,
    epsilon: f64,
    q: &QTable,
    model: AdversaryModel,
) -> Result<QTable> {
    check_inputs(game, policies, epsilon, q)?;
    Ok(operator_with(game, policies, epsilon, q, model, game.gamma))
}

pub fn sup_norm_diff(a: &QTable, b: &QTable) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Operator variant used by the contraction check. `Inflated` replaces the
/// discount with a value above one and exists only as a negative control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorVariant {
    Faithful,
    Inflated { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionStats {
    pub ratios: Vec<f64>,
    pub skipped: usize,
    pub max_ratio: f64,
}

/// Lipschitz ratios `‖BQ₁ − BQ₂‖∞ / ‖Q₁ − Q₂‖∞` for explicit pairs. Pairs
/// with `Q₁ = Q₂` are skipped.
pub fn contraction_ratios(
    game: &TabularGame,
    policies: &TabularPolicyPair,
    epsilon: f64,
    pairs: &[(QTable, QTable)],
    model: AdversaryModel,
    variant: OperatorVariant,
) -> Result<ContractionStats> {
    let gamma = match variant {
        OperatorVariant::Faithful => game.gamma,
        OperatorVariant::Inflated { gamma } => gamma,
    };
    let mut ratios = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for (q1, q2) in pairs {
        check_inputs(game, policies, epsilon, q1)?;
        check_inputs(game, policies, epsilon, q2)?;
        let denom = sup_norm_diff(q1, q2);
        if denom == 0.0 {
            skipped += 1;
            continue;
        }
        let b1 = operator_with(game, policies, epsilon, q1, model, gamma);
        let b2 = operator_with(game, policies, epsilon, q2, model, gamma);
        ratios.push(sup_norm_diff(&b1, &b2) / denom);
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(ContractionStats {
        ratios,
        skipped,
        max_ratio,
    })
}

/// Random pairs with entries uniform in `±scale`.
pub fn random_q_pairs<R: Rng + ?Sized>(
    game: &TabularGame,
    trials: usize,
    scale: f64,
    rng: &mut R,
) -> Vec<(QTable, QTable)> {
    let m = game.n_actions();
    let shape = (game.n_states, m, m);
    (0..trials)
        .map(|_| {
            let q1 = Array3::from_shape_simple_fn(shape, || rng.random_range(-scale..=scale));
            let q2 = Array3::from_shape_simple_fn(shape, || rng.random_range(-scale..=scale));
            (q1, q2)
        })
        .collect()
}

/// Maximum observed ratio over `trials` random pairs.
pub fn check_contraction<R: Rng + ?Sized>(
    game: &TabularGame,
    policies: &TabularPolicyPair,
    epsilon: f64,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::config("contraction check needs at least one trial"));
    }
    let scale = 1.0 + game.r_max() / (1.0 - game.gamma);
    let pairs = random_q_pairs(game, trials, scale, rng);
    Ok(contraction_ratios(
        game,
        policies,
        epsilon,
        &pairs,
        AdversaryModel::GridMin,
        OperatorVariant::Faithful,
    )?
    .max_ratio)
}

/// Iteration cap implied by the contraction modulus.
pub fn iteration_cap(game: &TabularGame, tol: f64) -> usize {
    let r_max = game.r_max();
    if r_max == 0.0 || game.gamma == 0.0 {
        return 2;
    }
    let bound = (r_max / ((1.0 - game.gamma) * tol)).ln() / (1.0 / game.gamma).ln() + 1.0;
    bound.max(1.0).ceil() as usize + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub q: QTable,
    pub iterations: usize,
    pub residual: f64,
}

pub fn fixed_point(game: &TabularGame, policies: &TabularPolicyPair, epsilon: f64, tol: f64) -> Result<FixedPoint> {
    let m = game.n_actions();
    fixed_point_from(game, policies, epsilon, tol, Array3::zeros((game.n_states, m, m)))
}

/// Iterates from `init` until successive iterates differ by less than `tol`.
/// The cap is derived for a zero start; other starts get room for their
/// initial distance.
pub fn fixed_point_from(
    game: &TabularGame,
    policies: &TabularPolicyPair,
    epsilon: f64,
    tol: f64,
    init: QTable,
) -> Result<FixedPoint> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::config("tolerance must be positive"));
    }
    check_inputs(game, policies, epsilon, &init)?;
    let init_norm = init.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut cap = iteration_cap(game, tol);
    if init_norm > 0.0 && game.gamma > 0.0 {
        cap += ((1.0 + init_norm).ln() / (1.0 / game.gamma).ln()).ceil() as usize + 1;
    }
    let mut q = init;
    let mut residual = f64::INFINITY;
    for it in 1..=cap {
        let next = operator_with(game, policies, epsilon, &q, AdversaryModel::GridMin, game.gamma);
        residual = sup_norm_diff(&next, &q);
        q = next;
        if residual < tol {
            return Ok(FixedPoint {
                q,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence { cap, residual })
}

/// `max_a min_ā Q[s, a, ā]` per state with the maximizing action. Ties keep
/// `prefer[s]` when it is within `1e-12` of the best value.
pub fn maximin_actions(q: &QTable, prefer: &[Option<usize>]) -> Vec<(usize, f64)> {
    let (n, m, _) = q.dim();
    (0..n)
        .map(|s| {
            let worst: Vec<f64> = (0..m)
                .map(|a| (0..m).map(|b| q[[s, a, b]]).fold(f64::INFINITY, f64::min))
                .collect();
            let mut best = 0;
            for a in 1..m {
                if worst[a] > worst[best] {
                    best = a;
                }
            }
            if let Some(p) = prefer.get(s).copied().flatten() {
                if worst[p] >= worst[best] - 1e-12 {
                    best = p;
                }
            }
            (best, worst[best])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    pub new_policies: TabularPolicyPair,
    pub q_old: QTable,
    pub q_new: QTable,
    /// `min (Q_new − Q_old)` over every entry.
    pub min_gain: f64,
    pub improved: bool,
}

pub const IMPROVEMENT_SLACK: f64 = 1e-9;

/// Greedy maximin improvement followed by re-evaluation.
pub fn improve_and_check(game: &TabularGame, old: &TabularPolicyPair, epsilon: f64, tol: f64) -> Result<Improvement> {
    let q_old = fixed_point(game, old, epsilon, tol)?.q;
    let prefer: Vec<Option<usize>> = (0..game.n_states).map(|s| old.greedy_action(s)).collect();
    let picks: Vec<usize> = maximin_actions(&q_old, &prefer).into_iter().map(|(a, _)| a).collect();
    let new_policies = TabularPolicyPair {
        protagonist: one_hot(&picks, game.n_actions()),
        adversary: old.adversary.clone(),
    };
    let q_new = fixed_point(game, &new_policies, epsilon, tol)?.q;
    let min_gain = q_new
        .iter()
        .zip(q_old.iter())
        .fold(f64::INFINITY, |m, (n, o)| m.min(n - o));
    Ok(Improvement {
        new_policies,
        q_old,
        q_new,
        min_gain,
        improved: min_gain >= -IMPROVEMENT_SLACK,
    })
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub master_seed: u64,
    pub contraction_games: usize,
    pub pairs_per_game: usize,
    pub contraction_epsilons: Vec<f64>,
    pub improvement_games: usize,
    pub improvement_epsilons: Vec<f64>,
    pub n_states: (usize, usize),
    pub n_actions: usize,
    pub mix_resolution: usize,
    pub gamma: f64,
    pub tol: f64,
    /// Negative control: evaluate the contraction with an inflated discount.
    pub inject_bug: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            master_seed: 0,
            contraction_games: 1000,
            pairs_per_game: 3,
            contraction_epsilons: vec![0.0, 0.1, 0.5, 1.0],
            improvement_games: 100,
            improvement_epsilons: vec![0.0, 0.3, 0.7],
            n_states: (2, 6),
            n_actions: 5,
            mix_resolution: 11,
            gamma: 0.9,
            tol: 1e-10,
            inject_bug: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub game_seed: u64,
    pub epsilon: f64,
    pub ratio: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementRow {
    pub game_seed: u64,
    pub epsilon: f64,
    pub min_gain: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub gamma: f64,
    pub contraction: Vec<ContractionRow>,
    pub improvement: Vec<ImprovementRow>,
}

pub const CONTRACTION_SLACK: f64 = 1e-10;

/// Seed of the `i`-th game in a suite.
pub fn game_seed(master: u64, suite: u64, i: usize) -> u64 {
    master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(suite << 32)
        .wrapping_add(i as u64)
}

/// Game and policy pair for a seed, as drawn by [`certify`].
pub fn game_for_seed(
    seed: u64,
    opts: &VerifyOptions,
    greedy: bool,
) -> Result<(TabularGame, TabularPolicyPair, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = opts.n_states;
    let n = rng.random_range(lo..=hi);
    let game = TabularGame::random(rng.random(), n, opts.n_actions, opts.mix_resolution, opts.gamma)?;
    let pair = if greedy {
        TabularPolicyPair::random_greedy(&game, &mut rng)
    } else {
        TabularPolicyPair::random(&game, &mut rng)
    };
    Ok((game, pair, rng))
}

/// Per-game contraction ratio for one ε; replayable from the seed.
pub fn contraction_trial(seed: u64, epsilon: f64, opts: &VerifyOptions) -> Result<f64> {
    let (game, pair, mut rng) = game_for_seed(seed, opts, false)?;
    let scale = 1.0 + game.r_max() / (1.0 - game.gamma);
    let mut pairs = random_q_pairs(&game, opts.pairs_per_game, scale, &mut rng);
    // a constant shift is the extremal case for the modulus
    if let Some((q1, _)) = pairs.first().cloned() {
        let shift = rng.random_range(0.5..2.0);
        pairs.push((q1.clone(), q1 + shift));
    }
    let variant = if opts.inject_bug {
        OperatorVariant::Inflated {
            gamma: 1.0 + (1.0 - game.gamma) + 0.1,
        }
    } else {
        OperatorVariant::Faithful
    };
    let mut worst = 0.0f64;
    for model in [AdversaryModel::GridMin, AdversaryModel::Fixed] {
        worst = worst.max(contraction_ratios(&game, &pair, epsilon, &pairs, model, variant)?.max_ratio);
    }
    Ok(worst)
}

pub fn improvement_trial(seed: u64, epsilon: f64, opts: &VerifyOptions) -> Result<f64> {
    let (game, pair, _) = game_for_seed(seed, opts, true)?;
    Ok(improve_and_check(&game, &pair, epsilon, opts.tol)?.min_gain)
}

pub fn certify(opts: &VerifyOptions) -> Result<Certificate> {
    let mut contraction = Vec::new();
    for i in 0..opts.contraction_games {
        let seed = game_seed(opts.master_seed, 1, i);
        for &eps in &opts.contraction_epsilons {
            let ratio = contraction_trial(seed, eps, opts)?;
            contraction.push(ContractionRow {
                game_seed: seed,
                epsilon: eps,
                ratio,
                ok: ratio <= opts.gamma + CONTRACTION_SLACK,
            });
        }
    }
    let mut improvement = Vec::new();
    for i in 0..opts.improvement_games {
        let seed = game_seed(opts.master_seed, 2, i);
        for &eps in &opts.improvement_epsilons {
            let min_gain = improvement_trial(seed, eps, opts)?;
            improvement.push(ImprovementRow {
                game_seed: seed,
                epsilon: eps,
                min_gain,
                ok: min_gain >= -IMPROVEMENT_SLACK,
            });
        }
    }
    Ok(Certificate {
        gamma: opts.gamma,
        contraction,
        improvement,
    })
}

impl Certificate {
    pub fn max_ratio(&self) -> f64 {
        self.contraction.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn min_gain(&self) -> f64 {
        self.improvement
            .iter()
            .map(|r| r.min_gain)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self) -> bool {
        self.contraction.iter().all(|r| r.ok) && self.improvement.iter().all(|r| r.ok)
    }

    /// Seed of the first failing game, if any.
    pub fn first_violation(&self) -> Option<u64> {
        self.contraction
            .iter()
            .find(|r| !r.ok)
            .map(|r| r.game_seed)
            .or_else(|| self.improvement.iter().find(|r| !r.ok).map(|r| r.game_seed))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,game_seed,epsilon,value,ok\n");
        for r in &self.contraction {
            let _ = writeln!(out, "contraction,{},{},{},{}", r.game_seed, r.epsilon, r.ratio, r.ok);
        }
        for r in &self.improvement {
            let _ = writeln!(out, "improvement,{},{},{},{}", r.game_seed, r.epsilon, r.min_gain, r.ok);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let max_ratio = self.max_ratio();
        let games = |rows: &mut dyn Iterator<Item = u64>| {
            let mut v: Vec<u64> = rows.collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        let c_games = games(&mut self.contraction.iter().map(|r| r.game_seed));
        let i_games = games(&mut self.improvement.iter().map(|r| r.game_seed));
        let rel = if max_ratio <= self.gamma + CONTRACTION_SLACK {
            "≤"
        } else {
            ">"
        };
        let _ = writeln!(
            out,
            "contraction: max ratio {max_ratio:.12} {rel} γ = {} over {} games, {} checks",
            self.gamma,
            c_games,
            self.contraction.len()
        );
        let bad = self.improvement.iter().filter(|r| !r.ok).count();
        let _ = writeln!(
            out,
            "improvement: min gain {:.3e} over {} games, {} checks, {} violations",
            self.min_gain(),
            i_games,
            self.improvement.len(),
            bad
        );
        match self.first_violation() {
            Some(seed) => {
                let _ = writeln!(out, "status: FAILED (first offending game seed {seed})");
            }
            None => {
                let _ = writeln!(out, "status: passed");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_game(seed: u64) -> TabularGame {
        TabularGame::random(seed, 3, 5, 11, 0.9).unwrap()
    }

    #[test]
    fn random_games_are_valid_distributions() {
        for seed in 0..20 {
            let g = small_game(seed);
            g.validate().unwrap();
            assert!(g.r_max() <= 1.0);
        }
    }

    #[test]
    fn zero_discount_returns_reward() {
        let mut g = small_game(1);
        g.gamma = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = TabularPolicyPair::random(&g, &mut rng);
        let q = Array3::from_elem((3, 5, 5), 7.0);
        let out = apply_operator(&g, &p, 0.4, &q).unwrap();
        let mix = g.mix_indices(0.4);
        for ((s, a, b), v) in out.indexed_iter() {
            assert_eq!(*v, g.reward[[s, mix[[a, b]]]]);
        }
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let g = small_game(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = TabularPolicyPair::random(&g, &mut rng);
        let q = random_q_pairs(&g, 1, 3.0, &mut rng).remove(0).0;
        let eps = 0.35;
        let out = apply_operator(&g, &p, eps, &q).unwrap();
        let m = 5;
        for s in 0..3 {
            for a in 0..m {
                for b in 0..m {
                    let x = (1.0 - eps) * g.action_grid[a] + eps * g.action_grid[b];
                    let mut k = 0;
                    for j in 0..g.mix_grid.len() {
                        if (g.mix_grid[j] - x).abs() < (g.mix_grid[k] - x).abs() {
                            k = j;
                        }
                    }
                    let mut expect = g.reward[[s, k]];
                    for t in 0..3 {
                        let mut worst = f64::INFINITY;
                        for b1 in 0..m {
                            let mut e = 0.0;
                            for a1 in 0..m {
                                e += p.protagonist[[t, a1]] * q[[t, a1, b1]];
                            }
                            worst = worst.min(e);
                        }
                        expect += g.gamma * g.transition[[s, k, t]] * worst;
                    }
                    assert!((out[[s, a, b]] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_epsilon_ignores_the_adversary_argument() {
        let g = small_game(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = TabularPolicyPair::random(&g, &mut rng);
        let q = random_q_pairs(&g, 1, 2.0, &mut rng).remove(0).0;
        let out = apply_operator(&g, &p, 0.0, &q).unwrap();
        for s in 0..3 {
            for a in 0..5 {
                for b in 1..5 {
                    assert_eq!(out[[s, a, b]], out[[s, a, 0]]);
                }
            }
        }
    }

    #[test]
    fn constant_shift_gives_exactly_gamma() {
        let g = small_game(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = TabularPolicyPair::random(&g, &mut rng);
        let q1 = random_q_pairs(&g, 1, 2.0, &mut rng).remove(0).0;
        let q2 = &q1 + 1.5;
        let pairs = vec![(q1.clone(), q2), (q1.clone(), q1)];
        let stats =
            contraction_ratios(&g, &p, 0.5, &pairs, AdversaryModel::GridMin, OperatorVariant::Faithful).unwrap();
        assert_eq!(stats.skipped, 1);
        assert_eq!(stats.ratios.len(), 1);
        assert!((stats.ratios[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn single_state_geometric_series() {
        let g = TabularGame::new(
            vec![-1.0, 1.0],
            linspace_unit(11),
            Array3::ones((1, 11, 1)),
            Array2::from_elem((1, 11), 2.0),
            0.8,
        )
        .unwrap();
        let p = TabularPolicyPair {
            protagonist: array![[0.3, 0.7]],
            adversary: vec![1],
        };
        let fp = fixed_point(&g, &p, 0.5, 1e-10).unwrap();
        assert!(fp.q.iter().all(|v| (v - 10.0).abs() < 1e-8));
        assert!(fp.iterations <= iteration_cap(&g, 1e-10));
    }

    #[test]
    fn fixed_point_residual_and_uniqueness() {
        let g = small_game(5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = TabularPolicyPair::random(&g, &mut rng);
        let tol = 1e-8;
        let a = fixed_point(&g, &p, 0.3, tol).unwrap();
        let bq = apply_operator(&g, &p, 0.3, &a.q).unwrap();
        assert!(sup_norm_diff(&bq, &a.q) < tol);
        let init = random_q_pairs(&g, 1, 50.0, &mut rng).remove(0).0;
        let b = fixed_point_from(&g, &p, 0.3, tol, init).unwrap();
        assert!(sup_norm_diff(&a.q, &b.q) <= 2.0 * tol / (1.0 - g.gamma));
    }

    #[test]
    fn value_iteration_error_bound() {
        let g = small_game(6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = TabularPolicyPair::random(&g, &mut rng);
        let star = fixed_point(&g, &p, 0.6, 1e-13).unwrap().q;
        let mut q = Array3::zeros(star.dim());
        for k in 1..60 {
            q = apply_operator(&g, &p, 0.6, &q).unwrap();
            let bound = g.gamma.powi(k) * g.r_max() / (1.0 - g.gamma);
            assert!(sup_norm_diff(&q, &star) <= bound + 1e-11);
        }
    }

    #[test]
    fn inflated_discount_breaks_contraction() {
        let g = small_game(7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = TabularPolicyPair::random(&g, &mut rng);
        let opts = VerifyOptions {
            inject_bug: true,
            ..VerifyOptions::default()
        };
        assert!(contraction_trial(11, 0.5, &opts).unwrap() > opts.gamma);
        assert!(fixed_point(&g, &p, 0.2, 0.0).is_err());
    }

    #[test]
    fn greedy_policy_is_a_fixed_point_of_improvement() {
        let g = small_game(8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let start = TabularPolicyPair::random_greedy(&g, &mut rng);
        let once = improve_and_check(&g, &start, 0.3, 1e-11).unwrap();
        let mut current = once.new_policies.clone();
        // iterate to the greedy fixed point, then improvement is idle
        for _ in 0..50 {
            let step = improve_and_check(&g, &current, 0.3, 1e-11).unwrap();
            assert!(step.improved);
            if step.new_policies == current {
                assert!(sup_norm_diff(&step.q_new, &step.q_old) < 1e-9);
                return;
            }
            current = step.new_policies;
        }
        panic!("policy iteration did not settle");
    }

    #[test]
    fn zero_epsilon_matches_classical_greedy_step() {
        let g = small_game(9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let old = TabularPolicyPair::random_greedy(&g, &mut rng);
        let imp = improve_and_check(&g, &old, 0.0, 1e-12).unwrap();
        // classical evaluation of the deterministic policy on r(s, snap(a))
        let n = g.n_states;
        let acts: Vec<usize> = (0..n).map(|s| old.greedy_action(s).unwrap()).collect();
        let mut v = vec![0.0; n];
        for _ in 0..2000 {
            v = (0..n)
                .map(|s| {
                    let k = g.snap(g.action_grid[acts[s]]);
                    g.reward[[s, k]] + g.gamma * (0..n).map(|t| g.transition[[s, k, t]] * v[t]).sum::<f64>()
                })
                .collect();
        }
        for s in 0..n {
            let q_of = |a: usize| {
                let k = g.snap(g.action_grid[a]);
                g.reward[[s, k]] + g.gamma * (0..n).map(|t| g.transition[[s, k, t]] * v[t]).sum::<f64>()
            };
            let best = (0..g.n_actions()).map(q_of).fold(f64::NEG_INFINITY, f64::max);
            let chosen = imp.new_policies.greedy_action(s).unwrap();
            assert!((q_of(chosen) - best).abs() < 1e-9);
        }
    }

    #[test]
    fn stochastic_old_policy_can_lose_value() {
        // f(−1) = f(1) = 1, f(0) = 0 on the mixed action; with ε = ½ the
        // adversary can always reach 0 against a pure action but not against
        // a coin flip, so the pure maximin policy is worse than the mixed one.
        let mix = linspace_unit(11);
        let reward = Array2::from_shape_fn((1, 11), |(_, k)| if mix[k] == 0.0 { 0.0 } else { 1.0 });
        let g = TabularGame::new(vec![-1.0, 1.0], mix, Array3::ones((1, 11, 1)), reward, 0.5).unwrap();
        let old = TabularPolicyPair {
            protagonist: array![[0.5, 0.5]],
            adversary: vec![0],
        };
        let imp = improve_and_check(&g, &old, 0.5, 1e-12).unwrap();
        assert!(!imp.improved);
    }

    #[test]
    fn small_certificate_passes_and_replays() {
        let opts = VerifyOptions {
            contraction_games: 20,
            improvement_games: 5,
            ..VerifyOptions::default()
        };
        let c = certify(&opts).unwrap();
        assert!(c.passed(), "{}", c.summary());
        assert!(c.summary().contains("contraction: max ratio"));
        let row = &c.contraction[17];
        assert_eq!(contraction_trial(row.game_seed, row.epsilon, &opts).unwrap(), row.ratio);
        assert_eq!(c, certify(&opts).unwrap());
    }

    #[test]
    fn bug_injection_fails_the_certificate() {
        let opts = VerifyOptions {
            contraction_games: 3,
            improvement_games: 1,
            inject_bug: true,
            ..VerifyOptions::default()
        };
        let c = certify(&opts).unwrap();
        assert!(!c.passed());
        assert!(c.first_violation().is_some());
        assert!(c.summary().contains("FAILED"));
    }
}
