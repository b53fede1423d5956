//! Experiment configuration: TOML with `[adapt]`, `[sac]`, `[sweep]` and
//! `[ablate]` sections, plus dotted `key=value` overrides.

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptState, SignalRule, SignalShape};
use crate::env::{default_axis, EnvId, EnvParams};
use crate::error::{Error, Result};
use crate::sac::{EpsilonMode, SacConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Adaptive,
    Fixed,
    Random,
    Off,
}

impl ModeName {
    pub const ALL: [ModeName; 4] = [ModeName::Adaptive, ModeName::Random, ModeName::Fixed, ModeName::Off];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeName::Adaptive => "adaptive",
            ModeName::Fixed => "fixed",
            ModeName::Random => "random",
            ModeName::Off => "off",
        }
    }
}

impl std::str::FromStr for ModeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(ModeName::Adaptive),
            "fixed" => Ok(ModeName::Fixed),
            "random" => Ok(ModeName::Random),
            "off" => Ok(ModeName::Off),
            other => Err(Error::config(format!(
                "adapt.mode: unknown mode `{other}` (adaptive, fixed, random, off)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    pub mode: ModeName,
    pub epsilon0: f64,
    pub beta: f64,
    pub c: f64,
    pub sign_flip: bool,
    pub shape: SignalShape,
    /// Required by `mode = "fixed"`.
    pub fixed_epsilon: Option<f64>,
    /// Required by `mode = "random"`.
    pub random_range: Option<[f64; 2]>,
}

impl Default for AdaptSection {
    fn default() -> Self {
        let d = AdaptState::default();
        Self {
            mode: ModeName::Adaptive,
            epsilon0: d.epsilon,
            beta: d.beta,
            c: d.c,
            sign_flip: false,
            shape: SignalShape::Logistic,
            fixed_epsilon: None,
            random_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub masses: Vec<f64>,
    pub frictions: Vec<f64>,
    pub episodes_per_cell: usize,
    pub policies_per_seed: usize,
    /// Seeds the evaluation reset stream and the policy draw.
    pub eval_seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            masses: default_axis(),
            frictions: default_axis(),
            episodes_per_cell: 8,
            policies_per_seed: 4,
            eval_seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub modes: Vec<ModeName>,
    pub betas: Vec<f64>,
    /// Constant used for the `fixed` row.
    pub fixed_epsilon: f64,
    /// Range used for the `random` row.
    pub random_range: [f64; 2],
    /// Deterministic evaluation episodes on the nominal task per run.
    pub eval_episodes: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            modes: ModeName::ALL.to_vec(),
            betas: vec![0.0, 0.1, 0.3, 0.5, 0.7, 1.0],
            fixed_epsilon: 0.1,
            random_range: [0.0, 0.2],
            eval_episodes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvId,
    /// Defaults to 30 000 for the pendulum and 50 000 for the point mass.
    #[serde(default)]
    pub total_steps: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub adapt: AdaptSection,
    #[serde(default)]
    pub sac: SacConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub ablate: AblateSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_workers() -> usize {
    1
}

pub fn default_steps(env: EnvId) -> usize {
    match env {
        EnvId::Pendulum => 30_000,
        EnvId::PointMass => 50_000,
    }
}

impl ExperimentConfig {
    pub fn new(env: EnvId) -> Self {
        Self {
            env,
            total_steps: None,
            seeds: default_seeds(),
            workers: default_workers(),
            adapt: AdaptSection::default(),
            sac: SacConfig::default(),
            sweep: SweepSection::default(),
            ablate: AblateSection::default(),
        }
    }

    pub fn steps(&self) -> usize {
        self.total_steps.unwrap_or_else(|| default_steps(self.env))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` and applies `key=value` overrides before validation.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds: at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds: duplicate seed"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers: must be at least 1"));
        }
        self.sac.validate()?;
        self.base_adapt()?;
        self.epsilon_mode()?;
        let sw = &self.sweep;
        if sw.masses.is_empty() || sw.frictions.is_empty() {
            return Err(Error::config("sweep: mass and friction grids must be non-empty"));
        }
        let nominal = EnvParams::nominal(self.env);
        for &m in &sw.masses {
            for &f in &sw.frictions {
                nominal
                    .with_params(m, f)
                    .map_err(|e| Error::config(format!("sweep grid: {e}")))?;
            }
        }
        if sw.episodes_per_cell == 0 || sw.policies_per_seed == 0 {
            return Err(Error::config(
                "sweep: episodes_per_cell and policies_per_seed must be positive",
            ));
        }
        let ab = &self.ablate;
        if ab.eval_episodes == 0 {
            return Err(Error::config("ablate.eval_episodes: must be positive"));
        }
        if ab.betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::config("ablate.betas: every beta must lie in [0, 1]"));
        }
        EpsilonMode::Fixed {
            epsilon: ab.fixed_epsilon,
        }
        .validate()
        .map_err(|e| Error::config(format!("ablate.fixed_epsilon: {e}")))?;
        EpsilonMode::Random {
            lo: ab.random_range[0],
            hi: ab.random_range[1],
        }
        .validate()
        .map_err(|e| Error::config(format!("ablate.random_range: {e}")))?;
        Ok(())
    }

    /// Controller initial state. `off` pins ε to zero.
    pub fn base_adapt(&self) -> Result<AdaptState> {
        let a = &self.adapt;
        let eps0 = if a.mode == ModeName::Off { 0.0 } else { a.epsilon0 };
        AdaptState::new(eps0, a.beta, a.c)
            .map(|s| {
                s.with_rule(SignalRule {
                    shape: a.shape,
                    sign_flip: a.sign_flip,
                })
            })
            .map_err(|e| Error::config(format!("adapt: {e}")))
    }

    pub fn epsilon_mode(&self) -> Result<EpsilonMode> {
        let a = &self.adapt;
        let mode = match a.mode {
            ModeName::Adaptive => EpsilonMode::Adaptive,
            ModeName::Off => EpsilonMode::Off,
            ModeName::Fixed => EpsilonMode::Fixed {
                epsilon: a
                    .fixed_epsilon
                    .ok_or_else(|| Error::config("adapt.fixed_epsilon: required when adapt.mode = \"fixed\""))?,
            },
            ModeName::Random => {
                let [lo, hi] = a
                    .random_range
                    .ok_or_else(|| Error::config("adapt.random_range: required when adapt.mode = \"random\""))?;
                EpsilonMode::Random { lo, hi }
            }
        };
        mode.validate().map_err(|e| Error::config(format!("adapt: {e}")))?;
        Ok(mode)
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let mut t = TrainConfig::new(EnvParams::nominal(self.env), self.steps(), seed);
        t.sac = self.sac.clone();
        t.adapt = self.base_adapt()?;
        t.mode = self.epsilon_mode()?;
        Ok(t)
    }

    /// The same experiment under another mode, as used by the ablation.
    pub fn with_mode(&self, mode: ModeName) -> Self {
        let mut c = self.clone();
        c.adapt.mode = mode;
        match mode {
            ModeName::Fixed => c.adapt.fixed_epsilon = Some(self.ablate.fixed_epsilon),
            ModeName::Random => c.adapt.random_range = Some(self.ablate.random_range),
            _ => {}
        }
        c
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // anything that is not a TOML literal is taken as a bare string
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one dotted `key=value` override, e.g. `adapt.beta=0.3`.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("--set `{assignment}`: expected key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("--set `{assignment}`: empty key segment")));
    }
    let mut cur = table;
    for seg in &path[..path.len() - 1] {
        let entry = cur
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("--set `{assignment}`: `{seg}` is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
