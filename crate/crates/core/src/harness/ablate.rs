use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::{ExperimentConfig, ModeName};
use super::sweep::{evaluate_grid, SweepOptions};
use super::train::{read_trace_series, trace_csv};
use super::{eval_reset_seeds, mean, plot, run_pool, sample_std};
use crate::env::EnvParams;
use crate::error::{Error, Result};
use crate::sac::{evaluate_policy, Trainer};

/// One training run of the ablation, summarized.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    /// Deterministic return on the nominal task.
    pub natural_return: f64,
    /// Deterministic return averaged over the sweep grid.
    pub perturbed_return: f64,
    pub last10_train_return: f64,
    pub eps_min: f64,
    pub eps_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    /// `mode` or `beta`.
    pub group: String,
    pub label: String,
    pub mode: ModeName,
    pub beta: f64,
    pub runs: Vec<RunSummary>,
}

impl AblationRow {
    pub fn natural(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.natural_return).collect()
    }

    pub fn perturbed(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.perturbed_return).collect()
    }

    pub fn epsilon_in_unit_interval(&self) -> bool {
        self.runs.iter().all(|r| r.eps_min >= 0.0 && r.eps_max <= 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub mode_rows: Vec<AblationRow>,
    pub beta_rows: Vec<AblationRow>,
}

pub const RUNS_HEADER: &str =
    "group,label,mode,beta,seed,natural_return,perturbed_return,last10_train_return,eps_min,eps_max";

#[derive(Debug, Clone, Copy, PartialEq)]
struct RunKey {
    mode: ModeName,
    beta: f64,
}

impl RunKey {
    fn dir_name(&self) -> String {
        match self.mode {
            ModeName::Adaptive => format!("adaptive_beta{}", self.beta),
            m => m.as_str().to_string(),
        }
    }
}

fn run_config(cfg: &ExperimentConfig, key: RunKey) -> ExperimentConfig {
    let mut c = cfg.with_mode(key.mode);
    c.adapt.beta = key.beta;
    c
}

fn summarize_run(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunSummary> {
    let mut trainer = Trainer::new(cfg.train_config(seed)?)?;
    let result = trainer.run();
    fs::write(dir.join(format!("trace_seed{seed}.csv")), trace_csv(trainer.trace()))?;
    result?;
    let out = trainer.into_outcome();
    let nominal = EnvParams::nominal(cfg.env);
    let natural = evaluate_policy(
        &out.bundle.actor,
        &nominal,
        &eval_reset_seeds(cfg.sweep.eval_seed, cfg.ablate.eval_episodes),
    )?;
    let mut opts = SweepOptions::from_config(cfg);
    opts.workers = 1;
    opts.anchor = Some(0.0);
    let grid = evaluate_grid(cfg.env, std::slice::from_ref(&out.bundle.actor), &opts)?;
    let grid_means: Vec<f64> = grid.cells.iter().map(|c| c.mean).collect();
    let r = &out.episode_returns;
    let eps = out.trace.iter().map(|t| t.epsilon);
    Ok(RunSummary {
        seed,
        natural_return: mean(&natural),
        perturbed_return: mean(&grid_means),
        last10_train_return: mean(&r[r.len().saturating_sub(10)..]),
        eps_min: eps.clone().fold(f64::INFINITY, f64::min),
        eps_max: eps.fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Matched-seed runs across modes and across β values. Runs that coincide
/// (the adaptive mode row and the β row with the configured β) are trained
/// once. Writes `ablation_runs.csv`, per-run traces under `runs/`,
/// `ablation_curves.svg` and `report.txt`.
pub fn cmd_ablate(cfg: &ExperimentConfig, run_dir: &Path) -> Result<AblationReport> {
    cfg.validate()?;
    fs::create_dir_all(run_dir)?;
    fs::write(run_dir.join("config.echo"), cfg.to_toml())?;
    let mode_keys: Vec<RunKey> = cfg
        .ablate
        .modes
        .iter()
        .map(|&mode| RunKey {
            mode,
            beta: cfg.adapt.beta,
        })
        .collect();
    let beta_keys: Vec<RunKey> = cfg
        .ablate
        .betas
        .iter()
        .map(|&beta| RunKey {
            mode: ModeName::Adaptive,
            beta,
        })
        .collect();
    let mut unique: Vec<RunKey> = Vec::new();
    for k in mode_keys.iter().chain(&beta_keys) {
        if !unique.contains(k) {
            unique.push(*k);
        }
    }
    let mut jobs = Vec::new();
    for k in &unique {
        let dir = run_dir.join("runs").join(k.dir_name());
        fs::create_dir_all(&dir)?;
        for &seed in &cfg.seeds {
            jobs.push((*k, seed, dir.clone()));
        }
    }
    let results = run_pool(cfg.workers, jobs.len(), |i| {
        let (k, seed, dir) = &jobs[i];
        summarize_run(&run_config(cfg, *k), *seed, dir)
    });
    let mut by_key: Vec<(RunKey, Vec<RunSummary>)> = unique.iter().map(|k| (*k, Vec::new())).collect();
    for ((k, _, _), r) in jobs.iter().zip(results) {
        let slot = by_key.iter_mut().find(|(kk, _)| kk == k).expect("key was registered");
        slot.1.push(r?);
    }
    let row = |group: &str, k: &RunKey| {
        let runs = by_key
            .iter()
            .find(|(kk, _)| kk == k)
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        AblationRow {
            group: group.to_string(),
            label: match group {
                "mode" => k.mode.as_str().to_string(),
                _ => format!("{}", k.beta),
            },
            mode: k.mode,
            beta: k.beta,
            runs,
        }
    };
    let report = AblationReport {
        mode_rows: mode_keys.iter().map(|k| row("mode", k)).collect(),
        beta_rows: beta_keys.iter().map(|k| row("beta", k)).collect(),
    };
    let csv = runs_csv(&report);
    fs::write(run_dir.join("ablation_runs.csv"), &csv)?;
    super::write_report_section(run_dir, "ablate", &ablation_tables(&csv)?)?;
    render_ablation_curves(
        run_dir,
        &unique.iter().map(|k| k.dir_name()).collect::<Vec<_>>(),
        &cfg.seeds,
    )?;
    Ok(report)
}

pub fn runs_csv(report: &AblationReport) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for row in report.mode_rows.iter().chain(&report.beta_rows) {
        for r in &row.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                row.group,
                row.label,
                row.mode.as_str(),
                row.beta,
                r.seed,
                r.natural_return,
                r.perturbed_return,
                r.last10_train_return,
                r.eps_min,
                r.eps_max
            );
        }
    }
    out
}

fn pm(xs: &[f64]) -> String {
    match sample_std(xs) {
        Some(s) => format!("{:.1} ± {:.1}", mean(xs), s),
        None => format!("{:.1} ± n/a", mean(xs)),
    }
}

/// Builds the report tables from the per-seed CSV alone.
pub fn ablation_tables(csv_text: &str) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    // (group, label) -> (natural, perturbed, eps_min, eps_max), in first-seen order
    type RowKey = (String, String);
    type RowData = (Vec<f64>, Vec<f64>, f64, f64);
    let mut order: Vec<RowKey> = Vec::new();
    let mut data: BTreeMap<RowKey, RowData> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::config(format!("ablation csv: {e}")))?;
        let field = |k: usize| rec.get(k).unwrap_or("").to_string();
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::config(format!("ablation csv: bad field {k}")))
        };
        let key = (field(0), field(1));
        if !data.contains_key(&key) {
            order.push(key.clone());
        }
        let e = data
            .entry(key)
            .or_insert((Vec::new(), Vec::new(), f64::INFINITY, f64::NEG_INFINITY));
        e.0.push(num(5)?);
        e.1.push(num(6)?);
        e.2 = e.2.min(num(8)?);
        e.3 = e.3.max(num(9)?);
    }
    let mut s = String::new();
    for (group, title, first) in [
        ("beta", "Average return ± sample std over seeds, by β", "Parameter β"),
        ("mode", "Average return ± sample std over seeds, by ε mode", "Mode"),
    ] {
        let _ = writeln!(s, "{title}");
        let _ = writeln!(
            s,
            "{first:<12} | {:<20} | {:<20} | {:<22} | epsilon range",
            "Natural Reward", "Perturbed Reward", "Attack Reward(state)"
        );
        for key in order.iter().filter(|k| k.0 == group) {
            let (nat, per, lo, hi) = &data[key];
            let _ = writeln!(
                s,
                "{:<12} | {:<20} | {:<20} | {:<22} | [{lo:.4}, {hi:.4}]",
                key.1,
                pm(nat),
                pm(per),
                "not reproduced"
            );
        }
        s.push('\n');
    }
    Ok(s)
}

/// Mean training return per episode across seeds, one series per run.
pub fn render_ablation_curves(run_dir: &Path, run_names: &[String], seeds: &[u64]) -> Result<()> {
    let mut series = Vec::new();
    for name in run_names {
        let mut per_seed = Vec::new();
        for seed in seeds {
            let path = run_dir.join("runs").join(name).join(format!("trace_seed{seed}.csv"));
            per_seed.push(read_trace_series(&path)?.0);
        }
        let n = per_seed.iter().map(Vec::len).min().unwrap_or(0);
        let pts = (0..n)
            .map(|i| {
                let ys: Vec<f64> = per_seed.iter().map(|s| s[i].1).collect();
                (per_seed[0][i].0, mean(&ys))
            })
            .collect();
        series.push((name.clone(), pts));
    }
    fs::write(
        run_dir.join("ablation_curves.svg"),
        plot::line_chart(
            "Training return by run (seed mean)",
            "environment step",
            "return",
            &series,
        ),
    )?;
    Ok(())
}
