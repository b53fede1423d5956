use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::ExperimentConfig;
use super::{eval_reset_seeds, mean, plot, run_pool};
use crate::env::EnvParams;
use crate::error::{Error, Result};
use crate::sac::train::TRACE_HEADER;
use crate::sac::{evaluate_policy, TraceRow, Trainer};

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub episodes: usize,
    /// Mean training return over the last ten episodes.
    pub last10_train_return: f64,
    /// Deterministic nominal-task return of the final policy.
    pub eval_return: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub wall_secs: f64,
    pub checksum: u64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub seeds: Vec<SeedSummary>,
}

pub fn trace_path(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("trace_seed{seed}.csv"))
}

pub fn checkpoint_path(run_dir: &Path, seed: u64, tag: &str) -> PathBuf {
    run_dir.join(format!("ckpt_seed{seed}_{tag}.bin"))
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 96 + 128);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Trains one seed and writes its trace and checkpoints into `run_dir`.
/// On an aborted run the partial trace is still written.
pub fn train_seed(cfg: &ExperimentConfig, seed: u64, run_dir: &Path, echo: &str) -> Result<SeedSummary> {
    let mut trainer = Trainer::new(cfg.train_config(seed)?)?;
    let t0 = Instant::now();
    let result = trainer.run();
    let wall_secs = t0.elapsed().as_secs_f64();
    write_atomic(&trace_path(run_dir, seed), trace_csv(trainer.trace()).as_bytes())?;
    if let Err(e) = result {
        return Err(match e {
            Error::NonFinite(msg) => Error::NonFinite(format!(
                "seed {seed}: {msg}; partial trace in {}",
                trace_path(run_dir, seed).display()
            )),
            other => other,
        });
    }
    let out = trainer.into_outcome();
    for snap in &out.snapshots {
        let tag = format!("ep{}", snap.episode);
        save_checkpoint(
            &checkpoint_path(run_dir, seed, &tag),
            &Checkpoint {
                bundle: snap.bundle.clone(),
                adapt: snap.adapt,
                config_echo: echo.to_string(),
                tag,
            },
        )?;
    }
    save_checkpoint(
        &checkpoint_path(run_dir, seed, "final"),
        &Checkpoint {
            bundle: out.bundle.clone(),
            adapt: out.adapt,
            config_echo: echo.to_string(),
            tag: "final".into(),
        },
    )?;
    let eval = evaluate_policy(
        &out.bundle.actor,
        &EnvParams::nominal(cfg.env),
        &eval_reset_seeds(cfg.sweep.eval_seed, cfg.ablate.eval_episodes),
    )?;
    let r = &out.episode_returns;
    let tail = &r[r.len().saturating_sub(10)..];
    let eps = out.trace.iter().map(|t| t.epsilon);
    Ok(SeedSummary {
        seed,
        episodes: r.len(),
        last10_train_return: mean(tail),
        eval_return: mean(&eval),
        eps_min: eps.clone().fold(f64::INFINITY, f64::min),
        eps_max: eps.fold(f64::NEG_INFINITY, f64::max),
        wall_secs,
        checksum: out.bundle.checksum(),
    })
}

/// Per-seed training, config echo, figures and report.
pub fn cmd_train(cfg: &ExperimentConfig, run_dir: &Path) -> Result<TrainReport> {
    cfg.validate()?;
    fs::create_dir_all(run_dir)?;
    let echo = cfg.to_toml();
    fs::write(run_dir.join("config.echo"), &echo)?;
    let results = run_pool(cfg.workers, cfg.seeds.len(), |i| {
        train_seed(cfg, cfg.seeds[i], run_dir, &echo)
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
    render_training_plots(run_dir, &cfg.seeds)?;
    let mut report = String::new();
    let _ = writeln!(
        report,
        "train: env {} mode {} steps {}",
        cfg.env,
        cfg.adapt.mode.as_str(),
        cfg.steps()
    );
    let _ = writeln!(
        report,
        "seed,episodes,last10_train_return,eval_return,eps_min,eps_max,wall_secs,checksum"
    );
    for s in &seeds {
        let _ = writeln!(
            report,
            "{},{},{:.3},{:.3},{:.6},{:.6},{:.1},{:016x}",
            s.seed, s.episodes, s.last10_train_return, s.eval_return, s.eps_min, s.eps_max, s.wall_secs, s.checksum
        );
    }
    super::write_report_section(run_dir, "train", &report)?;
    Ok(TrainReport {
        run_dir: run_dir.to_path_buf(),
        seeds,
    })
}

/// `(step, value)` points for plotting.
pub type Series = Vec<(f64, f64)>;

/// Episode returns and the ε trace for one seed, read from its CSV.
pub fn read_trace_series(path: &Path) -> Result<(Series, Series)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut returns = Vec::new();
    let mut eps = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let num = |k: usize| rec.get(k).and_then(|v| v.parse::<f64>().ok());
        let step = num(0).unwrap_or(i as f64);
        if let Some(r) = num(2) {
            returns.push((step, r));
        }
        if i % 50 == 0 {
            if let Some(e) = num(3) {
                eps.push((step, e));
            }
        }
    }
    Ok((returns, eps))
}

/// Regenerates `training_curve.svg` and `epsilon.svg` from the trace CSVs.
pub fn render_training_plots(run_dir: &Path, seeds: &[u64]) -> Result<()> {
    let mut ret_series = Vec::new();
    let mut eps_series = Vec::new();
    for &seed in seeds {
        let (r, e) = read_trace_series(&trace_path(run_dir, seed))?;
        ret_series.push((format!("seed {seed}"), r));
        eps_series.push((format!("seed {seed}"), e));
    }
    fs::write(
        run_dir.join("training_curve.svg"),
        plot::line_chart(
            "Episode return during training",
            "environment step",
            "return",
            &ret_series,
        ),
    )?;
    fs::write(
        run_dir.join("epsilon.svg"),
        plot::line_chart("Adversarial coefficient", "environment step", "epsilon", &eps_series),
    )?;
    Ok(())
}
