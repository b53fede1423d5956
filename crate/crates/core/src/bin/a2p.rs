use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use a2p::harness::{
    ablate::{ablation_tables, runs_csv},
    cmd_ablate, cmd_sweep, cmd_train, cmd_verify, exit_code,
    sweep::{load_run_config, sweep_report},
    ExperimentConfig, SweepAxis, SweepOptions, EXIT_USAGE, EXIT_VIOLATION,
};
use a2p::verify::VerifyOptions;
use a2p::{Error, Result};

#[derive(Parser)]
#[command(name = "a2p", version, about = "Adaptive adversarial perturbation SAC lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one agent per seed and write traces, checkpoints and plots.
    Train(RunArgs),
    /// Evaluate a run's checkpoints over the mass × friction grid.
    Sweep(SweepArgs),
    /// Matched-seed comparison across ε modes and β values.
    Ablate(RunArgs),
    /// Check the operator contraction and policy improvement on random tabular games.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a field, e.g. `--set adapt.beta=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// pendulum or pointmass.
    #[arg(long)]
    env: Option<String>,
    /// adaptive, fixed, random or off.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    workers: Option<usize>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// grid, mass or friction.
    #[arg(long, default_value = "grid")]
    axis: String,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    policies: Option<usize>,
    /// Normalization anchor; defaults to the grid's own nominal cell.
    #[arg(long, allow_hyphen_values = true)]
    anchor: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    games: Option<usize>,
    #[arg(long)]
    improvement_games: Option<usize>,
    /// Negative control: certify an operator with an inflated discount.
    #[arg(long)]
    inject_bug: bool,
    /// Directory for certificate.csv and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut text = match &a.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    if a.config.is_none() && a.env.is_none() {
        return Err(Error::config("env: pass --env or --config"));
    }
    if text.trim().is_empty() {
        text = format!("env = \"{}\"\n", a.env.as_deref().unwrap_or_default());
    }
    let mut sets = Vec::new();
    if let Some(env) = &a.env {
        sets.push(format!("env=\"{env}\""));
    }
    if let Some(mode) = &a.mode {
        sets.push(format!("adapt.mode=\"{mode}\""));
    }
    if let Some(steps) = a.steps {
        sets.push(format!("total_steps={steps}"));
    }
    if let Some(seeds) = &a.seeds {
        let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        sets.push(format!("seeds=[{}]", list.join(",")));
    }
    if let Some(w) = a.workers {
        sets.push(format!("workers={w}"));
    }
    sets.extend(a.sets.iter().cloned());
    ExperimentConfig::from_toml_with(&text, &sets)
}

fn train(a: &RunArgs) -> Result<()> {
    let cfg = load_config(a)?;
    let report = cmd_train(&cfg, &a.out)?;
    for s in &report.seeds {
        println!(
            "seed {}: {} episodes, last-10 training return {:.1}, evaluation return {:.1}, ε in [{:.4}, {:.4}], {:.0}s",
            s.seed, s.episodes, s.last10_train_return, s.eval_return, s.eps_min, s.eps_max, s.wall_secs
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let cfg = load_run_config(&a.run)?;
    let mut opts = SweepOptions::from_config(&cfg).with_axis(a.axis.parse::<SweepAxis>()?);
    if let Some(e) = a.episodes {
        opts.episodes_per_cell = e;
    }
    if let Some(p) = a.policies {
        opts.policies_per_seed = p;
    }
    if let Some(w) = a.workers {
        opts.workers = w;
    }
    opts.anchor = a.anchor;
    let grid = cmd_sweep(&a.run, &opts)?;
    print!("{}", sweep_report(&grid));
    println!("wrote {}", a.run.join("grid.csv").display());
    Ok(())
}

fn ablate(a: &RunArgs) -> Result<()> {
    let cfg = load_config(a)?;
    let report = cmd_ablate(&cfg, &a.out)?;
    let csv = runs_csv(&report);
    print!("{}", ablation_tables(&csv)?);
    Ok(())
}

fn verify(a: &VerifyArgs) -> Result<bool> {
    let mut opts = VerifyOptions {
        master_seed: a.seed,
        inject_bug: a.inject_bug,
        ..VerifyOptions::default()
    };
    if let Some(g) = a.games {
        opts.contraction_games = g;
    }
    if let Some(g) = a.improvement_games {
        opts.improvement_games = g;
    }
    let cert = cmd_verify(&opts, a.out.as_deref().map(Path::new))?;
    print!("{}", cert.summary());
    Ok(cert.passed())
}

fn report(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(err) as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.cmd {
        Cmd::Train(a) => train(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Ablate(a) => ablate(a),
        Cmd::Verify(a) => match verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_VIOLATION as u8),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
