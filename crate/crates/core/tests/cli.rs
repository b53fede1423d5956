//! End-to-end runs of the `a2p` binary and the harness commands.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use a2p::harness::{cmd_ablate, cmd_train, load_checkpoint, ExperimentConfig};

fn a2p(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a2p"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small(env: &str, steps: usize, seeds: &str) -> Vec<String> {
    vec![
        format!("env=\"{env}\""),
        format!("total_steps={steps}"),
        format!("seeds=[{seeds}]"),
        "sac.hidden=[16]".into(),
        "sac.warmup_steps=200".into(),
        "sac.batch_size=32".into(),
    ]
}

fn cfg(sets: &[String]) -> ExperimentConfig {
    ExperimentConfig::from_toml_with("", sets).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn rerun_gives_byte_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&small("pointmass", 600, "0, 1"));
    cmd_train(&c, &dir.path().join("a")).unwrap();
    cmd_train(&c, &dir.path().join("b")).unwrap();
    for seed in [0, 1] {
        let name = format!("trace_seed{seed}.csv");
        let a = read(&dir.path().join("a").join(&name));
        assert!(!a.is_empty());
        assert_eq!(a, read(&dir.path().join("b").join(&name)), "{name}");
    }
    // different seeds really differ
    assert_ne!(
        read(&dir.path().join("a/trace_seed0.csv")),
        read(&dir.path().join("a/trace_seed1.csv"))
    );
}

#[test]
fn off_mode_matches_adaptive_with_zero_gain() {
    let dir = tempfile::tempdir().unwrap();
    let mut off = small("pendulum", 500, "3");
    off.push("adapt.mode=\"off\"".into());
    let mut pinned = small("pendulum", 500, "3");
    pinned.push("adapt.c=0.0".into());
    pinned.push("adapt.epsilon0=0.0".into());
    cmd_train(&cfg(&off), &dir.path().join("off")).unwrap();
    cmd_train(&cfg(&pinned), &dir.path().join("pinned")).unwrap();
    assert_eq!(
        read(&dir.path().join("off/trace_seed3.csv")),
        read(&dir.path().join("pinned/trace_seed3.csv"))
    );
    let a = load_checkpoint(&dir.path().join("off/ckpt_seed3_final.bin")).unwrap();
    let b = load_checkpoint(&dir.path().join("pinned/ckpt_seed3_final.bin")).unwrap();
    assert_eq!(a.bundle, b.bundle);
}

#[test]
fn train_then_sweep_in_separate_processes() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    let mut args = vec![
        "train",
        "--env",
        "pointmass",
        "--steps",
        "900",
        "--seeds",
        "0,1",
        "--out",
        run_s,
    ];
    let sets = ["sac.hidden=[8]", "sac.warmup_steps=100", "sac.batch_size=16"];
    for s in &sets {
        args.push("--set");
        args.push(s);
    }
    let out = a2p(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "config.echo",
        "trace_seed0.csv",
        "trace_seed1.csv",
        "ckpt_seed0_final.bin",
        "training_curve.svg",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let echo = fs::read_to_string(run.join("config.echo")).unwrap();
    assert!(echo.contains("hidden = [8]"));

    let out = a2p(&["sweep", "--run", run_s, "--episodes", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = fs::read_to_string(run.join("grid.csv")).unwrap();
    let rows: Vec<&str> = grid.lines().skip(1).collect();
    assert_eq!(rows.len(), 121);
    let nominal = rows.iter().find(|r| r.starts_with("pointmass,1,1,")).unwrap();
    assert!(nominal.ends_with(",1.000000"), "{nominal}");
    // 2 seeds × 4 policies × 1 episode
    assert!(rows.iter().all(|r| r.split(',').nth(6) == Some("8")));
    assert!(run.join("heatmap.svg").exists());
    let report = fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(report.contains("== train ==") && report.contains("== sweep =="));

    let out = a2p(&["sweep", "--run", run_s, "--axis", "friction", "--episodes", "1"]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(run.join("grid.csv")).unwrap().lines().count(), 12);
    assert!(run.join("sweep.svg").exists());
}

#[test]
fn missing_checkpoint_is_a_usage_error_naming_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    fs::write(run.join("config.echo"), "env = \"pendulum\"\nseeds = [4]\n").unwrap();
    let out = a2p(&["sweep", "--run", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed 4"));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("v");
    let out = a2p(&[
        "verify",
        "--games",
        "30",
        "--improvement-games",
        "10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("contraction: max ratio"), "{text}");
    assert!(text.contains("≤ γ"));
    assert!(out_dir.join("certificate.csv").exists());

    let bad = a2p(&["verify", "--games", "3", "--improvement-games", "1", "--inject-bug"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("first offending game seed"));
}

#[test]
fn usage_errors_exit_with_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("x");
    let o = o.to_str().unwrap();
    let out = a2p(&["train", "--env", "pendulum", "--mode", "fixed", "--out", o]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("adapt.fixed_epsilon"));
    let out = a2p(&["train", "--env", "pendulum", "--set", "adapt.beta=3", "--out", o]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
    assert_eq!(a2p(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(a2p(&["--help"]).status.code(), Some(0));
}

#[test]
fn ablation_emits_six_beta_rows_from_per_seed_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut sets = small("pointmass", 300, "0, 1");
    sets.push("sweep.episodes_per_cell=1".into());
    sets.push("sweep.masses=[0.5, 1.0]".into());
    sets.push("sweep.frictions=[1.0, 1.5]".into());
    sets.push("ablate.eval_episodes=2".into());
    let report = cmd_ablate(&cfg(&sets), dir.path()).unwrap();
    assert_eq!(report.beta_rows.len(), 6);
    assert_eq!(report.mode_rows.len(), 4);
    assert!(report
        .beta_rows
        .iter()
        .all(|r| r.runs.len() == 2 && r.epsilon_in_unit_interval()));
    let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    for beta in ["0 ", "0.1 ", "0.3 ", "0.5 ", "0.7 ", "1 "] {
        assert!(
            text.lines().any(|l| l.starts_with(beta) && l.contains(" ± ")),
            "row {beta}"
        );
    }
    // the adaptive mode row and the β = 0.5 row are the same runs
    let adaptive = &report.mode_rows[0];
    let half = report.beta_rows.iter().find(|r| r.beta == 0.5).unwrap();
    assert_eq!(adaptive.runs, half.runs);
    let csv = fs::read_to_string(dir.path().join("ablation_runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 10);
}
