use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::load_checkpoint;
use super::config::ExperimentConfig;
use super::train::checkpoint_path;
use super::{eval_reset_seeds, mean, normalize, plot, run_pool, sample_std};
use crate::env::{EnvId, EnvParams};
use crate::error::{Error, Result};
use crate::nn::GaussianPolicy;
use crate::sac::evaluate_policy;

/// Which multipliers a sweep varies. One-parameter sweeps hold the other
/// multiplier at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Grid,
    Mass,
    Friction,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" | "both" => Ok(SweepAxis::Grid),
            "mass" => Ok(SweepAxis::Mass),
            "friction" => Ok(SweepAxis::Friction),
            other => Err(Error::config(format!("axis: unknown `{other}` (grid, mass, friction)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub masses: Vec<f64>,
    pub frictions: Vec<f64>,
    pub episodes_per_cell: usize,
    pub policies_per_seed: usize,
    pub eval_seed: u64,
    pub workers: usize,
    /// Normalization anchor; `None` uses this grid's own nominal cell.
    pub anchor: Option<f64>,
    /// Label written to the `variant` column of `grid.csv`.
    pub variant: String,
}

impl SweepOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            masses: cfg.sweep.masses.clone(),
            frictions: cfg.sweep.frictions.clone(),
            episodes_per_cell: cfg.sweep.episodes_per_cell,
            policies_per_seed: cfg.sweep.policies_per_seed,
            eval_seed: cfg.sweep.eval_seed,
            workers: cfg.workers,
            anchor: None,
            variant: cfg.adapt.mode.as_str().to_string(),
        }
    }

    pub fn with_axis(mut self, axis: SweepAxis) -> Self {
        match axis {
            SweepAxis::Grid => {}
            SweepAxis::Mass => self.frictions = vec![1.0],
            SweepAxis::Friction => self.masses = vec![1.0],
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub mass_rel: f64,
    pub friction_rel: f64,
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
    pub normalized: f64,
    /// Raw episode returns, policy-major.
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub env: EnvId,
    pub variant: String,
    pub masses: Vec<f64>,
    pub frictions: Vec<f64>,
    /// Row-major: mass index outer, friction index inner.
    pub cells: Vec<CellResult>,
    pub anchor: f64,
}

impl EvalGrid {
    pub fn cell(&self, i: usize, j: usize) -> &CellResult {
        &self.cells[i * self.frictions.len() + j]
    }

    /// The cell at multipliers (1, 1), if the grid contains it.
    pub fn nominal(&self) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| (c.mass_rel - 1.0).abs() < 1e-9 && (c.friction_rel - 1.0).abs() < 1e-9)
    }

    /// Recomputes every normalized value against `anchor`.
    pub fn renormalize(&mut self, anchor: f64) {
        self.anchor = anchor;
        for c in &mut self.cells {
            c.normalized = normalize(c.mean, anchor);
        }
    }

    pub const CSV_HEADER: &'static str = "env,mass_rel,friction_rel,variant,mean_return,std_return,n,normalized";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let std = c.std.map(|s| format!("{s:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{},{:.6}",
                self.env, c.mass_rel, c.friction_rel, self.variant, c.mean, std, c.n, c.normalized
            );
        }
        out
    }

    pub fn heatmap(&self) -> String {
        let values: Vec<Vec<f64>> = (0..self.masses.len())
            .map(|i| (0..self.frictions.len()).map(|j| self.cell(i, j).normalized).collect())
            .collect();
        plot::heatmap(
            &format!("Normalized return ({}, {})", self.env, self.variant),
            &self.masses,
            &self.frictions,
            &values,
        )
    }
}

/// Evaluates every policy on every cell with the deterministic mean action.
/// All cells and policies share one list of reset seeds.
pub fn evaluate_grid(env: EnvId, policies: &[GaussianPolicy], opts: &SweepOptions) -> Result<EvalGrid> {
    if policies.is_empty() {
        return Err(Error::config("sweep: no policies to evaluate"));
    }
    if opts.episodes_per_cell == 0 {
        return Err(Error::config("sweep: episodes_per_cell must be positive"));
    }
    let nominal = EnvParams::nominal(env);
    let mut params = Vec::with_capacity(opts.masses.len() * opts.frictions.len());
    for &m in &opts.masses {
        for &f in &opts.frictions {
            params.push(nominal.with_params(m, f)?);
        }
    }
    let seeds = eval_reset_seeds(opts.eval_seed, opts.episodes_per_cell);
    let results = run_pool(opts.workers, params.len(), |k| -> Result<CellResult> {
        let p = &params[k];
        let mut returns = Vec::with_capacity(policies.len() * seeds.len());
        for pol in policies {
            returns.extend(evaluate_policy(pol, p, &seeds)?);
        }
        Ok(CellResult {
            mass_rel: p.mass_rel,
            friction_rel: p.friction_rel,
            mean: mean(&returns),
            std: sample_std(&returns),
            n: returns.len(),
            normalized: f64::NAN,
            returns,
        })
    });
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut grid = EvalGrid {
        env,
        variant: opts.variant.clone(),
        masses: opts.masses.clone(),
        frictions: opts.frictions.clone(),
        cells,
        anchor: f64::NAN,
    };
    let anchor = match opts.anchor {
        Some(a) => a,
        None => grid
            .nominal()
            .map(|c| c.mean)
            .ok_or_else(|| Error::config("sweep: grid lacks the nominal cell (1, 1); pass an explicit anchor"))?,
    };
    grid.renormalize(anchor);
    Ok(grid)
}

/// Episode numbers of the `ckpt_seed<seed>_ep<n>.bin` files in `run_dir`, sorted.
pub fn episode_checkpoints(run_dir: &Path, seed: u64) -> Result<Vec<usize>> {
    let prefix = format!("ckpt_seed{seed}_ep");
    let mut eps = Vec::new();
    for entry in fs::read_dir(run_dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(n) = name
            .strip_prefix(&prefix)
            .and_then(|r| r.strip_suffix(".bin"))
            .and_then(|r| r.parse::<usize>().ok())
        {
            eps.push(n);
        }
    }
    eps.sort_unstable();
    Ok(eps)
}

/// Checkpoint paths used for one seed: `count` episode snapshots drawn at
/// random without replacement, or the final checkpoint when there are no
/// snapshots. With fewer snapshots than `count`, all of them are used.
pub fn pick_checkpoints(run_dir: &Path, seed: u64, count: usize, draw_seed: u64) -> Result<Vec<PathBuf>> {
    let eps = episode_checkpoints(run_dir, seed)?;
    if eps.is_empty() {
        let fin = checkpoint_path(run_dir, seed, "final");
        if !fin.exists() {
            return Err(Error::MissingCheckpoint { seed, path: fin });
        }
        return Ok(vec![fin]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(8);
    let k = count.min(eps.len());
    let mut idx = sample(&mut rng, eps.len(), k).into_vec();
    idx.sort_unstable();
    Ok(idx
        .into_iter()
        .map(|i| checkpoint_path(run_dir, seed, &format!("ep{}", eps[i])))
        .collect())
}

/// Reads the run's configuration echo.
pub fn load_run_config(run_dir: &Path) -> Result<ExperimentConfig> {
    let path = run_dir.join("config.echo");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::config(format!("{}: {e} (is this a run directory?)", path.display())))?;
    ExperimentConfig::from_toml(&text)
}

/// Loads the selected policies for every seed of a run.
pub fn load_policies(run_dir: &Path, seeds: &[u64], opts: &SweepOptions) -> Result<Vec<GaussianPolicy>> {
    let mut out = Vec::new();
    for &seed in seeds {
        for path in pick_checkpoints(run_dir, seed, opts.policies_per_seed, opts.eval_seed)? {
            out.push(load_checkpoint(&path)?.bundle.actor);
        }
    }
    Ok(out)
}

/// Evaluates a run directory's checkpoints and writes `grid.csv`,
/// `heatmap.svg` (or `sweep.svg` for one-parameter sweeps) and the sweep
/// section of `report.txt`.
pub fn cmd_sweep(run_dir: &Path, opts: &SweepOptions) -> Result<EvalGrid> {
    let cfg = load_run_config(run_dir)?;
    let policies = load_policies(run_dir, &cfg.seeds, opts)?;
    let grid = evaluate_grid(cfg.env, &policies, opts)?;
    fs::write(run_dir.join("grid.csv"), grid.to_csv())?;
    render_sweep_plot(run_dir)?;
    super::write_report_section(run_dir, "sweep", &sweep_report(&grid))?;
    Ok(grid)
}

pub fn sweep_report(grid: &EvalGrid) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "env {} variant {}: {} cells, {} episodes per cell, anchor {:.3}",
        grid.env,
        grid.variant,
        grid.cells.len(),
        grid.cells.first().map_or(0, |c| c.n),
        grid.anchor
    );
    let best = grid.cells.iter().max_by(|a, b| a.mean.total_cmp(&b.mean));
    let worst = grid.cells.iter().min_by(|a, b| a.mean.total_cmp(&b.mean));
    if let (Some(b), Some(w)) = (best, worst) {
        let _ = writeln!(s, "best cell  m={} f={}: {:.3}", b.mass_rel, b.friction_rel, b.mean);
        let _ = writeln!(s, "worst cell m={} f={}: {:.3}", w.mass_rel, w.friction_rel, w.mean);
    }
    let norm: Vec<f64> = grid.cells.iter().map(|c| c.normalized).collect();
    let _ = writeln!(s, "mean normalized return: {:.4}", mean(&norm));
    s
}

/// Regenerates the sweep figure from `grid.csv`.
pub fn render_sweep_plot(run_dir: &Path) -> Result<()> {
    let path = run_dir.join("grid.csv");
    let corrupt = |reason: String| Error::Corrupt {
        path: path.clone(),
        reason,
    };
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| corrupt(e.to_string()))?;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    let mut label = String::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| corrupt(e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| corrupt(format!("bad field {k}")))
        };
        rows.push((num(1)?, num(2)?, num(7)?));
        if label.is_empty() {
            label = format!("{}, {}", rec.get(0).unwrap_or(""), rec.get(3).unwrap_or(""));
        }
    }
    let mut masses: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut frictions: Vec<f64> = rows.iter().map(|r| r.1).collect();
    for v in [&mut masses, &mut frictions] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    if masses.len() > 1 && frictions.len() > 1 {
        let mut values = vec![vec![f64::NAN; frictions.len()]; masses.len()];
        for &(m, f, v) in &rows {
            let i = masses.iter().position(|&x| x == m).unwrap_or(0);
            let j = frictions.iter().position(|&x| x == f).unwrap_or(0);
            values[i][j] = v;
        }
        fs::write(
            run_dir.join("heatmap.svg"),
            plot::heatmap(&format!("Normalized return ({label})"), &masses, &frictions, &values),
        )?;
    } else {
        let (x_label, pts): (&str, Vec<(f64, f64)>) = if masses.len() > 1 {
            ("mass multiplier", rows.iter().map(|r| (r.0, r.2)).collect())
        } else {
            ("friction multiplier", rows.iter().map(|r| (r.1, r.2)).collect())
        };
        fs::write(
            run_dir.join("sweep.svg"),
            plot::line_chart(
                &format!("Normalized return ({label})"),
                x_label,
                "normalized return",
                &[(label.clone(), pts)],
            ),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sac::{AgentBundle, SacConfig};

    fn policy(seed: u64) -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SacConfig {
            hidden: vec![8],
            ..SacConfig::default()
        };
        AgentBundle::new(
            EnvId::PointMass.obs_dim(),
            EnvId::PointMass.action_dim(),
            &cfg,
            &mut rng,
        )
        .unwrap()
        .actor
    }

    fn opts(masses: Vec<f64>, frictions: Vec<f64>) -> SweepOptions {
        let mut o = SweepOptions::from_config(&ExperimentConfig::new(EnvId::PointMass));
        o.masses = masses;
        o.frictions = frictions;
        o.episodes_per_cell = 2;
        o
    }

    #[test]
    fn default_grid_has_121_cells_and_nominal_anchor() {
        let o = SweepOptions::from_config(&ExperimentConfig::new(EnvId::PointMass));
        assert_eq!(o.masses.len() * o.frictions.len(), 121);
        let o = SweepOptions {
            episodes_per_cell: 1,
            ..o
        };
        let g = evaluate_grid(EnvId::PointMass, &[policy(1)], &o).unwrap();
        assert_eq!(g.cells.len(), 121);
        assert_eq!(g.nominal().unwrap().normalized, 1.0);
    }

    #[test]
    fn cell_count_multiplies_out() {
        let pols = vec![policy(1), policy(2), policy(3)];
        let g = evaluate_grid(EnvId::PointMass, &pols, &opts(vec![0.5, 1.0], vec![1.0])).unwrap();
        assert!(g.cells.iter().all(|c| c.n == 6 && c.returns.len() == 6));
    }

    #[test]
    fn workers_do_not_change_results() {
        let pols = vec![policy(4)];
        let mut o = opts(vec![0.5, 1.0, 1.5], vec![0.5, 1.0]);
        let a = evaluate_grid(EnvId::PointMass, &pols, &o).unwrap();
        o.workers = 3;
        let b = evaluate_grid(EnvId::PointMass, &pols, &o).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_without_nominal_needs_an_anchor() {
        let mut o = opts(vec![0.5], vec![0.5]);
        assert!(evaluate_grid(EnvId::PointMass, &[policy(1)], &o).is_err());
        o.anchor = Some(-10.0);
        let g = evaluate_grid(EnvId::PointMass, &[policy(1)], &o).unwrap();
        assert_eq!(g.anchor, -10.0);
    }

    #[test]
    fn missing_checkpoint_names_the_seed() {
        let dir = tempfile::tempdir().unwrap();
        match pick_checkpoints(dir.path(), 7, 4, 0) {
            Err(Error::MissingCheckpoint { seed, .. }) => assert_eq!(seed, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn policy_draw_is_seeded_and_without_replacement() {
        let dir = tempfile::tempdir().unwrap();
        for ep in [3, 4, 5, 6, 7, 8, 9, 10, 11, 12] {
            fs::write(dir.path().join(format!("ckpt_seed1_ep{ep}.bin")), b"").unwrap();
        }
        let a = pick_checkpoints(dir.path(), 1, 4, 9).unwrap();
        assert_eq!(a, pick_checkpoints(dir.path(), 1, 4, 9).unwrap());
        let mut d = a.clone();
        d.dedup();
        assert_eq!(d.len(), 4);
        assert_eq!(pick_checkpoints(dir.path(), 1, 20, 9).unwrap().len(), 10);
    }

    #[test]
    fn axis_parsing() {
        let o = opts(vec![0.5, 1.0], vec![0.5, 1.0]);
        assert_eq!(o.clone().with_axis("mass".parse().unwrap()).frictions, vec![1.0]);
        assert_eq!(o.with_axis(SweepAxis::Friction).masses, vec![1.0]);
        assert!("tilt".parse::<SweepAxis>().is_err());
    }
}
