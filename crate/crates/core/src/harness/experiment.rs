use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{write_csv, write_dat, write_json, write_trajectory_dat};
use crate::aggregators::{AggregatorConfig, Rule};
use crate::attacks::{AttackKind, AttackSpec};
use crate::engine::{run_trajectory, Optimizer, RunConfig, Schedule, Trajectory, SCHEMA_VERSION};
use crate::error::{ensure, Result};
use crate::objectives::{ObjectiveSpec, OracleConfig};

/// Candidate `γ₀` values: `{1, 2, 5} × 10^{-3..-1}` and `1`.
pub const DEFAULT_GRID: [f64; 10] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];

pub const ABLATION_BETAS: [f64; 7] = [0.0, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99];
pub const ABLATION_GAMMAS: [f64; 6] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_prefix")]
    pub prefix_iterations: usize,
}

fn default_grid() -> Vec<f64> {
    DEFAULT_GRID.to_vec()
}

fn default_prefix() -> usize {
    1000
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            grid: default_grid(),
            prefix_iterations: default_prefix(),
        }
    }
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

/// A base run crossed with attacks, aggregators, optimizers and seeds.
///
/// Attack parameters other than the kind come from `base.attack`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub base: RunConfig,
    pub seeds: Vec<u64>,
    pub attacks: Vec<AttackKind>,
    pub aggregators: Vec<AggregatorConfig>,
    pub optimizers: Vec<Optimizer>,
    /// Tune `γ₀` per cell on the first seed; otherwise `base.schedule.gamma0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub attack: AttackKind,
    pub aggregator: AggregatorConfig,
    pub optimizer: Optimizer,
}

impl Cell {
    pub fn config(&self, base: &RunConfig, seed: u64, gamma0: f64) -> RunConfig {
        let mut c = base.clone();
        c.attack = AttackSpec {
            kind: self.attack,
            ..base.attack
        };
        c.aggregator = self.aggregator;
        c.optimizer = self.optimizer;
        c.seed = seed;
        c.schedule.gamma0 = gamma0;
        c
    }

    pub fn aggregator_label(&self, base: &RunConfig) -> String {
        self.aggregator.spec(base.n, base.byzantine).label()
    }
}

impl ExperimentManifest {
    pub fn validate(&self) -> Result<()> {
        ensure(self.schema_version == SCHEMA_VERSION, || {
            format!("unsupported schema_version {}", self.schema_version)
        })?;
        ensure(!self.seeds.is_empty(), || {
            "manifest needs at least one seed".into()
        })?;
        ensure(
            !self.attacks.is_empty() && !self.aggregators.is_empty() && !self.optimizers.is_empty(),
            || "manifest axes must be non-empty".into(),
        )?;
        if let Some(t) = &self.tuning {
            ensure(!t.grid.is_empty(), || "tuning grid is empty".into())?;
            ensure(t.prefix_iterations >= 1, || {
                "tuning prefix must be >= 1".into()
            })?;
        }
        for cell in self.cells() {
            for &seed in &self.seeds {
                cell.config(&self.base, seed, self.base.schedule.gamma0)
                    .validate()?;
            }
        }
        Ok(())
    }

    /// Cells in attack-major, then aggregator, then optimizer order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &attack in &self.attacks {
            for &aggregator in &self.aggregators {
                for &optimizer in &self.optimizers {
                    cells.push(Cell {
                        attack,
                        aggregator,
                        optimizer,
                    });
                }
            }
        }
        cells
    }
}

/// The synthetic quartic matrix: BF, Mimic and ALIE against NNM-composed
/// gm, Krum and cwmed, for both baselines and the normalized method, with
/// `γ₀` tuned per cell.
pub fn table1_manifest(first_seed: u64) -> ExperimentManifest {
    let base = RunConfig {
        schema_version: SCHEMA_VERSION,
        objective: ObjectiveSpec::Quartic { dim: 10 },
        oracle: OracleConfig::synthetic(),
        n: 20,
        byzantine: 3,
        attack: AttackSpec::none(),
        aggregator: AggregatorConfig::new(Rule::Gm, true),
        schedule: Schedule::practical_decay(0.1, 0.9),
        optimizer: Optimizer::ByzNsgdm,
        iterations: 3000,
        seed: first_seed,
        x0: None,
        log_every: 10,
        zero_init_momentum: false,
    };
    ExperimentManifest {
        schema_version: SCHEMA_VERSION,
        base,
        seeds: (0..3).map(|i| first_seed.wrapping_add(i)).collect(),
        attacks: vec![AttackKind::BitFlip, AttackKind::Mimic, AttackKind::Alie],
        aggregators: [Rule::Gm, Rule::Krum, Rule::Cwmed]
            .into_iter()
            .map(|r| AggregatorConfig::new(r, true))
            .collect(),
        optimizers: vec![
            Optimizer::Baseline,
            Optimizer::BaselineDecay,
            Optimizer::ByzNsgdm,
        ],
        tuning: Some(TuningConfig::default()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneScore {
    pub gamma0: f64,
    /// `None` when the prefix run diverged.
    pub final_grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub gamma0: f64,
    pub scores: Vec<TuneScore>,
}

/// Runs `config` for `prefix_iterations` with every grid value and keeps
/// the one with the smallest final gradient norm (ties go to the earlier
/// candidate, divergence counts as infinite).
pub fn tune(config: &RunConfig, tuning: &TuningConfig) -> Result<TuneOutcome> {
    ensure(!tuning.grid.is_empty(), || "tuning grid is empty".into())?;
    let mut scores = Vec::with_capacity(tuning.grid.len());
    let mut best = (f64::INFINITY, tuning.grid[0]);
    for &gamma0 in &tuning.grid {
        let mut c = config.clone();
        c.schedule.gamma0 = gamma0;
        c.iterations = tuning.prefix_iterations;
        c.log_every = tuning.prefix_iterations;
        let t = run_trajectory(&c)?;
        let score = t.final_grad_norm();
        if score < best.0 {
            best = (score, gamma0);
        }
        scores.push(TuneScore {
            gamma0,
            final_grad_norm: score.is_finite().then_some(score),
        });
    }
    Ok(TuneOutcome {
        gamma0: best.1,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub attack: String,
    pub aggregator: String,
    pub optimizer: String,
    pub seed: u64,
    pub gamma0: f64,
    pub status: RunStatus,
    /// Last logged gradient norm; `None` for diverged runs.
    pub final_grad_norm: Option<f64>,
    pub min_grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diverged_at: Option<usize>,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub attack: String,
    pub aggregator: String,
    pub optimizer: String,
    pub gamma0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuneOutcome>,
    pub runs: usize,
    pub diverged: usize,
    /// Mean and sample standard deviation of the final gradient norm over
    /// runs that did not diverge.
    pub mean_final_grad_norm: Option<f64>,
    pub std_final_grad_norm: Option<f64>,
}

impl CellSummary {
    /// Mean final gradient norm, infinite if any run diverged.
    pub fn score(&self) -> f64 {
        match (self.diverged, self.mean_final_grad_norm) {
            (0, Some(m)) => m,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub schema_version: u32,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunSummary>,
}

impl SummaryTable {
    pub fn cell(&self, attack: &str, aggregator: &str, optimizer: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.attack == attack && c.aggregator == aggregator && c.optimizer == optimizer)
    }

    /// Fixed-width table with the final gradient norm in units of `1e-6`.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<10} {:<12} {:<15} {:>10} {:>22}\n",
            "attack", "aggregator", "optimizer", "gamma0", "final grad (1e-6)"
        );
        for c in &self.cells {
            let value = match (c.mean_final_grad_norm, c.std_final_grad_norm) {
                _ if c.diverged == c.runs => "diverged".to_string(),
                (Some(m), Some(s)) => format!("{:.2} ± {:.2}", m * 1e6, s * 1e6),
                (Some(m), None) => format!("{:.2}", m * 1e6),
                _ => "n/a".to_string(),
            };
            let marker = if c.diverged > 0 && c.diverged < c.runs {
                format!(" ({} diverged)", c.diverged)
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{:<10} {:<12} {:<15} {:>10} {:>22}{marker}\n",
                c.attack, c.aggregator, c.optimizer, c.gamma0, value
            ));
        }
        out
    }
}

pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// Output options shared by the experiment drivers.
#[derive(Debug, Clone, Copy, Default)]
pub struct OutputOptions<'a> {
    pub dir: Option<&'a Path>,
    /// Also write gnuplot `.dat` files.
    pub plot: bool,
}

pub fn run_file_stem(attack: &str, aggregator: &str, optimizer: &str, seed: u64) -> String {
    format!("{attack}_{aggregator}_{optimizer}_seed{seed}")
}

/// Writes the trajectory of one run and returns its summary line.
fn record_run(
    cell: &Cell,
    base: &RunConfig,
    seed: u64,
    gamma0: f64,
    trajectory: &Trajectory,
    out: OutputOptions<'_>,
) -> Result<RunSummary> {
    let aggregator = cell.aggregator_label(base);
    let stem = run_file_stem(cell.attack.name(), &aggregator, cell.optimizer.name(), seed);
    if let Some(dir) = out.dir {
        write_csv(&dir.join(format!("{stem}.csv")), &trajectory.records)?;
        if out.plot {
            write_trajectory_dat(&dir.join(format!("{stem}.dat")), &trajectory.records)?;
        }
    }
    let diverged = trajectory.divergence.is_some();
    Ok(RunSummary {
        attack: cell.attack.name().into(),
        aggregator,
        optimizer: cell.optimizer.name().into(),
        seed,
        gamma0,
        status: if diverged {
            RunStatus::Diverged
        } else {
            RunStatus::Ok
        },
        final_grad_norm: if diverged {
            None
        } else {
            trajectory.last().map(|r| r.grad_norm)
        },
        min_grad_norm: trajectory.min_grad_norm(),
        diverged_at: trajectory.divergence.as_ref().map(|d| d.iteration),
        csv: format!("{stem}.csv"),
    })
}

/// Expands and runs every cell of the manifest on the current rayon pool.
///
/// Results do not depend on the pool size: every run owns its RNG streams
/// and results are collected in cell order.
pub fn run_manifest(manifest: &ExperimentManifest, out: OutputOptions<'_>) -> Result<SummaryTable> {
    manifest.validate()?;
    if let Some(dir) = out.dir {
        std::fs::create_dir_all(dir)?;
    }
    let base = &manifest.base;
    let cells = manifest.cells();

    let tuned: Vec<Option<TuneOutcome>> = match &manifest.tuning {
        Some(tuning) => cells
            .par_iter()
            .map(|cell| {
                let outcome = tune(
                    &cell.config(base, manifest.seeds[0], base.schedule.gamma0),
                    tuning,
                )?;
                info!(
                    "tuned {} / {} / {}: gamma0 = {}",
                    cell.attack.name(),
                    cell.aggregator_label(base),
                    cell.optimizer.name(),
                    outcome.gamma0
                );
                Ok(Some(outcome))
            })
            .collect::<Result<_>>()?,
        None => vec![None; cells.len()],
    };
    let gammas: Vec<f64> = tuned
        .iter()
        .map(|t| t.as_ref().map_or(base.schedule.gamma0, |t| t.gamma0))
        .collect();

    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| manifest.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let runs: Vec<RunSummary> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let config = cells[c].config(base, seed, gammas[c]);
            let trajectory = run_trajectory(&config)?;
            record_run(&cells[c], base, seed, gammas[c], &trajectory, out)
        })
        .collect::<Result<_>>()?;

    let per_cell = manifest.seeds.len();
    let summaries = cells
        .iter()
        .zip(tuned)
        .enumerate()
        .map(|(i, (cell, tuning))| {
            let cell_runs = &runs[i * per_cell..(i + 1) * per_cell];
            let finals: Vec<f64> = cell_runs.iter().filter_map(|r| r.final_grad_norm).collect();
            let (mean, std) = mean_std(&finals);
            CellSummary {
                attack: cell.attack.name().into(),
                aggregator: cell.aggregator_label(base),
                optimizer: cell.optimizer.name().into(),
                gamma0: gammas[i],
                tuning,
                runs: cell_runs.len(),
                diverged: cell_runs.len() - finals.len(),
                mean_final_grad_norm: mean,
                std_final_grad_norm: std,
            }
        })
        .collect();

    let table = SummaryTable {
        schema_version: SCHEMA_VERSION,
        cells: summaries,
        runs,
    };
    if let Some(dir) = out.dir {
        write_json(&dir.join("summary.json"), &table)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub momentum_beta: f64,
    pub gamma0: f64,
    pub runs: usize,
    pub diverged: usize,
    pub mean_final_grad_norm: Option<f64>,
}

/// Final gradient norm of `base` over a `β × γ₀` grid, averaged over seeds.
pub fn ablation(
    base: &RunConfig,
    betas: &[f64],
    gammas: &[f64],
    seeds: &[u64],
    out: OutputOptions<'_>,
) -> Result<Vec<AblationPoint>> {
    ensure(!seeds.is_empty(), || {
        "ablation needs at least one seed".into()
    })?;
    let grid: Vec<(f64, f64)> = betas
        .iter()
        .flat_map(|&b| gammas.iter().map(move |&g| (b, g)))
        .collect();
    for &(beta, gamma0) in &grid {
        let mut c = base.clone();
        c.schedule.momentum_beta = beta;
        c.schedule.gamma0 = gamma0;
        c.validate()?;
    }
    let points: Vec<AblationPoint> = grid
        .par_iter()
        .map(|&(beta, gamma0)| {
            let mut finals = Vec::new();
            for &seed in seeds {
                let mut c = base.clone();
                c.schedule.momentum_beta = beta;
                c.schedule.gamma0 = gamma0;
                c.seed = seed;
                c.log_every = c.iterations.max(1);
                let t = run_trajectory(&c)?;
                if t.divergence.is_none() {
                    finals.push(t.final_grad_norm());
                }
            }
            Ok(AblationPoint {
                momentum_beta: beta,
                gamma0,
                runs: seeds.len(),
                diverged: seeds.len() - finals.len(),
                mean_final_grad_norm: mean_std(&finals).0,
            })
        })
        .collect::<Result<_>>()?;
    if let Some(dir) = out.dir {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("ablation.json"), &points)?;
        if out.plot {
            // Diverged points get NaN, which gnuplot leaves blank in heatmaps.
            let rows: Vec<Vec<f64>> = points
                .iter()
                .map(|p| {
                    vec![
                        p.momentum_beta,
                        p.gamma0,
                        p.mean_final_grad_norm.unwrap_or(f64::NAN),
                    ]
                })
                .collect();
            write_dat(
                &dir.join("ablation.dat"),
                &["beta", "gamma0", "final_grad_norm"],
                &rows,
            )?;
        }
    }
    Ok(points)
}
