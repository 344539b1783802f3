use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use byzopt::engine::{run_trajectory, RunConfig};
use byzopt::harness::{
    ablation, load_config, load_json, run_file_stem, run_manifest, table1_manifest, tune,
    verify_suite, write_csv, write_json, write_trajectory_dat, ExperimentManifest, OutputOptions,
    SuiteOptions, TuningConfig, ABLATION_BETAS, ABLATION_GAMMAS,
};
use byzopt::{Error, Result};

#[derive(Parser)]
#[command(
    name = "byzopt",
    version,
    about = "Byzantine-robust normalized momentum SGD simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the seed (runs) or the first seed (sweeps, table1, ablation).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads for independent runs and checks (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Override the logging interval of every run.
    #[arg(long, global = true)]
    log_every: Option<usize>,

    /// Also write gnuplot data files.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its trajectory CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every cell of an experiment manifest.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Pick gamma0 for a configuration from the tuning grid.
    Tune {
        #[arg(long)]
        config: PathBuf,
        /// Iterations per candidate.
        #[arg(long, default_value_t = 1000)]
        prefix: usize,
    },
    /// Run all numerical checks and write one report per check.
    Verify {
        /// Smaller instance counts for a fast smoke check.
        #[arg(long)]
        quick: bool,
    },
    /// Reproduce the synthetic quartic attack/aggregator/optimizer matrix.
    Table1,
    /// Sweep momentum and gamma0 on a base configuration.
    Ablation {
        /// Base run; defaults to the table1 setting under bit flipping.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of seeds per grid point.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            error!("cannot start thread pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(code) => code,
        Err(e @ Error::Config(_)) | Err(e @ Error::Json(_)) => {
            error!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn apply_overrides(cli: &Cli, config: &mut RunConfig) {
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(every) = cli.log_every {
        config.log_every = every;
    }
}

fn output(cli: &Cli) -> Result<OutputOptions<'_>> {
    std::fs::create_dir_all(&cli.out)?;
    Ok(OutputOptions {
        dir: Some(&cli.out),
        plot: cli.plot,
    })
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run { config } => run_single(cli, config),
        Command::Sweep { config } => {
            let mut manifest: ExperimentManifest = load_json(config)?;
            apply_overrides(cli, &mut manifest.base);
            if let Some(seed) = cli.seed {
                let count = manifest.seeds.len() as u64;
                manifest.seeds = (0..count).map(|i| seed.wrapping_add(i)).collect();
            }
            sweep(cli, &manifest)
        }
        Command::Tune { config, prefix } => {
            let mut c = load_config(config)?;
            apply_overrides(cli, &mut c);
            let outcome = tune(
                &c,
                &TuningConfig {
                    prefix_iterations: *prefix,
                    ..TuningConfig::default()
                },
            )?;
            output(cli)?;
            write_json(&cli.out.join("tune.json"), &outcome)?;
            println!("gamma0 = {}", outcome.gamma0);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { quick } => {
            let seed = cli.seed.unwrap_or(0);
            let opts = if *quick {
                SuiteOptions::quick(seed)
            } else {
                SuiteOptions::full(seed)
            };
            output(cli)?;
            let entries = verify_suite(&opts)?;
            let mut failed = 0;
            for e in &entries {
                write_json(&cli.out.join(e.file_name()), e)?;
                let status = if e.ok() { "PASS" } else { "FAIL" };
                println!(
                    "{status} {} ({} instances, {} violations)",
                    e.report.name, e.report.instances, e.report.violations
                );
                failed += usize::from(!e.ok());
            }
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Table1 => {
            let mut manifest = table1_manifest(cli.seed.unwrap_or(0));
            if let Some(every) = cli.log_every {
                manifest.base.log_every = every;
            }
            sweep(cli, &manifest)
        }
        Command::Ablation { config, seeds } => {
            let mut base = match config {
                Some(path) => load_config(path)?,
                None => {
                    let mut m = table1_manifest(0);
                    m.base.attack.kind = byzopt::attacks::AttackKind::BitFlip;
                    m.base
                }
            };
            apply_overrides(cli, &mut base);
            let seed_list: Vec<u64> = (0..*seeds).map(|i| base.seed.wrapping_add(i)).collect();
            let points = ablation(
                &base,
                &ABLATION_BETAS,
                &ABLATION_GAMMAS,
                &seed_list,
                output(cli)?,
            )?;
            println!("{:>6} {:>8} {:>24}", "beta", "gamma0", "final grad norm");
            for p in &points {
                let value = p
                    .mean_final_grad_norm
                    .map_or_else(|| "diverged".to_string(), |g| format!("{g:.4e}"));
                println!("{:>6} {:>8} {value:>24}", p.momentum_beta, p.gamma0);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_single(cli: &Cli, path: &Path) -> Result<ExitCode> {
    let mut config = load_config(path)?;
    apply_overrides(cli, &mut config);
    config.validate()?;
    let trajectory = run_trajectory(&config)?;
    let stem = run_file_stem(
        config.attack.kind.name(),
        &config.aggregator_spec().label(),
        config.optimizer.name(),
        config.seed,
    );
    output(cli)?;
    let csv = cli.out.join(format!("{stem}.csv"));
    write_csv(&csv, &trajectory.records)?;
    if cli.plot {
        write_trajectory_dat(&cli.out.join(format!("{stem}.dat")), &trajectory.records)?;
    }
    match &trajectory.divergence {
        Some(d) => warn!("run diverged at iteration {}", d.iteration),
        None => info!(
            "final grad norm {:.6e}, min {:.6e}",
            trajectory.final_grad_norm(),
            trajectory.min_grad_norm()
        ),
    }
    println!("{}", csv.display());
    Ok(ExitCode::SUCCESS)
}

fn sweep(cli: &Cli, manifest: &ExperimentManifest) -> Result<ExitCode> {
    let table = run_manifest(manifest, output(cli)?)?;
    print!("{}", table.render());
    Ok(ExitCode::SUCCESS)
}
