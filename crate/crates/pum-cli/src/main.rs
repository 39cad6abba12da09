use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pum_cli::config::Overrides;
use pum_cli::{
    load_config, run_convergence, run_monte_carlo, run_scaling_validation, run_subsample_benchmark, CliError,
    CliResult, ConvergenceConfig, ExperimentReport, MonteCarloConfig, ScalingConfig, SubsampleConfig,
};
use serde::de::DeserializeOwned;

/// Experiments for perturbed utility model estimators.
///
/// Exit status: 0 on success, 2 for an invalid config, 3 for a dataset that
/// cannot be loaded, 1 otherwise.
#[derive(Parser)]
#[command(name = "pum", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-iteration KKT and parameter-error traces of one solver.
    Convergence(Common),
    /// Repeated-sampling MSE and win rates against the baseline.
    MonteCarlo(Common),
    /// Line-search optimum against the scaling-law prediction.
    Scaling(Common),
    /// Subsample benchmark against a full-data fit.
    Subsample(Common),
}

#[derive(Args)]
struct Common {
    /// TOML or JSON config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Root seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Replications, overriding the config.
    #[arg(long)]
    reps: Option<usize>,
}

impl Common {
    fn load<T: DeserializeOwned + Default + Overrides>(&self) -> CliResult<T> {
        let mut cfg: T = match &self.config {
            Some(p) => load_config(p)?,
            None => T::default(),
        };
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        if let Some(r) = self.reps {
            cfg.set_reps(r);
        }
        Ok(cfg)
    }

    fn config_dir(&self) -> PathBuf {
        self.config.as_deref().and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default()
    }
}

fn run(cli: Cli) -> CliResult<(ExperimentReport, PathBuf)> {
    match cli.command {
        Command::Convergence(c) => Ok((run_convergence(&c.load::<ConvergenceConfig>()?)?, c.out)),
        Command::MonteCarlo(c) => Ok((run_monte_carlo(&c.load::<MonteCarloConfig>()?)?, c.out)),
        Command::Scaling(c) => Ok((run_scaling_validation(&c.load::<ScalingConfig>()?)?, c.out)),
        Command::Subsample(c) => {
            let mut cfg = c.load::<SubsampleConfig>()?;
            cfg.resolve_paths(&c.config_dir());
            Ok((run_subsample_benchmark(&cfg)?, c.out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli).and_then(|(report, out)| {
        report.write(&out)?;
        eprintln!("{}: {} rows written to {}", report.experiment_id, report.rows.len(), out.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pum: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
