use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{compare, pareto, run, verify};
use crate::config::{Experiment, ExperimentConfig, SeedSpec};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "flexgt",
    version,
    about = "Decentralized snapshot gradient tracking experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One CSV and JSON trajectory per algorithm and seed.
    Run(CommonArgs),
    /// Residual curves of two or more algorithms on shared seeds.
    Compare(CommonArgs),
    /// Empirical and analytic costs over an (alpha, beta) grid.
    Pareto(CommonArgs),
    /// Property and theory checks; exits with 2 if any gating check fails.
    Verify(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use seeds 0..N instead of the configured seeds.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Multiply every stepsize, including the one used by verify.
    #[arg(long)]
    pub stepsize_scale: Option<f64>,
}

impl CommonArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if let Some(n) = self.seeds {
            cfg.seeds = SeedSpec::Count(n);
        }
        if let Some(s) = self.stepsize_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CliError::invalid(
                    "--stepsize-scale",
                    "must be positive and finite",
                ));
            }
            cfg.verify.stepsize_scale *= s;
            for a in &mut cfg.algorithms {
                a.stepsize_scale *= s;
            }
        }
        Ok(cfg)
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Run(a) | Command::Compare(a) | Command::Pareto(a) | Command::Verify(a) => a,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(CliError::invalid("--threads", "must be at least 1"));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::invalid("--threads", e.to_string()))?;
    let cfg = args.load()?;
    let out = cfg.out_dir();
    let exp = Experiment::prepare(cfg)?;

    pool.install(|| match &cli.command {
        Command::Run(_) => {
            let files = run::cmd_run(&exp, &out)?;
            log::info!("wrote {} files to {}", files.len(), out.display());
            Ok(())
        }
        Command::Compare(_) => {
            let report = compare::cmd_compare(&exp, &out)?;
            for a in &report.algorithms {
                log::info!("{}: final residual {:.3e}", a.algorithm, a.final_residual);
            }
            Ok(())
        }
        Command::Pareto(_) => {
            let report = pareto::cmd_pareto(&exp, &out)?;
            log::info!(
                "{} cells, empirical frontier {:?}, overlap with analytic {:.2}",
                report.empirical.len(),
                report.empirical_frontier,
                report.frontier_overlap
            );
            Ok(())
        }
        Command::Verify(_) => {
            let report = verify::cmd_verify(&exp, &out)?;
            if report.passed {
                Ok(())
            } else {
                Err(CliError::ChecksFailed {
                    failed: report.failed.len(),
                    total: report.checks.iter().filter(|c| c.gating).count(),
                })
            }
        }
    })
}
