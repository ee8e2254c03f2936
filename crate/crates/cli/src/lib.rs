//! Argument parsing and dispatch for the `orbit-prestore` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use orbit_prestore::harness::commands::{self, Algo};
use orbit_prestore::harness::studies::Study;
use orbit_prestore::harness::{with_workers, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "orbit-prestore", version, about = "Learning-based file pre-storing on a simulated LEO constellation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file (`key = value` lines with `[section]` headers).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset to resolve the config over (tiny, desk, paper).
    #[arg(long)]
    pub preset: Option<String>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgoArg {
    Vdac,
    Iac,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StudyArg {
    VdVsIac,
    MetaVsRandom,
    PretrainVsCold,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and save the contact graph.
    GenGraph(Common),
    /// Sample and save one request realization.
    GenRequests(Common),
    /// Train per-file agents on one request realization.
    Train {
        #[arg(value_enum)]
        algo: AlgoArg,
        #[command(flatten)]
        common: Common,
        /// Training epochs, overriding the config.
        #[arg(long)]
        epochs: Option<usize>,
        /// Start from a saved checkpoint directory instead of random initials.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Meta-train initials for the configured request distribution.
    MetaTrain {
        #[command(flatten)]
        common: Common,
        /// Meta epochs, overriding the config.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Distribution-robust sequential pre-training over the study distributions.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Meta epochs per stage, overriding the config.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on one request realization.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Finite-difference check of the network gradients.
    GradCheck(Common),
    /// Paired multi-seed comparison study.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        study: StudyArg,
        /// Number of paired seeds, overriding the config.
        #[arg(long)]
        seeds: Option<usize>,
        /// Training epochs per run, overriding the config.
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::load(&text, common.preset.as_deref()).context("invalid config")?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn report(out: &Path, artifacts: usize) {
    println!("wrote {artifacts} artifacts to {}", out.display());
}

/// Run a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenGraph(c) => {
            let m = commands::gen_graph(&resolve(&c)?, &c.out)?;
            report(&c.out, m.artifacts.len());
        }
        Command::GenRequests(c) => {
            let m = commands::gen_requests(&resolve(&c)?, &c.out)?;
            report(&c.out, m.artifacts.len());
        }
        Command::Train { algo, common, epochs, init } => {
            let mut cfg = resolve(&common)?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let algo = match algo {
                AlgoArg::Vdac => Algo::Vdac,
                AlgoArg::Iac => Algo::Iac,
            };
            let m = commands::train(&cfg, algo, &common.out, init.as_deref())?;
            report(&common.out, m.artifacts.len());
        }
        Command::MetaTrain { common, epochs } => {
            let mut cfg = resolve(&common)?;
            if let Some(e) = epochs {
                cfg.meta_epochs = e;
            }
            let m = with_workers(|| commands::meta_train(&cfg, &common.out))?;
            report(&common.out, m.artifacts.len());
        }
        Command::Pretrain { common, epochs } => {
            let mut cfg = resolve(&common)?;
            if let Some(e) = epochs {
                cfg.meta_epochs = e;
            }
            let m = with_workers(|| commands::pretrain(&cfg, &common.out))?;
            report(&common.out, m.artifacts.len());
        }
        Command::Eval { common, checkpoint } => {
            let m = commands::eval(&resolve(&common)?, &checkpoint, &common.out)?;
            report(&common.out, m.artifacts.len());
        }
        Command::GradCheck(c) => {
            let (_, worst) = commands::grad_check(&resolve(&c)?, &c.out)?;
            println!("max relative error {worst:e}");
            if worst.is_nan() || worst >= 1e-4 {
                eprintln!("gradient check failed");
                return Ok(1);
            }
        }
        Command::Compare { common, study, seeds, epochs } => {
            let mut cfg = resolve(&common)?;
            if let Some(n) = seeds {
                if n < 2 {
                    bail!("a paired study needs at least 2 seeds");
                }
                cfg.study_seeds = n;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let study = match study {
                StudyArg::VdVsIac => Study::VdVsIac,
                StudyArg::MetaVsRandom => Study::MetaVsRandom,
                StudyArg::PretrainVsCold => Study::PretrainVsCold,
            };
            let (m, res) = with_workers(|| commands::compare(&cfg, study, &common.out))?;
            for row in &res.summary {
                println!(
                    "{}: {} {:.3} vs {} {:.3} (relative difference {:+.3}, p = {:.4})",
                    row.metric, row.a, row.a_mean, row.b, row.b_mean, row.relative_difference, row.p_value
                );
            }
            report(&common.out, m.artifacts.len());
        }
    }
    Ok(0)
}
