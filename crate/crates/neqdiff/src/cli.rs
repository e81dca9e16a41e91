//! Command-line interface. Exit codes: 0 when every check passes, 1 when a
//! check fails, 2 for configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Experiment, ExperimentConfig};
use crate::experiments;
use crate::report::write_artifacts;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "neqdiff", version, about = "Verification suites for nonequilibrium diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment, or `all`.
    Run(RunArgs),
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// validate, simulate, entropy-brownian, entropy-langevin, bound-theorem1,
    /// bound-theorem3, jarzynski, zero-variance, reversal-test, omega-opt,
    /// omega-scaling or all
    pub experiment: Experiment,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Smaller samples and grids; the same checks run.
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// The config file (or defaults) with command-line overrides applied.
    pub fn resolve(&self) -> Result<ExperimentConfig, String> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| e.to_string())?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if self.quick {
            cfg = cfg.quick();
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    match cli.command {
        Command::DefaultConfig => {
            print!("{}", ExperimentConfig::default().to_toml());
            ExitCode::from(EXIT_PASS)
        }
        Command::Run(args) => ExitCode::from(run(&args)),
    }
}

pub fn run(args: &RunArgs) -> u8 {
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(errs) = experiments::preflight(&cfg) {
        eprintln!("invalid model specification:");
        for e in errs {
            eprintln!("  {e}");
        }
        return EXIT_CONFIG;
    }
    let results = match args.experiment {
        Experiment::All => experiments::run_suite(&cfg),
        e => vec![(e, experiments::run(&cfg, e))],
    };
    let mut failed = Vec::new();
    for (e, outcome) in &results {
        experiments::print_checks(outcome, format!("[{e}] "));
        match write_artifacts(&cfg, *e, outcome) {
            Ok(dir) => println!("[{e}] artifacts in {}", dir.display()),
            Err(err) => {
                eprintln!("[{e}] cannot write artifacts: {err}");
                failed.push(format!("{e}: artifacts"));
            }
        }
        failed.extend(outcome.failing().map(|c| format!("{e}: {}", c.name)));
    }
    if failed.is_empty() {
        println!("all checks passed");
        EXIT_PASS
    } else {
        eprintln!("failing checks:");
        for f in &failed {
            eprintln!("  {f}");
        }
        EXIT_CHECK_FAILED
    }
}
