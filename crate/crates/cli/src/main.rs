use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ocbnn_cli::config::RunConfig;
use ocbnn_cli::{commands, exit_code, experiments};
use ocbnn_core::Result;

#[derive(Parser)]
#[command(name = "ocbnn", version, about = "Output-constrained Bayesian neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `outputs`, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset to dataset.csv.
    Generate(#[command(flatten)] Common),
    /// Sample the posterior; writes posterior.json and diagnostics.json.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Constraint file overriding the config.
        #[arg(long)]
        constraints: Option<PathBuf>,
    },
    /// Evaluate a posterior over the config's grid; writes grid.csv.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        posterior: PathBuf,
    },
    /// Score a posterior on a labelled CSV; writes metrics.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long)]
        posterior: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run a named experiment (baseline and constrained variants).
    Experiment {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Tenth-length inference schedules.
        #[arg(long)]
        fast: bool,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    RunConfig::load(&common.config)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Generate(c) => commands::cmd_generate(&load(&c)?, c.seed, c.out.as_deref()),
        Command::Infer { common: c, constraints } => {
            commands::cmd_infer(&load(&c)?, constraints.as_deref(), c.seed, c.out.as_deref())
        }
        Command::Predict { common: c, posterior } => {
            commands::cmd_predict(&load(&c)?, &posterior, c.out.as_deref())
        }
        Command::Eval { common: c, constraints, posterior, test } => commands::cmd_eval(
            &load(&c)?,
            constraints.as_deref(),
            &posterior,
            &test,
            c.out.as_deref(),
        ),
        Command::Experiment { name, seed, out, fast } => {
            let m = experiments::run_experiment(&name, &out, seed, fast)?;
            Ok(m.files.iter().map(|f| out.join(f)).chain([out.join("manifest.json")]).collect())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", Path::new(&p).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
