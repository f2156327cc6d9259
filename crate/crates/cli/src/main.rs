mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context_;
use crate::config::RunConfig;

/// Covariance of constrained ML/MAP estimates from the inverse bordered Hessian.
#[derive(Parser)]
#[command(name = "hesscov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from the config's true parameters.
    Generate(Common),
    /// Solve the estimation problem and report covariances.
    Fit(Common),
    /// Repeat generate and fit over seeded realizations.
    Montecarlo(Common),
    /// Sample the posterior around the MAP estimate.
    Mcmc(Common),
    /// Compare analytic derivatives with finite differences.
    CheckDerivs {
        #[command(flatten)]
        common: Common,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall time in the manifest.
    #[arg(long)]
    timings: bool,
    /// Comma-separated variable labels to report.
    #[arg(long, value_delimiter = ',')]
    report: Option<Vec<String>>,
}

/// Bad input from the user: exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.is::<Usage>()
            || c.is::<toml::de::Error>()
            || matches!(
                c.downcast_ref::<hesscov::Error>(),
                Some(hesscov::Error::Config(_) | hesscov::Error::Parse { .. })
            )
    })
}

fn context(common: Common, tol: f64) -> anyhow::Result<Context_> {
    let config = RunConfig::load(&common.config)?;
    Ok(Context_ {
        seed: common.seed.unwrap_or(config.seed),
        config,
        config_path: common.config,
        data: common.data,
        out_dir: common.out_dir,
        workers: common.workers,
        timings: common.timings,
        report_targets: common.report,
        tol,
    })
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Generate(c) => commands::generate(&context(c, 0.0)?),
        Command::Fit(c) => commands::fit(&context(c, 0.0)?),
        Command::Montecarlo(c) => commands::montecarlo(&context(c, 0.0)?),
        Command::Mcmc(c) => commands::mcmc(&context(c, 0.0)?),
        Command::CheckDerivs { common, tol } => commands::check_derivs(&context(common, tol)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HESSCOV_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_usage(&err) { 2 } else { 3 })
        }
    }
}
