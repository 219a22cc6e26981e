//! Command-line front end: reproducible generate/diagnose/bound/train/eval
//! pipelines over the library, with config echo in every artifact.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error.

mod commands;
mod io;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fairbound", version, about = "Fairness auditing and training under selection bias")]
struct Cli {
    /// TOML config file; command sections override built-in defaults,
    /// command-line flags override the file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override for anything randomized
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Force a range strategy (equality|no_external|exact|partial_u|missing_a)
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Treat external mass on unobserved strata as an error
    #[arg(long, global = true, default_value_t = false)]
    strict_strata: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population, a biased training sample and the
    /// matching schema/diagram files
    Gen(commands::gen::GenArgs),
    /// Explain whether a data collection diagram can induce unfairness
    Diagnose(commands::diagnose::DiagnoseArgs),
    /// Compute the consistent range of a fairness query from biased data
    Bound(commands::bound::BoundArgs),
    /// Train a fairness-penalized logistic regression on biased data
    Train(commands::train::TrainArgs),
    /// Score a model on an unbiased test set
    Eval(commands::eval::EvalArgs),
    /// Evaluate the empirical fairness of supplied predictions
    Audit(commands::audit::AuditArgs),
    /// Run the brute-force containment and graph-oracle suites
    Verify(commands::verify::VerifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let globals = commands::Globals {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        strategy: cli.strategy,
        strict_strata: cli.strict_strata,
    };
    let result = match cli.command {
        Command::Gen(args) => commands::gen::run(&globals, args),
        Command::Diagnose(args) => commands::diagnose::run(&globals, args),
        Command::Bound(args) => commands::bound::run(&globals, args),
        Command::Train(args) => commands::train::run(&globals, args),
        Command::Eval(args) => commands::eval::run(&globals, args),
        Command::Audit(args) => commands::audit::run(&globals, args),
        Command::Verify(args) => commands::verify::run(&globals, args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = err.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}
