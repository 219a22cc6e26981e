//! `eval`: score a stored model against an unbiased test file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use fairbound::fairness::FairnessSpec;
use fairbound::train::evaluate;

use super::{load_dataset, read_model, Globals};
use crate::io::{write_artifact, AnyError};

#[derive(Args)]
pub struct EvalArgs {
    /// Model JSON produced by `train`
    #[arg(long)]
    model: PathBuf,
    /// Unbiased test CSV
    #[arg(long)]
    data: PathBuf,
    /// Schema sidecar JSON
    #[arg(long)]
    schema: PathBuf,
}

pub fn run(globals: &Globals, args: EvalArgs) -> Result<ExitCode, AnyError> {
    let model = read_model(&args.model)?;
    let d = load_dataset(&args.data, &args.schema)?
        .with_provenance(fairbound::data::Provenance::Unbiased);
    let spec = FairnessSpec::from_schema(d.schema());
    let report = evaluate(&model, &d, &spec)?;

    println!(
        "eval: f1 {:.4}, accuracy {:.4}, fairness {:.4} ({:?} admissible values)",
        report.f1,
        report.accuracy,
        report.fairness_hard.value,
        report.fairness_hard.per_a_terms.len(),
    );
    let echo = serde_json::json!({
        "model": args.model.display().to_string(),
        "data": args.data.display().to_string(),
    });
    if globals.out.is_some() {
        let dir = crate::io::out_dir(&globals.out)?;
        write_artifact(&dir.join("eval_report.json"), echo, &report)?;
    } else {
        let artifact = crate::io::Artifact {
            tool_version: fairbound::VERSION,
            config_echo: echo,
            result: &report,
        };
        println!("{}", serde_json::to_string_pretty(&artifact)?);
    }
    Ok(ExitCode::SUCCESS)
}
