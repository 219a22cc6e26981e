//! `audit`: empirical fairness of supplied predictions on a dataset.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use fairbound::fairness::{empirical_fairness, FairnessSpec};

use super::{load_dataset, predictions_for, Globals};
use crate::io::{write_artifact, AnyError};

#[derive(Args)]
pub struct AuditArgs {
    /// Dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// Schema sidecar JSON
    #[arg(long)]
    schema: PathBuf,
    /// Model JSON to audit
    #[arg(long)]
    model: Option<PathBuf>,
    /// Prediction file as the alternative to --model
    #[arg(long)]
    preds: Option<PathBuf>,
}

pub fn run(globals: &Globals, args: AuditArgs) -> Result<ExitCode, AnyError> {
    let d = load_dataset(&args.data, &args.schema)?;
    let preds = predictions_for(&d, &args.model, &args.preds)?;
    let spec = FairnessSpec::from_schema(d.schema());
    let fv = empirical_fairness(&d, &preds, &spec)?;

    println!("audit: fairness {:.6} ({})", fv.value, spec.describe());
    for (a, gap) in &fv.per_a_terms {
        println!("  {a}: gap {gap:+.6}");
    }
    for a in &fv.skipped_a {
        eprintln!("warning: admissible value {a} observed for one group only, skipped");
    }
    let echo = serde_json::json!({
        "data": args.data.display().to_string(),
        "spec": spec.describe(),
    });
    if globals.out.is_some() {
        let dir = crate::io::out_dir(&globals.out)?;
        write_artifact(&dir.join("audit.json"), echo, &fv)?;
    }
    Ok(ExitCode::SUCCESS)
}
