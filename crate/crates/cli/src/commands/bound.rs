//! `bound`: consistent range of the fairness query for a predictor on
//! biased data, with strategy auto-selection.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use fairbound::cra::compute_range;
use fairbound::fairness::FairnessSpec;

use super::{gather_aux, load_collection_diagram, load_dataset, predictions_for, Globals};
use crate::io::{write_artifact, AnyError};

#[derive(Args)]
pub struct BoundArgs {
    /// Data collection diagram JSON
    #[arg(long)]
    diagram: PathBuf,
    /// Biased dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// Schema sidecar JSON
    #[arg(long)]
    schema: PathBuf,
    /// Model JSON whose hard predictions are bounded
    #[arg(long)]
    model: Option<PathBuf>,
    /// Prediction file (one value per line) as the alternative to --model
    #[arg(long)]
    preds: Option<PathBuf>,
    /// Auxiliary statistics JSON (repeatable)
    #[arg(long = "aux")]
    aux: Vec<PathBuf>,
    /// Unbiased external sample CSV to estimate statistics from
    #[arg(long)]
    external: Option<PathBuf>,
}

pub fn run(globals: &Globals, args: BoundArgs) -> Result<ExitCode, AnyError> {
    let forced = globals.forced_strategy()?;
    let g = load_collection_diagram(&args.diagram)?;
    let d = load_dataset(&args.data, &args.schema)?
        .with_provenance(fairbound::data::Provenance::Biased);
    let preds = predictions_for(&d, &args.model, &args.preds)?;
    let spec = FairnessSpec::from_schema(d.schema());
    let aux = gather_aux(&args.aux, &args.external, d.schema(), &g)?;
    let range = compute_range(&d, &preds, &spec, &g, &aux, forced, &globals.cra_options())?;

    println!(
        "strategy {}: [{:.6}, {:.6}] (U = {:?}{}; {} strata skipped)",
        range.strategy,
        range.clb,
        range.cub,
        range.diagnostics.u,
        range
            .diagnostics
            .u_prime
            .as_ref()
            .map(|u| format!(", U' = {u:?}"))
            .unwrap_or_default(),
        range.diagnostics.skipped_strata,
    );
    for w in &range.diagnostics.warnings {
        eprintln!("warning: {w}");
    }

    let echo = serde_json::json!({
        "diagram": args.diagram.display().to_string(),
        "data": args.data.display().to_string(),
        "aux_files": args.aux.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "external": args.external.as_ref().map(|p| p.display().to_string()),
        "forced_strategy": forced.map(|s| s.to_string()),
        "strict_strata": globals.strict_strata,
    });
    if globals.out.is_some() {
        let dir = crate::io::out_dir(&globals.out)?;
        write_artifact(&dir.join("range.json"), echo.clone(), &range)?;
    } else {
        let artifact = crate::io::Artifact {
            tool_version: fairbound::VERSION,
            config_echo: echo,
            result: &range,
        };
        println!("{}", serde_json::to_string_pretty(&artifact)?);
    }
    Ok(ExitCode::SUCCESS)
}
