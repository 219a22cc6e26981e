//! `train`: fairness-penalized logistic regression with first-class
//! threshold sweeps, emitting one report row per sweep point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use serde::{Deserialize, Serialize};

use fairbound::train::{train_fair, PenaltyConfig, TrainConfig};

use super::{gather_aux, load_collection_diagram, load_dataset, Globals};
use crate::io::{write_artifact, write_atomic, AnyError};

#[derive(Args)]
pub struct TrainArgs {
    /// Biased training CSV
    #[arg(long)]
    data: PathBuf,
    /// Schema sidecar JSON
    #[arg(long)]
    schema: PathBuf,
    /// Data collection diagram (required when lambda > 0)
    #[arg(long)]
    diagram: Option<PathBuf>,
    /// Auxiliary statistics JSON (repeatable)
    #[arg(long = "aux")]
    aux: Vec<PathBuf>,
    /// Unbiased external sample CSV to estimate statistics from
    #[arg(long)]
    external: Option<PathBuf>,
    /// Fairness threshold (single run)
    #[arg(long)]
    tau: Option<f64>,
    /// Comma-separated thresholds; one model and report row per value
    #[arg(long, value_delimiter = ',')]
    tau_sweep: Vec<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Include the protected attribute among the features
    #[arg(long, default_value_t = false)]
    use_protected_feature: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainFileConfig {
    pub tau: f64,
    pub tau_sweep: Vec<f64>,
    pub lambda: f64,
    pub eta: f64,
    pub epochs: usize,
    pub tol: f64,
    pub seed: u64,
    pub use_protected_feature: bool,
}

impl Default for TrainFileConfig {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainFileConfig {
            tau: d.tau,
            tau_sweep: Vec::new(),
            lambda: d.lambda,
            eta: d.eta,
            epochs: d.max_epochs,
            tol: d.tol,
            seed: d.seed,
            use_protected_feature: d.use_protected_feature,
        }
    }
}

pub fn run(globals: &Globals, args: TrainArgs) -> Result<ExitCode, AnyError> {
    let table = globals.config_table()?;
    let mut cfg: TrainFileConfig = match table.get("train") {
        Some(section) => section.clone().try_into()?,
        None => TrainFileConfig::default(),
    };
    if let Some(v) = args.tau {
        cfg.tau = v;
    }
    if !args.tau_sweep.is_empty() {
        cfg.tau_sweep = args.tau_sweep.clone();
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.eta {
        cfg.eta = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.tol {
        cfg.tol = v;
    }
    if let Some(v) = globals.seed {
        cfg.seed = v;
    }
    if args.use_protected_feature {
        cfg.use_protected_feature = true;
    }

    let d = load_dataset(&args.data, &args.schema)?
        .with_provenance(fairbound::data::Provenance::Biased);
    let forced = globals.forced_strategy()?;

    let penalty = match (&args.diagram, cfg.lambda > 0.0) {
        (Some(path), _) => {
            let g = load_collection_diagram(path)?;
            let aux = gather_aux(&args.aux, &args.external, d.schema(), &g)?;
            Some(PenaltyConfig {
                diagram: g,
                aux,
                strategy_override: forced,
                strict_strata: globals.strict_strata,
            })
        }
        (None, true) => {
            return Err("lambda > 0 needs --diagram for the bound computation".into())
        }
        (None, false) => None,
    };

    let taus: Vec<f64> =
        if cfg.tau_sweep.is_empty() { vec![cfg.tau] } else { cfg.tau_sweep.clone() };
    let dir = crate::io::out_dir(&globals.out)?;
    let echo = serde_json::to_value(&cfg)?;

    // one row per sweep point, sorted by tau before emission
    let mut rows: Vec<(f64, String)> = Vec::new();
    for (i, &tau) in taus.iter().enumerate() {
        let train_cfg = TrainConfig {
            tau,
            lambda: cfg.lambda,
            eta: cfg.eta,
            max_epochs: cfg.epochs,
            tol: cfg.tol,
            seed: cfg.seed,
            use_protected_feature: cfg.use_protected_feature,
            penalty: penalty.clone(),
        };
        let (model, report) = train_fair(&d, &train_cfg)?;
        let model_file = format!("model_{i:03}.json");
        let mut model_echo = echo.clone();
        model_echo["tau"] = serde_json::json!(tau);
        // model files carry their fields at the top level
        let model_doc = serde_json::json!({
            "encoder": model.encoder,
            "weights": model.weights,
            "bias": model.bias,
            "config_echo": model_echo,
            "tool_version": fairbound::VERSION,
        });
        let mut text = serde_json::to_string_pretty(&model_doc)?;
        text.push('\n');
        write_atomic(&dir.join(&model_file), text.as_bytes())?;
        let strategy = penalty
            .as_ref()
            .map(|_| forced.map(|s| s.to_string()).unwrap_or_else(|| "auto".into()))
            .unwrap_or_else(|| "none".into());
        rows.push((
            tau,
            format!(
                "{tau},{},{},{},{},{:.6},{:.6},{:.6},{},{model_file}",
                cfg.lambda,
                cfg.eta,
                cfg.seed,
                strategy,
                report.f1,
                report.accuracy,
                report.fairness_hard.value,
                report.cub_final.map(|c| format!("{c:.6}")).unwrap_or_default(),
            ),
        ));
        println!(
            "train tau={tau}: f1 {:.4}, accuracy {:.4}, biased-data fairness {:.4}, cub {}",
            report.f1,
            report.accuracy,
            report.fairness_hard.value,
            report.cub_final.map(|c| format!("{c:.4}")).unwrap_or_else(|| "n/a".into()),
        );
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut csv = String::from(
        "tau,lambda,eta,seed,strategy,f1,accuracy,fairness_biased,cub_final,model_file\n",
    );
    for (_, row) in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    write_atomic(&dir.join("report.csv"), csv.as_bytes())?;
    write_artifact(
        &dir.join("report.meta.json"),
        echo,
        serde_json::json!({ "command": "train", "rows": rows.len() }),
    )?;
    Ok(ExitCode::SUCCESS)
}
