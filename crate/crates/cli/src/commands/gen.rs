//! `gen`: synthesize an unbiased train/test split plus a biased training
//! sample under a configured selection mechanism.

use std::process::ExitCode;

use clap::Args;
use serde::{Deserialize, Serialize};

use fairbound::graph::DiagramDoc;
use fairbound::synth::{
    apply_selection, sample_population, Mechanism, Scenario, ScmSpec, SelectionSpec,
};

use super::Globals;
use crate::io::{write_artifact, write_atomic, AnyError};

#[derive(Args)]
pub struct GenArgs {
    /// Rows in the unbiased training pool (before selection)
    #[arg(long)]
    n_train: Option<usize>,
    /// Rows in the unbiased test sample
    #[arg(long)]
    n_test: Option<usize>,
    /// Selection mechanism (R|G1|G2|G3|G4)
    #[arg(long)]
    mechanism: Option<String>,
    /// Selection scenario (S1|S2)
    #[arg(long)]
    scenario: Option<String>,
}

/// The `[gen]` config section; flags override file values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub mechanism: String,
    pub scenario: String,
    /// admissible set stamped into the schema and diagram
    pub admissible: Vec<String>,
    /// conditional probability table overrides
    pub scm: Option<ScmSpec>,
    /// keep-probability table override, indexed by parent bits
    pub selection_table: Option<Vec<f64>>,
    /// skip the scenario promise check (for deliberately odd tables)
    pub skip_scenario_check: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_train: 10_000,
            n_test: 10_000,
            seed: 0,
            mechanism: "G3".into(),
            scenario: "S1".into(),
            admissible: vec!["Y".into()],
            scm: None,
            selection_table: None,
            skip_scenario_check: false,
        }
    }
}

pub fn run(globals: &Globals, args: GenArgs) -> Result<ExitCode, AnyError> {
    let table = globals.config_table()?;
    let mut cfg: GenConfig = match table.get("gen") {
        Some(section) => section.clone().try_into()?,
        None => GenConfig::default(),
    };
    if let Some(n) = args.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = args.n_test {
        cfg.n_test = n;
    }
    if let Some(m) = args.mechanism {
        cfg.mechanism = m;
    }
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(seed) = globals.seed {
        cfg.seed = seed;
    }
    let dir = crate::io::out_dir(&globals.out)?;

    let mechanism: Mechanism = cfg.mechanism.parse()?;
    let scenario: Scenario = cfg.scenario.parse()?;
    let mut scm = cfg.scm.clone().unwrap_or_default();
    scm.seed = cfg.seed;
    let mut selection = SelectionSpec::new(mechanism, scenario);
    if let Some(table) = &cfg.selection_table {
        selection.table = table.clone();
    }
    selection.validate()?;
    if !cfg.skip_scenario_check {
        selection.validate_scenario(&scm)?;
    }

    // one population pool, split deterministically; selection gets its own
    // stream derived from the config seed
    let pool = sample_population(&scm, cfg.n_train + cfg.n_test)?;
    let mut schema = pool.schema().clone();
    schema.admissible = cfg.admissible.clone();
    let rows = pool.rows();
    let train = fairbound::data::Dataset::new(
        schema.clone(),
        rows[..cfg.n_train].to_vec(),
        fairbound::data::Provenance::Unbiased,
    )?;
    let test = fairbound::data::Dataset::new(
        schema.clone(),
        rows[cfg.n_train..].to_vec(),
        fairbound::data::Provenance::Unbiased,
    )?;
    let (biased, diagram) = apply_selection(&train, &selection, cfg.seed.wrapping_add(1))?;

    train.write_csv(&dir.join("unbiased_train.csv"))?;
    test.write_csv(&dir.join("unbiased_test.csv"))?;
    biased.write_csv(&dir.join("biased_train.csv"))?;

    let mut schema_json = serde_json::to_string_pretty(&schema)?;
    schema_json.push('\n');
    write_atomic(&dir.join("schema.json"), schema_json.as_bytes())?;

    let doc = DiagramDoc::from_collection(&diagram);
    let mut diagram_json = serde_json::to_string_pretty(&doc)?;
    diagram_json.push('\n');
    write_atomic(&dir.join("diagram.json"), diagram_json.as_bytes())?;

    let echo = serde_json::to_value(&cfg)?;
    write_artifact(
        &dir.join("run_meta.json"),
        echo,
        serde_json::json!({
            "command": "gen",
            "rows_unbiased_train": train.len(),
            "rows_unbiased_test": test.len(),
            "rows_biased_train": biased.len(),
            "selection_table": selection.table,
        }),
    )?;

    println!(
        "gen: wrote {} unbiased train / {} test / {} biased rows to {}",
        train.len(),
        test.len(),
        biased.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}
