pub mod audit;
pub mod bound;
pub mod diagnose;
pub mod eval;
pub mod gen;
pub mod train;
pub mod verify;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use fairbound::cra::{estimate_aux, AuxKind, AuxStats, CraOptions, Strategy};
use fairbound::data::{load_csv, Dataset, Provenance, Schema, SchemaSource};
use fairbound::graph::{select_u, DataCollectionDiagram, DiagramDoc, NodeSet, ParsedDiagram};
use fairbound::train::{LogisticModel, PredictMode};

use crate::io::{read_predictions, AnyError};

/// Flags shared by every subcommand.
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strategy: Option<String>,
    pub strict_strata: bool,
}

impl Globals {
    pub fn cra_options(&self) -> CraOptions {
        CraOptions { strict_strata: self.strict_strata }
    }

    pub fn forced_strategy(&self) -> Result<Option<Strategy>, AnyError> {
        self.strategy
            .as_deref()
            .map(|s| Strategy::from_str(s).map_err(AnyError::from))
            .transpose()
    }

    /// Parsed TOML config, an empty table when no file was given.
    pub fn config_table(&self) -> Result<toml::Table, AnyError> {
        match &self.config {
            None => Ok(toml::Table::new()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
                Ok(text.parse::<toml::Table>()?)
            }
        }
    }
}

pub fn load_collection_diagram(path: &Path) -> Result<DataCollectionDiagram, AnyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read diagram {}: {e}", path.display()))?;
    let doc: DiagramDoc = serde_json::from_str(&text)
        .map_err(|e| format!("diagram {}: {e}", path.display()))?;
    match doc.parse()? {
        ParsedDiagram::Collection(g) => Ok(g),
        ParsedDiagram::Plain(_) => {
            Err(format!("diagram {} has no selection node", path.display()).into())
        }
    }
}

pub fn load_dataset(data: &Path, schema: &Path) -> Result<Dataset, AnyError> {
    Ok(load_csv(data, SchemaSource::Path(schema))?)
}

/// Predictions for `bound`/`audit`: a model file or a plain prediction file.
pub fn predictions_for(
    d: &Dataset,
    model: &Option<PathBuf>,
    preds: &Option<PathBuf>,
) -> Result<Vec<f64>, AnyError> {
    match (model, preds) {
        (Some(m), None) => {
            let model = read_model(m)?;
            Ok(model.predict(d, PredictMode::Hard)?)
        }
        (None, Some(p)) => {
            let values = read_predictions(p)?;
            if values.len() != d.len() {
                return Err(format!(
                    "{} predictions for {} rows",
                    values.len(),
                    d.len()
                )
                .into());
            }
            Ok(values)
        }
        _ => Err("provide exactly one of --model or --preds".into()),
    }
}

pub fn read_model(path: &Path) -> Result<LogisticModel, AnyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read model {}: {e}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(serde_json::from_value(value)?)
}

/// Loads aux tables from JSON files and, when an external sample is given,
/// estimates whatever tables that sample supports for the diagram's
/// separating set.
pub fn gather_aux(
    aux_files: &[PathBuf],
    external: &Option<PathBuf>,
    schema: &Schema,
    g: &DataCollectionDiagram,
) -> Result<Vec<AuxStats>, AnyError> {
    let mut tables = Vec::new();
    for path in aux_files {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read aux {}: {e}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        tables.push(AuxStats::from_json(&value)?);
    }
    if let Some(ext_path) = external {
        tables.extend(estimate_from_external(ext_path, schema, g)?);
    }
    Ok(tables)
}

/// Derives tables from an unbiased sample file: the full conditional when
/// the sample covers S, A and U; a conditional over the covered subset of U
/// otherwise; and the (S, U) joint when the admissible set is uncovered but
/// selection does not depend on it.
pub fn estimate_from_external(
    path: &Path,
    schema: &Schema,
    g: &DataCollectionDiagram,
) -> Result<Vec<AuxStats>, AnyError> {
    // peek at the header to know which columns exist
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let present: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    drop(rdr);
    let sub_schema = schema.subset_for_external(&present)?;
    let sample = load_csv(path, SchemaSource::Inline(&sub_schema))?
        .with_provenance(Provenance::Unbiased);

    let spec = fairbound::fairness::FairnessSpec::from_schema(schema);
    let available: NodeSet = present.iter().cloned().collect();
    let u = select_u(g, Some(&available))?;
    let u_covered: NodeSet = u.iter().filter(|v| available.contains(*v)).cloned().collect();
    let a_covered = spec.admissible.iter().all(|a| available.contains(a));

    let mut tables = Vec::new();
    if a_covered && u_covered == u && !u.is_empty() {
        tables.push(estimate_aux(&sample, AuxKind::UGivenSa, &u, &spec)?);
    } else if a_covered && !u_covered.is_empty() {
        tables.push(estimate_aux(&sample, AuxKind::UprimeGivenSa, &u_covered, &spec)?);
    }
    let selection_free_of_a = g.roles().admissible.is_disjoint(g.selection_parents());
    if selection_free_of_a && u_covered == u && !u.is_empty() {
        tables.push(estimate_aux(&sample, AuxKind::SUJoint, &u, &spec)?);
    }
    if tables.is_empty() {
        return Err(format!(
            "external sample {} covers none of the statistics the diagram needs \
             (separating set {:?})",
            path.display(),
            u
        )
        .into());
    }
    Ok(tables)
}
