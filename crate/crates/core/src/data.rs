//! Discretized tabular datasets: loading, validation, stratified counting.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema: {0}")]
    SchemaJson(#[from] serde_json::Error),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("column `{0}` missing from input")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: value `{value}` not in declared domain")]
    OutOfDomain { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: missing cell")]
    MissingCell { row: usize, column: String },
    #[error("row {row}, column `{column}`: `{value}` is not numeric (column is binned)")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("column `{column}`: {message}")]
    BadSchema { column: String, message: String },
    #[error("predictions length {preds} does not match row count {rows}")]
    LengthMismatch { preds: usize, rows: usize },
    #[error("outcome column `{0}` must have exactly two values mapped to 0/1")]
    BadOutcome(String),
    #[error("protected column `{column}` must contain `{value}`")]
    BadProtected { column: String, value: String },
}

/// One column: a name plus its finite category domain. `bins` asks the
/// loader to quantile-discretize a numeric column into that many bins,
/// in which case `domain` is filled in at load time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(default)]
    pub domain: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

/// Outcome column with its explicit 0/1 label mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutcomeSpec {
    /// Column name alone; its domain must literally be {"0","1"}.
    Name(String),
    /// Explicit mapping of which label counts as the favorable outcome.
    Mapped { name: String, y0: String, y1: String },
}

impl OutcomeSpec {
    pub fn name(&self) -> &str {
        match self {
            OutcomeSpec::Name(n) => n,
            OutcomeSpec::Mapped { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectedSpec {
    pub name: String,
    /// protected group label
    pub s0: String,
    /// privileged group label
    pub s1: String,
}

/// Dataset schema: ordered categorical columns plus the fairness roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub outcome: OutcomeSpec,
    pub protected: ProtectedSpec,
    #[serde(default)]
    pub admissible: Vec<String>,
}

impl Schema {
    pub fn from_json_file(path: &Path) -> Result<Schema, DataError> {
        let text = std::fs::read_to_string(path)?;
        let schema: Schema = serde_json::from_str(&text)?;
        Ok(schema)
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&ColumnSpec, DataError> {
        Ok(&self.columns[self.column_index(name)?])
    }

    /// Checks domains are resolved and roles well formed. The outcome domain
    /// must collapse to the {0,1} mapping and the protected column must carry
    /// both designated group labels.
    pub fn validate(&self) -> Result<(), DataError> {
        for col in &self.columns {
            if col.domain.is_empty() && col.bins.is_none() {
                return Err(DataError::BadSchema {
                    column: col.name.clone(),
                    message: "domain empty and no binning requested".into(),
                });
            }
            if let Some(b) = col.bins {
                if b < 2 {
                    return Err(DataError::BadSchema {
                        column: col.name.clone(),
                        message: "bins must be >= 2".into(),
                    });
                }
            }
            let mut values = col.domain.clone();
            values.sort();
            values.dedup();
            if values.len() != col.domain.len() {
                return Err(DataError::BadSchema {
                    column: col.name.clone(),
                    message: "domain has duplicate labels".into(),
                });
            }
        }
        let oc = self.column(self.outcome.name())?;
        match &self.outcome {
            OutcomeSpec::Name(n) => {
                let mut d = oc.domain.clone();
                d.sort();
                if d != ["0".to_string(), "1".to_string()] {
                    return Err(DataError::BadOutcome(n.clone()));
                }
            }
            OutcomeSpec::Mapped { name, y0, y1 } => {
                if y0 == y1 || !oc.domain.contains(y0) || !oc.domain.contains(y1) {
                    return Err(DataError::BadOutcome(name.clone()));
                }
            }
        }
        let pc = self.column(&self.protected.name)?;
        for v in [&self.protected.s0, &self.protected.s1] {
            if !pc.domain.contains(v) {
                return Err(DataError::BadProtected {
                    column: self.protected.name.clone(),
                    value: v.clone(),
                });
            }
        }
        for a in &self.admissible {
            self.column_index(a)?;
        }
        Ok(())
    }

    /// Code of the positive outcome label.
    pub fn positive_code(&self) -> Result<u16, DataError> {
        let col = self.column(self.outcome.name())?;
        let label = match &self.outcome {
            OutcomeSpec::Name(_) => "1",
            OutcomeSpec::Mapped { y1, .. } => y1.as_str(),
        };
        col.domain
            .iter()
            .position(|v| v == label)
            .map(|i| i as u16)
            .ok_or_else(|| DataError::BadOutcome(self.outcome.name().to_string()))
    }
}

/// Where the rows came from, relative to the target population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Biased,
    Unbiased,
    Unknown,
}

/// Category-coded rows under a fixed schema. Values are indices into each
/// column's domain; immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<u16>>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<u16>>, provenance: Provenance) -> Result<Self, DataError> {
        schema.validate()?;
        for (ri, row) in rows.iter().enumerate() {
            if row.len() != schema.columns.len() {
                return Err(DataError::MissingCell {
                    row: ri + 1,
                    column: schema.columns.get(row.len()).map(|c| c.name.clone()).unwrap_or_default(),
                });
            }
            for (ci, &code) in row.iter().enumerate() {
                if code as usize >= schema.columns[ci].domain.len() {
                    return Err(DataError::OutOfDomain {
                        row: ri + 1,
                        column: schema.columns[ci].name.clone(),
                        value: format!("#{code}"),
                    });
                }
            }
        }
        Ok(Dataset { schema, rows, provenance })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<u16>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = p;
        self
    }

    pub fn value(&self, row: usize, col: usize) -> &str {
        &self.schema.columns[col].domain[self.rows[row][col] as usize]
    }

    /// 0/1 outcome labels.
    pub fn labels(&self) -> Result<Vec<f64>, DataError> {
        let yi = self.schema.column_index(self.schema.outcome.name())?;
        let pos = self.schema.positive_code()?;
        Ok(self.rows.iter().map(|r| if r[yi] == pos { 1.0 } else { 0.0 }).collect())
    }

    /// Writes the rows back out as RFC-4180 CSV with a header.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))?;
        for ri in 0..self.rows.len() {
            let rec: Vec<&str> = (0..self.schema.columns.len()).map(|ci| self.value(ri, ci)).collect();
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How [`load_csv`] obtains its schema.
pub enum SchemaSource<'a> {
    /// Sidecar JSON file.
    Path(&'a Path),
    /// Already-parsed schema.
    Inline(&'a Schema),
    /// Observe distinct values per column; roles supplied by the caller.
    Infer { outcome: OutcomeSpec, protected: ProtectedSpec, admissible: Vec<String> },
}

/// Loads a CSV file with a header row and validates every cell against the
/// schema. Continuous columns must either be pre-discretized or carry a
/// `bins` directive, in which case they are quantile-binned here.
pub fn load_csv(path: &Path, schema_source: SchemaSource<'_>) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, schema_source)
}

pub fn load_csv_reader<R: Read>(reader: R, schema_source: SchemaSource<'_>) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(DataError::from)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(DataError::Empty("no header row".into()));
    }
    let mut raw: Vec<Vec<String>> = Vec::new();
    for (ri, rec) in rdr.records().enumerate() {
        let rec = rec?;
        raw.push(rec.iter().map(|v| v.trim().to_string()).collect());
        if raw.last().unwrap().len() != headers.len() {
            return Err(DataError::MissingCell { row: ri + 1, column: String::new() });
        }
    }
    if raw.is_empty() {
        return Err(DataError::Empty("no data rows".into()));
    }

    let mut schema = match schema_source {
        SchemaSource::Path(p) => Schema::from_json_file(p)?,
        SchemaSource::Inline(s) => s.clone(),
        SchemaSource::Infer { outcome, protected, admissible } => {
            let mut columns = Vec::new();
            for (ci, name) in headers.iter().enumerate() {
                let mut values: Vec<String> = raw.iter().map(|r| r[ci].clone()).collect();
                values.sort();
                values.dedup();
                columns.push(ColumnSpec { name: name.clone(), domain: values, bins: None });
            }
            Schema { columns, outcome, protected, admissible }
        }
    };

    // map schema columns onto header positions
    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| *h == col.name)
            .ok_or_else(|| DataError::MissingColumn(col.name.clone()))?;
        positions.push(pos);
    }

    // quantile-bin numeric columns that request it
    for (si, col) in schema.columns.iter_mut().enumerate() {
        let Some(bins) = col.bins else { continue };
        let pos = positions[si];
        let mut numeric = Vec::with_capacity(raw.len());
        for (ri, row) in raw.iter().enumerate() {
            let v: f64 = row[pos].parse().map_err(|_| DataError::NotNumeric {
                row: ri + 1,
                column: col.name.clone(),
                value: row[pos].clone(),
            })?;
            numeric.push(v);
        }
        let cuts = quantile_cuts(&numeric, bins);
        col.domain = (0..bins).map(|b| format!("q{b}")).collect();
        for (ri, row) in raw.iter_mut().enumerate() {
            let b = bin_of(numeric[ri], &cuts);
            row[pos] = format!("q{b}");
        }
    }
    schema.validate()?;

    let mut rows: Vec<Vec<u16>> = Vec::with_capacity(raw.len());
    for (ri, row) in raw.iter().enumerate() {
        let mut coded = Vec::with_capacity(schema.columns.len());
        for (si, col) in schema.columns.iter().enumerate() {
            let v = &row[positions[si]];
            if v.is_empty() && !col.domain.iter().any(|d| d.is_empty()) {
                return Err(DataError::MissingCell { row: ri + 1, column: col.name.clone() });
            }
            match col.domain.iter().position(|d| d == v) {
                Some(code) => coded.push(code as u16),
                None => {
                    return Err(DataError::OutOfDomain {
                        row: ri + 1,
                        column: col.name.clone(),
                        value: v.clone(),
                    })
                }
            }
        }
        rows.push(coded);
    }
    Dataset::new(schema, rows, Provenance::Unknown)
}

impl Schema {
    /// Restriction of this schema to the columns an external sample actually
    /// carries. The protected column must be present; when the outcome
    /// column is absent (label-free samples) the outcome role is re-pointed
    /// at the protected column purely to keep the schema well formed — no
    /// table estimated from such a sample may involve the outcome.
    pub fn subset_for_external(&self, present: &[String]) -> Result<Schema, DataError> {
        let columns: Vec<ColumnSpec> = self
            .columns
            .iter()
            .filter(|c| present.contains(&c.name))
            .cloned()
            .collect();
        if !columns.iter().any(|c| c.name == self.protected.name) {
            return Err(DataError::MissingColumn(self.protected.name.clone()));
        }
        let outcome = if columns.iter().any(|c| c.name == self.outcome.name()) {
            self.outcome.clone()
        } else {
            OutcomeSpec::Mapped {
                name: self.protected.name.clone(),
                y0: self.protected.s0.clone(),
                y1: self.protected.s1.clone(),
            }
        };
        let admissible =
            self.admissible.iter().filter(|a| present.contains(a)).cloned().collect();
        let schema =
            Schema { columns, outcome, protected: self.protected.clone(), admissible };
        schema.validate()?;
        Ok(schema)
    }
}

/// Upper cut points for `bins` quantile bins (last cut is +inf).
fn quantile_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut cuts = Vec::with_capacity(bins);
    for b in 1..bins {
        let rank = (b * n) / bins;
        cuts.push(sorted[rank.min(n - 1)]);
    }
    cuts.push(f64::INFINITY);
    cuts
}

fn bin_of(v: f64, cuts: &[f64]) -> usize {
    cuts.iter().position(|c| v < *c).unwrap_or(cuts.len() - 1)
}

/// Key of one stratum: protected group code, admissible values, U values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct StrataKey {
    pub a: Vec<u16>,
    pub s: u16,
    pub u: Vec<u16>,
}

/// Per-cell count and accumulated positive prediction mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrataCell {
    pub n: usize,
    pub pos_mass: f64,
}

/// Counts and prediction mass grouped by (S, A-tuple, U-tuple).
#[derive(Debug, Clone)]
pub struct StrataTable {
    pub s_col: usize,
    pub a_cols: Vec<usize>,
    pub u_cols: Vec<usize>,
    cells: BTreeMap<StrataKey, StrataCell>,
    pub rows_seen: usize,
}

impl StrataTable {
    pub fn cells(&self) -> &BTreeMap<StrataKey, StrataCell> {
        &self.cells
    }

    pub fn get(&self, key: &StrataKey) -> Option<&StrataCell> {
        self.cells.get(key)
    }
}

/// Groups `d` by (S, A, u) and accumulates `preds` per cell, with A taken
/// from the schema's admissible set. Hard 0/1 predictions are the special
/// case of prediction values in [0,1].
pub fn stratify(
    d: &Dataset,
    preds: &[f64],
    u_vars: &[String],
) -> Result<StrataTable, DataError> {
    let admissible = d.schema().admissible.clone();
    stratify_with(d, preds, &admissible, u_vars)
}

/// [`stratify`] with an explicit admissible list; fairness queries may
/// condition on a different A than the schema default.
pub fn stratify_with(
    d: &Dataset,
    preds: &[f64],
    a_vars: &[String],
    u_vars: &[String],
) -> Result<StrataTable, DataError> {
    if preds.len() != d.len() {
        return Err(DataError::LengthMismatch { preds: preds.len(), rows: d.len() });
    }
    let schema = d.schema();
    let s_col = schema.column_index(&schema.protected.name)?;
    let a_cols: Vec<usize> = a_vars
        .iter()
        .map(|a| schema.column_index(a))
        .collect::<Result<_, _>>()?;
    let u_cols: Vec<usize> = u_vars
        .iter()
        .map(|u| schema.column_index(u))
        .collect::<Result<_, _>>()?;
    // Collect per-cell values first and sum them in sorted order, so the
    // table is bit-identical under any row permutation.
    let mut buckets: BTreeMap<StrataKey, Vec<f64>> = BTreeMap::new();
    for (row, &p) in d.rows().iter().zip(preds) {
        let key = StrataKey {
            a: a_cols.iter().map(|&c| row[c]).collect(),
            s: row[s_col],
            u: u_cols.iter().map(|&c| row[c]).collect(),
        };
        buckets.entry(key).or_default().push(p);
    }
    let mut cells: BTreeMap<StrataKey, StrataCell> = BTreeMap::new();
    for (key, mut vals) in buckets {
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cells.insert(key, StrataCell { n: vals.len(), pos_mass: vals.iter().sum() });
    }
    Ok(StrataTable { s_col, a_cols, u_cols, cells, rows_seen: d.len() })
}

/// Positive-prediction rate of one cell; `None` when the cell is unobserved.
pub fn cond_positive_rate(t: &StrataTable, s: u16, a: &[u16], u: &[u16]) -> Option<f64> {
    let key = StrataKey { a: a.to_vec(), s, u: u.to_vec() };
    t.get(&key).filter(|c| c.n > 0).map(|c| c.pos_mass / c.n as f64)
}

impl fmt::Display for StrataKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s={} a={:?} u={:?}", self.s, self.a, self.u)
    }
}
