//! The empirical fairness query: average absolute group gap in positive
//! prediction rates over admissible strata, in hard and differentiable form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{stratify_with, DataError, Dataset, Schema};

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("no admissible value observed for both groups under spec {0}")]
    NoComparableStrata(String),
    #[error("prediction {value} at row {row} outside [0,1]")]
    BadPrediction { row: usize, value: f64 },
}

/// Fairness-query mode implied by the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMode {
    /// A is empty: equal positive rates across groups.
    StatisticalParity,
    /// A is exactly the outcome: equal rates within each true label.
    EqualOpportunity,
    /// General admissible set.
    Conditional,
}

/// Which groups are compared and within which strata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessSpec {
    pub protected: String,
    pub s0: String,
    pub s1: String,
    pub admissible: Vec<String>,
}

impl FairnessSpec {
    /// Reads the roles straight off a schema.
    pub fn from_schema(schema: &Schema) -> FairnessSpec {
        FairnessSpec {
            protected: schema.protected.name.clone(),
            s0: schema.protected.s0.clone(),
            s1: schema.protected.s1.clone(),
            admissible: schema.admissible.clone(),
        }
    }

    pub fn mode(&self, outcome: &str) -> FairnessMode {
        if self.admissible.is_empty() {
            FairnessMode::StatisticalParity
        } else if self.admissible.len() == 1 && self.admissible[0] == outcome {
            FairnessMode::EqualOpportunity
        } else {
            FairnessMode::Conditional
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "protected {} ({} vs {}), admissible {:?}",
            self.protected, self.s0, self.s1, self.admissible
        )
    }

    pub(crate) fn group_codes(&self, schema: &Schema) -> Result<(u16, u16), DataError> {
        let col = schema.column(&self.protected)?;
        let code = |label: &str| {
            col.domain
                .iter()
                .position(|v| v == label)
                .map(|i| i as u16)
                .ok_or_else(|| DataError::BadProtected {
                    column: self.protected.clone(),
                    value: label.to_string(),
                })
        };
        Ok((code(&self.s0)?, code(&self.s1)?))
    }
}

/// Evaluated fairness query. `value` averages |gap| over the admissible
/// values where both groups are observed; `per_a_terms` keeps the signed gap
/// (privileged minus protected) and `signs` which group had the larger rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessValue {
    pub value: f64,
    pub per_a_terms: BTreeMap<String, f64>,
    pub signs: BTreeMap<String, GroupSign>,
    /// admissible values present in data but lacking one group, skipped from
    /// the average
    pub skipped_a: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSign {
    /// privileged group rate >= protected group rate
    PrivilegedHigher,
    ProtectedHigher,
}

pub(crate) fn a_key_label(schema: &Schema, a_cols: &[usize], a: &[u16]) -> String {
    if a.is_empty() {
        return "()".to_string();
    }
    let parts: Vec<String> = a_cols
        .iter()
        .zip(a)
        .map(|(&c, &v)| format!("{}={}", schema.columns[c].name, schema.columns[c].domain[v as usize]))
        .collect();
    parts.join(",")
}

fn check_preds(preds: &[f64]) -> Result<(), FairnessError> {
    for (i, &p) in preds.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(FairnessError::BadPrediction { row: i + 1, value: p });
        }
    }
    Ok(())
}

/// Hard-prediction form of the query: predictions are 0/1 counts.
pub fn empirical_fairness(
    d: &Dataset,
    preds: &[f64],
    spec: &FairnessSpec,
) -> Result<FairnessValue, FairnessError> {
    soft_fairness(d, preds, spec)
}

/// Differentiable form: per-group rates are means of probabilities, so the
/// query is smooth in `preds` and coincides with [`empirical_fairness`] on
/// 0/1 predictions.
pub fn soft_fairness(
    d: &Dataset,
    preds: &[f64],
    spec: &FairnessSpec,
) -> Result<FairnessValue, FairnessError> {
    Ok(soft_fairness_grad(d, preds, spec)?.0)
}

/// [`soft_fairness`] plus the gradient of the value in each prediction.
pub fn soft_fairness_grad(
    d: &Dataset,
    preds: &[f64],
    spec: &FairnessSpec,
) -> Result<(FairnessValue, Vec<f64>), FairnessError> {
    check_preds(preds)?;
    let schema = d.schema();
    let (s0, s1) = spec.group_codes(schema)?;
    // stratify with U = ∅ under the spec's own admissible set
    let table = stratify_with(d, preds, &spec.admissible, &[])?;

    // collect (n, mass) per (a, group)
    #[derive(Default, Clone)]
    struct Side {
        n: usize,
        mass: f64,
    }
    let mut per_a: BTreeMap<Vec<u16>, (Side, Side)> = BTreeMap::new();
    for (key, cell) in table.cells() {
        let entry = per_a.entry(key.a.clone()).or_default();
        if key.s == s0 {
            entry.0 = Side { n: cell.n, mass: cell.pos_mass };
        } else if key.s == s1 {
            entry.1 = Side { n: cell.n, mass: cell.pos_mass };
        }
        // other protected values are ignored by the two-group query
    }

    let mut per_a_terms = BTreeMap::new();
    let mut signs = BTreeMap::new();
    let mut skipped_a = Vec::new();
    let mut gaps: BTreeMap<Vec<u16>, f64> = BTreeMap::new();
    for (a, (lo, hi)) in &per_a {
        let label = a_key_label(schema, &table.a_cols, a);
        if lo.n == 0 || hi.n == 0 {
            skipped_a.push(label);
            continue;
        }
        let gap = hi.mass / hi.n as f64 - lo.mass / lo.n as f64;
        signs.insert(
            label.clone(),
            if gap >= 0.0 { GroupSign::PrivilegedHigher } else { GroupSign::ProtectedHigher },
        );
        per_a_terms.insert(label, gap);
        gaps.insert(a.clone(), gap);
    }
    if gaps.is_empty() {
        return Err(FairnessError::NoComparableStrata(spec.describe()));
    }

    let m = gaps.len() as f64;
    let value = gaps.values().map(|g| g.abs()).sum::<f64>() / m;

    // d value / d pred_i = sign(gap_a) * (±1/n_side) / m for the row's cell
    let s_col = table.s_col;
    let a_cols = table.a_cols.clone();
    let mut grad = vec![0.0; preds.len()];
    for (i, row) in d.rows().iter().enumerate() {
        let a: Vec<u16> = a_cols.iter().map(|&c| row[c]).collect();
        let Some(&gap) = gaps.get(&a) else { continue };
        let sgn = if gap >= 0.0 { 1.0 } else { -1.0 };
        let (lo, hi) = &per_a[&a];
        if row[s_col] == s1 {
            grad[i] = sgn / (hi.n as f64 * m);
        } else if row[s_col] == s0 {
            grad[i] = -sgn / (lo.n as f64 * m);
        }
    }

    Ok((FairnessValue { value, per_a_terms, signs, skipped_a }, grad))
}
