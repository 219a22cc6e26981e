//! Logistic-regression training on biased data with a fairness-bound
//! penalty, plus prediction and evaluation.
//!
//! The training objective is
//!
//! ```text
//! mean log-loss  +  lambda * max(soft-CUB(theta), tau)
//! ```
//!
//! where soft-CUB is the selected range strategy's upper-bound formula with
//! every hard stratum rate replaced by the mean predicted probability of the
//! stratum. The bound is piecewise smooth; gradients flow through the
//! currently maximal/minimal stratum (ties broken by sorted stratum key) and
//! the penalty contributes nothing when the bound sits at or below `tau`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cra::{
    compute_range, select_strategy, AuxDescriptor, AuxKey, AuxKind, AuxStats, CraError,
    CraOptions, Strategy, StrategyChoice,
};
use crate::data::{DataError, Dataset, Provenance, Schema};
use crate::fairness::{empirical_fairness, FairnessError, FairnessSpec, FairnessValue};
use crate::graph::DataCollectionDiagram;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Cra(#[from] CraError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error("training needs at least two rows of each class, got {pos} positive / {neg} negative")]
    TooFewRows { pos: usize, neg: usize },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },
    #[error("value `{value}` of column `{column}` is unknown to the encoder")]
    Encoding { column: String, value: String },
    #[error("evaluation requires an unbiased test set, got {0:?} provenance")]
    BiasedTestData(Provenance),
}

/// One-hot encoding map from schema columns to feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoder {
    /// encoded columns in schema order: (name, domain values)
    pub columns: Vec<(String, Vec<String>)>,
    pub use_protected: bool,
}

impl Encoder {
    /// Excludes the outcome column always and the protected column unless
    /// `use_protected` is set.
    pub fn from_schema(schema: &Schema, use_protected: bool) -> Encoder {
        let columns = schema
            .columns
            .iter()
            .filter(|c| c.name != schema.outcome.name())
            .filter(|c| use_protected || c.name != schema.protected.name)
            .map(|c| (c.name.clone(), c.domain.clone()))
            .collect();
        Encoder { columns, use_protected }
    }

    pub fn feature_count(&self) -> usize {
        self.columns.iter().map(|(_, d)| d.len()).sum()
    }

    /// Per-row active feature indices (one per encoded column).
    fn encode_dataset(&self, d: &Dataset) -> Result<Vec<Vec<u32>>, TrainError> {
        let schema = d.schema();
        // per encoder column: source column index and code -> feature index
        let mut maps: Vec<(usize, Vec<Option<u32>>)> = Vec::with_capacity(self.columns.len());
        let mut offset = 0u32;
        for (name, values) in &self.columns {
            let src = schema
                .column_index(name)
                .map_err(|_| TrainError::Encoding { column: name.clone(), value: "<column missing>".into() })?;
            let lookup: Vec<Option<u32>> = schema.columns[src]
                .domain
                .iter()
                .map(|v| values.iter().position(|e| e == v).map(|i| offset + i as u32))
                .collect();
            maps.push((src, lookup));
            offset += values.len() as u32;
        }
        let mut out = Vec::with_capacity(d.len());
        for row in d.rows() {
            let mut feats = Vec::with_capacity(maps.len());
            for ((src, lookup), (name, _)) in maps.iter().zip(&self.columns) {
                match lookup[row[*src] as usize] {
                    Some(f) => feats.push(f),
                    None => {
                        return Err(TrainError::Encoding {
                            column: name.clone(),
                            value: schema.columns[*src].domain[row[*src] as usize].clone(),
                        })
                    }
                }
            }
            out.push(feats);
        }
        Ok(out)
    }
}

/// Logistic model over one-hot features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub encoder: Encoder,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    Hard,
    Proba,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LogisticModel {
    /// Hard predictions are `1` when the probability reaches one half, so a
    /// zero-weight model predicts the favorable class everywhere.
    pub fn predict(&self, d: &Dataset, mode: PredictMode) -> Result<Vec<f64>, TrainError> {
        let rows = self.encoder.encode_dataset(d)?;
        Ok(rows
            .iter()
            .map(|feats| {
                let z: f64 =
                    feats.iter().map(|&f| self.weights[f as usize]).sum::<f64>() + self.bias;
                let p = sigmoid(z);
                match mode {
                    PredictMode::Proba => p,
                    PredictMode::Hard => {
                        if p >= 0.5 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect())
    }
}

/// Range-strategy inputs for the fairness penalty.
#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    pub diagram: DataCollectionDiagram,
    pub aux: Vec<AuxStats>,
    pub strategy_override: Option<Strategy>,
    pub strict_strata: bool,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// unfairness threshold: the penalty saturates below it
    pub tau: f64,
    /// penalty coefficient
    pub lambda: f64,
    /// learning rate
    pub eta: f64,
    pub max_epochs: usize,
    /// convergence threshold on the objective delta
    pub tol: f64,
    pub seed: u64,
    pub use_protected_feature: bool,
    pub penalty: Option<PenaltyConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.0,
            lambda: 0.0,
            eta: 0.1,
            max_epochs: 2000,
            tol: 1e-7,
            seed: 0,
            use_protected_feature: false,
            penalty: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(TrainError::BadConfig(format!("tau {} outside [0,1]", self.tau)));
        }
        if self.lambda < 0.0 {
            return Err(TrainError::BadConfig(format!("lambda {} negative", self.lambda)));
        }
        if self.eta <= 0.0 {
            return Err(TrainError::BadConfig(format!("eta {} not positive", self.eta)));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::BadConfig("max_epochs is zero".into()));
        }
        Ok(())
    }
}

/// Metrics of a trained or evaluated model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: f64,
    pub accuracy: f64,
    pub fairness_hard: FairnessValue,
    /// hard consistent upper bound at the end of training (absent when no
    /// penalty was configured or for plain evaluation)
    pub cub_final: Option<f64>,
    pub epochs_run: usize,
    pub loss_trace: Vec<f64>,
}

// ── soft bound machinery ────────────────────────────────────────────────

/// One stratum cell: member rows plus a constant weight (the external
/// probability or the reweighting coefficient, 1.0 where unused).
struct SoftCell {
    rows: Vec<u32>,
    weight: f64,
    /// index of the u'-projection group this cell belongs to (partial only)
    up_group: usize,
}

/// One admissible value's cells, split by group side.
struct SoftPerA {
    s0_cells: Vec<usize>,
    s1_cells: Vec<usize>,
    /// u'-group external weights for the partial strategy, per side:
    /// (s0 groups, s1 groups)
    s0_up_weights: Vec<f64>,
    s1_up_weights: Vec<f64>,
}

/// The differentiable relaxation of the selected strategy's bound.
struct SoftBound {
    strategy: Strategy,
    cells: Vec<SoftCell>,
    per_a: Vec<SoftPerA>,
}

impl SoftBound {
    /// Evaluates the bound at the soft rates implied by `probs` and returns
    /// the gradient with respect to every row probability. The value is the
    /// pre-clip bound average; clipping to [0,1] happens in the caller so a
    /// saturated bound contributes zero gradient.
    fn value_grad(&self, probs: &[f64], grad: &mut [f64]) -> f64 {
        let rates: Vec<f64> = self
            .cells
            .iter()
            .map(|c| c.rows.iter().map(|&r| probs[r as usize]).sum::<f64>() / c.rows.len() as f64)
            .collect();
        let n_a = self.per_a.len() as f64;
        let mut total = 0.0;
        // accumulate d(value)/d(rate) per cell, then push through the means
        let mut cell_grad = vec![0.0; self.cells.len()];

        for pa in &self.per_a {
            let side_rate = |cells: &[usize]| {
                let n: usize = cells.iter().map(|&c| self.cells[c].rows.len()).sum();
                let mass: f64 = cells
                    .iter()
                    .map(|&c| rates[c] * self.cells[c].rows.len() as f64)
                    .sum();
                mass / n as f64
            };
            match self.strategy {
                Strategy::Equality => {
                    // soft fairness of the biased data itself
                    let gap = side_rate(&pa.s1_cells) - side_rate(&pa.s0_cells);
                    let sgn = if gap >= 0.0 { 1.0 } else { -1.0 };
                    total += gap.abs();
                    let n1: usize = pa.s1_cells.iter().map(|&c| self.cells[c].rows.len()).sum();
                    let n0: usize = pa.s0_cells.iter().map(|&c| self.cells[c].rows.len()).sum();
                    for &c in &pa.s1_cells {
                        cell_grad[c] += sgn * self.cells[c].rows.len() as f64 / n1 as f64 / n_a;
                    }
                    for &c in &pa.s0_cells {
                        cell_grad[c] -= sgn * self.cells[c].rows.len() as f64 / n0 as f64 / n_a;
                    }
                }
                Strategy::NoExternal => {
                    let privileged_higher = side_rate(&pa.s1_cells) >= side_rate(&pa.s0_cells);
                    let (hi, lo) = if privileged_higher {
                        (&pa.s1_cells, &pa.s0_cells)
                    } else {
                        (&pa.s0_cells, &pa.s1_cells)
                    };
                    let arg_hi = *hi
                        .iter()
                        .reduce(|a, b| if rates[*b] > rates[*a] { b } else { a })
                        .expect("nonempty side");
                    let arg_lo = *lo
                        .iter()
                        .reduce(|a, b| if rates[*b] < rates[*a] { b } else { a })
                        .expect("nonempty side");
                    total += rates[arg_hi] - rates[arg_lo];
                    cell_grad[arg_hi] += 1.0 / n_a;
                    cell_grad[arg_lo] -= 1.0 / n_a;
                }
                Strategy::Exact | Strategy::MissingA => {
                    let mut term = 0.0;
                    for &c in &pa.s1_cells {
                        term += self.cells[c].weight * rates[c];
                    }
                    for &c in &pa.s0_cells {
                        term -= self.cells[c].weight * rates[c];
                    }
                    let sgn = if term >= 0.0 { 1.0 } else { -1.0 };
                    total += term.abs();
                    for &c in &pa.s1_cells {
                        cell_grad[c] += sgn * self.cells[c].weight / n_a;
                    }
                    for &c in &pa.s0_cells {
                        cell_grad[c] -= sgn * self.cells[c].weight / n_a;
                    }
                }
                Strategy::PartialU => {
                    let privileged_higher = side_rate(&pa.s1_cells) >= side_rate(&pa.s0_cells);
                    let (hi, hi_w, lo, lo_w) = if privileged_higher {
                        (&pa.s1_cells, &pa.s1_up_weights, &pa.s0_cells, &pa.s0_up_weights)
                    } else {
                        (&pa.s0_cells, &pa.s0_up_weights, &pa.s1_cells, &pa.s1_up_weights)
                    };
                    // extreme rate within each u'-group, weighted externally
                    for (groups, weights, take_max, sgn) in
                        [(hi, hi_w, true, 1.0), (lo, lo_w, false, -1.0)]
                    {
                        let mut arg: BTreeMap<usize, usize> = BTreeMap::new();
                        for &c in groups.iter() {
                            let g = self.cells[c].up_group;
                            let cur = arg.entry(g).or_insert(c);
                            let better = if take_max {
                                rates[c] > rates[*cur]
                            } else {
                                rates[c] < rates[*cur]
                            };
                            if better {
                                *cur = c;
                            }
                        }
                        for (g, c) in arg {
                            total += sgn * weights[g] * rates[c];
                            cell_grad[c] += sgn * weights[g] / n_a;
                        }
                    }
                }
            }
        }

        for (cell, cg) in self.cells.iter().zip(&cell_grad) {
            if *cg == 0.0 {
                continue;
            }
            let per_row = cg / cell.rows.len() as f64;
            for &r in &cell.rows {
                grad[r as usize] += per_row;
            }
        }
        total / n_a
    }
}

/// Builds the soft bound for a chosen strategy over the training data.
fn build_soft_bound(
    d: &Dataset,
    spec: &FairnessSpec,
    choice: &StrategyChoice,
    aux: &[AuxStats],
) -> Result<SoftBound, TrainError> {
    let schema = d.schema();
    let (s0_code, s1_code) = spec.group_codes(schema)?;
    let s_col = schema.column_index(&spec.protected)?;
    let a_cols: Vec<usize> = spec
        .admissible
        .iter()
        .map(|a| schema.column_index(a))
        .collect::<Result<_, _>>()?;
    let u_cols: Vec<usize> = choice
        .u
        .iter()
        .map(|u| schema.column_index(u))
        .collect::<Result<_, _>>()?;

    // rows per (a, s, u) cell, sorted keys for deterministic tie-breaks
    let mut cells_map: BTreeMap<(Vec<u16>, u16, Vec<u16>), Vec<u32>> = BTreeMap::new();
    for (i, row) in d.rows().iter().enumerate() {
        if row[s_col] != s0_code && row[s_col] != s1_code {
            continue;
        }
        let key = (
            a_cols.iter().map(|&c| row[c]).collect::<Vec<u16>>(),
            row[s_col],
            u_cols.iter().map(|&c| row[c]).collect::<Vec<u16>>(),
        );
        cells_map.entry(key).or_default().push(i as u32);
    }

    let label_of = |col: usize, code: u16| schema.columns[col].domain[code as usize].clone();
    let s_label = |code: u16| label_of(s_col, code);
    let a_map_of = |a: &[u16]| -> BTreeMap<String, String> {
        a_cols.iter().zip(a).map(|(&c, &v)| (schema.columns[c].name.clone(), label_of(c, v))).collect()
    };
    let u_map_of = |u: &[u16]| -> BTreeMap<String, String> {
        u_cols.iter().zip(u).map(|(&c, &v)| (schema.columns[c].name.clone(), label_of(c, v))).collect()
    };

    let find_conditional = |vars: &[String]| {
        aux.iter().find(|t| {
            matches!(t.kind, AuxKind::UGivenSa | AuxKind::UprimeGivenSa) && t.u_vars == vars
        })
    };

    // weights for the missing-A strategy need n(s, u) pooled over a
    let mut n_su: BTreeMap<(u16, Vec<u16>), usize> = BTreeMap::new();
    for ((_, s, u), rows) in &cells_map {
        *n_su.entry((*s, u.clone())).or_insert(0) += rows.len();
    }

    let up_pos: Vec<usize> = choice
        .u_prime
        .as_deref()
        .unwrap_or(&[])
        .iter()
        .map(|v| choice.u.iter().position(|u| u == v).expect("U' inside U"))
        .collect();

    let mut cells: Vec<SoftCell> = Vec::new();
    let mut per_a_map: BTreeMap<Vec<u16>, SoftPerA> = BTreeMap::new();
    // u'-group index per (a, s, u'-projection)
    let mut up_groups: BTreeMap<(Vec<u16>, u16, Vec<u16>), usize> = BTreeMap::new();

    for ((a, s, u), rows) in &cells_map {
        let weight = match choice.strategy {
            Strategy::Exact => {
                let table = find_conditional(&choice.u).ok_or_else(|| {
                    CraError::AuxCoverage { cell: format!("no Pr(u|s,a) table over {:?}", choice.u) }
                })?;
                let key = AuxKey { s: s_label(*s), a: a_map_of(a), u: u_map_of(u) };
                table
                    .prob(&key)
                    .ok_or(CraError::AuxCoverage { cell: format!("{key:?}") })?
            }
            Strategy::MissingA => {
                let joint_table = aux
                    .iter()
                    .find(|t| t.kind == AuxKind::SUJoint && t.u_vars == choice.u)
                    .ok_or_else(|| CraError::AuxCoverage {
                        cell: format!("no Pr(s,u) table over {:?}", choice.u),
                    })?;
                let key = AuxKey { s: s_label(*s), a: BTreeMap::new(), u: u_map_of(u) };
                let joint = joint_table
                    .prob(&key)
                    .ok_or(CraError::AuxCoverage { cell: format!("{key:?}") })?;
                let pr_a_given_su = rows.len() as f64 / n_su[&(*s, u.clone())] as f64;
                pr_a_given_su * joint // normalized below
            }
            _ => 1.0,
        };
        let up_group = if choice.strategy == Strategy::PartialU {
            let proj: Vec<u16> = up_pos.iter().map(|&i| u[i]).collect();
            let next = up_groups.len();
            *up_groups.entry((a.clone(), *s, proj)).or_insert(next)
        } else {
            0
        };
        let cell_id = cells.len();
        cells.push(SoftCell { rows: rows.clone(), weight, up_group });
        let entry = per_a_map.entry(a.clone()).or_insert_with(|| SoftPerA {
            s0_cells: Vec::new(),
            s1_cells: Vec::new(),
            s0_up_weights: Vec::new(),
            s1_up_weights: Vec::new(),
        });
        if *s == s0_code {
            entry.s0_cells.push(cell_id);
        } else {
            entry.s1_cells.push(cell_id);
        }
    }

    // one-sided admissible values cannot be bounded
    for (a, pa) in &per_a_map {
        if pa.s0_cells.is_empty() || pa.s1_cells.is_empty() {
            return Err(TrainError::Cra(CraError::Bound(format!(
                "admissible value {a:?} observed for only one group"
            ))));
        }
    }

    // normalize missing-A weights per (a, side)
    if choice.strategy == Strategy::MissingA {
        for pa in per_a_map.values() {
            for side in [&pa.s0_cells, &pa.s1_cells] {
                let z: f64 = side.iter().map(|&c| cells[c].weight).sum();
                if z <= 0.0 {
                    return Err(TrainError::Cra(CraError::Bound(
                        "zero weight denominator in the joint-table reweighting".into(),
                    )));
                }
                for &c in side {
                    cells[c].weight /= z;
                }
            }
        }
    }

    // external u'-group weights for the partial strategy
    if choice.strategy == Strategy::PartialU {
        let up_list = choice.u_prime.clone().unwrap_or_default();
        let table = find_conditional(&up_list).ok_or_else(|| CraError::AuxCoverage {
            cell: format!("no Pr(u'|s,a) table over {up_list:?}"),
        })?;
        let n_groups = up_groups.len();
        let mut group_weight = vec![0.0; n_groups];
        for ((a, s, proj), &gid) in &up_groups {
            let u_map: BTreeMap<String, String> = up_pos
                .iter()
                .zip(proj)
                .map(|(&i, &v)| {
                    let c = u_cols[i];
                    (schema.columns[c].name.clone(), label_of(c, v))
                })
                .collect();
            let key = AuxKey { s: s_label(*s), a: a_map_of(a), u: u_map };
            group_weight[gid] = table
                .prob(&key)
                .ok_or(CraError::AuxCoverage { cell: format!("{key:?}") })?;
        }
        for pa in per_a_map.values_mut() {
            pa.s0_up_weights = group_weight.clone();
            pa.s1_up_weights = group_weight.clone();
        }
    }

    Ok(SoftBound { strategy: choice.strategy, cells, per_a: per_a_map.into_values().collect() })
}

/// The full penalized objective; exposed so gradients can be checked
/// externally against finite differences.
pub struct PenalizedObjective {
    features: Vec<Vec<u32>>,
    labels: Vec<f64>,
    n_features: usize,
    lambda: f64,
    tau: f64,
    bound: Option<SoftBound>,
}

impl PenalizedObjective {
    pub fn n_params(&self) -> usize {
        self.n_features + 1
    }

    fn probs(&self, theta: &[f64]) -> Vec<f64> {
        let bias = theta[self.n_features];
        self.features
            .iter()
            .map(|feats| {
                let z: f64 = feats.iter().map(|&f| theta[f as usize]).sum::<f64>() + bias;
                sigmoid(z)
            })
            .collect()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.value_grad(theta).0
    }

    /// Objective value and gradient over `[weights.., bias]`.
    pub fn value_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let n = self.features.len() as f64;
        let probs = self.probs(theta);
        let mut loss = 0.0;
        for (p, y) in probs.iter().zip(&self.labels) {
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        loss /= n;

        // d loss / d z_i
        let mut dz: Vec<f64> = probs
            .iter()
            .zip(&self.labels)
            .map(|(p, y)| (p - y) / n)
            .collect();

        let mut value = loss;
        if let Some(bound) = &self.bound {
            let mut dprob = vec![0.0; probs.len()];
            let raw = bound.value_grad(&probs, &mut dprob);
            let clipped = raw.clamp(0.0, 1.0);
            value += self.lambda * clipped.max(self.tau);
            // gradient flows only while the penalty is active and unclipped
            if clipped > self.tau && (0.0..=1.0).contains(&raw) {
                for ((dzi, dp), p) in dz.iter_mut().zip(&dprob).zip(&probs) {
                    *dzi += self.lambda * dp * p * (1.0 - p);
                }
            }
        }

        let mut grad = vec![0.0; self.n_params()];
        for (feats, dzi) in self.features.iter().zip(&dz) {
            for &f in feats {
                grad[f as usize] += dzi;
            }
            grad[self.n_features] += dzi;
        }
        (value, grad)
    }

    /// Soft bound at `theta` before the `max(tau, .)` saturation; `None`
    /// when no penalty is configured.
    pub fn soft_bound(&self, theta: &[f64]) -> Option<f64> {
        self.bound.as_ref().map(|b| {
            let probs = self.probs(theta);
            let mut scratch = vec![0.0; probs.len()];
            b.value_grad(&probs, &mut scratch).clamp(0.0, 1.0)
        })
    }
}

/// Assembles the objective for a dataset/config pair without running any
/// optimization.
pub fn penalized_objective(
    d_biased: &Dataset,
    cfg: &TrainConfig,
) -> Result<PenalizedObjective, TrainError> {
    cfg.validate()?;
    let labels = d_biased.labels()?;
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let neg = labels.len() - pos;
    if pos < 2 || neg < 2 {
        return Err(TrainError::TooFewRows { pos, neg });
    }
    let encoder = Encoder::from_schema(d_biased.schema(), cfg.use_protected_feature);
    let features = encoder.encode_dataset(d_biased)?;
    let n_features = encoder.feature_count();

    let bound = match (&cfg.penalty, cfg.lambda > 0.0) {
        (Some(pen), true) => {
            let spec = FairnessSpec::from_schema(d_biased.schema());
            let roles = pen.diagram.roles();
            let schema_a: std::collections::BTreeSet<String> =
                spec.admissible.iter().cloned().collect();
            if roles.protected != spec.protected || roles.admissible != schema_a {
                return Err(TrainError::Cra(CraError::Strategy(format!(
                    "diagram roles (protected {}, admissible {:?}) do not match the schema",
                    roles.protected, roles.admissible
                ))));
            }
            let descriptors: Vec<AuxDescriptor> = pen.aux.iter().map(|a| a.descriptor()).collect();
            let mut choice = select_strategy(&pen.diagram, &descriptors)?;
            if let Some(forced) = pen.strategy_override {
                if forced != choice.strategy {
                    let u = crate::graph::select_u(&pen.diagram, None)?;
                    choice = StrategyChoice {
                        strategy: forced,
                        u: u.iter().cloned().collect(),
                        u_prime: None,
                    };
                }
            }
            // the bound is only sound under the verified independence
            let u_set = choice.u.iter().cloned().collect();
            if !pen.diagram.selection_independent_given(&u_set)? {
                return Err(TrainError::Cra(CraError::Strategy(format!(
                    "U = {:?} does not separate the features from selection",
                    choice.u
                ))));
            }
            Some(build_soft_bound(d_biased, &spec, &choice, &pen.aux)?)
        }
        _ => None,
    };

    Ok(PenalizedObjective {
        features,
        labels,
        n_features,
        lambda: cfg.lambda,
        tau: cfg.tau,
        bound,
    })
}

/// Full-batch gradient descent on the penalized objective. Deterministic in
/// (data, config); stops when the objective delta drops below `tol` or at
/// `max_epochs`.
pub fn train_fair(
    d_biased: &Dataset,
    cfg: &TrainConfig,
) -> Result<(LogisticModel, EvalReport), TrainError> {
    let objective = penalized_objective(d_biased, cfg)?;
    let n_params = objective.n_params();

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut theta: Vec<f64> = (0..n_params).map(|_| rng.random_range(-0.01..0.01)).collect();

    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut epochs_run = 0;
    for epoch in 0..cfg.max_epochs {
        let (value, grad) = objective.value_grad(&theta);
        if !value.is_finite() {
            return Err(TrainError::Diverged { epoch, loss: value });
        }
        trace.push(value);
        epochs_run = epoch + 1;
        if (prev - value).abs() < cfg.tol {
            break;
        }
        prev = value;
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.eta * g;
        }
        // runaway parameters mean the step size is hopeless even where the
        // clamped loss stays finite
        if theta.iter().any(|t| !t.is_finite() || t.abs() > 1e150) {
            return Err(TrainError::Diverged { epoch, loss: value });
        }
    }

    let encoder = Encoder::from_schema(d_biased.schema(), cfg.use_protected_feature);
    let model = LogisticModel {
        encoder,
        weights: theta[..n_params - 1].to_vec(),
        bias: theta[n_params - 1],
    };

    let spec = FairnessSpec::from_schema(d_biased.schema());
    let hard = model.predict(d_biased, PredictMode::Hard)?;
    let fairness_hard = empirical_fairness(d_biased, &hard, &spec)?;
    let labels = d_biased.labels()?;
    let (f1, accuracy) = f1_accuracy(&hard, &labels);
    let cub_final = match &cfg.penalty {
        Some(pen) => Some(
            compute_range(
                d_biased,
                &hard,
                &spec,
                &pen.diagram,
                &pen.aux,
                pen.strategy_override,
                &CraOptions { strict_strata: pen.strict_strata },
            )?
            .cub,
        ),
        None => None,
    };

    Ok((
        model,
        EvalReport { f1, accuracy, fairness_hard, cub_final, epochs_run, loss_trace: trace },
    ))
}

/// Scores a model on an unbiased test set.
pub fn evaluate(
    model: &LogisticModel,
    d_test: &Dataset,
    spec: &FairnessSpec,
) -> Result<EvalReport, TrainError> {
    if d_test.provenance() == Provenance::Biased {
        return Err(TrainError::BiasedTestData(d_test.provenance()));
    }
    let hard = model.predict(d_test, PredictMode::Hard)?;
    let labels = d_test.labels()?;
    let (f1, accuracy) = f1_accuracy(&hard, &labels);
    let fairness_hard = empirical_fairness(d_test, &hard, spec)?;
    Ok(EvalReport {
        f1,
        accuracy,
        fairness_hard,
        cub_final: None,
        epochs_run: 0,
        loss_trace: Vec::new(),
    })
}

/// F1 of the positive class and plain accuracy. An empty confusion corner
/// (no positives anywhere) scores zero F1 by convention.
pub fn f1_accuracy(hard_preds: &[f64], labels: &[f64]) -> (f64, f64) {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fne = 0.0;
    let mut correct = 0usize;
    for (&h, &y) in hard_preds.iter().zip(labels) {
        if h == y {
            correct += 1;
        }
        if h == 1.0 && y == 1.0 {
            tp += 1.0;
        } else if h == 1.0 {
            fp += 1.0;
        } else if y == 1.0 {
            fne += 1.0;
        }
    }
    let f1 = if 2.0 * tp + fp + fne == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fne) };
    (f1, correct as f64 / labels.len() as f64)
}
