//! Consistent ranges for fairness queries on the unobserved target
//! population, computed from biased data plus whatever external statistics
//! are available.
//!
//! Each strategy corresponds to one closed form:
//!
//! * [`range_equality`] — selection depends only on (S, A); the biased query
//!   already answers the population query.
//! * [`range_no_external`] — no external data; the population rate of each
//!   group is bracketed by its extreme stratum rates over a separating set U.
//! * [`range_exact`] — external tables `Pr(u | s, a)` reweight the biased
//!   stratum rates into the exact population answer.
//! * [`range_partial_u`] — tables cover only a subset U' of U; mixes the
//!   reweighting with the max/min bracket over the uncovered remainder.
//! * [`range_missing_a`] — no external information about A; a joint table
//!   `Pr(s, u)` substitutes, provided selection does not depend on A.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{stratify_with, DataError, Dataset, Schema, StrataCell, StrataTable};
use crate::fairness::{empirical_fairness, FairnessError, FairnessSpec, FairnessValue};
use crate::graph::{select_u, DataCollectionDiagram, GraphError, NodeSet};

const AUX_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CraError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("strategy precondition violated: {0}")]
    Strategy(String),
    #[error("bound not computable: {0}")]
    Bound(String),
    #[error("auxiliary table does not cover {cell}")]
    AuxCoverage { cell: String },
    #[error("auxiliary table invalid: {0}")]
    AuxInvalid(String),
    #[error("stratum {cell} carries auxiliary mass {mass} but is unobserved in the biased data")]
    AbsentStratum { cell: String, mass: f64 },
}

/// The three shapes of external-population tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxKind {
    /// Pr(u | s, a) for the full separating set U.
    UGivenSa,
    /// Pr(u' | s, a) for a subset U' of U.
    UprimeGivenSa,
    /// Pr(s, u) joint, no admissible conditioning.
    SUJoint,
}

/// One table entry context: group label, admissible values, U values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AuxKey {
    pub s: String,
    #[serde(default)]
    pub a: BTreeMap<String, String>,
    pub u: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AuxEntry {
    s: String,
    #[serde(default)]
    a: BTreeMap<String, String>,
    u: BTreeMap<String, String>,
    p: f64,
}

/// External-population probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxStats {
    pub kind: AuxKind,
    /// variables covered (U or U'), sorted
    pub u_vars: Vec<String>,
    table: BTreeMap<AuxKey, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuxDoc {
    kind: AuxKind,
    u_vars: Vec<String>,
    entries: Vec<AuxEntry>,
}

impl AuxStats {
    pub fn new(
        kind: AuxKind,
        u_vars: Vec<String>,
        table: BTreeMap<AuxKey, f64>,
    ) -> Result<Self, CraError> {
        let mut u_vars = u_vars;
        u_vars.sort();
        let aux = AuxStats { kind, u_vars, table };
        aux.validate()?;
        Ok(aux)
    }

    /// Probabilities lie in [0,1] and sum to one per conditioning context
    /// (globally, for the joint kind).
    pub fn validate(&self) -> Result<(), CraError> {
        let mut context_sums: BTreeMap<(String, Vec<(String, String)>), f64> = BTreeMap::new();
        for (key, &p) in &self.table {
            if !(0.0..=1.0 + AUX_NORM_TOL).contains(&p) || p.is_nan() {
                return Err(CraError::AuxInvalid(format!("probability {p} out of range")));
            }
            let uv: Vec<&String> = key.u.keys().collect();
            if uv.len() != self.u_vars.len() || !key.u.keys().all(|k| self.u_vars.contains(k)) {
                return Err(CraError::AuxInvalid(format!(
                    "entry covers u variables {uv:?}, table declares {:?}",
                    self.u_vars
                )));
            }
            match self.kind {
                AuxKind::SUJoint => {
                    if !key.a.is_empty() {
                        return Err(CraError::AuxInvalid(
                            "joint table entries must not carry admissible values".into(),
                        ));
                    }
                    *context_sums.entry((String::new(), Vec::new())).or_insert(0.0) += p;
                }
                AuxKind::UGivenSa | AuxKind::UprimeGivenSa => {
                    let ctx = (
                        key.s.clone(),
                        key.a.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
                    );
                    *context_sums.entry(ctx).or_insert(0.0) += p;
                }
            }
        }
        for ((s, a), sum) in context_sums {
            if (sum - 1.0).abs() > AUX_NORM_TOL {
                return Err(CraError::AuxInvalid(format!(
                    "context s={s} a={a:?} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn prob(&self, key: &AuxKey) -> Option<f64> {
        self.table.get(key).copied()
    }

    pub fn entries(&self) -> &BTreeMap<AuxKey, f64> {
        &self.table
    }

    /// Kind plus covered variables: what [`select_strategy`] matches on.
    pub fn descriptor(&self) -> AuxDescriptor {
        AuxDescriptor { kind: self.kind, vars: self.u_vars.iter().cloned().collect() }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<AuxEntry> = self
            .table
            .iter()
            .map(|(k, &p)| AuxEntry { s: k.s.clone(), a: k.a.clone(), u: k.u.clone(), p })
            .collect();
        serde_json::to_value(AuxDoc { kind: self.kind, u_vars: self.u_vars.clone(), entries })
            .expect("aux serialization")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, CraError> {
        let doc: AuxDoc = serde_json::from_value(value.clone())
            .map_err(|e| CraError::AuxInvalid(e.to_string()))?;
        let mut table = BTreeMap::new();
        for e in doc.entries {
            let key = AuxKey { s: e.s, a: e.a, u: e.u };
            if table.insert(key.clone(), e.p).is_some() {
                return Err(CraError::AuxInvalid(format!("duplicate entry for {key:?}")));
            }
        }
        AuxStats::new(doc.kind, doc.u_vars, table)
    }
}

/// Summary of an available table, used for strategy selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxDescriptor {
    pub kind: AuxKind,
    pub vars: NodeSet,
}

/// Which closed form produced a range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Equality,
    NoExternal,
    Exact,
    PartialU,
    MissingA,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Strategy::Equality => "equality",
            Strategy::NoExternal => "no_external",
            Strategy::Exact => "exact",
            Strategy::PartialU => "partial_u",
            Strategy::MissingA => "missing_a",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equality" => Ok(Strategy::Equality),
            "no_external" => Ok(Strategy::NoExternal),
            "exact" => Ok(Strategy::Exact),
            "partial_u" => Ok(Strategy::PartialU),
            "missing_a" => Ok(Strategy::MissingA),
            other => Err(format!(
                "unknown strategy `{other}` (expected equality|no_external|exact|partial_u|missing_a)"
            )),
        }
    }
}

/// Strategy choice plus the separating sets it will use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyChoice {
    pub strategy: Strategy,
    pub u: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_prime: Option<Vec<String>>,
}

/// Per-call bookkeeping surfaced alongside every range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RangeDiagnostics {
    pub u: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_prime: Option<Vec<String>>,
    /// strata carrying auxiliary mass but unobserved in the biased data
    pub skipped_strata: usize,
    pub warnings: Vec<String>,
}

/// Interval of fairness-query answers consistent with the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistentRange {
    pub clb: f64,
    pub cub: f64,
    pub strategy: Strategy,
    pub diagnostics: RangeDiagnostics,
}

/// Options shared by the range computations.
#[derive(Debug, Clone, Copy, Default)]
pub struct CraOptions {
    /// Error out when auxiliary mass falls on strata unobserved in the
    /// biased data instead of skipping them.
    pub strict_strata: bool,
}

/// Walks the decision flowchart: structural equality first, then exact
/// reweighting, then partial coverage, then the A-free joint, and the
/// no-external bound as the universal fallback.
pub fn select_strategy(
    g: &DataCollectionDiagram,
    aux: &[AuxDescriptor],
) -> Result<StrategyChoice, CraError> {
    if g.selection_independent_given(&NodeSet::new())? {
        return Ok(StrategyChoice { strategy: Strategy::Equality, u: Vec::new(), u_prime: None });
    }
    let available: Option<NodeSet> = if aux.is_empty() {
        None
    } else {
        Some(aux.iter().flat_map(|d| d.vars.iter().cloned()).collect())
    };
    let u_set = select_u(g, available.as_ref())?;
    let u: Vec<String> = u_set.iter().cloned().collect();

    let conditional_kinds = [AuxKind::UGivenSa, AuxKind::UprimeGivenSa];
    if aux.iter().any(|d| conditional_kinds.contains(&d.kind) && d.vars == u_set) {
        return Ok(StrategyChoice { strategy: Strategy::Exact, u, u_prime: None });
    }
    // best proper subset of U covered by a conditional table
    let mut best_subset: Option<NodeSet> = None;
    for d in aux {
        if conditional_kinds.contains(&d.kind) && d.vars.is_subset(&u_set) && !d.vars.is_empty() {
            let better = best_subset
                .as_ref()
                .is_none_or(|b| d.vars.len() > b.len() || (d.vars.len() == b.len() && d.vars < *b));
            if better {
                best_subset = Some(d.vars.clone());
            }
        }
    }
    if let Some(sub) = best_subset {
        return Ok(StrategyChoice {
            strategy: Strategy::PartialU,
            u,
            u_prime: Some(sub.into_iter().collect()),
        });
    }
    let roles = g.roles();
    let selection_free_of_a = roles.admissible.is_disjoint(g.selection_parents());
    if selection_free_of_a && aux.iter().any(|d| d.kind == AuxKind::SUJoint && d.vars == u_set) {
        return Ok(StrategyChoice { strategy: Strategy::MissingA, u, u_prime: None });
    }
    Ok(StrategyChoice { strategy: Strategy::NoExternal, u, u_prime: None })
}

/// Stratum cells of one protected group, keyed by U values.
type GroupCells = BTreeMap<Vec<u16>, StrataCell>;

/// Per-admissible-value view of a strata table, split by protected group.
struct GroupedStrata<'a> {
    schema: &'a Schema,
    table: StrataTable,
    /// a-code -> (protected-group cells, privileged-group cells)
    per_a: BTreeMap<Vec<u16>, (GroupCells, GroupCells)>,
    s0: u16,
    s1: u16,
}

impl<'a> GroupedStrata<'a> {
    fn build(
        d: &'a Dataset,
        preds: &[f64],
        spec: &FairnessSpec,
        u_vars: &[String],
    ) -> Result<Self, CraError> {
        let schema = d.schema();
        let (s0, s1) = spec.group_codes(schema)?;
        let table = stratify_with(d, preds, &spec.admissible, u_vars)?;
        let mut per_a: BTreeMap<Vec<u16>, (GroupCells, GroupCells)> = BTreeMap::new();
        for (key, cell) in table.cells() {
            let entry = per_a.entry(key.a.clone()).or_default();
            if key.s == s0 {
                entry.0.insert(key.u.clone(), *cell);
            } else if key.s == s1 {
                entry.1.insert(key.u.clone(), *cell);
            }
        }
        Ok(GroupedStrata { schema, table, per_a, s0, s1 })
    }

    /// a-values observed for both groups; a one-sided a-value is an error
    /// for every bound strategy because its term cannot be computed.
    fn comparable_a(&self) -> Result<Vec<Vec<u16>>, CraError> {
        let mut out = Vec::new();
        let mut one_sided = Vec::new();
        for (a, (lo, hi)) in &self.per_a {
            if lo.is_empty() || hi.is_empty() {
                one_sided.push(self.a_label(a));
            } else {
                out.push(a.clone());
            }
        }
        if !one_sided.is_empty() {
            return Err(CraError::Bound(format!(
                "admissible values observed for only one group: {one_sided:?}"
            )));
        }
        if out.is_empty() {
            return Err(CraError::Bound("no admissible value observed for both groups".into()));
        }
        Ok(out)
    }

    fn a_label(&self, a: &[u16]) -> String {
        crate::fairness::a_key_label(self.schema, &self.table.a_cols, a)
    }

    fn u_labels(&self, u: &[u16]) -> BTreeMap<String, String> {
        self.table
            .u_cols
            .iter()
            .zip(u)
            .map(|(&c, &v)| {
                (
                    self.schema.columns[c].name.clone(),
                    self.schema.columns[c].domain[v as usize].clone(),
                )
            })
            .collect()
    }

    fn a_labels_map(&self, a: &[u16]) -> BTreeMap<String, String> {
        self.table
            .a_cols
            .iter()
            .zip(a)
            .map(|(&c, &v)| {
                (
                    self.schema.columns[c].name.clone(),
                    self.schema.columns[c].domain[v as usize].clone(),
                )
            })
            .collect()
    }

    fn s_label(&self, s: u16) -> String {
        let col =
            self.schema.column(&self.schema.protected.name).expect("protected column exists");
        col.domain[s as usize].clone()
    }

    /// Biased-data sign per a: true when the privileged group's plain rate
    /// is at least the protected group's.
    fn privileged_higher(&self, a: &[u16]) -> bool {
        let (lo, hi) = &self.per_a[a];
        let rate = |cells: &GroupCells| {
            let n: usize = cells.values().map(|c| c.n).sum();
            let mass: f64 = cells.values().map(|c| c.pos_mass).sum();
            mass / n as f64
        };
        rate(hi) >= rate(lo)
    }
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn point_range(value: f64, strategy: Strategy, diagnostics: RangeDiagnostics) -> ConsistentRange {
    let v = clip01(value);
    ConsistentRange { clb: v, cub: v, strategy, diagnostics }
}

/// Verifies `(X ⫫ C | S, A, U)` on the diagram, the shared precondition of
/// every strategy below; the fairness spec must agree with the diagram roles.
fn verify_independence(
    g: &DataCollectionDiagram,
    spec: &FairnessSpec,
    u: &NodeSet,
) -> Result<(), CraError> {
    let roles = g.roles();
    if roles.protected != spec.protected {
        return Err(CraError::Strategy(format!(
            "diagram protected attribute `{}` does not match query `{}`",
            roles.protected, spec.protected
        )));
    }
    let spec_a: NodeSet = spec.admissible.iter().cloned().collect();
    if roles.admissible != spec_a {
        return Err(CraError::Strategy(format!(
            "diagram admissible set {:?} does not match query {:?}",
            roles.admissible, spec_a
        )));
    }
    if !g.selection_independent_given(u)? {
        return Err(CraError::Strategy(format!(
            "features are not separated from the selection node given S, A and U = {u:?}"
        )));
    }
    Ok(())
}

/// Selection depends only on (S, A): the biased-data query already equals
/// the population query, so the range collapses to it.
pub fn range_equality(
    d_biased: &Dataset,
    preds: &[f64],
    spec: &FairnessSpec,
    g: &DataCollectionDiagram,
) -> Result<(ConsistentRange, FairnessValue), CraError> {
    verify_independence(g, spec, &NodeSet::new())?;
    let fv = empirical_fairness(d_biased, preds, spec)?;
    let mut diagnostics = RangeDiagnostics::default();
    diagnostics
        .warnings
        .extend(fv.skipped_a.iter().map(|a| format!("skipped one-sided admissible value {a}")));
    Ok((point_range(fv.value, Strategy::Equality, diagnostics), fv))
}

/// Upper bound without external data: per admissible value, the higher
/// group's largest stratum rate minus the lower group's smallest, averaged.
pub fn range_no_external(
    d_biased: &Dataset,
    preds: &[f64],
    spec: &FairnessSpec,
    g: &DataCollectionDiagram,
    u_vars: &NodeSet,
) -> Result<ConsistentRange, CraError> {
    verify_independence(g, spec, u_vars)?;
    let u_list: Vec<String> = u_vars.iter().cloned().collect();
    let grouped = GroupedStrata::build(d_biased, preds, spec, &u_list)?;
    let a_values = grouped.comparable_a()?;

    let mut total = 0.0;
    for a in &a_values {
        let (lo_cells, hi_cells) = &grouped.per_a[a];
        let (hi_cells, lo_cells) =
            if grouped.privileged_higher(a) { (hi_cells, lo_cells) } else { (lo_cells, hi_cells) };
        let hi =
            hi_cells.values().map(|c| c.pos_mass / c.n as f64).fold(f64::NEG_INFINITY, f64::max);
        let lo = lo_cells.values().map(|c| c.pos_mass / c.n as f64).fold(f64::INFINITY, f64::min);
        total += hi - lo;
    }
    let cub = clip01(total / a_values.len() as f64);
    Ok(ConsistentRange {
        clb: 0.0,
        cub,
        strategy: Strategy::NoExternal,
        diagnostics: RangeDiagnostics { u: u_list, ..Default::default() },
    })
}

/// Exact population answer via external conditionals `Pr(u | s, a)`.
pub fn range_exact(
    d_biased: &Dataset,
    preds: &[f64],
    spec: &FairnessSpec,
    g: &DataCollectionDiagram,
    u_vars: &NodeSet,
    aux: &AuxStats,
    opts: &CraOptions,
) -> Result<ConsistentRange, CraError> {
    verify_independence(g, spec, u_vars)?;
    if !matches!(aux.kind, AuxKind::UGivenSa | AuxKind::UprimeGivenSa) {
        return Err(CraError::Strategy("exact reweighting needs Pr(u|s,a) tables".into()));
    }
    let u_list: Vec<String> = u_vars.iter().cloned().collect();
    if aux.u_vars != u_list {
        return Err(CraError::Strategy(format!(
            "aux covers {:?} but the separating set is {u_list:?}",
            aux.u_vars
        )));
    }
    let grouped = GroupedStrata::build(d_biased, preds, spec, &u_list)?;
    let a_values = grouped.comparable_a()?;

    let mut skipped = 0usize;
    let mut warnings = Vec::new();
    let mut total = 0.0;
    for a in &a_values {
        let a_map = grouped.a_labels_map(a);
        let (lo_cells, hi_cells) = &grouped.per_a[a];
        let mut term = 0.0;
        for (s_code, cells, sign) in [(grouped.s1, hi_cells, 1.0), (grouped.s0, lo_cells, -1.0)] {
            let s_lab = grouped.s_label(s_code);
            // reweight observed stratum rates by the external conditional
            for (u, cell) in cells {
                let key = AuxKey { s: s_lab.clone(), a: a_map.clone(), u: grouped.u_labels(u) };
                let p = aux
                    .prob(&key)
                    .ok_or_else(|| CraError::AuxCoverage { cell: format!("{key:?}") })?;
                term += sign * p * (cell.pos_mass / cell.n as f64);
            }
            // auxiliary mass on strata the biased data never observed
            skipped +=
                absent_mass_check(aux, &s_lab, &a_map, cells, &grouped, opts, &mut warnings)?;
        }
        total += term.abs();
    }
    let value = total / a_values.len() as f64;
    Ok(point_range(
        value,
        Strategy::Exact,
        RangeDiagnostics { u: u_list, skipped_strata: skipped, warnings, ..Default::default() },
    ))
}

/// Counts aux entries with positive mass in context (s, a) whose U values
/// were never observed for that group; strict mode turns them into errors.
fn absent_mass_check(
    aux: &AuxStats,
    s_lab: &str,
    a_map: &BTreeMap<String, String>,
    observed: &GroupCells,
    grouped: &GroupedStrata<'_>,
    opts: &CraOptions,
    warnings: &mut Vec<String>,
) -> Result<usize, CraError> {
    let observed_labels: BTreeSet<BTreeMap<String, String>> =
        observed.keys().map(|u| grouped.u_labels(u)).collect();
    let mut skipped = 0;
    for (key, &p) in aux.entries() {
        if key.s != s_lab || key.a != *a_map || p <= 0.0 {
            continue;
        }
        if !observed_labels.contains(&key.u) {
            if opts.strict_strata {
                return Err(CraError::AbsentStratum { cell: format!("{key:?}"), mass: p });
            }
            skipped += 1;
            warnings.push(format!("aux mass {p} on unobserved stratum {key:?} contributes 0"));
        }
    }
    Ok(skipped)
}

/// Tighter upper bound from partial coverage: known `Pr(u' | s, a)` weights
/// the per-u' extremes over the unobserved remainder of U.
#[allow(clippy::too_many_arguments)]
pub fn range_partial_u(
    d_biased: &Dataset,
    preds: &[f64],
    spec: &FairnessSpec,
    g: &DataCollectionDiagram,
    u_vars: &NodeSet,
    u_prime: &NodeSet,
    aux: &AuxStats,
    opts: &CraOptions,
) -> Result<ConsistentRange, CraError> {
    verify_independence(g, spec, u_vars)?;
    if !u_prime.is_subset(u_vars) {
        return Err(CraError::Strategy(format!("U' {u_prime:?} is not a subset of U {u_vars:?}")));
    }
    if !matches!(aux.kind, AuxKind::UGivenSa | AuxKind::UprimeGivenSa) {
        return Err(CraError::Strategy("partial reweighting needs Pr(u'|s,a) tables".into()));
    }
    let up_list: Vec<String> = u_prime.iter().cloned().collect();
    if aux.u_vars != up_list {
        return Err(CraError::Strategy(format!(
            "aux covers {:?} but U' is {up_list:?}",
            aux.u_vars
        )));
    }
    let u_list: Vec<String> = u_vars.iter().cloned().collect();
    let grouped = GroupedStrata::build(d_biased, preds, spec, &u_list)?;
    let a_values = grouped.comparable_a()?;
    // positions of the U' coordinates inside the U tuple
    let up_pos: Vec<usize> = up_list
        .iter()
        .map(|v| u_list.iter().position(|u| u == v).expect("subset"))
        .collect();

    let mut skipped = 0usize;
    let mut warnings = Vec::new();
    let mut total = 0.0;
    for a in &a_values {
        let a_map = grouped.a_labels_map(a);
        let privileged_higher = grouped.privileged_higher(a);
        let (lo_cells, hi_cells) = &grouped.per_a[a];
        let (hi_cells, lo_cells, hi_code, lo_code) = if privileged_higher {
            (hi_cells, lo_cells, grouped.s1, grouped.s0)
        } else {
            (lo_cells, hi_cells, grouped.s0, grouped.s1)
        };

        let mut term = 0.0;
        for (s_code, cells, take_max, sign) in
            [(hi_code, hi_cells, true, 1.0), (lo_code, lo_cells, false, -1.0)]
        {
            let s_lab = grouped.s_label(s_code);
            // group the full-U cells by their U' projection
            let mut by_up: BTreeMap<Vec<u16>, Vec<f64>> = BTreeMap::new();
            for (u, cell) in cells {
                let up: Vec<u16> = up_pos.iter().map(|&i| u[i]).collect();
                by_up.entry(up).or_default().push(cell.pos_mass / cell.n as f64);
            }
            let observed_up: BTreeSet<BTreeMap<String, String>> =
                by_up.keys().map(|up| project_labels(&grouped, &up_pos, up)).collect();
            for (up, rates) in &by_up {
                let key = AuxKey {
                    s: s_lab.clone(),
                    a: a_map.clone(),
                    u: project_labels(&grouped, &up_pos, up),
                };
                let p = aux
                    .prob(&key)
                    .ok_or_else(|| CraError::AuxCoverage { cell: format!("{key:?}") })?;
                let extreme = if take_max {
                    rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    rates.iter().cloned().fold(f64::INFINITY, f64::min)
                };
                term += sign * p * extreme;
            }
            for (key, &p) in aux.entries() {
                if key.s != s_lab || key.a != a_map || p <= 0.0 {
                    continue;
                }
                if !observed_up.contains(&key.u) {
                    if opts.strict_strata {
                        return Err(CraError::AbsentStratum { cell: format!("{key:?}"), mass: p });
                    }
                    skipped += 1;
                    warnings
                        .push(format!("aux mass {p} on unobserved stratum {key:?} contributes 0"));
                }
            }
        }
        total += term;
    }
    let cub = clip01(total / a_values.len() as f64);
    Ok(ConsistentRange {
        clb: 0.0,
        cub,
        strategy: Strategy::PartialU,
        diagnostics: RangeDiagnostics {
            u: u_list,
            u_prime: Some(up_list),
            skipped_strata: skipped,
            warnings,
        },
    })
}

fn project_labels(
    grouped: &GroupedStrata<'_>,
    up_pos: &[usize],
    up: &[u16],
) -> BTreeMap<String, String> {
    let u_cols = &grouped.table.u_cols;
    up_pos
        .iter()
        .zip(up)
        .map(|(&i, &v)| {
            let c = u_cols[i];
            (
                grouped.schema.columns[c].name.clone(),
                grouped.schema.columns[c].domain[v as usize].clone(),
            )
        })
        .collect()
}

/// Exact answer without external information about A: a joint `Pr(s, u)`
/// table plus the biased conditional `Pr(a | s, u)` substitute for the
/// missing `Pr(u | s, a)`, valid when selection does not depend on A.
pub fn range_missing_a(
    d_biased: &Dataset,
    preds: &[f64],
    spec: &FairnessSpec,
    g: &DataCollectionDiagram,
    u_vars: &NodeSet,
    aux: &AuxStats,
    opts: &CraOptions,
) -> Result<ConsistentRange, CraError> {
    verify_independence(g, spec, u_vars)?;
    if aux.kind != AuxKind::SUJoint {
        return Err(CraError::Strategy("missing-A reweighting needs a Pr(s,u) joint table".into()));
    }
    let roles = g.roles();
    if !roles.admissible.is_disjoint(g.selection_parents()) {
        return Err(CraError::Strategy(
            "selection depends on an admissible attribute; the joint-table route is invalid".into(),
        ));
    }
    let u_list: Vec<String> = u_vars.iter().cloned().collect();
    if aux.u_vars != u_list {
        return Err(CraError::Strategy(format!(
            "aux covers {:?} but the separating set is {u_list:?}",
            aux.u_vars
        )));
    }
    let grouped = GroupedStrata::build(d_biased, preds, spec, &u_list)?;
    let a_values = grouped.comparable_a()?;

    // n(s, u) pooled over all admissible values
    let mut n_su: BTreeMap<(u16, Vec<u16>), usize> = BTreeMap::new();
    for (key, cell) in grouped.table.cells() {
        *n_su.entry((key.s, key.u.clone())).or_insert(0) += cell.n;
    }

    let mut skipped = 0usize;
    let mut warnings = Vec::new();

    // mark aux mass on (s,u) cells never observed for that group
    for (key, &p) in aux.entries() {
        if p <= 0.0 {
            continue;
        }
        let observed = n_su
            .iter()
            .any(|((s, u), _)| grouped.s_label(*s) == key.s && grouped.u_labels(u) == key.u);
        if !observed {
            if opts.strict_strata {
                return Err(CraError::AbsentStratum { cell: format!("{key:?}"), mass: p });
            }
            skipped += 1;
            warnings.push(format!("aux mass {p} on unobserved stratum {key:?} contributes 0"));
        }
    }

    let mut total = 0.0;
    for a in &a_values {
        let (lo_cells, hi_cells) = &grouped.per_a[a];
        let mut term = 0.0;
        for (s_code, cells, sign) in [(grouped.s1, hi_cells, 1.0), (grouped.s0, lo_cells, -1.0)] {
            let s_lab = grouped.s_label(s_code);
            // w(s,u,a) ∝ Pr_biased(a | s,u) · Pr_ext(s,u), normalized over u
            let mut weights: BTreeMap<Vec<u16>, f64> = BTreeMap::new();
            let mut denom = 0.0;
            for (u, cell) in cells {
                let n_cell = n_su[&(s_code, u.clone())] as f64;
                let pr_a_given_su = cell.n as f64 / n_cell;
                let key = AuxKey { s: s_lab.clone(), a: BTreeMap::new(), u: grouped.u_labels(u) };
                let joint = aux
                    .prob(&key)
                    .ok_or_else(|| CraError::AuxCoverage { cell: format!("{key:?}") })?;
                let w = pr_a_given_su * joint;
                weights.insert(u.clone(), w);
                denom += w;
            }
            if denom <= 0.0 {
                return Err(CraError::Bound(format!(
                    "zero weight denominator for group {s_lab}, admissible value {}",
                    grouped.a_label(a)
                )));
            }
            for (u, cell) in cells {
                term += sign * (weights[u] / denom) * (cell.pos_mass / cell.n as f64);
            }
        }
        total += term.abs();
    }
    let value = total / a_values.len() as f64;
    Ok(point_range(
        value,
        Strategy::MissingA,
        RangeDiagnostics { u: u_list, skipped_strata: skipped, warnings, ..Default::default() },
    ))
}

/// Estimates an auxiliary table from an unbiased sample by plain frequency
/// counting; unseen cells inside an observed context are present with
/// probability zero.
pub fn estimate_aux(
    sample: &Dataset,
    kind: AuxKind,
    u_vars: &NodeSet,
    spec: &FairnessSpec,
) -> Result<AuxStats, CraError> {
    let schema = sample.schema();
    let mut required: Vec<String> = vec![spec.protected.clone()];
    required.extend(u_vars.iter().cloned());
    if matches!(kind, AuxKind::UGivenSa | AuxKind::UprimeGivenSa) {
        required.extend(spec.admissible.iter().cloned());
    }
    for col in &required {
        if schema.column_index(col).is_err() {
            return Err(CraError::AuxCoverage { cell: format!("sample lacks column `{col}`") });
        }
    }
    let s_col = schema.column_index(&spec.protected)?;
    let u_cols: Vec<usize> =
        u_vars.iter().map(|v| schema.column_index(v)).collect::<Result<_, _>>()?;
    let u_names: Vec<String> = u_vars.iter().cloned().collect();
    let u_domains: Vec<&[String]> =
        u_cols.iter().map(|&c| schema.columns[c].domain.as_slice()).collect();

    let mut table: BTreeMap<AuxKey, f64> = BTreeMap::new();
    match kind {
        AuxKind::SUJoint => {
            let n = sample.len() as f64;
            let mut counts: BTreeMap<AuxKey, usize> = BTreeMap::new();
            for row in sample.rows() {
                let key = AuxKey {
                    s: schema.columns[s_col].domain[row[s_col] as usize].clone(),
                    a: BTreeMap::new(),
                    u: label_map(&u_names, &u_domains, &u_cols, row),
                };
                *counts.entry(key).or_insert(0) += 1;
            }
            // zero-fill the full S x Dom(U) grid
            for s_val in &schema.columns[s_col].domain {
                for u in full_u_grid(&u_names, &u_domains) {
                    let key = AuxKey { s: s_val.clone(), a: BTreeMap::new(), u };
                    let c = counts.get(&key).copied().unwrap_or(0);
                    table.insert(key, c as f64 / n);
                }
            }
        }
        AuxKind::UGivenSa | AuxKind::UprimeGivenSa => {
            let a_cols: Vec<usize> = spec
                .admissible
                .iter()
                .map(|v| schema.column_index(v))
                .collect::<Result<_, _>>()?;
            let a_names = spec.admissible.clone();
            let a_domains: Vec<&[String]> =
                a_cols.iter().map(|&c| schema.columns[c].domain.as_slice()).collect();
            let mut ctx_counts: BTreeMap<(String, BTreeMap<String, String>), usize> =
                BTreeMap::new();
            let mut cell_counts: BTreeMap<AuxKey, usize> = BTreeMap::new();
            for row in sample.rows() {
                let s = schema.columns[s_col].domain[row[s_col] as usize].clone();
                let a = label_map(&a_names, &a_domains, &a_cols, row);
                let u = label_map(&u_names, &u_domains, &u_cols, row);
                *ctx_counts.entry((s.clone(), a.clone())).or_insert(0) += 1;
                *cell_counts.entry(AuxKey { s, a, u }).or_insert(0) += 1;
            }
            for ((s, a), n_ctx) in &ctx_counts {
                for u in full_u_grid(&u_names, &u_domains) {
                    let key = AuxKey { s: s.clone(), a: a.clone(), u };
                    let c = cell_counts.get(&key).copied().unwrap_or(0);
                    table.insert(key, c as f64 / *n_ctx as f64);
                }
            }
        }
    }
    AuxStats::new(kind, u_names, table)
}

fn label_map(
    names: &[String],
    domains: &[&[String]],
    cols: &[usize],
    row: &[u16],
) -> BTreeMap<String, String> {
    names
        .iter()
        .zip(domains)
        .zip(cols)
        .map(|((n, d), &c)| (n.clone(), d[row[c] as usize].clone()))
        .collect()
}

fn full_u_grid(names: &[String], domains: &[&[String]]) -> Vec<BTreeMap<String, String>> {
    let mut grid: Vec<BTreeMap<String, String>> = vec![BTreeMap::new()];
    for (name, dom) in names.iter().zip(domains) {
        let mut next = Vec::with_capacity(grid.len() * dom.len());
        for partial in &grid {
            for v in *dom {
                let mut m = partial.clone();
                m.insert(name.clone(), v.clone());
                next.push(m);
            }
        }
        grid = next;
    }
    grid
}

/// Runs [`select_strategy`] and dispatches to the matching range
/// computation; `override_strategy` forces a branch when the caller knows
/// better.
pub fn compute_range(
    d_biased: &Dataset,
    preds: &[f64],
    spec: &FairnessSpec,
    g: &DataCollectionDiagram,
    aux: &[AuxStats],
    override_strategy: Option<Strategy>,
    opts: &CraOptions,
) -> Result<ConsistentRange, CraError> {
    let descriptors: Vec<AuxDescriptor> = aux.iter().map(|a| a.descriptor()).collect();
    let mut choice = select_strategy(g, &descriptors)?;
    if let Some(forced) = override_strategy {
        if forced != choice.strategy {
            let u_set = select_u(g, None)?;
            choice = StrategyChoice {
                strategy: forced,
                u: u_set.iter().cloned().collect(),
                u_prime: None,
            };
        }
    }
    let u_set: NodeSet = choice.u.iter().cloned().collect();
    let find_conditional = |vars: &[String]| {
        aux.iter().find(|t| {
            matches!(t.kind, AuxKind::UGivenSa | AuxKind::UprimeGivenSa) && t.u_vars == vars
        })
    };
    match choice.strategy {
        Strategy::Equality => Ok(range_equality(d_biased, preds, spec, g)?.0),
        Strategy::NoExternal => range_no_external(d_biased, preds, spec, g, &u_set),
        Strategy::Exact => {
            let table = find_conditional(&choice.u).ok_or_else(|| CraError::AuxCoverage {
                cell: format!("no Pr(u|s,a) table over {:?}", choice.u),
            })?;
            range_exact(d_biased, preds, spec, g, &u_set, table, opts)
        }
        Strategy::PartialU => {
            let up = choice.u_prime.clone().unwrap_or_default();
            let table = find_conditional(&up).ok_or_else(|| CraError::AuxCoverage {
                cell: format!("no Pr(u'|s,a) table over {up:?}"),
            })?;
            let up_set: NodeSet = up.into_iter().collect();
            range_partial_u(d_biased, preds, spec, g, &u_set, &up_set, table, opts)
        }
        Strategy::MissingA => {
            let table = aux
                .iter()
                .find(|t| t.kind == AuxKind::SUJoint && t.u_vars == choice.u)
                .ok_or_else(|| CraError::AuxCoverage {
                    cell: format!("no Pr(s,u) table over {:?}", choice.u),
                })?;
            range_missing_a(d_biased, preds, spec, g, &u_set, table, opts)
        }
    }
}
