//! Brute-force counterparts of the fast paths, for tests and the `verify`
//! command: path-enumeration d-separation, minimal-set Markov boundaries,
//! exhaustive repair enumeration on desk-size universes and finite
//! differences. Everything here trades speed for being obviously correct.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::cra::{AuxKind, AuxStats};
use crate::data::{DataError, Dataset, Provenance, Schema};
use crate::fairness::FairnessSpec;
use crate::graph::{CausalDiagram, GraphError, NodeSet};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("graph with {0} nodes exceeds the oracle size limit")]
    GraphTooLarge(usize),
    #[error("{types} row types with {k} additions exceed the completion budget")]
    TooManyCompletions { types: usize, k: usize },
    #[error("no consistent repair exists within the addition budget")]
    NoConsistentRepair,
    #[error("non-finite evaluation during finite differencing")]
    NonFinite,
    #[error("universe columns must be binary, `{0}` is not")]
    NotBinary(String),
    #[error("predictor misses row type {0:?}")]
    MissingPrediction(Vec<u16>),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
}

const MAX_ORACLE_NODES: usize = 8;
const MAX_COMPLETIONS: f64 = 1e7;

// ── graph oracles ───────────────────────────────────────────────────────

/// Literal reading of the blocking rules: enumerate every simple path and
/// test each interior node as a chain, fork or collider.
pub fn oracle_dsep(
    g: &CausalDiagram,
    left: &str,
    right: &str,
    given: &NodeSet,
) -> Result<bool, OracleError> {
    let names = g.node_names();
    if names.len() > MAX_ORACLE_NODES {
        return Err(OracleError::GraphTooLarge(names.len()));
    }
    let idx = |n: &str| -> Result<usize, OracleError> {
        names
            .iter()
            .position(|m| m == n)
            .ok_or_else(|| OracleError::Graph(GraphError::UnknownNode(n.to_string())))
    };
    let li = idx(left)?;
    let ri = idx(right)?;
    let in_given: Vec<bool> = names.iter().map(|n| given.contains(n)).collect();

    // adjacency with direction: true = edge points from a to b
    let n = names.len();
    let mut child = vec![vec![false; n]; n];
    for (i, name) in names.iter().enumerate() {
        for c in g.children_of(name)? {
            child[i][idx(&c)?] = true;
        }
    }
    let mut desc_in_given = vec![false; n];
    #[allow(clippy::needless_range_loop)]
    for v in 0..n {
        // DFS over descendants of v
        let mut stack = vec![v];
        let mut seen = vec![false; n];
        while let Some(x) = stack.pop() {
            if seen[x] {
                continue;
            }
            seen[x] = true;
            if in_given[x] {
                desc_in_given[v] = true;
            }
            for (y, &is_child) in child[x].iter().enumerate() {
                if is_child {
                    stack.push(y);
                }
            }
        }
    }

    // enumerate simple undirected paths from li to ri
    fn blocked(path: &[usize], child: &[Vec<bool>], in_given: &[bool], desc_in_given: &[bool]) -> bool {

        for w in path.windows(3) {
            let (a, v, b) = (w[0], w[1], w[2]);
            let collider = child[a][v] && child[b][v];
            if collider {
                if !in_given[v] && !desc_in_given[v] {
                    return true;
                }
            } else if in_given[v] {
                return true;
            }
        }
        false
    }
    let mut open_found = false;
    let mut path = vec![li];
    let mut on_path = vec![false; n];
    on_path[li] = true;
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        v: usize,
        target: usize,
        path: &mut Vec<usize>,
        on_path: &mut Vec<bool>,
        child: &[Vec<bool>],
        in_given: &[bool],
        desc_in_given: &[bool],
        open_found: &mut bool,
    ) {
        if *open_found {
            return;
        }
        if v == target {
            if !blocked(path, child, in_given, desc_in_given) {
                *open_found = true;
            }
            return;
        }
        let n = child.len();
        for w in 0..n {
            if !on_path[w] && (child[v][w] || child[w][v]) {
                path.push(w);
                on_path[w] = true;
                dfs(w, target, path, on_path, child, in_given, desc_in_given, open_found);
                path.pop();
                on_path[w] = false;
            }
        }
    }
    dfs(li, ri, &mut path, &mut on_path, &child, &in_given, &desc_in_given, &mut open_found);
    Ok(!open_found)
}

/// Smallest set whose conditioning separates `target` from every remaining
/// node, found by exhausting subsets in increasing size.
pub fn oracle_markov_boundary(
    g: &CausalDiagram,
    target: &str,
) -> Result<NodeSet, OracleError> {
    let names: Vec<String> =
        g.node_names().iter().filter(|n| *n != target).cloned().collect();
    if names.len() + 1 > MAX_ORACLE_NODES {
        return Err(OracleError::GraphTooLarge(names.len() + 1));
    }
    for size in 0..=names.len() {
        'subset: for combo in subsets_of_size(&names, size) {
            let m: NodeSet = combo.iter().map(|s| s.to_string()).collect();
            for other in &names {
                if m.contains(other) {
                    continue;
                }
                if !oracle_dsep(g, target, other, &m)? {
                    continue 'subset;
                }
            }
            return Ok(m);
        }
    }
    unreachable!("the full complement always separates");
}

fn subsets_of_size(items: &[String], size: usize) -> Vec<Vec<&String>> {
    let mut out = Vec::new();
    let mut cur: Vec<&String> = Vec::with_capacity(size);
    fn rec<'a>(
        items: &'a [String],
        size: usize,
        start: usize,
        cur: &mut Vec<&'a String>,
        out: &mut Vec<Vec<&'a String>>,
    ) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(&items[i]);
            rec(items, size, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, size, 0, &mut cur, &mut out);
    out
}

// ── finite differences ──────────────────────────────────────────────────

/// Central differences per coordinate.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(
    f: F,
    point: &[f64],
    eps: f64,
) -> Result<Vec<f64>, OracleError> {
    let mut grad = Vec::with_capacity(point.len());
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + eps;
        let up = f(&x);
        x[i] = point[i] - eps;
        let dn = f(&x);
        x[i] = point[i];
        if !up.is_finite() || !dn.is_finite() {
            return Err(OracleError::NonFinite);
        }
        grad.push((up - dn) / (2.0 * eps));
    }
    Ok(grad)
}

// ── repair enumeration ──────────────────────────────────────────────────

/// A complete-enumeration universe: binary columns, a biased multiset of row
/// types and an addition budget.
#[derive(Debug, Clone)]
pub struct TinyUniverse {
    pub schema: Schema,
    pub counts: BTreeMap<Vec<u16>, usize>,
    pub max_added: usize,
}

impl TinyUniverse {
    pub fn new(
        schema: Schema,
        counts: BTreeMap<Vec<u16>, usize>,
        max_added: usize,
    ) -> Result<Self, OracleError> {
        schema.validate()?;
        for col in &schema.columns {
            if col.domain.len() != 2 {
                return Err(OracleError::NotBinary(col.name.clone()));
            }
        }
        let types = 1usize << schema.columns.len();
        if (types as f64).powi(max_added as i32) > MAX_COMPLETIONS {
            return Err(OracleError::TooManyCompletions { types, k: max_added });
        }
        Ok(TinyUniverse { schema, counts, max_added })
    }

    fn all_types(&self) -> Vec<Vec<u16>> {
        let cols = self.schema.columns.len();
        (0..1usize << cols)
            .map(|bits| (0..cols).map(|i| ((bits >> i) & 1) as u16).collect())
            .collect()
    }

    /// Materializes the biased multiset as a dataset.
    pub fn to_dataset(&self) -> Result<Dataset, OracleError> {
        let mut rows = Vec::new();
        for (ty, &c) in &self.counts {
            for _ in 0..c {
                rows.push(ty.clone());
            }
        }
        Ok(Dataset::new(self.schema.clone(), rows, Provenance::Biased)?)
    }
}

/// Cell-level conditional-independence constraint: within every cell of the
/// `vars` projection, the type composition of the repair must match the
/// biased data within `tol` total variation. Cells absent from the biased
/// data reject any repair mass, since nothing can be verified there.
#[derive(Debug, Clone)]
pub struct CiCells {
    pub vars: Vec<String>,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct AuxConstraint {
    pub table: AuxStats,
    pub tol: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RepairConstraints {
    pub ci: Option<CiCells>,
    pub aux: Vec<AuxConstraint>,
}

/// Extrema of the fairness query over the surviving repairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairExtrema {
    pub min: f64,
    pub max: f64,
    pub survivors: usize,
}

/// Enumerates every multiset of at most `max_added` rows over the type grid,
/// keeps the supersets consistent with the constraints and returns the
/// extrema of the fairness query under the fixed per-type predictor.
pub fn enumerate_repairs(
    universe: &TinyUniverse,
    constraints: &RepairConstraints,
    preds: &BTreeMap<Vec<u16>, f64>,
    spec: &FairnessSpec,
) -> Result<RepairExtrema, OracleError> {
    let schema = &universe.schema;
    let types = universe.all_types();
    for ty in &types {
        if universe.counts.get(ty).copied().unwrap_or(0) > 0 && !preds.contains_key(ty) {
            return Err(OracleError::MissingPrediction(ty.clone()));
        }
    }
    let s_col = schema.column_index(&spec.protected)?;
    let a_cols: Vec<usize> = spec
        .admissible
        .iter()
        .map(|a| schema.column_index(a))
        .collect::<Result<_, _>>()?;
    let (s0_code, s1_code) = spec.group_codes(schema)?;

    // projections used by the CI constraint
    let ci_cols: Option<Vec<usize>> = match &constraints.ci {
        Some(ci) => Some(
            ci.vars
                .iter()
                .map(|v| schema.column_index(v))
                .collect::<Result<Vec<usize>, DataError>>()?,
        ),
        None => None,
    };
    let project = |cols: &[usize], ty: &[u16]| -> Vec<u16> { cols.iter().map(|&c| ty[c]).collect() };

    // per-type base counts in fixed type order
    let base: Vec<usize> =
        types.iter().map(|ty| universe.counts.get(ty).copied().unwrap_or(0)).collect();

    // aux constraint bookkeeping: per table, the (column indexes) of s/a/u
    struct AuxCheck {
        kind: AuxKind,
        tol: f64,
        s_col: usize,
        a_cols: Vec<usize>,
        u_cols: Vec<usize>,
        /// probability per (s, a-proj, u-proj); missing key means zero
        probs: BTreeMap<(u16, Vec<u16>, Vec<u16>), f64>,
    }
    let mut aux_checks = Vec::new();
    for ac in &constraints.aux {
        let u_cols: Vec<usize> = ac
            .table
            .u_vars
            .iter()
            .map(|v| schema.column_index(v))
            .collect::<Result<Vec<usize>, DataError>>()?;
        let kind = ac.table.kind;
        let a_cols_t: Vec<usize> = if kind == AuxKind::SUJoint { Vec::new() } else { a_cols.clone() };
        let mut probs = BTreeMap::new();
        for (key, &p) in ac.table.entries() {
            let s_code = schema.columns[s_col]
                .domain
                .iter()
                .position(|v| *v == key.s)
                .map(|i| i as u16);
            let Some(s_code) = s_code else { continue };
            let a_proj: Option<Vec<u16>> = a_cols_t
                .iter()
                .map(|&c| {
                    key.a
                        .get(&schema.columns[c].name)
                        .and_then(|v| schema.columns[c].domain.iter().position(|d| d == v))
                        .map(|i| i as u16)
                })
                .collect();
            let u_proj: Option<Vec<u16>> = u_cols
                .iter()
                .map(|&c| {
                    key.u
                        .get(&schema.columns[c].name)
                        .and_then(|v| schema.columns[c].domain.iter().position(|d| d == v))
                        .map(|i| i as u16)
                })
                .collect();
            if let (Some(a_proj), Some(u_proj)) = (a_proj, u_proj) {
                probs.insert((s_code, a_proj, u_proj), p);
            }
        }
        aux_checks.push(AuxCheck { kind, tol: ac.tol, s_col, a_cols: a_cols_t, u_cols, probs });
    }

    // base CI cell compositions: per cell, total count and type histogram
    type Composition = BTreeMap<Vec<u16>, (usize, BTreeMap<usize, usize>)>;
    let ci_base: Option<Composition> = ci_cols.as_ref().map(|cols| {
            let mut cells: Composition = BTreeMap::new();
            for (ti, ty) in types.iter().enumerate() {
                if base[ti] == 0 {
                    continue;
                }
                let cell = project(cols, ty);
                let entry = cells.entry(cell).or_default();
                entry.0 += base[ti];
                *entry.1.entry(ti).or_insert(0) += base[ti];
            }
            cells
        });

    let fairness_of = |total: &[usize]| -> Option<f64> {
        // direct counting over admissible strata
        let mut per_a: BTreeMap<Vec<u16>, [(f64, f64); 2]> = BTreeMap::new();
        for (ti, ty) in types.iter().enumerate() {
            if total[ti] == 0 {
                continue;
            }
            let side = if ty[s_col] == s0_code {
                0
            } else if ty[s_col] == s1_code {
                1
            } else {
                continue;
            };
            let a = project(&a_cols, ty);
            let entry = per_a.entry(a).or_insert([(0.0, 0.0); 2]);
            let p = preds.get(ty).copied().unwrap_or(0.0);
            entry[side].0 += total[ti] as f64;
            entry[side].1 += total[ti] as f64 * p;
        }
        let mut value = 0.0;
        let mut observed = 0usize;
        for sides in per_a.values() {
            if sides[0].0 == 0.0 || sides[1].0 == 0.0 {
                continue;
            }
            value += (sides[1].1 / sides[1].0 - sides[0].1 / sides[0].0).abs();
            observed += 1;
        }
        (observed > 0).then(|| value / observed as f64)
    };

    let consistent = |total: &[usize]| -> bool {
        if let (Some(cols), Some(base_cells)) = (&ci_cols, &ci_base) {
            let mut cells: Composition = BTreeMap::new();
            for (ti, ty) in types.iter().enumerate() {
                if total[ti] == 0 {
                    continue;
                }
                let cell = project(cols, ty);
                let entry = cells.entry(cell).or_default();
                entry.0 += total[ti];
                *entry.1.entry(ti).or_insert(0) += total[ti];
            }
            let tol = constraints.ci.as_ref().unwrap().tol;
            for (cell, (n, comp)) in &cells {
                let Some((bn, bcomp)) = base_cells.get(cell) else {
                    return false; // unverifiable new cell
                };
                // total variation between compositions
                let mut tv = 0.0;
                for ti in comp.keys().chain(bcomp.keys()) {
                    let p = *comp.get(ti).unwrap_or(&0) as f64 / *n as f64;
                    let q = *bcomp.get(ti).unwrap_or(&0) as f64 / *bn as f64;
                    tv += (p - q).abs();
                }
                if tv / 2.0 > tol + 1e-12 {
                    return false;
                }
            }
        }
        for check in &aux_checks {
            // accumulate observed joints
            let mut ctx_mass: BTreeMap<(u16, Vec<u16>), f64> = BTreeMap::new();
            let mut cell_mass: BTreeMap<(u16, Vec<u16>, Vec<u16>), f64> = BTreeMap::new();
            let mut grand = 0.0;
            for (ti, ty) in types.iter().enumerate() {
                if total[ti] == 0 {
                    continue;
                }
                let s = ty[check.s_col];
                let a = project(&check.a_cols, ty);
                let u = project(&check.u_cols, ty);
                *ctx_mass.entry((s, a.clone())).or_insert(0.0) += total[ti] as f64;
                *cell_mass.entry((s, a, u)).or_insert(0.0) += total[ti] as f64;
                grand += total[ti] as f64;
            }
            match check.kind {
                AuxKind::SUJoint => {
                    // every aux entry is a constraint on the joint
                    for (key, &p) in &check.probs {
                        let got = cell_mass.get(key).copied().unwrap_or(0.0) / grand;
                        if (got - p).abs() > check.tol + 1e-12 {
                            return false;
                        }
                    }
                    // mass on cells without an aux entry violates the table
                    for (key, &m) in &cell_mass {
                        if m > 0.0 && !check.probs.contains_key(key) {
                            return false;
                        }
                    }
                }
                AuxKind::UGivenSa | AuxKind::UprimeGivenSa => {
                    for ((s, a), &ctx) in &ctx_mass {
                        // conditioning contexts not covered by the table are
                        // unconstrained
                        let covered = check.probs.keys().any(|(ks, ka, _)| ks == s && ka == a);
                        if !covered {
                            continue;
                        }
                        for (key, &p) in &check.probs {
                            if key.0 != *s || key.1 != *a {
                                continue;
                            }
                            let got = cell_mass.get(key).copied().unwrap_or(0.0) / ctx;
                            if (got - p).abs() > check.tol + 1e-12 {
                                return false;
                            }
                        }
                        // conditional mass outside the table's support
                        for ((cs, ca, cu), &m) in &cell_mass {
                            if cs == s
                                && ca == a
                                && m > 0.0
                                && !check.probs.contains_key(&(*cs, ca.clone(), cu.clone()))
                            {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    };

    // recursive enumeration of additions
    let t = types.len();
    let mut total: Vec<usize> = base.clone();
    let mut best_min = f64::INFINITY;
    let mut best_max = f64::NEG_INFINITY;
    let mut survivors = 0usize;
    #[allow(clippy::too_many_arguments)]
    fn rec(
        ti: usize,
        remaining: usize,
        t: usize,
        total: &mut Vec<usize>,
        consistent: &dyn Fn(&[usize]) -> bool,
        fairness_of: &dyn Fn(&[usize]) -> Option<f64>,
        best_min: &mut f64,
        best_max: &mut f64,
        survivors: &mut usize,
    ) {
        if ti == t {
            if consistent(total) {
                if let Some(f) = fairness_of(total) {
                    *survivors += 1;
                    *best_min = best_min.min(f);
                    *best_max = best_max.max(f);
                }
            }
            return;
        }
        for add in 0..=remaining {
            total[ti] += add;
            rec(ti + 1, remaining - add, t, total, consistent, fairness_of, best_min, best_max, survivors);
            total[ti] -= add;
        }
    }
    rec(
        0,
        universe.max_added,
        t,
        &mut total,
        &consistent,
        &fairness_of,
        &mut best_min,
        &mut best_max,
        &mut survivors,
    );
    if survivors == 0 {
        return Err(OracleError::NoConsistentRepair);
    }
    Ok(RepairExtrema { min: best_min, max: best_max, survivors })
}

// ── containment suite ───────────────────────────────────────────────────

pub mod containment {
    //! Randomized instances where the repair family is enumerable and the
    //! matching range formula must contain every survivor's fairness value.
    //!
    //! Instances use two binary features (the separating set), a binary
    //! protected column and a binary outcome. Predictions are deterministic
    //! per stratum, with the privileged group's rates kept strictly above
    //! the protected group's so the per-stratum sign is stable across all
    //! repairs. Consistency tolerances are zero: a repair must reproduce the
    //! biased composition within every conditioning cell exactly and match
    //! the external tables exactly, which is the finite-sample reading of
    //! the conditions the closed forms assume.

    use super::*;
    use crate::cra::{
        estimate_aux, range_equality, range_exact, range_missing_a, range_no_external,
        range_partial_u, ConsistentRange, CraOptions, Strategy,
    };
    use crate::data::{ColumnSpec, OutcomeSpec, ProtectedSpec};
    use crate::graph::{DataCollectionDiagram, Roles};

    pub struct ContainmentOutcome {
        pub instances: usize,
        pub violations: usize,
        /// largest excursion of a survivor outside [clb, cub]
        pub worst_excess: f64,
        pub survivors_total: usize,
    }

    fn schema(admissible: &[&str]) -> Schema {
        Schema {
            columns: ["S", "F1", "F2", "Y"]
                .iter()
                .map(|n| ColumnSpec {
                    name: n.to_string(),
                    domain: vec!["0".into(), "1".into()],
                    bins: None,
                })
                .collect(),
            outcome: OutcomeSpec::Name("Y".into()),
            protected: ProtectedSpec { name: "S".into(), s0: "0".into(), s1: "1".into() },
            admissible: admissible.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn diagram(pa_c: &[&str], admissible: &[&str]) -> DataCollectionDiagram {
        let base = CausalDiagram::new(
            &["S", "F1", "F2", "Y"],
            &[("S", "F1"), ("F1", "Y"), ("F2", "Y")],
            Roles {
                outcome: "Y".into(),
                protected: "S".into(),
                admissible: admissible.iter().map(|s| s.to_string()).collect(),
            },
        )
        .unwrap();
        DataCollectionDiagram::new(base, "C", pa_c.iter().map(|s| s.to_string()).collect())
            .unwrap()
    }

    /// Deterministic per-(s, f1, f2) predictions with group-separated
    /// ranges; quantized so ties are exact when they happen.
    fn draw_preds(rng: &mut ChaCha12Rng) -> BTreeMap<Vec<u16>, f64> {
        let mut preds = BTreeMap::new();
        for bits in 0..16u16 {
            let ty: Vec<u16> = (0..4).map(|i| (bits >> i) & 1).collect();
            let s = ty[0];
            let level = rng.random_range(0..5) as f64 * 0.08;
            let p = if s == 1 { 0.92 - level } else { 0.08 + level };
            preds.insert(ty, p);
        }
        preds
    }

    fn counts_full_support(rng: &mut ChaCha12Rng) -> BTreeMap<Vec<u16>, usize> {
        let mut counts = BTreeMap::new();
        for bits in 0..16u16 {
            let ty: Vec<u16> = (0..4).map(|i| (bits >> i) & 1).collect();
            counts.insert(ty, rng.random_range(1..5usize));
        }
        counts
    }

    fn dataset_from(
        schema: &Schema,
        counts: &BTreeMap<Vec<u16>, usize>,
        preds: &BTreeMap<Vec<u16>, f64>,
    ) -> (Dataset, Vec<f64>) {
        let mut rows = Vec::new();
        let mut p = Vec::new();
        for (ty, &c) in counts {
            for _ in 0..c {
                rows.push(ty.clone());
                p.push(preds[ty]);
            }
        }
        (Dataset::new(schema.clone(), rows, Provenance::Biased).unwrap(), p)
    }

    fn set(names: &[&str]) -> NodeSet {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Removes up to `budget` rows (proportionally within (S, F1, F2) cells
    /// when `y_proportional`, else anywhere) and returns the removal count.
    fn remove_rows(
        rng: &mut ChaCha12Rng,
        counts: &mut BTreeMap<Vec<u16>, usize>,
        budget: usize,
        y_proportional: bool,
    ) -> usize {
        if y_proportional {
            // double everything, then drop one half-share of some cells
            for c in counts.values_mut() {
                *c *= 2;
            }
            let cells: Vec<Vec<u16>> = (0..8u16)
                .map(|bits| (0..3).map(|i| (bits >> i) & 1).collect())
                .collect();
            let mut removed = 0;
            for cell in cells {
                if rng.random_bool(0.4) {
                    // half of each y-type in this (s, f1, f2) cell
                    let mut share = 0;
                    for y in 0..2u16 {
                        let mut ty = cell.clone();
                        ty.push(y);
                        share += counts[&ty] / 2;
                    }
                    if removed + share > budget {
                        continue;
                    }
                    for y in 0..2u16 {
                        let mut ty = cell.clone();
                        ty.push(y);
                        let half = counts[&ty] / 2;
                        *counts.get_mut(&ty).unwrap() -= half;
                    }
                    removed += share;
                }
            }
            removed
        } else {
            let mut removed = 0;
            let keys: Vec<Vec<u16>> = counts.keys().cloned().collect();
            for _ in 0..budget {
                let ty = &keys[rng.random_range(0..keys.len())];
                if counts[ty] > 1 {
                    *counts.get_mut(ty).unwrap() -= 1;
                    removed += 1;
                }
            }
            removed
        }
    }

    fn run_instance(
        strategy: Strategy,
        rng: &mut ChaCha12Rng,
    ) -> Result<(ConsistentRange, RepairExtrema), OracleError> {
        let admissible: &[&str] = if strategy == Strategy::Equality { &[] } else { &["Y"] };
        let schema = schema(admissible);
        let spec = FairnessSpec::from_schema(&schema);
        let preds = draw_preds(rng);
        let mut full = counts_full_support(rng);
        let opts = CraOptions::default();

        let (range, universe, constraints) = match strategy {
            Strategy::Equality => {
                let g = diagram(&["S"], admissible);
                let counts = full;
                let (d, p) = dataset_from(&schema, &counts, &preds);
                let (range, _) = range_equality(&d, &p, &spec, &g)
                    .map_err(|e| OracleError::Data(DataError::Empty(e.to_string())))?;
                let universe = TinyUniverse::new(schema.clone(), counts, 3)?;
                let constraints = RepairConstraints {
                    ci: Some(CiCells { vars: vec!["S".into()], tol: 0.0 }),
                    aux: Vec::new(),
                };
                (range, universe, constraints)
            }
            Strategy::NoExternal => {
                let g = diagram(&["F1", "F2"], admissible);
                let removed = remove_rows(rng, &mut full, 4, false);
                let k = removed.max(3);
                let (d, p) = dataset_from(&schema, &full, &preds);
                let range = range_no_external(&d, &p, &spec, &g, &set(&["F1", "F2"]))
                    .map_err(|e| OracleError::Data(DataError::Empty(e.to_string())))?;
                let universe = TinyUniverse::new(schema.clone(), full, k)?;
                let constraints = RepairConstraints {
                    ci: Some(CiCells {
                        vars: vec!["S".into(), "Y".into(), "F1".into(), "F2".into()],
                        tol: 0.0,
                    }),
                    aux: Vec::new(),
                };
                (range, universe, constraints)
            }
            Strategy::Exact | Strategy::PartialU => {
                let g = diagram(&["F1", "F2"], admissible);
                let (d_full, _) = dataset_from(&schema, &full, &preds);
                let u_vars: NodeSet = set(&["F1", "F2"]);
                let mut counts = full.clone();
                let removed = remove_rows(rng, &mut counts, 4, false);
                let (d, p) = dataset_from(&schema, &counts, &preds);
                let (range, aux) = if strategy == Strategy::Exact {
                    let aux = estimate_aux(&d_full, AuxKind::UGivenSa, &u_vars, &spec)
                        .map_err(|e| OracleError::Data(DataError::Empty(e.to_string())))?;
                    let range =
                        range_exact(&d, &p, &spec, &g, &u_vars, &aux, &opts)
                            .map_err(|e| OracleError::Data(DataError::Empty(e.to_string())))?;
                    (range, aux)
                } else {
                    let up: NodeSet = set(&["F1"]);
                    let aux = estimate_aux(&d_full, AuxKind::UprimeGivenSa, &up, &spec)
                        .map_err(|e| OracleError::Data(DataError::Empty(e.to_string())))?;
                    let range =
                        range_partial_u(&d, &p, &spec, &g, &u_vars, &up, &aux, &opts)
                            .map_err(|e| OracleError::Data(DataError::Empty(e.to_string())))?;
                    (range, aux)
                };
                let universe = TinyUniverse::new(schema.clone(), counts, removed.max(1))?;
                let constraints = RepairConstraints {
                    ci: Some(CiCells {
                        vars: vec!["S".into(), "Y".into(), "F1".into(), "F2".into()],
                        tol: 0.0,
                    }),
                    aux: vec![AuxConstraint { table: aux, tol: 0.0 }],
                };
                (range, universe, constraints)
            }
            Strategy::MissingA => {
                let g = diagram(&["F1", "F2"], admissible);
                let u_vars: NodeSet = set(&["F1", "F2"]);
                // y-proportional thinning keeps Pr(a | s, u) intact
                let mut counts = full.clone();
                let removed = remove_rows(rng, &mut counts, 5, true);
                let (d_full, _) = dataset_from(&schema, &full, &preds);
                let aux = estimate_aux(&d_full, AuxKind::SUJoint, &u_vars, &spec)
                    .map_err(|e| OracleError::Data(DataError::Empty(e.to_string())))?;
                let (d, p) = dataset_from(&schema, &counts, &preds);
                let range = range_missing_a(&d, &p, &spec, &g, &u_vars, &aux, &opts)
                    .map_err(|e| OracleError::Data(DataError::Empty(e.to_string())))?;
                let universe = TinyUniverse::new(schema.clone(), counts, removed.max(1))?;
                let constraints = RepairConstraints {
                    ci: Some(CiCells {
                        vars: vec!["S".into(), "F1".into(), "F2".into()],
                        tol: 0.0,
                    }),
                    aux: vec![AuxConstraint { table: aux, tol: 0.0 }],
                };
                (range, universe, constraints)
            }
        };

        let extrema = enumerate_repairs(&universe, &constraints, &preds, &spec)?;
        Ok((range, extrema))
    }

    /// Runs `instances` random instances of one strategy and counts
    /// survivors escaping [clb, cub].
    pub fn run(
        strategy: Strategy,
        instances: usize,
        seed: u64,
    ) -> Result<ContainmentOutcome, OracleError> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut violations = 0;
        let mut worst: f64 = 0.0;
        let mut survivors_total = 0;
        for _ in 0..instances {
            let (range, extrema) = run_instance(strategy, &mut rng)?;
            survivors_total += extrema.survivors;
            let excess =
                (range.clb - extrema.min).max(extrema.max - range.cub).max(0.0);
            if excess > 1e-9 {
                violations += 1;
            }
            worst = worst.max(excess);
        }
        Ok(ContainmentOutcome { instances, violations, worst_excess: worst, survivors_total })
    }
}
