//! Synthetic benchmark populations: a six-node binary structural model with
//! configurable selection mechanisms layered on top.
//!
//! The base graph is fixed — S -> X1, S -> X2, X3 -> Y, X4 -> Y — so the
//! outcome is driven by (X3, X4) while (X1, X2) carry the protected signal.
//! The default parameterization keeps Y independent of S, which makes any
//! unfairness observed after selection attributable to the selection step
//! alone. All conditional probability tables can be overridden.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ColumnSpec, DataError, Dataset, OutcomeSpec, ProtectedSpec, Provenance, Schema};
use crate::graph::{
    markov_boundary, d_separated, CausalDiagram, DataCollectionDiagram, GraphError, NodeSet, Roles,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid probability {value} for {what}")]
    BadProbability { what: String, value: f64 },
    #[error("selection removed every row")]
    EmptySelection,
    #[error("selection table must have {expected} entries for {mechanism}, got {got}")]
    BadTable { mechanism: String, expected: usize, got: usize },
    #[error("scenario {scenario} expects the classifier's biased and population unfairness to {expect}, measured gap {gap:.4}")]
    ScenarioMismatch { scenario: String, expect: String, gap: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub const COLUMNS: [&str; 6] = ["S", "X1", "X2", "X3", "X4", "Y"];
const S: usize = 0;
const X1: usize = 1;
const X2: usize = 2;
const X3: usize = 3;
const X4: usize = 4;
const Y: usize = 5;

/// Conditional probability tables of the fixed six-node model, each entry
/// the probability that the node equals 1 given its parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScmSpec {
    pub p_s: f64,
    /// indexed by S
    pub p_x1: [f64; 2],
    /// indexed by S
    pub p_x2: [f64; 2],
    pub p_x3: f64,
    pub p_x4: f64,
    /// indexed by (X3, X4)
    pub p_y: [[f64; 2]; 2],
    pub seed: u64,
}

impl Default for ScmSpec {
    fn default() -> Self {
        ScmSpec {
            p_s: 0.5,
            p_x1: [0.5, 0.8],
            p_x2: [0.3, 0.7],
            p_x3: 0.5,
            p_x4: 0.5,
            p_y: [[0.15, 0.50], [0.50, 0.85]],
            seed: 0,
        }
    }
}

impl ScmSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let check = |what: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(SynthError::BadProbability { what: what.to_string(), value: v });
            }
            Ok(())
        };
        check("Pr(S=1)", self.p_s)?;
        for (i, v) in self.p_x1.iter().enumerate() {
            check(&format!("Pr(X1=1|S={i})"), *v)?;
        }
        for (i, v) in self.p_x2.iter().enumerate() {
            check(&format!("Pr(X2=1|S={i})"), *v)?;
        }
        check("Pr(X3=1)", self.p_x3)?;
        check("Pr(X4=1)", self.p_x4)?;
        for x3 in 0..2 {
            for x4 in 0..2 {
                check(&format!("Pr(Y=1|X3={x3},X4={x4})"), self.p_y[x3][x4])?;
            }
        }
        // structural facts every experiment relies on
        let base = base_diagram(&[]);
        let mb = markov_boundary(&base, "Y")?;
        debug_assert_eq!(mb, ["X3", "X4"].iter().map(|s| s.to_string()).collect::<NodeSet>());
        debug_assert!(d_separated(&base, "S", "X3", &NodeSet::new())?);
        debug_assert!(d_separated(&base, "S", "X4", &NodeSet::new())?);
        Ok(())
    }

    fn prob_one(&self, node: usize, row: &[u16]) -> f64 {
        match node {
            S => self.p_s,
            X1 => self.p_x1[row[S] as usize],
            X2 => self.p_x2[row[S] as usize],
            X3 => self.p_x3,
            X4 => self.p_x4,
            Y => self.p_y[row[X3] as usize][row[X4] as usize],
            _ => unreachable!(),
        }
    }

    /// Exact joint distribution over the 64 assignments, in row-code order.
    pub fn exact_joint(&self) -> Vec<(Vec<u16>, f64)> {
        let mut out = Vec::with_capacity(64);
        for bits in 0..64u32 {
            let row: Vec<u16> = (0..6).map(|i| ((bits >> i) & 1) as u16).collect();
            let mut p = 1.0;
            for node in 0..6 {
                let p1 = self.prob_one(node, &row);
                p *= if row[node] == 1 { p1 } else { 1.0 - p1 };
            }
            out.push((row, p));
        }
        out
    }

    /// Population-optimal hard predictions from the outcome table: predict 1
    /// when Pr(Y=1 | X3, X4) reaches one half.
    pub fn bayes_hard(&self, row: &[u16]) -> f64 {
        if self.p_y[row[X3] as usize][row[X4] as usize] >= 0.5 {
            1.0
        } else {
            0.0
        }
    }
}

/// The schema all synthetic datasets share; `admissible` configures the
/// fairness query the files are destined for.
pub fn syn_schema(admissible: &[String]) -> Schema {
    Schema {
        columns: COLUMNS
            .iter()
            .map(|name| ColumnSpec {
                name: name.to_string(),
                domain: vec!["0".into(), "1".into()],
                bins: None,
            })
            .collect(),
        outcome: OutcomeSpec::Name("Y".into()),
        protected: ProtectedSpec { name: "S".into(), s0: "0".into(), s1: "1".into() },
        admissible: admissible.to_vec(),
    }
}

fn base_diagram(admissible: &[String]) -> CausalDiagram {
    CausalDiagram::new(
        &COLUMNS,
        &[("S", "X1"), ("S", "X2"), ("X3", "Y"), ("X4", "Y")],
        Roles {
            outcome: "Y".into(),
            protected: "S".into(),
            admissible: admissible.iter().cloned().collect(),
        },
    )
    .expect("fixed base graph is valid")
}

/// Ancestral sampling; deterministic in (spec, seed, n).
pub fn sample_population(spec: &ScmSpec, n: usize) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![0u16; 6];
        for node in 0..6 {
            let p1 = spec.prob_one(node, &row);
            row[node] = (rng.random::<f64>() < p1) as u16;
        }
        rows.push(row);
    }
    Ok(Dataset::new(syn_schema(&[]), rows, Provenance::Unbiased)?)
}

/// The five selection mechanisms: R thins rows unconditionally, G1–G4 hang
/// the selection node under different parent sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    R,
    G1,
    G2,
    G3,
    G4,
}

impl Mechanism {
    pub fn parents(&self) -> &'static [&'static str] {
        match self {
            Mechanism::R => &[],
            Mechanism::G1 => &["S", "X4"],
            Mechanism::G2 => &["X2", "X4"],
            Mechanism::G3 => &["X2", "Y"],
            Mechanism::G4 => &["Y"],
        }
    }

    fn parent_cols(&self) -> Vec<usize> {
        self.parents()
            .iter()
            .map(|p| COLUMNS.iter().position(|c| c == p).unwrap())
            .collect()
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "R" | "r" => Ok(Mechanism::R),
            "G1" | "g1" => Ok(Mechanism::G1),
            "G2" | "g2" => Ok(Mechanism::G2),
            "G3" | "g3" => Ok(Mechanism::G3),
            "G4" | "g4" => Ok(Mechanism::G4),
            other => Err(format!("unknown mechanism `{other}` (expected R|G1|G2|G3|G4)")),
        }
    }
}

/// Scenario knob: S1 selection probabilities are strongly value-dependent so
/// the biased sample misrepresents the population; S2 is near-uniform so the
/// two roughly agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S1" | "s1" => Ok(Scenario::S1),
            "S2" | "s2" => Ok(Scenario::S2),
            other => Err(format!("unknown scenario `{other}` (expected S1|S2)")),
        }
    }
}

/// Selection mechanism plus its keep-probability table, indexed by the
/// parent assignment bits (first parent is bit 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub mechanism: Mechanism,
    pub scenario: Scenario,
    pub table: Vec<f64>,
}

impl SelectionSpec {
    /// Default tables: S1 keeps rows with probability 0.9 when the parent
    /// values agree (or the single parent is 1) and 0.1 otherwise; S2 uses
    /// 0.55 / 0.45.
    pub fn new(mechanism: Mechanism, scenario: Scenario) -> Self {
        let (hi, lo) = match scenario {
            Scenario::S1 => (0.9, 0.1),
            Scenario::S2 => (0.55, 0.45),
        };
        let k = mechanism.parents().len();
        let table = match k {
            0 => vec![0.5],
            1 => vec![lo, hi],
            _ => (0..1usize << k)
                .map(|bits| {
                    let ones = (bits as u32).count_ones() as usize;
                    if ones == 0 || ones == k {
                        hi
                    } else {
                        lo
                    }
                })
                .collect(),
        };
        SelectionSpec { mechanism, scenario, table }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let expected = 1usize << self.mechanism.parents().len();
        if self.table.len() != expected {
            return Err(SynthError::BadTable {
                mechanism: format!("{:?}", self.mechanism),
                expected,
                got: self.table.len(),
            });
        }
        for &p in &self.table {
            if !(p > 0.0 && p <= 1.0) {
                return Err(SynthError::BadProbability {
                    what: "selection probability".into(),
                    value: p,
                });
            }
        }
        Ok(())
    }

    pub fn keep_probability(&self, row: &[u16]) -> f64 {
        let cols = self.mechanism.parent_cols();
        let mut idx = 0usize;
        for (bit, &c) in cols.iter().enumerate() {
            idx |= (row[c] as usize) << bit;
        }
        self.table[idx]
    }

    /// The data collection diagram this mechanism induces.
    pub fn diagram(&self, admissible: &[String]) -> Result<DataCollectionDiagram, GraphError> {
        let parents: NodeSet = self.mechanism.parents().iter().map(|s| s.to_string()).collect();
        DataCollectionDiagram::new(base_diagram(admissible), "C", parents)
    }

    /// Checks the scenario promise against the model: the classifier fitted
    /// to the biased distribution must show an unfairness gap of at least
    /// 0.05 between biased and population data under S1 (for the mechanisms
    /// whose structure permits one) and at most 0.05 under S2. Returns the
    /// measured gap.
    pub fn validate_scenario(&self, scm: &ScmSpec) -> Result<f64, SynthError> {
        self.validate()?;
        let gap = scenario_gap(scm, self);
        let structurally_active =
            matches!(self.mechanism, Mechanism::G1 | Mechanism::G2 | Mechanism::G3);
        match self.scenario {
            Scenario::S1 => {
                if structurally_active && gap < 0.05 {
                    return Err(SynthError::ScenarioMismatch {
                        scenario: "S1".into(),
                        expect: "deviate by at least 0.05".into(),
                        gap,
                    });
                }
            }
            Scenario::S2 => {
                if gap > 0.05 {
                    return Err(SynthError::ScenarioMismatch {
                        scenario: "S2".into(),
                        expect: "agree within 0.05".into(),
                        gap,
                    });
                }
            }
        }
        Ok(gap)
    }
}

/// Bernoulli thinning of an unbiased sample; returns the biased dataset and
/// the diagram describing what just happened. Provenance tags are set on
/// both sides.
pub fn apply_selection(
    d: &Dataset,
    sel: &SelectionSpec,
    seed: u64,
) -> Result<(Dataset, DataCollectionDiagram), SynthError> {
    sel.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for row in d.rows() {
        if rng.random::<f64>() < sel.keep_probability(row) {
            rows.push(row.clone());
        }
    }
    if rows.is_empty() {
        return Err(SynthError::EmptySelection);
    }
    let biased = Dataset::new(d.schema().clone(), rows, Provenance::Biased)?;
    let diagram = sel.diagram(&d.schema().admissible)?;
    Ok((biased, diagram))
}

// ── analytic machinery ──────────────────────────────────────────────────

/// Equal-opportunity unfairness of a hard feature-predictor under an exact
/// joint: mean over y of |Pr(h=1 | S=1, y) - Pr(h=1 | S=0, y)|.
pub fn analytic_eo<F: Fn(&[u16]) -> f64>(joint: &[(Vec<u16>, f64)], h: F) -> f64 {
    // mass[s][y], pos[s][y]
    let mut mass = [[0.0f64; 2]; 2];
    let mut pos = [[0.0f64; 2]; 2];
    for (row, p) in joint {
        let s = row[S] as usize;
        let y = row[Y] as usize;
        mass[s][y] += p;
        pos[s][y] += p * h(row);
    }
    let mut total = 0.0;
    for y in 0..2 {
        let r1 = pos[1][y] / mass[1][y];
        let r0 = pos[0][y] / mass[0][y];
        total += (r1 - r0).abs();
    }
    total / 2.0
}

/// Joint of the selected sub-population: proportional to p(row) * keep(row).
pub fn biased_joint(joint: &[(Vec<u16>, f64)], sel: &SelectionSpec) -> Vec<(Vec<u16>, f64)> {
    let mut out: Vec<(Vec<u16>, f64)> =
        joint.iter().map(|(row, p)| (row.clone(), p * sel.keep_probability(row))).collect();
    let z: f64 = out.iter().map(|(_, p)| p).sum();
    for (_, p) in &mut out {
        *p /= z;
    }
    out
}

/// The classifier a consistent learner converges to on a distribution:
/// predict 1 when Pr(Y=1 | x1..x4) is at least one half. The protected
/// attribute is marginalized out, matching a model trained without it.
pub fn optimal_feature_rule(joint: &[(Vec<u16>, f64)]) -> impl Fn(&[u16]) -> f64 {
    // index by (x1, x2, x3, x4)
    let mut mass = [0.0f64; 16];
    let mut pos = [0.0f64; 16];
    for (row, p) in joint {
        let idx = (row[X1] as usize)
            | (row[X2] as usize) << 1
            | (row[X3] as usize) << 2
            | (row[X4] as usize) << 3;
        mass[idx] += p;
        if row[Y] == 1 {
            pos[idx] += p;
        }
    }
    let hard: Vec<f64> = (0..16)
        .map(|i| if mass[i] > 0.0 && pos[i] / mass[i] >= 0.5 { 1.0 } else { 0.0 })
        .collect();
    move |row: &[u16]| {
        let idx = (row[X1] as usize)
            | (row[X2] as usize) << 1
            | (row[X3] as usize) << 2
            | (row[X4] as usize) << 3;
        hard[idx]
    }
}

/// |F(biased) - F(population)| of the biased-optimal classifier, the
/// quantity the S1/S2 scenario definitions are about.
pub fn scenario_gap(scm: &ScmSpec, sel: &SelectionSpec) -> f64 {
    let joint = scm.exact_joint();
    let biased = biased_joint(&joint, sel);
    let h = optimal_feature_rule(&biased);
    let f_biased = analytic_eo(&biased, &h);
    let f_population = analytic_eo(&joint, &h);
    (f_biased - f_population).abs()
}

/// Exact external tables marginalized straight from the model's joint, the
/// zero-sampling-error version of estimating them from an unbiased sample.
pub fn exact_aux(
    scm: &ScmSpec,
    kind: crate::cra::AuxKind,
    u_vars: &NodeSet,
    admissible: &[String],
) -> Result<crate::cra::AuxStats, SynthError> {
    use crate::cra::{AuxKey, AuxKind, AuxStats};
    use std::collections::BTreeMap;

    let col_of = |name: &str| COLUMNS.iter().position(|c| *c == name);
    let u_cols: Vec<usize> = u_vars
        .iter()
        .map(|v| col_of(v).ok_or_else(|| SynthError::BadProbability {
            what: format!("unknown variable {v}"),
            value: f64::NAN,
        }))
        .collect::<Result<_, _>>()?;
    let a_cols: Vec<usize> = if kind == AuxKind::SUJoint {
        Vec::new()
    } else {
        admissible
            .iter()
            .map(|v| col_of(v).ok_or_else(|| SynthError::BadProbability {
                what: format!("unknown variable {v}"),
                value: f64::NAN,
            }))
            .collect::<Result<_, _>>()?
    };
    let label = |v: u16| if v == 1 { "1".to_string() } else { "0".to_string() };

    let joint = scm.exact_joint();
    let mut cell_mass: BTreeMap<AuxKey, f64> = BTreeMap::new();
    let mut ctx_mass: BTreeMap<(String, BTreeMap<String, String>), f64> = BTreeMap::new();
    for (row, p) in &joint {
        let s = label(row[S]);
        let a: BTreeMap<String, String> =
            a_cols.iter().map(|&c| (COLUMNS[c].to_string(), label(row[c]))).collect();
        let u: BTreeMap<String, String> =
            u_cols.iter().map(|&c| (COLUMNS[c].to_string(), label(row[c]))).collect();
        *ctx_mass.entry((s.clone(), a.clone())).or_insert(0.0) += p;
        *cell_mass.entry(AuxKey { s, a, u }).or_insert(0.0) += p;
    }
    let table: BTreeMap<AuxKey, f64> = match kind {
        AuxKind::SUJoint => cell_mass,
        _ => cell_mass
            .into_iter()
            .map(|(key, mass)| {
                let ctx = ctx_mass[&(key.s.clone(), key.a.clone())];
                (key, mass / ctx)
            })
            .collect(),
    };
    AuxStats::new(kind, u_vars.iter().cloned().collect(), table).map_err(|e| {
        SynthError::BadProbability { what: format!("aux construction: {e}"), value: f64::NAN }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::{empirical_fairness, FairnessSpec};
    use crate::graph::{diagnose, select_u};

    fn eo_spec() -> FairnessSpec {
        FairnessSpec {
            protected: "S".into(),
            s0: "0".into(),
            s1: "1".into(),
            admissible: vec!["Y".into()],
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = ScmSpec { seed: 17, ..Default::default() };
        let a = sample_population(&spec, 500).unwrap();
        let b = sample_population(&spec, 500).unwrap();
        assert_eq!(a.rows(), b.rows());
        let c = sample_population(&ScmSpec { seed: 18, ..Default::default() }, 500).unwrap();
        assert_ne!(a.rows(), c.rows());
    }

    #[test]
    fn single_row_sample_is_valid() {
        let d = sample_population(&ScmSpec::default(), 1).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.rows()[0].iter().all(|&v| v <= 1));
    }

    #[test]
    fn outcome_marginal_matches_analytic_value() {
        let spec = ScmSpec { seed: 5, ..Default::default() };
        let joint = spec.exact_joint();
        let expected: f64 = joint.iter().filter(|(r, _)| r[5] == 1).map(|(_, p)| p).sum();
        let d = sample_population(&spec, 100_000).unwrap();
        let observed = d.labels().unwrap().iter().sum::<f64>() / d.len() as f64;
        assert!((observed - expected).abs() < 0.01, "{observed} vs {expected}");
        // default tables put Pr(Y=1) at one half
        assert!((expected - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bayes_rule_is_fair_on_population() {
        let spec = ScmSpec { seed: 23, ..Default::default() };
        let d = sample_population(&spec, 200_000).unwrap();
        let preds: Vec<f64> = d.rows().iter().map(|r| spec.bayes_hard(r)).collect();
        let fv = empirical_fairness(&d, &preds, &eo_spec()).unwrap();
        assert!(fv.value < 0.01, "F = {}", fv.value);
    }

    #[test]
    fn random_thinning_keeps_about_half() {
        let spec = ScmSpec { seed: 2, ..Default::default() };
        let d = sample_population(&spec, 20_000).unwrap();
        let sel = SelectionSpec::new(Mechanism::R, Scenario::S1);
        let (biased, _) = apply_selection(&d, &sel, 99).unwrap();
        let frac = biased.len() as f64 / d.len() as f64;
        // 3 sigma around one half at n = 20k
        assert!((frac - 0.5).abs() < 3.0 * 0.5 / (20_000f64).sqrt(), "kept {frac}");
    }

    #[test]
    fn selection_is_reproducible_and_tags_provenance() {
        let spec = ScmSpec { seed: 3, ..Default::default() };
        let d = sample_population(&spec, 2_000).unwrap();
        let sel = SelectionSpec::new(Mechanism::G2, Scenario::S1);
        let (b1, g) = apply_selection(&d, &sel, 7).unwrap();
        let (b2, _) = apply_selection(&d, &sel, 7).unwrap();
        assert_eq!(b1.rows(), b2.rows());
        assert_eq!(b1.provenance(), Provenance::Biased);
        assert_eq!(g.selection_parents().len(), 2);
    }

    #[test]
    fn empty_selection_is_an_error() {
        let spec = ScmSpec { seed: 4, ..Default::default() };
        let d = sample_population(&spec, 50).unwrap();
        // all-but-impossible keep probability: every row has some parent
        // config, make them all tiny except an unreachable pattern
        let sel = SelectionSpec {
            mechanism: Mechanism::G4,
            scenario: Scenario::S1,
            table: vec![1e-12, 1e-12],
        };
        assert!(matches!(apply_selection(&d, &sel, 1), Err(SynthError::EmptySelection)));
    }

    #[test]
    fn diagnosis_flags_only_the_label_and_feature_mechanism() {
        for (mech, expect) in [
            (Mechanism::R, false),
            (Mechanism::G1, false),
            (Mechanism::G2, false),
            (Mechanism::G3, true),
            (Mechanism::G4, false),
        ] {
            let sel = SelectionSpec::new(mech, Scenario::S1);
            let g = sel.diagram(&[]).unwrap();
            let diag = diagnose(&g).unwrap();
            assert_eq!(
                diag.selection_induces_unfairness, expect,
                "mechanism {mech:?}"
            );
            assert!(!diag.originally_unfair);
        }
    }

    #[test]
    fn selected_u_validates_for_every_mechanism() {
        for mech in [Mechanism::R, Mechanism::G1, Mechanism::G2, Mechanism::G3, Mechanism::G4] {
            for admissible in [vec![], vec!["Y".to_string()]] {
                let sel = SelectionSpec::new(mech, Scenario::S2);
                let g = sel.diagram(&admissible).unwrap();
                let u = select_u(&g, None).unwrap();
                assert!(
                    g.selection_independent_given(&u).unwrap(),
                    "mechanism {mech:?}, A = {admissible:?}, U = {u:?}"
                );
            }
        }
    }

    #[test]
    fn scenario_tables_validate_against_their_promise() {
        let scm = ScmSpec::default();
        for mech in [Mechanism::G1, Mechanism::G2, Mechanism::G3] {
            let s1 = SelectionSpec::new(mech, Scenario::S1);
            let gap = s1.validate_scenario(&scm).unwrap();
            assert!(gap >= 0.05, "{mech:?} S1 gap {gap}");
            let s2 = SelectionSpec::new(mech, Scenario::S2);
            let gap = s2.validate_scenario(&scm).unwrap();
            assert!(gap <= 0.05, "{mech:?} S2 gap {gap}");
        }
        // R and G4 cannot deviate: the rule ignores X2 and selection cannot
        // couple it to S within label strata
        for mech in [Mechanism::R, Mechanism::G4] {
            let gap = SelectionSpec::new(mech, Scenario::S1).validate_scenario(&scm).unwrap();
            assert!(gap < 0.05, "{mech:?} gap {gap}");
        }
    }

    #[test]
    fn bad_tables_rejected() {
        let mut sel = SelectionSpec::new(Mechanism::G1, Scenario::S1);
        sel.table = vec![0.5; 3];
        assert!(matches!(sel.validate(), Err(SynthError::BadTable { .. })));
        let mut sel = SelectionSpec::new(Mechanism::G4, Scenario::S1);
        sel.table[0] = 0.0; // zero keep probability excluded
        assert!(matches!(sel.validate(), Err(SynthError::BadProbability { .. })));
    }
}
