//! Causal and data-collection diagrams with structural queries: d-separation,
//! Markov boundaries, selection-adjustment sets and unfairness diagnosis.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sorted set of node names. BTreeSet keeps every iteration order
/// deterministic, which the rest of the crate relies on.
pub type NodeSet = BTreeSet<String>;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("self loop on `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("graph contains a directed cycle")]
    Cycle,
    #[error("{role} names unknown node `{node}`")]
    UnknownRole { role: &'static str, node: String },
    #[error("query sets overlap on `{0}`")]
    OverlappingSets(String),
    #[error("d-separation endpoints must differ (`{0}`)")]
    EqualEndpoints(String),
    #[error("endpoint `{0}` may not appear in the conditioning set")]
    EndpointConditioned(String),
    #[error("selection node `{0}` collides with an existing node")]
    SelectionNameTaken(String),
}

/// Outcome, protected attribute and admissible set of a diagram.
///
/// `admissible` may contain the outcome itself: conditioning the fairness
/// query on the true label is how equality of opportunity is expressed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub outcome: String,
    pub protected: String,
    pub admissible: NodeSet,
}

/// A directed acyclic graph over named attributes, plus the role designation
/// needed by fairness queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDiagram {
    nodes: Vec<String>,
    /// parents[i] / children[i] are sorted node indices.
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    roles: Roles,
}

impl CausalDiagram {
    /// Builds and validates a diagram. Node names must be unique, edges must
    /// reference existing nodes and the directed part must be acyclic.
    pub fn new<S: AsRef<str>>(
        nodes: &[S],
        edges: &[(S, S)],
        roles: Roles,
    ) -> Result<Self, GraphError> {
        let names: Vec<String> = nodes.iter().map(|n| n.as_ref().to_string()).collect();
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(GraphError::DuplicateNode(n.clone()));
            }
        }
        let mut g = CausalDiagram {
            parents: vec![Vec::new(); names.len()],
            children: vec![Vec::new(); names.len()],
            nodes: names,
            roles,
        };
        for (p, c) in edges {
            let (p, c) = (p.as_ref(), c.as_ref());
            if p == c {
                return Err(GraphError::SelfLoop(p.to_string()));
            }
            let pi = g.index_of(p)?;
            let ci = g.index_of(c)?;
            if g.children[pi].contains(&ci) {
                return Err(GraphError::DuplicateEdge(p.to_string(), c.to_string()));
            }
            g.children[pi].push(ci);
            g.parents[ci].push(pi);
        }
        for list in g.parents.iter_mut().chain(g.children.iter_mut()) {
            list.sort_unstable();
        }
        if g.topological_order().is_none() {
            return Err(GraphError::Cycle);
        }
        g.index_of(&g.roles.outcome.clone())
            .map_err(|_| GraphError::UnknownRole { role: "outcome", node: g.roles.outcome.clone() })?;
        g.index_of(&g.roles.protected.clone())
            .map_err(|_| GraphError::UnknownRole { role: "protected", node: g.roles.protected.clone() })?;
        for a in g.roles.admissible.clone() {
            g.index_of(&a)
                .map_err(|_| GraphError::UnknownRole { role: "admissible", node: a.clone() })?;
        }
        Ok(g)
    }

    pub fn roles(&self) -> &Roles {
        &self.roles
    }

    pub fn node_names(&self) -> &[String] {
        &self.nodes
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n == name)
    }

    fn index_of(&self, name: &str) -> Result<usize, GraphError> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    fn index_set(&self, names: &NodeSet) -> Result<Vec<usize>, GraphError> {
        names.iter().map(|n| self.index_of(n)).collect()
    }

    pub fn parents_of(&self, name: &str) -> Result<NodeSet, GraphError> {
        let i = self.index_of(name)?;
        Ok(self.parents[i].iter().map(|&p| self.nodes[p].clone()).collect())
    }

    pub fn children_of(&self, name: &str) -> Result<NodeSet, GraphError> {
        let i = self.index_of(name)?;
        Ok(self.children[i].iter().map(|&c| self.nodes[c].clone()).collect())
    }

    fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = (0..n).map(|i| self.parents[i].len()).collect();
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop() {
            order.push(i);
            for &c in &self.children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Ancestors of every node in `seeds`, including the seeds themselves.
    fn ancestors_closure(&self, seeds: &[usize]) -> Vec<bool> {
        let mut inset = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = seeds.to_vec();
        while let Some(i) = stack.pop() {
            if inset[i] {
                continue;
            }
            inset[i] = true;
            stack.extend_from_slice(&self.parents[i]);
        }
        inset
    }

    /// Nodes reachable from `src` along active trails given `given`
    /// (reachability over (node, direction) states; colliders stay open
    /// when they or a descendant are conditioned on).
    fn reachable(&self, src: usize, given: &[usize]) -> Vec<bool> {
        let n = self.nodes.len();
        let mut in_given = vec![false; n];
        for &z in given {
            in_given[z] = true;
        }
        let anc_given = self.ancestors_closure(given);

        // visited[(i, dir)]: dir 0 = entered from a child (or start),
        // dir 1 = entered from a parent.
        let mut visited = vec![[false; 2]; n];
        let mut reach = vec![false; n];
        let mut queue = vec![(src, 0usize)];
        while let Some((i, dir)) = queue.pop() {
            if visited[i][dir] {
                continue;
            }
            visited[i][dir] = true;
            if !in_given[i] {
                reach[i] = true;
            }
            if dir == 0 {
                if !in_given[i] {
                    for &p in &self.parents[i] {
                        queue.push((p, 0));
                    }
                    for &c in &self.children[i] {
                        queue.push((c, 1));
                    }
                }
            } else {
                if !in_given[i] {
                    for &c in &self.children[i] {
                        queue.push((c, 1));
                    }
                }
                // entering a collider: trail continues upward only while the
                // collider can be activated by the conditioning set
                if anc_given[i] {
                    for &p in &self.parents[i] {
                        queue.push((p, 0));
                    }
                }
            }
        }
        reach
    }
}

/// True iff every path between `left` and `right` is blocked by `given`
/// under the chain/fork/collider rules.
pub fn d_separated(
    g: &CausalDiagram,
    left: &str,
    right: &str,
    given: &NodeSet,
) -> Result<bool, GraphError> {
    if left == right {
        return Err(GraphError::EqualEndpoints(left.to_string()));
    }
    let li = g.index_of(left)?;
    let ri = g.index_of(right)?;
    if given.contains(left) {
        return Err(GraphError::EndpointConditioned(left.to_string()));
    }
    if given.contains(right) {
        return Err(GraphError::EndpointConditioned(right.to_string()));
    }
    let giv = g.index_set(given)?;
    Ok(!g.reachable(li, &giv)[ri])
}

/// Pairwise conjunction of [`d_separated`] over `left` x `right`.
/// An empty side makes the conjunction vacuously true.
pub fn d_separated_sets(
    g: &CausalDiagram,
    left: &NodeSet,
    right: &NodeSet,
    given: &NodeSet,
) -> Result<bool, GraphError> {
    for overlap in [left.intersection(right), left.intersection(given), right.intersection(given)]
    {
        if let Some(x) = overlap.min() {
            return Err(GraphError::OverlappingSets(x.clone()));
        }
    }
    let giv = g.index_set(given)?;
    let right_idx = g.index_set(right)?;
    for l in left {
        let li = g.index_of(l)?;
        let reach = g.reachable(li, &giv);
        if right_idx.iter().any(|&r| reach[r]) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Minimal set rendering `target` independent of all remaining nodes. For a
/// DAG this is parents ∪ children ∪ co-parents of the target; the selection
/// node, when present, participates as an ordinary node.
pub fn markov_boundary(g: &CausalDiagram, target: &str) -> Result<NodeSet, GraphError> {
    let t = g.index_of(target)?;
    let mut mb = BTreeSet::new();
    for &p in &g.parents[t] {
        mb.insert(g.nodes[p].clone());
    }
    for &c in &g.children[t] {
        mb.insert(g.nodes[c].clone());
        for &cp in &g.parents[c] {
            if cp != t {
                mb.insert(g.nodes[cp].clone());
            }
        }
    }
    Ok(mb)
}

/// A causal diagram augmented with a selection node `C` whose parents are the
/// attributes that drove inclusion into the sample. `C` is always a sink.
///
/// An empty parent set is allowed and models unconditional (random)
/// selection; every structural query then treats `C` as isolated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataCollectionDiagram {
    base: CausalDiagram,
    selection: String,
    selection_parents: NodeSet,
    /// base + C, used for all structural queries.
    combined: Arc<CausalDiagram>,
}

impl DataCollectionDiagram {
    pub fn new(
        base: CausalDiagram,
        selection: &str,
        selection_parents: NodeSet,
    ) -> Result<Self, GraphError> {
        if base.contains(selection) {
            return Err(GraphError::SelectionNameTaken(selection.to_string()));
        }
        for p in &selection_parents {
            base.index_of(p)?;
        }
        let mut nodes: Vec<String> = base.nodes.clone();
        nodes.push(selection.to_string());
        let mut edges: Vec<(String, String)> = Vec::new();
        for (pi, chs) in base.children.iter().enumerate() {
            for &ci in chs {
                edges.push((base.nodes[pi].clone(), base.nodes[ci].clone()));
            }
        }
        for p in &selection_parents {
            edges.push((p.clone(), selection.to_string()));
        }
        let edge_refs: Vec<(&str, &str)> =
            edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let node_refs: Vec<&str> = nodes.iter().map(|s| s.as_str()).collect();
        let combined = CausalDiagram::new(&node_refs, &edge_refs, base.roles.clone())?;
        Ok(DataCollectionDiagram {
            base,
            selection: selection.to_string(),
            selection_parents,
            combined: Arc::new(combined),
        })
    }

    pub fn base(&self) -> &CausalDiagram {
        &self.base
    }

    /// The full graph including the selection node.
    pub fn graph(&self) -> &CausalDiagram {
        &self.combined
    }

    pub fn selection_node(&self) -> &str {
        &self.selection
    }

    pub fn selection_parents(&self) -> &NodeSet {
        &self.selection_parents
    }

    pub fn roles(&self) -> &Roles {
        self.base.roles()
    }

    /// The attribute set of the sampling distribution: every node except the
    /// outcome and the selection node.
    pub fn feature_nodes(&self) -> NodeSet {
        self.base
            .nodes
            .iter()
            .filter(|n| **n != self.base.roles.outcome)
            .cloned()
            .collect()
    }

    /// Checks `(X ⫫ C | S, A, u)` by d-separation, where X ranges over the
    /// feature nodes not already conditioned on. This is the independence all
    /// range computations rest on.
    pub fn selection_independent_given(&self, u: &NodeSet) -> Result<bool, GraphError> {
        let roles = self.roles();
        let mut given: NodeSet = u.clone();
        given.insert(roles.protected.clone());
        given.extend(roles.admissible.iter().cloned());
        let left: NodeSet = self
            .feature_nodes()
            .into_iter()
            .filter(|n| !given.contains(n))
            .collect();
        let right: NodeSet = std::iter::once(self.selection.clone()).collect();
        d_separated_sets(self.graph(), &left, &right, &given)
    }
}

/// Search for a conditioning set `U` that separates the features from the
/// selection node given the protected attribute and the admissible set.
///
/// Candidates start from `Pa(C) \ {Y}` and grow by subsets of `MB(Y)`, so a
/// label-free set is preferred whenever one exists; `Pa(C)` itself is the
/// fallback and always satisfies the independence because `C` is a sink.
/// Among valid candidates the choice prefers (a) no outcome node, (b)
/// coverage by `available`, (c) smallest cardinality, ties broken by
/// lexicographic order.
pub fn select_u(
    g: &DataCollectionDiagram,
    available: Option<&NodeSet>,
) -> Result<NodeSet, GraphError> {
    let roles = g.roles();
    let mut base_cond: NodeSet = roles.admissible.clone();
    base_cond.insert(roles.protected.clone());

    let pa_c = g.selection_parents();
    let first: NodeSet = pa_c
        .iter()
        .filter(|n| **n != roles.outcome && !base_cond.contains(*n))
        .cloned()
        .collect();
    let mb_y = markov_boundary(g.graph(), &roles.outcome)?;
    let pool: Vec<String> = mb_y
        .into_iter()
        .filter(|n| {
            *n != roles.outcome
                && n != g.selection_node()
                && !base_cond.contains(n)
                && !first.contains(n)
        })
        .collect();

    // Enumerate first ∪ T for T ⊆ pool, by |T| then lexicographically.
    let mut valid: Vec<NodeSet> = Vec::new();
    for size in 0..=pool.len() {
        for combo in combinations(&pool, size) {
            let mut cand = first.clone();
            cand.extend(combo.into_iter().cloned());
            if g.selection_independent_given(&cand)? {
                valid.push(cand);
            }
        }
    }

    let covered = |u: &NodeSet| available.is_none_or(|av| u.is_subset(av));
    valid.sort_by(|a, b| {
        (!covered(a), a.len())
            .cmp(&(!covered(b), b.len()))
            .then_with(|| a.cmp(b))
    });
    if let Some(best) = valid.into_iter().next() {
        return Ok(best);
    }
    // No label-free set validates; the full parent set always does.
    Ok(pa_c.clone())
}

fn combinations<T>(items: &[T], size: usize) -> Vec<Vec<&T>> {
    let mut out = Vec::new();
    let mut current: Vec<&T> = Vec::with_capacity(size);
    fn rec<'a, T>(items: &'a [T], size: usize, start: usize, current: &mut Vec<&'a T>, out: &mut Vec<Vec<&'a T>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..items.len() {
            current.push(&items[i]);
            rec(items, size, i + 1, current, out);
            current.pop();
        }
    }
    rec(items, size, 0, &mut current, &mut out);
    out
}

/// Structural verdict on whether a data collection process can make an
/// otherwise fair learning problem unfair.
///
/// The verdict is about structure, not any particular distribution: when
/// faithfulness fails, an unfair distribution still implies these conditions,
/// but the conditions alone do not force unfairness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    /// The base graph already lets the optimal classifier depend on the
    /// protected attribute given the admissible set.
    pub originally_unfair: bool,
    /// Selection satisfies both structural conditions: the outcome drives
    /// selection, and selection is tied to the protected attribute.
    pub selection_induces_unfairness: bool,
    /// Attributes witnessing whichever condition fired.
    pub witnesses: Vec<String>,
    /// Separating set found by [`select_u`].
    pub chosen_u: NodeSet,
}

/// Diagnoses the two unfairness mechanisms on a data collection diagram.
pub fn diagnose(g: &DataCollectionDiagram) -> Result<Diagnosis, GraphError> {
    let roles = g.roles().clone();
    let base = g.base();
    let mut witnesses: BTreeSet<String> = BTreeSet::new();

    // An attribute in MB(Y) that stays dependent on S given A means the
    // optimal classifier reads the protected attribute off its features.
    let mb = markov_boundary(base, &roles.outcome)?;
    let mut originally_unfair = false;
    for x in &mb {
        if roles.admissible.contains(x) {
            continue;
        }
        let dependent = if *x == roles.protected {
            true
        } else if roles.admissible.contains(&roles.protected) {
            // S itself conditioned on: no open path to it can exist.
            false
        } else {
            !d_separated(base, x, &roles.protected, &roles.admissible)?
        };
        if dependent {
            originally_unfair = true;
            witnesses.insert(x.clone());
        }
    }

    // Selection-induced unfairness needs the outcome among the selection
    // parents plus a selection parent correlated with S given A.
    let pa_c = g.selection_parents();
    let c1 = pa_c.contains(&roles.outcome);
    let mut c2 = false;
    let mut c2_witnesses: BTreeSet<String> = BTreeSet::new();
    if c1 {
        if pa_c.contains(&roles.protected) {
            c2 = true;
            c2_witnesses.insert(roles.protected.clone());
        }
        for x in pa_c {
            if *x == roles.outcome
                || *x == roles.protected
                || roles.admissible.contains(x)
            {
                continue;
            }
            if !d_separated(base, x, &roles.protected, &roles.admissible)? {
                c2 = true;
                c2_witnesses.insert(x.clone());
            }
        }
    }
    let selection_induces_unfairness = c1 && c2;
    if selection_induces_unfairness {
        witnesses.extend(c2_witnesses);
    }

    Ok(Diagnosis {
        originally_unfair,
        selection_induces_unfairness,
        witnesses: witnesses.into_iter().collect(),
        chosen_u: select_u(g, None)?,
    })
}

// ── JSON document format ────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionDoc {
    name: String,
    parents: Vec<String>,
}

/// On-disk diagram document; the `selection` object is optional so the same
/// format serves plain causal diagrams.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramDoc {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub outcome: String,
    pub protected: String,
    #[serde(default)]
    pub admissible: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    selection: Option<SelectionDoc>,
}

/// A diagram parsed from JSON: plain, or augmented with a selection node.
#[derive(Debug, Clone)]
pub enum ParsedDiagram {
    Plain(CausalDiagram),
    Collection(DataCollectionDiagram),
}

impl ParsedDiagram {
    pub fn graph(&self) -> &CausalDiagram {
        match self {
            ParsedDiagram::Plain(g) => g,
            ParsedDiagram::Collection(g) => g.graph(),
        }
    }
}

impl DiagramDoc {
    pub fn parse(&self) -> Result<ParsedDiagram, GraphError> {
        let roles = Roles {
            outcome: self.outcome.clone(),
            protected: self.protected.clone(),
            admissible: self.admissible.iter().cloned().collect(),
        };
        let edges: Vec<(&str, &str)> =
            self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let node_refs: Vec<&str> = self.nodes.iter().map(|s| s.as_str()).collect();
        let base = CausalDiagram::new(&node_refs, &edges, roles)?;
        match &self.selection {
            None => Ok(ParsedDiagram::Plain(base)),
            Some(sel) => {
                let parents: NodeSet = sel.parents.iter().cloned().collect();
                Ok(ParsedDiagram::Collection(DataCollectionDiagram::new(
                    base, &sel.name, parents,
                )?))
            }
        }
    }

    pub fn from_collection(g: &DataCollectionDiagram) -> Self {
        let mut doc = Self::from_plain(g.base());
        doc.selection = Some(SelectionDoc {
            name: g.selection_node().to_string(),
            parents: g.selection_parents().iter().cloned().collect(),
        });
        doc
    }

    pub fn from_plain(g: &CausalDiagram) -> Self {
        let mut edges = Vec::new();
        for (pi, chs) in g.children.iter().enumerate() {
            for &ci in chs {
                edges.push((g.nodes[pi].clone(), g.nodes[ci].clone()));
            }
        }
        edges.sort();
        DiagramDoc {
            nodes: g.nodes.clone(),
            edges,
            outcome: g.roles.outcome.clone(),
            protected: g.roles.protected.clone(),
            admissible: g.roles.admissible.iter().cloned().collect(),
            selection: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn set(names: &[&str]) -> NodeSet {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// The predictive-policing diagram: drug use Y caused by W, with Z a
    /// collider between Race and ZIPCode.
    fn policing_base() -> CausalDiagram {
        CausalDiagram::new(
            &["Race", "Z", "ZIPCode", "W", "Y"],
            &[("Race", "Z"), ("ZIPCode", "Z"), ("ZIPCode", "W"), ("W", "Y")],
            Roles {
                outcome: "Y".into(),
                protected: "Race".into(),
                admissible: NodeSet::new(),
            },
        )
        .unwrap()
    }

    fn policing_collection(parents: &[&str]) -> DataCollectionDiagram {
        DataCollectionDiagram::new(policing_base(), "C", set(parents)).unwrap()
    }

    #[test]
    fn race_and_outcome_marginally_separated() {
        let g = policing_base();
        assert!(d_separated(&g, "Race", "Y", &set(&[])).unwrap());
    }

    #[test]
    fn conditioning_on_selection_opens_collider_path() {
        let g = policing_collection(&["Z", "ZIPCode"]);
        assert!(!d_separated(g.graph(), "Race", "Y", &set(&["C"])).unwrap());
        // unconditioned, the collider at Z still blocks
        assert!(d_separated(g.graph(), "Race", "Y", &set(&[])).unwrap());
    }

    #[test]
    fn selection_parents_shield_the_rest() {
        let g = policing_collection(&["Z", "ZIPCode"]);
        assert!(d_separated_sets(
            g.graph(),
            &set(&["Race", "W", "Y"]),
            &set(&["C"]),
            &set(&["Z", "ZIPCode"]),
        )
        .unwrap());
    }

    #[test]
    fn disconnected_components_are_separated() {
        let g = CausalDiagram::new(
            &["A", "B", "S", "Y"],
            &[("A", "B")],
            Roles { outcome: "Y".into(), protected: "S".into(), admissible: set(&[]) },
        )
        .unwrap();
        assert!(d_separated(&g, "A", "Y", &set(&[])).unwrap());
        assert!(d_separated(&g, "B", "S", &set(&["A"])).unwrap());
    }

    #[test]
    fn empty_left_side_is_vacuous() {
        let g = policing_base();
        assert!(d_separated_sets(&g, &set(&[]), &set(&["Y"]), &set(&[])).unwrap());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let g = policing_base();
        let err = d_separated_sets(&g, &set(&["Y", "W"]), &set(&["W"]), &set(&[])).unwrap_err();
        assert!(matches!(err, GraphError::OverlappingSets(n) if n == "W"));
    }

    #[test]
    fn unknown_node_rejected() {
        let g = policing_base();
        assert!(matches!(
            d_separated(&g, "Race", "Nope", &set(&[])),
            Err(GraphError::UnknownNode(_))
        ));
    }

    #[test]
    fn endpoint_in_given_rejected() {
        let g = policing_base();
        assert!(matches!(
            d_separated(&g, "Race", "Y", &set(&["Y", "W"])),
            Err(GraphError::EndpointConditioned(_))
        ));
        assert!(matches!(
            d_separated(&g, "Y", "Y", &set(&[])),
            Err(GraphError::EqualEndpoints(_))
        ));
    }

    #[test]
    fn markov_boundary_of_base_outcome() {
        // S -> X1, S -> X2, X3 -> Y, X4 -> Y
        let g = fig4_base();
        assert_eq!(markov_boundary(&g, "Y").unwrap(), set(&["X3", "X4"]));
    }

    #[test]
    fn markov_boundary_single_node() {
        let g = CausalDiagram::new(
            &["Y"],
            &[],
            Roles { outcome: "Y".into(), protected: "Y".into(), admissible: set(&[]) },
        )
        .unwrap();
        assert_eq!(markov_boundary(&g, "Y").unwrap(), set(&[]));
    }

    #[test]
    fn markov_boundary_includes_coparents() {
        let g = CausalDiagram::new(
            &["S", "Y", "K", "M"],
            &[("Y", "K"), ("M", "K")],
            Roles { outcome: "Y".into(), protected: "S".into(), admissible: set(&[]) },
        )
        .unwrap();
        assert_eq!(markov_boundary(&g, "Y").unwrap(), set(&["K", "M"]));
    }

    pub(crate) fn fig4_base() -> CausalDiagram {
        CausalDiagram::new(
            &["S", "X1", "X2", "X3", "X4", "Y"],
            &[("S", "X1"), ("S", "X2"), ("X3", "Y"), ("X4", "Y")],
            Roles { outcome: "Y".into(), protected: "S".into(), admissible: set(&[]) },
        )
        .unwrap()
    }

    pub(crate) fn fig4_collection(parents: &[&str]) -> DataCollectionDiagram {
        DataCollectionDiagram::new(fig4_base(), "C", set(parents)).unwrap()
    }

    #[test]
    fn select_u_takes_selection_parents_when_they_validate() {
        let g = policing_collection(&["Z", "ZIPCode"]);
        assert_eq!(select_u(&g, None).unwrap(), set(&["Z", "ZIPCode"]));
    }

    #[test]
    fn select_u_avoids_outcome_via_markov_boundary() {
        let g = policing_collection(&["Y", "ZIPCode"]);
        assert_eq!(select_u(&g, None).unwrap(), set(&["W", "ZIPCode"]));
    }

    #[test]
    fn select_u_empty_when_protected_is_only_parent() {
        let g = policing_base();
        let g = DataCollectionDiagram::new(g, "C", set(&["Race"])).unwrap();
        assert_eq!(select_u(&g, None).unwrap(), set(&[]));
    }

    #[test]
    fn select_u_output_always_validates() {
        for parents in [
            vec!["S", "X4"],
            vec!["X2", "X4"],
            vec!["X2", "Y"],
            vec!["Y"],
            vec!["X1"],
            vec!["S"],
        ] {
            let g = fig4_collection(&parents);
            let u = select_u(&g, None).unwrap();
            assert!(
                g.selection_independent_given(&u).unwrap(),
                "U = {u:?} failed for Pa(C) = {parents:?}"
            );
        }
    }

    #[test]
    fn select_u_prefers_available_sets() {
        // Pa(C) = {Y, ZIPCode}: the label-free candidates are
        // {W, ZIPCode}; with W unavailable the fallback is Pa(C) itself.
        let g = policing_collection(&["Y", "ZIPCode"]);
        let u = select_u(&g, Some(&set(&["ZIPCode", "W", "Z"]))).unwrap();
        assert_eq!(u, set(&["W", "ZIPCode"]));
        let u = select_u(&g, Some(&set(&["ZIPCode", "Z"]))).unwrap();
        // nothing covered validates, so preference falls back to the best
        // label-free candidate
        assert_eq!(u, set(&["W", "ZIPCode"]));
    }

    #[test]
    fn diagnose_selection_on_feature_and_outcome_is_flagged() {
        let d = diagnose(&fig4_collection(&["X2", "Y"])).unwrap();
        assert!(d.selection_induces_unfairness);
        assert!(!d.originally_unfair);
        assert_eq!(d.witnesses, vec!["X2".to_string()]);
    }

    #[test]
    fn diagnose_selection_on_outcome_alone_is_clean() {
        let d = diagnose(&fig4_collection(&["Y"])).unwrap();
        assert!(!d.selection_induces_unfairness);
        assert!(d.witnesses.is_empty());
    }

    #[test]
    fn diagnose_selection_without_outcome_is_clean() {
        for parents in [vec!["S", "X4"], vec!["X2", "X4"]] {
            let d = diagnose(&fig4_collection(&parents)).unwrap();
            assert!(!d.selection_induces_unfairness, "Pa(C) = {parents:?}");
        }
    }

    #[test]
    fn diagnose_is_pure() {
        let g = fig4_collection(&["X2", "Y"]);
        assert_eq!(diagnose(&g).unwrap(), diagnose(&g).unwrap());
    }

    #[test]
    fn diagnose_protected_in_markov_boundary_counts() {
        let g = CausalDiagram::new(
            &["S", "Y"],
            &[("S", "Y")],
            Roles { outcome: "Y".into(), protected: "S".into(), admissible: set(&[]) },
        )
        .unwrap();
        let g = DataCollectionDiagram::new(g, "C", set(&["S"])).unwrap();
        let d = diagnose(&g).unwrap();
        assert!(d.originally_unfair);
        assert_eq!(d.witnesses, vec!["S".to_string()]);
    }

    #[test]
    fn cycle_rejected() {
        let err = CausalDiagram::new(
            &["A", "B", "S", "Y"],
            &[("A", "B"), ("B", "A")],
            Roles { outcome: "Y".into(), protected: "S".into(), admissible: set(&[]) },
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Cycle));
    }

    #[test]
    fn diagram_doc_round_trip() {
        let g = fig4_collection(&["X2", "Y"]);
        let doc = DiagramDoc::from_collection(&g);
        let json = serde_json::to_string_pretty(&doc).unwrap();
        let parsed: DiagramDoc = serde_json::from_str(&json).unwrap();
        match parsed.parse().unwrap() {
            ParsedDiagram::Collection(g2) => assert_eq!(g, g2),
            ParsedDiagram::Plain(_) => panic!("expected selection diagram"),
        }
    }

    #[test]
    fn diagram_doc_rejects_unknown_keys() {
        let json = r#"{"nodes":["S","Y"],"edges":[],"outcome":"Y","protected":"S","admissible":[],"bogus":1}"#;
        assert!(serde_json::from_str::<DiagramDoc>(json).is_err());
    }
}
