//! Typed causal DAGs and the path analysis used to audit an emulation for
//! confounding, selection and measurement bias.
//!
//! A [`CausalDag`] is the serialisable description (the JSON file format).
//! Analysis operations index it into a [`Graph`] first, which fails on
//! structural defects; [`validate_dag`] reports those defects without failing.

mod audit;
mod dsep;
pub mod fixtures;
mod paths;
mod render;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{
    backdoor_valid, bias_audit_report, bias_audit_report_with, expand_with_cohort_indicator,
    minimal_adjustment_sets, AdjustmentSearch, AuditOptions, BiasAuditReport, PathGroup, PathScope,
    COHORT_INDICATOR_ID,
};
pub use dsep::d_separated;
pub use paths::{classify_path, enumerate_paths, AnalysisMode, BiasPath, PathClass, PathStatus};

/// Role a node plays in bias analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Exposure,
    Outcome,
    MeasuredConfounder,
    UnmeasuredConfounder,
    Selection,
    MeasuredProxy,
    CohortIndicator,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub observed: bool,
    #[serde(default)]
    pub label: String,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind, observed: bool, label: impl Into<String>) -> Self {
        Node { id: id.into(), kind, observed, label: label.into() }
    }
}

/// A causal diagram together with the set of nodes the audited analysis
/// conditions on (by adjustment, restriction or design).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalDag {
    pub nodes: Vec<Node>,
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub conditioned: BTreeSet<String>,
}

impl CausalDag {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dag serialises")
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Copy of the DAG with one node and all its edges removed.
    pub fn without_node(&self, id: &str) -> CausalDag {
        CausalDag {
            nodes: self.nodes.iter().filter(|n| n.id != id).cloned().collect(),
            edges: self.edges.iter().filter(|(p, c)| p != id && c != id).cloned().collect(),
            conditioned: self.conditioned.iter().filter(|c| *c != id).cloned().collect(),
        }
    }

    pub fn with_conditioned<I, S>(&self, conditioned: I) -> CausalDag
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CausalDag { conditioned: conditioned.into_iter().map(Into::into).collect(), ..self.clone() }
    }

    /// Indexes the DAG for analysis. Fails if [`validate_dag`] would report
    /// a structural violation (duplicate id, dangling edge, cycle).
    pub fn graph(&self) -> Result<Graph, DagError> {
        let report = validate_dag(self);
        if let Some(v) = report.violations.iter().find(|v| v.is_structural()) {
            return Err(DagError::Invalid(v.to_string()));
        }
        Ok(Graph::build(self))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DagError {
    #[error("invalid DAG: {0}")]
    Invalid(String),
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("node sets must be pairwise disjoint; `{0}` appears twice")]
    NotDisjoint(String),
    #[error("DAG needs exactly one {kind:?} node, found {found}")]
    Role { kind: NodeKind, found: usize },
    #[error("proxy-exposure analysis needs a MeasuredProxy of the exposure")]
    NoProxy,
    #[error("adjustment node `{0}` is a descendant of the exposure")]
    ExposureDescendant(String),
    #[error("adjustment node `{0}` is not observed")]
    UnobservedAdjustment(String),
    #[error("adjustment set may not contain the exposure or outcome (`{0}`)")]
    EndpointInAdjustment(String),
    #[error("DAG already has a cohort indicator node `{0}`")]
    CohortIndicatorExists(String),
    #[error("cohort indicator needs at least one target node")]
    EmptyTargets,
    #[error("node id `{0}` is already taken")]
    IdCollision(String),
    #[error("`{0}` is not a path of the DAG")]
    NotAPath(String),
}

/// One problem found by [`validate_dag`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    DuplicateId { id: String },
    DanglingEdge { parent: String, child: String },
    Cycle { witness: Vec<String> },
    ConditionedUnknown { id: String },
    ConditionedUnobservable { id: String },
    UnmeasuredMarkedObserved { id: String },
}

impl Violation {
    fn is_structural(&self) -> bool {
        matches!(
            self,
            Violation::DuplicateId { .. }
                | Violation::DanglingEdge { .. }
                | Violation::Cycle { .. }
                | Violation::ConditionedUnknown { .. }
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "duplicate node id `{id}`"),
            Violation::DanglingEdge { parent, child } => {
                write!(f, "edge {parent} -> {child} names a missing node")
            }
            Violation::Cycle { witness } => write!(f, "cycle through [{}]", witness.join(", ")),
            Violation::ConditionedUnknown { id } => write!(f, "conditioned node `{id}` does not exist"),
            Violation::ConditionedUnobservable { id } => {
                write!(f, "conditioning on unobservable node `{id}`")
            }
            Violation::UnmeasuredMarkedObserved { id } => {
                write!(f, "unmeasured confounder `{id}` is marked observed")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Structural and semantic checks on a DAG. Never fails; an empty report
/// means the DAG is usable for analysis.
pub fn validate_dag(dag: &CausalDag) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashMap::new();
    for (i, n) in dag.nodes.iter().enumerate() {
        if seen.insert(n.id.as_str(), i).is_some() {
            violations.push(Violation::DuplicateId { id: n.id.clone() });
        }
        if n.kind == NodeKind::UnmeasuredConfounder && n.observed {
            violations.push(Violation::UnmeasuredMarkedObserved { id: n.id.clone() });
        }
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); dag.nodes.len()];
    for (p, c) in &dag.edges {
        match (seen.get(p.as_str()), seen.get(c.as_str())) {
            (Some(&pi), Some(&ci)) => children[pi].push(ci),
            _ => violations.push(Violation::DanglingEdge { parent: p.clone(), child: c.clone() }),
        }
    }
    if let Some(witness) = find_cycle(&children) {
        violations.push(Violation::Cycle {
            witness: witness.into_iter().map(|i| dag.nodes[i].id.clone()).collect(),
        });
    }
    for id in &dag.conditioned {
        match dag.node(id) {
            None => violations.push(Violation::ConditionedUnknown { id: id.clone() }),
            Some(n) if !n.observed && n.kind != NodeKind::Selection => {
                violations.push(Violation::ConditionedUnobservable { id: id.clone() })
            }
            Some(_) => {}
        }
    }
    ValidationReport { violations }
}

/// Depth-first search for a back edge; returns the cycle in traversal order.
fn find_cycle(children: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = children.len();
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = Mark::Active;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(&w) = children[v].get(*next) {
                *next += 1;
                match mark[w] {
                    Mark::New => {
                        mark[w] = Mark::Active;
                        stack.push((w, 0));
                    }
                    Mark::Active => {
                        let start = stack.iter().position(|&(u, _)| u == w).unwrap();
                        return Some(stack[start..].iter().map(|&(u, _)| u).collect());
                    }
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

/// Index-based adjacency view of a structurally valid [`CausalDag`].
#[derive(Debug, Clone)]
pub struct Graph {
    ids: Vec<String>,
    kinds: Vec<NodeKind>,
    observed: Vec<bool>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl Graph {
    fn build(dag: &CausalDag) -> Graph {
        let index: HashMap<String, usize> =
            dag.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let n = dag.nodes.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (p, c) in &dag.edges {
            let (pi, ci) = (index[p], index[c]);
            if !children[pi].contains(&ci) {
                children[pi].push(ci);
                parents[ci].push(pi);
            }
        }
        for v in parents.iter_mut().chain(children.iter_mut()) {
            v.sort_unstable();
        }
        Graph {
            ids: dag.nodes.iter().map(|n| n.id.clone()).collect(),
            kinds: dag.nodes.iter().map(|n| n.kind).collect(),
            observed: dag.nodes.iter().map(|n| n.observed).collect(),
            parents,
            children,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn kind(&self, i: usize) -> NodeKind {
        self.kinds[i]
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.observed[i]
    }

    pub fn index_of(&self, id: &str) -> Result<usize, DagError> {
        self.index.get(id).copied().ok_or_else(|| DagError::UnknownNode(id.to_string()))
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children[from].contains(&to)
    }

    /// Nodes reachable by directed paths from `start`, including `start`.
    pub fn descendants(&self, start: usize) -> Vec<bool> {
        self.reach(start, &self.children)
    }

    /// Nodes with a directed path into `start`, including `start`.
    pub fn ancestors(&self, start: usize) -> Vec<bool> {
        self.reach(start, &self.parents)
    }

    fn reach(&self, start: usize, adj: &[Vec<usize>]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Kahn topological order, ties broken by declaration order.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..self.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    /// The unique node of `kind`.
    pub fn unique(&self, kind: NodeKind) -> Result<usize, DagError> {
        let found: Vec<usize> = (0..self.len()).filter(|&i| self.kinds[i] == kind).collect();
        match found.as_slice() {
            [one] => Ok(*one),
            _ => Err(DagError::Role { kind, found: found.len() }),
        }
    }

    /// Measured proxy that stands in for `target` in analysis: the deepest
    /// proxy reachable from `target` through proxy nodes only. Proxies whose
    /// parents include the outcome are outcome proxies, never exposure proxies.
    pub fn proxy_of(&self, target: usize, outcome: usize) -> Option<usize> {
        let mut current = target;
        let mut found = None;
        loop {
            let next = self.children[current].iter().copied().find(|&c| {
                self.kinds[c] == NodeKind::MeasuredProxy
                    && (target == outcome || !self.parents[c].contains(&outcome))
            });
            match next {
                Some(c) => {
                    found = Some(c);
                    current = c;
                }
                None => return found,
            }
        }
    }

    /// Copy of the graph without the given edges.
    pub(crate) fn without_edges(&self, drop: impl Fn(usize, usize) -> bool) -> Graph {
        let mut g = self.clone();
        for p in 0..g.len() {
            g.children[p].retain(|&c| !drop(p, c));
        }
        for c in 0..g.len() {
            g.parents[c].retain(|&p| !drop(p, c));
        }
        g
    }

    pub(crate) fn indices<'a, I>(&self, ids: I) -> Result<Vec<usize>, DagError>
    where
        I: IntoIterator<Item = &'a String>,
    {
        ids.into_iter().map(|id| self.index_of(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> CausalDag {
        CausalDag {
            nodes: vec![
                Node::new("X", NodeKind::Exposure, true, ""),
                Node::new("Y", NodeKind::Outcome, true, ""),
            ],
            edges: vec![("X".into(), "Y".into()), ("Y".into(), "X".into())],
            conditioned: BTreeSet::new(),
        }
    }

    #[test]
    fn fixture_1a_validates() {
        assert!(validate_dag(&fixtures::dag_1a()).is_ok());
    }

    #[test]
    fn smallest_cycle_reported_with_witness() {
        let report = validate_dag(&two_cycle());
        assert_eq!(
            report.violations,
            vec![Violation::Cycle { witness: vec!["X".into(), "Y".into()] }]
        );
        assert!(two_cycle().graph().is_err());
    }

    #[test]
    fn conditioning_on_unmeasured_is_flagged() {
        let dag = fixtures::dag_1a().with_conditioned(["U"]);
        let report = validate_dag(&dag);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].to_string().contains("conditioning on unobservable"));
    }

    #[test]
    fn dangling_and_duplicate() {
        let mut dag = fixtures::dag_1a();
        dag.edges.push(("Q".into(), "Y".into()));
        dag.nodes.push(Node::new("C", NodeKind::Auxiliary, true, ""));
        let v = validate_dag(&dag).violations;
        assert!(v.contains(&Violation::DuplicateId { id: "C".into() }));
        assert!(v.contains(&Violation::DanglingEdge { parent: "Q".into(), child: "Y".into() }));
    }

    #[test]
    fn unobserved_selection_may_be_conditioned() {
        let mut dag = fixtures::dag_2a();
        for n in &mut dag.nodes {
            if n.id == "P" {
                n.observed = false;
            }
        }
        assert!(validate_dag(&dag).is_ok());
    }

    #[test]
    fn topological_order_respects_edges() {
        let dag = fixtures::dag_3b();
        let g = dag.graph().unwrap();
        let order = g.topological_order();
        let pos: Vec<usize> = {
            let mut p = vec![0; g.len()];
            for (k, &v) in order.iter().enumerate() {
                p[v] = k;
            }
            p
        };
        for (a, b) in &dag.edges {
            assert!(pos[g.index_of(a).unwrap()] < pos[g.index_of(b).unwrap()]);
        }
    }

    #[test]
    fn deepest_exposure_proxy() {
        let g = fixtures::dag_3b().graph().unwrap();
        let x = g.index_of("X").unwrap();
        let y = g.index_of("Y").unwrap();
        assert_eq!(g.id(g.proxy_of(x, y).unwrap()), "X**");
        let g = fixtures::dag_3a_differential().graph().unwrap();
        let x = g.index_of("X").unwrap();
        let y = g.index_of("Y").unwrap();
        assert_eq!(g.id(g.proxy_of(x, y).unwrap()), "X*");
        assert_eq!(g.id(g.proxy_of(y, y).unwrap()), "Y*");
    }
}
