use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::dsep::separated;
use super::paths::{endpoints, enumerate_in, AnalysisMode, BiasPath, PathClass, PathStatus};
use super::{CausalDag, DagError, Graph, Node, NodeKind};

/// Node id given to the cohort indicator by [`expand_with_cohort_indicator`].
pub const COHORT_INDICATOR_ID: &str = "S";

/// True iff `adjustment` (together with anything the DAG already conditions
/// on) blocks every backdoor path from exposure to outcome.
pub fn backdoor_valid(dag: &CausalDag, adjustment: &[String]) -> Result<bool, DagError> {
    let g = dag.graph()?;
    let ends = endpoints(&g, AnalysisMode::TrueExposure)?;
    let z = g.indices(adjustment)?;
    let descendants = g.descendants(ends.exposure);
    for &v in &z {
        if v == ends.exposure || v == ends.outcome {
            return Err(DagError::EndpointInAdjustment(g.id(v).to_string()));
        }
        if descendants[v] {
            return Err(DagError::ExposureDescendant(g.id(v).to_string()));
        }
        if !g.is_observed(v) {
            return Err(DagError::UnobservedAdjustment(g.id(v).to_string()));
        }
    }
    let base = g.indices(&dag.conditioned)?;
    Ok(backdoor_blocked(&g, ends.exposure, ends.outcome, &base, &z))
}

fn backdoor_blocked(g: &Graph, x: usize, y: usize, base: &[usize], z: &[usize]) -> bool {
    let cut = g.without_edges(|p, _| p == x);
    let mut given: Vec<usize> = base.iter().chain(z).copied().filter(|&v| v != x && v != y).collect();
    given.sort_unstable();
    given.dedup();
    separated(&cut, &[x], &[y], &given)
}

/// Every inclusion-minimal observed adjustment set of size at most `bound`
/// that satisfies the backdoor criterion, smallest first.
pub fn minimal_adjustment_sets(dag: &CausalDag, bound: usize) -> Result<Vec<Vec<String>>, DagError> {
    let g = dag.graph()?;
    let ends = endpoints(&g, AnalysisMode::TrueExposure)?;
    let base = g.indices(&dag.conditioned)?;
    Ok(minimal_sets_in(&g, ends.exposure, ends.outcome, &base, bound))
}

fn minimal_sets_in(g: &Graph, x: usize, y: usize, base: &[usize], bound: usize) -> Vec<Vec<String>> {
    let descendants = g.descendants(x);
    let candidates: Vec<usize> = (0..g.len())
        .filter(|&v| v != x && v != y && !descendants[v] && g.is_observed(v) && !base.contains(&v))
        .collect();
    let mut found: Vec<Vec<usize>> = Vec::new();
    for size in 0..=bound.min(candidates.len()) {
        for subset in combinations(&candidates, size) {
            if found.iter().any(|f| f.iter().all(|v| subset.contains(v))) {
                continue;
            }
            if backdoor_blocked(g, x, y, base, &subset) {
                found.push(subset);
            }
        }
    }
    found.into_iter().map(|s| s.into_iter().map(|v| g.id(v).to_string()).collect()).collect()
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn go(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Adds a cohort indicator `S` as a source node with an edge into each target.
pub fn expand_with_cohort_indicator(dag: &CausalDag, targets: &[String]) -> Result<CausalDag, DagError> {
    if let Some(n) = dag.nodes.iter().find(|n| n.kind == NodeKind::CohortIndicator) {
        return Err(DagError::CohortIndicatorExists(n.id.clone()));
    }
    if targets.is_empty() {
        return Err(DagError::EmptyTargets);
    }
    if dag.node(COHORT_INDICATOR_ID).is_some() {
        return Err(DagError::IdCollision(COHORT_INDICATOR_ID.to_string()));
    }
    let g = dag.graph()?;
    g.indices(targets)?;
    let mut out = dag.clone();
    out.nodes.push(Node::new(COHORT_INDICATOR_ID, NodeKind::CohortIndicator, true, "cohort indicator"));
    for t in targets {
        out.edges.push((COHORT_INDICATOR_ID.to_string(), t.clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathScope {
    Within,
    Across,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathGroup {
    pub classification: PathClass,
    pub scope: PathScope,
    pub paths: Vec<BiasPath>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustmentSearch {
    pub max_size: usize,
    /// Empty when no observed set of at most `max_size` nodes is valid.
    pub minimal_sets: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasAuditReport {
    pub exposure: String,
    pub outcome: String,
    pub mode: AnalysisMode,
    pub conditioned: BTreeSet<String>,
    pub groups: Vec<PathGroup>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjustment: Option<AdjustmentSearch>,
}

impl BiasAuditReport {
    /// True when at least one open non-causal path was found.
    pub fn has_bias(&self) -> bool {
        !self.groups.is_empty()
    }

    pub fn group(&self, classification: PathClass, scope: PathScope) -> Option<&PathGroup> {
        self.groups.iter().find(|g| g.classification == classification && g.scope == scope)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AuditOptions {
    pub max_adjustment_size: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { max_adjustment_size: 6 }
    }
}

pub fn bias_audit_report(dag: &CausalDag) -> Result<BiasAuditReport, DagError> {
    bias_audit_report_with(dag, AuditOptions::default())
}

/// Groups every open non-causal path by bias kind and by whether it runs
/// through the cohort indicator. Analyses that substitute a measured proxy
/// for the exposure are audited in proxy mode.
pub fn bias_audit_report_with(dag: &CausalDag, options: AuditOptions) -> Result<BiasAuditReport, DagError> {
    let g = dag.graph()?;
    let exposure = g.unique(NodeKind::Exposure)?;
    let outcome = g.unique(NodeKind::Outcome)?;
    let mode = if g.proxy_of(exposure, outcome).is_some() {
        AnalysisMode::ProxyExposure
    } else {
        AnalysisMode::TrueExposure
    };
    let ends = endpoints(&g, mode)?;
    let z = g.indices(&dag.conditioned)?;
    let paths = enumerate_in(&g, mode, ends, &z);

    let mut groups: Vec<PathGroup> = Vec::new();
    for class in [PathClass::Confounding, PathClass::Selection, PathClass::Measurement] {
        for scope in [PathScope::Within, PathScope::Across] {
            let members: Vec<BiasPath> = paths
                .iter()
                .filter(|p| p.status == PathStatus::Open && p.classification == class)
                .filter(|p| path_scope(dag, p) == scope)
                .cloned()
                .collect();
            if !members.is_empty() {
                groups.push(PathGroup { classification: class, scope, paths: members });
            }
        }
    }
    let adjustment = groups.iter().any(|g| g.classification == PathClass::Confounding).then(|| {
        AdjustmentSearch {
            max_size: options.max_adjustment_size,
            minimal_sets: minimal_sets_in(&g, ends.exposure, ends.outcome, &z, options.max_adjustment_size),
        }
    });
    Ok(BiasAuditReport {
        exposure: g.id(ends.source).to_string(),
        outcome: g.id(ends.sink).to_string(),
        mode,
        conditioned: dag.conditioned.clone(),
        groups,
        adjustment,
    })
}

fn path_scope(dag: &CausalDag, p: &BiasPath) -> PathScope {
    let through_cohort = p
        .path
        .iter()
        .any(|id| dag.node(id).is_some_and(|n| n.kind == NodeKind::CohortIndicator));
    if through_cohort {
        PathScope::Across
    } else {
        PathScope::Within
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::fixtures;

    fn s(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|x| x.to_string()).collect()
    }

    fn notations(g: &PathGroup) -> Vec<&str> {
        g.paths.iter().map(|p| p.notation.as_str()).collect()
    }

    #[test]
    fn backdoor_examples() {
        assert_eq!(backdoor_valid(&fixtures::dag_1a(), &s(&["C"])), Ok(false));
        let no_u = fixtures::dag_1a().without_node("U");
        assert_eq!(backdoor_valid(&no_u, &s(&["C"])), Ok(true));
        let b_no_u = fixtures::dag_1b().without_node("U");
        assert_eq!(backdoor_valid(&b_no_u, &s(&["C"])), Ok(false));
        assert_eq!(backdoor_valid(&b_no_u, &s(&["C", "S"])), Ok(true));
    }

    #[test]
    fn backdoor_rejects_descendants_and_unobserved() {
        assert_eq!(
            backdoor_valid(&fixtures::dag_2a(), &s(&["P"])),
            Err(DagError::ExposureDescendant("P".into()))
        );
        assert_eq!(
            backdoor_valid(&fixtures::dag_1a(), &s(&["C", "U"])),
            Err(DagError::UnobservedAdjustment("U".into()))
        );
    }

    #[test]
    fn expansion_reproduces_fixtures() {
        let b = expand_with_cohort_indicator(&fixtures::dag_1a(), &s(&["X", "Y"])).unwrap();
        assert_eq!(b, fixtures::dag_1b());
        let b = expand_with_cohort_indicator(&fixtures::dag_2a(), &s(&["P", "Y"])).unwrap();
        assert_eq!(b, fixtures::dag_2b());
        let b = expand_with_cohort_indicator(&fixtures::dag_3a(), &s(&["X*"])).unwrap();
        assert_eq!(b, fixtures::dag_3b_core());
    }

    #[test]
    fn expansion_errors() {
        assert_eq!(
            expand_with_cohort_indicator(&fixtures::dag_1b(), &s(&["X"])),
            Err(DagError::CohortIndicatorExists("S".into()))
        );
        assert_eq!(expand_with_cohort_indicator(&fixtures::dag_1a(), &[]), Err(DagError::EmptyTargets));
        assert_eq!(
            expand_with_cohort_indicator(&fixtures::dag_1a(), &s(&["Q"])),
            Err(DagError::UnknownNode("Q".into()))
        );
    }

    #[test]
    fn audit_1b() {
        let r = bias_audit_report(&fixtures::dag_1b()).unwrap();
        assert_eq!(r.groups.len(), 2);
        let within = r.group(PathClass::Confounding, PathScope::Within).unwrap();
        assert_eq!(notations(within), vec!["X ← C → Y", "X ← U → Y"]);
        let across = r.group(PathClass::Confounding, PathScope::Across).unwrap();
        assert_eq!(notations(across), vec!["X ← S → Y"]);
        assert!(r.adjustment.as_ref().unwrap().minimal_sets.is_empty());

        let r = bias_audit_report(&fixtures::dag_1b().without_node("U")).unwrap();
        assert_eq!(r.adjustment.unwrap().minimal_sets, vec![s(&["C", "S"])]);
    }

    #[test]
    fn audit_2b() {
        let r = bias_audit_report(&fixtures::dag_2b()).unwrap();
        let within = r.group(PathClass::Selection, PathScope::Within).unwrap();
        assert_eq!(notations(within), vec!["X → P ← A → Y"]);
        let across = r.group(PathClass::Selection, PathScope::Across).unwrap();
        assert_eq!(notations(across), vec!["X → P ← S → Y"]);
        assert!(r.adjustment.is_none());
    }

    #[test]
    fn unbiased_dag_has_empty_report() {
        let dag = CausalDag {
            nodes: vec![
                Node::new("X", NodeKind::Exposure, true, ""),
                Node::new("Y", NodeKind::Outcome, true, ""),
            ],
            edges: vec![("X".into(), "Y".into())],
            conditioned: BTreeSet::new(),
        };
        let r = bias_audit_report(&dag).unwrap();
        assert!(!r.has_bias());
        assert!(r.adjustment.is_none());
    }

    #[test]
    fn minimal_sets_skip_supersets() {
        // two independent backdoors through C1 and C2 plus an irrelevant root
        let mut dag = fixtures::dag_1a().without_node("U");
        dag.nodes.push(Node::new("C2", NodeKind::MeasuredConfounder, true, ""));
        dag.nodes.push(Node::new("R", NodeKind::Auxiliary, true, ""));
        dag.edges.push(("C2".into(), "X".into()));
        dag.edges.push(("C2".into(), "Y".into()));
        let sets = minimal_adjustment_sets(&dag, 6).unwrap();
        assert_eq!(sets, vec![s(&["C", "C2"])]);
    }
}
