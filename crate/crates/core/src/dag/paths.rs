use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{CausalDag, DagError, Graph, NodeKind};

/// Whether paths start at the true exposure or at the measured proxy the
/// analysis actually uses in its place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnalysisMode {
    TrueExposure,
    ProxyExposure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathStatus {
    Open,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathClass {
    Confounding,
    Selection,
    Measurement,
    Causal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasPath {
    pub path: Vec<String>,
    pub notation: String,
    pub status: PathStatus,
    /// Colliders on the path that conditioning (on them or a descendant) opened.
    pub openers: BTreeSet<String>,
    pub classification: PathClass,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Endpoints {
    pub exposure: usize,
    pub outcome: usize,
    pub source: usize,
    pub sink: usize,
}

pub(crate) fn endpoints(g: &Graph, mode: AnalysisMode) -> Result<Endpoints, DagError> {
    let exposure = g.unique(NodeKind::Exposure)?;
    let outcome = g.unique(NodeKind::Outcome)?;
    let (source, sink) = match mode {
        AnalysisMode::TrueExposure => (exposure, outcome),
        AnalysisMode::ProxyExposure => (
            g.proxy_of(exposure, outcome).ok_or(DagError::NoProxy)?,
            g.proxy_of(outcome, outcome).unwrap_or(outcome),
        ),
    };
    Ok(Endpoints { exposure, outcome, source, sink })
}

/// Every simple path between the (proxy-)exposure and the (proxy-)outcome,
/// with its status under `dag.conditioned`.
pub fn enumerate_paths(dag: &CausalDag, mode: AnalysisMode) -> Result<Vec<BiasPath>, DagError> {
    let g = dag.graph()?;
    let ends = endpoints(&g, mode)?;
    let z = g.indices(&dag.conditioned)?;
    Ok(enumerate_in(&g, mode, ends, &z))
}

pub(crate) fn enumerate_in(
    g: &Graph,
    mode: AnalysisMode,
    ends: Endpoints,
    conditioned: &[usize],
) -> Vec<BiasPath> {
    let opens = collider_openers(g, conditioned);
    let mut in_z = vec![false; g.len()];
    for &v in conditioned {
        in_z[v] = true;
    }
    let mut out: Vec<BiasPath> = simple_paths(g, ends.source, ends.sink)
        .into_iter()
        .map(|p| describe(g, &p, mode, &in_z, &opens))
        .collect();
    out.sort_by(|a, b| a.path.len().cmp(&b.path.len()).then_with(|| a.notation.cmp(&b.notation)));
    out
}

pub(crate) fn collider_openers(g: &Graph, conditioned: &[usize]) -> Vec<bool> {
    let mut opens = vec![false; g.len()];
    for &v in conditioned {
        for (u, anc) in g.ancestors(v).into_iter().enumerate() {
            opens[u] |= anc;
        }
    }
    opens
}

fn describe(g: &Graph, p: &[usize], mode: AnalysisMode, in_z: &[bool], opens: &[bool]) -> BiasPath {
    let mut status = PathStatus::Open;
    let mut openers = BTreeSet::new();
    for k in 1..p.len().saturating_sub(1) {
        let v = p[k];
        if is_collider(g, p[k - 1], v, p[k + 1]) {
            if opens[v] {
                openers.insert(g.id(v).to_string());
            } else {
                status = PathStatus::Blocked;
            }
        } else if in_z[v] {
            status = PathStatus::Blocked;
        }
    }
    BiasPath {
        path: p.iter().map(|&v| g.id(v).to_string()).collect(),
        notation: notation(g, p),
        status,
        openers,
        classification: classify_indices(g, p, mode),
    }
}

fn is_collider(g: &Graph, prev: usize, mid: usize, next: usize) -> bool {
    g.has_edge(prev, mid) && g.has_edge(next, mid)
}

fn notation(g: &Graph, p: &[usize]) -> String {
    let mut s = g.id(p[0]).to_string();
    for w in p.windows(2) {
        s.push_str(if g.has_edge(w[0], w[1]) { " → " } else { " ← " });
        s.push_str(g.id(w[1]));
    }
    s
}

/// Precedence: Measurement > Selection > Confounding > Causal. A path with
/// a collider is a selection-type path whether or not it is currently open.
pub(crate) fn classify_indices(g: &Graph, p: &[usize], mode: AnalysisMode) -> PathClass {
    if mode == AnalysisMode::ProxyExposure || p.iter().any(|&v| g.kind(v) == NodeKind::MeasuredProxy) {
        return PathClass::Measurement;
    }
    if (1..p.len().saturating_sub(1)).any(|k| is_collider(g, p[k - 1], p[k], p[k + 1])) {
        return PathClass::Selection;
    }
    if p.len() >= 2 && g.has_edge(p[1], p[0]) {
        return PathClass::Confounding;
    }
    PathClass::Causal
}

/// Classifies a node-id sequence that must be a path of `dag`.
pub fn classify_path(path: &[String], dag: &CausalDag, mode: AnalysisMode) -> Result<PathClass, DagError> {
    let g = dag.graph()?;
    let p = g.indices(path)?;
    let distinct: BTreeSet<usize> = p.iter().copied().collect();
    let adjacent = p.windows(2).all(|w| g.has_edge(w[0], w[1]) || g.has_edge(w[1], w[0]));
    if p.len() < 2 || distinct.len() != p.len() || !adjacent {
        return Err(DagError::NotAPath(path.join(" - ")));
    }
    Ok(classify_indices(&g, &p, mode))
}

/// All simple paths in the skeleton, neighbours visited in declaration order.
pub(crate) fn simple_paths(g: &Graph, from: usize, to: usize) -> Vec<Vec<usize>> {
    let neighbours: Vec<Vec<usize>> = (0..g.len())
        .map(|v| {
            let mut nb: Vec<usize> = g.parents(v).iter().chain(g.children(v)).copied().collect();
            nb.sort_unstable();
            nb.dedup();
            nb
        })
        .collect();
    let mut out = Vec::new();
    let mut on_path = vec![false; g.len()];
    let mut path = vec![from];
    on_path[from] = true;
    extend(&neighbours, to, &mut path, &mut on_path, &mut out);
    out
}

fn extend(nb: &[Vec<usize>], to: usize, path: &mut Vec<usize>, on_path: &mut [bool], out: &mut Vec<Vec<usize>>) {
    let v = *path.last().unwrap();
    if v == to {
        out.push(path.clone());
        return;
    }
    for &w in &nb[v] {
        if !on_path[w] {
            on_path[w] = true;
            path.push(w);
            extend(nb, to, path, on_path, out);
            path.pop();
            on_path[w] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::fixtures;

    fn ids(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    fn summary(paths: &[BiasPath]) -> Vec<(String, PathStatus, PathClass)> {
        paths.iter().map(|p| (p.notation.clone(), p.status, p.classification)).collect()
    }

    #[test]
    fn dag_1a_three_open_paths() {
        let paths = enumerate_paths(&fixtures::dag_1a(), AnalysisMode::TrueExposure).unwrap();
        assert_eq!(
            summary(&paths),
            vec![
                ("X → Y".into(), PathStatus::Open, PathClass::Causal),
                ("X ← C → Y".into(), PathStatus::Open, PathClass::Confounding),
                ("X ← U → Y".into(), PathStatus::Open, PathClass::Confounding),
            ]
        );
    }

    #[test]
    fn conditioning_blocks_fork() {
        let dag = fixtures::dag_1a().with_conditioned(["C"]);
        let paths = enumerate_paths(&dag, AnalysisMode::TrueExposure).unwrap();
        let find = |n: &str| paths.iter().find(|p| p.notation == n).unwrap().status;
        assert_eq!(find("X ← C → Y"), PathStatus::Blocked);
        assert_eq!(find("X ← U → Y"), PathStatus::Open);
    }

    #[test]
    fn participation_opens_collider_path() {
        let paths = enumerate_paths(&fixtures::dag_2a(), AnalysisMode::TrueExposure).unwrap();
        let p = paths.iter().find(|p| p.notation == "X → P ← A → Y").unwrap();
        assert_eq!(p.status, PathStatus::Open);
        assert_eq!(p.openers, ["P".to_string()].into_iter().collect());
        assert_eq!(p.classification, PathClass::Selection);
        let unconditioned = fixtures::dag_2a().with_conditioned(Vec::<String>::new());
        let paths = enumerate_paths(&unconditioned, AnalysisMode::TrueExposure).unwrap();
        let p = paths.iter().find(|p| p.notation == "X → P ← A → Y").unwrap();
        assert_eq!(p.status, PathStatus::Blocked);
        assert!(p.openers.is_empty());
    }

    #[test]
    fn proxy_mode_paths() {
        let paths = enumerate_paths(&fixtures::dag_3a(), AnalysisMode::ProxyExposure).unwrap();
        assert_eq!(summary(&paths), vec![("X* ← X → Y".into(), PathStatus::Open, PathClass::Measurement)]);
        assert_eq!(
            enumerate_paths(&fixtures::dag_1a(), AnalysisMode::ProxyExposure),
            Err(DagError::NoProxy)
        );
    }

    #[test]
    fn classify_precedence() {
        let d1 = fixtures::dag_1a();
        assert_eq!(classify_path(&ids(&["X", "C", "Y"]), &d1, AnalysisMode::TrueExposure), Ok(PathClass::Confounding));
        assert_eq!(classify_path(&ids(&["X", "Y"]), &d1, AnalysisMode::TrueExposure), Ok(PathClass::Causal));
        let d2 = fixtures::dag_2a();
        assert_eq!(
            classify_path(&ids(&["X", "P", "A", "Y"]), &d2, AnalysisMode::TrueExposure),
            Ok(PathClass::Selection)
        );
        let d3 = fixtures::dag_3a();
        assert_eq!(
            classify_path(&ids(&["X*", "X", "Y"]), &d3, AnalysisMode::ProxyExposure),
            Ok(PathClass::Measurement)
        );
        // a proxy node on the path dominates even in true-exposure mode
        let d3d = fixtures::dag_3a_differential();
        assert_eq!(
            classify_path(&ids(&["X", "Y*", "Y"]), &d3d, AnalysisMode::TrueExposure),
            Ok(PathClass::Measurement)
        );
        assert!(classify_path(&ids(&["X", "A"]), &d2, AnalysisMode::TrueExposure).is_err());
    }

    #[test]
    fn differential_outcome_extension_ends_at_measured_outcome() {
        let paths = enumerate_paths(&fixtures::dag_3a_differential(), AnalysisMode::ProxyExposure).unwrap();
        let notations: Vec<&str> = paths.iter().map(|p| p.notation.as_str()).collect();
        assert_eq!(notations, vec!["X* ← X → Y*", "X* ← X → Y → Y*"]);
        assert!(paths.iter().all(|p| p.status == PathStatus::Open));
    }
}
