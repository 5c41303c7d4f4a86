//! Structural causal models over binary DAGs: multi-cohort simulation with
//! selection, misclassification and missingness, and an exact
//! enumeration oracle for interventional effects.

mod dataset;
mod oracle;
pub mod scenarios;
mod simulate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{CausalDag, DagError, NodeKind};
use crate::types::expit;

pub use dataset::{pool, restrict_to_selected, Dataset, DatasetMeta, Harmonization};
pub use oracle::{true_effect, true_effect_pooled, Estimand, TrueEffect, MAX_STOCHASTIC_NODES};
pub use scenarios::{scenario, scenario_library, Scenario};
pub use simulate::simulate;

/// Column name carrying the cohort id in CSV output.
pub const COHORT_COLUMN: &str = "cohort";
/// Column name carrying the participation flag in CSV output.
pub const SELECTED_COLUMN: &str = "selected";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Mechanism {
    BernoulliLogit {
        intercept: f64,
        #[serde(default)]
        coefficients: BTreeMap<String, f64>,
    },
    /// Output looked up from `table` at index `sum(bit_i << i)` over the
    /// binary `parents`.
    Deterministic { parents: Vec<String>, table: Vec<f64> },
    Misclassify { source: String, sensitivity: f64, specificity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralModel {
    pub dag: CausalDag,
    /// Bernoulli probability for every root. A cohort-indicator root uses its
    /// prior only when the model is enumerated without a cohort design.
    pub priors: BTreeMap<String, f64>,
    pub mechanisms: BTreeMap<String, Mechanism>,
    pub exposure: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Missingness {
    Mcar { rate: f64 },
    /// P(missing) = expit(intercept + sum of coefficient * value) over fully
    /// observed nodes (the cohort indicator takes the cohort index).
    Mar {
        intercept: f64,
        #[serde(default)]
        coefficients: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub id: String,
    pub n: usize,
    /// `node.param` -> value, where param is `prior`, `intercept`,
    /// `sensitivity`, `specificity`, or a parent id for a coefficient.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub missingness: BTreeMap<String, Missingness>,
    /// Node whose value 1 marks a participant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<String>,
}

impl CohortConfig {
    pub fn new(id: &str, n: usize) -> Self {
        CohortConfig {
            id: id.to_string(),
            n,
            overrides: BTreeMap::new(),
            missingness: BTreeMap::new(),
            selection: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("node `{0}` needs a mechanism")]
    MissingMechanism(String),
    #[error("root `{0}` needs a prior")]
    MissingPrior(String),
    #[error("root `{0}` cannot have a mechanism")]
    RootMechanism(String),
    #[error("prior or rate for `{0}` must lie in [0, 1]")]
    Probability(String),
    #[error("mechanism for `{node}` references `{other}`, which is not a parent")]
    NotAParent { node: String, other: String },
    #[error("mechanism for `{node}`: {msg}")]
    BadMechanism { node: String, msg: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("override `{key}`: {msg}")]
    BadOverride { key: String, msg: String },
    #[error("cohort `{cohort}`: {msg}")]
    BadCohort { cohort: String, msg: String },
    #[error("state space too large for exact enumeration ({0} stochastic nodes, at most {MAX_STOCHASTIC_NODES})")]
    StateSpaceTooLarge(usize),
    #[error("stratum `{0}` is affected by the exposure")]
    StratumDescendant(String),
    #[error("columns cannot be reconciled: {0}")]
    Irreconcilable(String),
    #[error("category `{category}` of `{column}` has no mapping")]
    UnmappedCategory { column: String, category: String },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl StructuralModel {
    pub fn check(&self) -> Result<(), ScmError> {
        let g = self.dag.graph()?;
        for id in [&self.exposure, &self.outcome] {
            g.index_of(id).map_err(|_| ScmError::UnknownNode(id.clone()))?;
        }
        for id in self.mechanisms.keys().chain(self.priors.keys()) {
            g.index_of(id).map_err(|_| ScmError::UnknownNode(id.clone()))?;
        }
        for i in 0..g.len() {
            let id = g.id(i);
            let parents: BTreeSet<&str> = g.parents(i).iter().map(|&p| g.id(p)).collect();
            if parents.is_empty() {
                if self.mechanisms.contains_key(id) {
                    return Err(ScmError::RootMechanism(id.to_string()));
                }
                let p = *self.priors.get(id).ok_or_else(|| ScmError::MissingPrior(id.to_string()))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(ScmError::Probability(id.to_string()));
                }
                continue;
            }
            let m = self.mechanisms.get(id).ok_or_else(|| ScmError::MissingMechanism(id.to_string()))?;
            let not_parent = |other: &str| ScmError::NotAParent { node: id.to_string(), other: other.to_string() };
            match m {
                Mechanism::BernoulliLogit { coefficients, .. } => {
                    if let Some(k) = coefficients.keys().find(|k| !parents.contains(k.as_str())) {
                        return Err(not_parent(k));
                    }
                }
                Mechanism::Deterministic { parents: ps, table } => {
                    if let Some(k) = ps.iter().find(|k| !parents.contains(k.as_str())) {
                        return Err(not_parent(k));
                    }
                    if ps.len() > 16 || table.len() != 1 << ps.len() {
                        return Err(ScmError::BadMechanism {
                            node: id.to_string(),
                            msg: format!("table needs {} entries", 1usize << ps.len().min(16)),
                        });
                    }
                }
                Mechanism::Misclassify { source, sensitivity, specificity } => {
                    if !parents.contains(source.as_str()) {
                        return Err(not_parent(source));
                    }
                    let ok = |v: f64| v > 0.0 && v <= 1.0;
                    if !ok(*sensitivity) || !ok(*specificity) {
                        return Err(ScmError::BadMechanism {
                            node: id.to_string(),
                            msg: "sensitivity and specificity must lie in (0, 1]".into(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// The model with `id` and every reference to it deleted.
    pub fn without_node(&self, id: &str) -> StructuralModel {
        let mut m = self.clone();
        m.dag = self.dag.without_node(id);
        m.priors.remove(id);
        m.mechanisms.remove(id);
        for mech in m.mechanisms.values_mut() {
            if let Mechanism::BernoulliLogit { coefficients, .. } = mech {
                coefficients.remove(id);
            }
        }
        // Nodes left without parents become roots at their baseline rate.
        if let Ok(g) = m.dag.graph() {
            for i in 0..g.len() {
                let nid = g.id(i).to_string();
                if g.parents(i).is_empty() && !m.priors.contains_key(&nid) {
                    if let Some(Mechanism::BernoulliLogit { intercept, .. }) = m.mechanisms.remove(&nid) {
                        m.priors.insert(nid, expit(intercept));
                    }
                }
            }
        }
        m
    }

    /// Copy with per-cohort overrides applied.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, f64>) -> Result<StructuralModel, ScmError> {
        let mut m = self.clone();
        let g = self.dag.graph()?;
        for (key, &value) in overrides {
            let bad = |msg: &str| ScmError::BadOverride { key: key.clone(), msg: msg.to_string() };
            let (node, param) = key.split_once('.').ok_or_else(|| bad("expected `node.param`"))?;
            let idx = g.index_of(node).map_err(|_| bad("unknown node"))?;
            if param == "prior" {
                let p = m.priors.get_mut(node).ok_or_else(|| bad("node is not a root"))?;
                *p = value;
                continue;
            }
            let mech = m.mechanisms.get_mut(node).ok_or_else(|| bad("node has no mechanism"))?;
            match (mech, param) {
                (Mechanism::BernoulliLogit { intercept, .. }, "intercept") => *intercept = value,
                (Mechanism::Misclassify { sensitivity, .. }, "sensitivity") => *sensitivity = value,
                (Mechanism::Misclassify { specificity, .. }, "specificity") => *specificity = value,
                (Mechanism::BernoulliLogit { coefficients, .. }, parent) => {
                    if !g.parents(idx).iter().any(|&p| g.id(p) == parent) {
                        return Err(bad("not a parent of the node"));
                    }
                    coefficients.insert(parent.to_string(), value);
                }
                _ => return Err(bad("parameter does not apply to this mechanism")),
            }
        }
        m.check()?;
        Ok(m)
    }
}

/// Index-based form of a model used by the sampler and the enumerator.
#[derive(Debug, Clone)]
pub(crate) enum Kernel {
    Root(f64),
    Cohort(f64),
    Logit { intercept: f64, terms: Vec<(usize, f64)> },
    Table { parents: Vec<usize>, table: Vec<f64> },
    Misclassify { source: usize, sensitivity: f64, specificity: f64 },
}

impl Kernel {
    pub(crate) fn is_stochastic(&self) -> bool {
        !matches!(self, Kernel::Table { .. })
    }

    /// P(node = 1) given the current values of its parents; `None` for
    /// deterministic kernels.
    pub(crate) fn p_one(&self, vals: &[f64]) -> Option<f64> {
        match self {
            Kernel::Root(p) | Kernel::Cohort(p) => Some(*p),
            Kernel::Logit { intercept, terms } => {
                Some(expit(terms.iter().fold(*intercept, |acc, &(j, b)| acc + b * vals[j])))
            }
            Kernel::Misclassify { source, sensitivity, specificity } => {
                Some(if vals[*source] != 0.0 { *sensitivity } else { 1.0 - specificity })
            }
            Kernel::Table { .. } => None,
        }
    }

    pub(crate) fn lookup(&self, vals: &[f64]) -> f64 {
        match self {
            Kernel::Table { parents, table } => {
                let idx = parents.iter().enumerate().fold(0usize, |acc, (b, &j)| acc | (((vals[j] != 0.0) as usize) << b));
                table[idx]
            }
            _ => unreachable!("lookup on a stochastic kernel"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub ids: Vec<String>,
    pub kinds: Vec<NodeKind>,
    pub order: Vec<usize>,
    pub kernels: Vec<Kernel>,
    pub exposure: usize,
    pub outcome: usize,
    pub descendants_of_exposure: Vec<bool>,
}

impl Compiled {
    pub(crate) fn new(model: &StructuralModel) -> Result<Compiled, ScmError> {
        model.check()?;
        let g = model.dag.graph()?;
        let idx = |id: &str| g.index_of(id).expect("checked");
        let mut kernels = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            let id = g.id(i);
            let k = if g.parents(i).is_empty() {
                let p = model.priors[id];
                if g.kind(i) == NodeKind::CohortIndicator {
                    Kernel::Cohort(p)
                } else {
                    Kernel::Root(p)
                }
            } else {
                match &model.mechanisms[id] {
                    Mechanism::BernoulliLogit { intercept, coefficients } => Kernel::Logit {
                        intercept: *intercept,
                        terms: coefficients.iter().map(|(k, &b)| (idx(k), b)).collect(),
                    },
                    Mechanism::Deterministic { parents, table } => Kernel::Table {
                        parents: parents.iter().map(|p| idx(p)).collect(),
                        table: table.clone(),
                    },
                    Mechanism::Misclassify { source, sensitivity, specificity } => Kernel::Misclassify {
                        source: idx(source),
                        sensitivity: *sensitivity,
                        specificity: *specificity,
                    },
                }
            };
            kernels.push(k);
        }
        let exposure = idx(&model.exposure);
        let desc = g.descendants(exposure);
        Ok(Compiled {
            ids: (0..g.len()).map(|i| g.id(i).to_string()).collect(),
            kinds: (0..g.len()).map(|i| g.kind(i)).collect(),
            order: g.topological_order(),
            kernels,
            exposure,
            outcome: idx(&model.outcome),
            descendants_of_exposure: desc,
        })
    }

    pub(crate) fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_models_check() {
        for s in scenario_library() {
            s.model.check().unwrap();
            for c in &s.cohorts {
                s.model.with_overrides(&c.overrides).unwrap();
            }
        }
    }

    #[test]
    fn without_node_drops_references() {
        let s = scenario("S-1A").unwrap();
        let m = s.model.without_node("U");
        m.check().unwrap();
        assert!(!m.priors.contains_key("U"));
        match &m.mechanisms["Y"] {
            Mechanism::BernoulliLogit { coefficients, .. } => assert!(!coefficients.contains_key("U")),
            _ => panic!(),
        }
    }

    #[test]
    fn override_errors() {
        let s = scenario("S-1A").unwrap();
        let bad = |k: &str| s.model.with_overrides(&[(k.to_string(), 0.1)].into_iter().collect()).unwrap_err();
        assert!(matches!(bad("Q.intercept"), ScmError::BadOverride { .. }));
        assert!(matches!(bad("Y.nope"), ScmError::BadOverride { .. }));
        assert!(matches!(bad("Y"), ScmError::BadOverride { .. }));
        assert!(matches!(bad("X.sensitivity"), ScmError::BadOverride { .. }));
        let ok = s.model.with_overrides(&[("Y.X".to_string(), 0.0)].into_iter().collect()).unwrap();
        match &ok.mechanisms["Y"] {
            Mechanism::BernoulliLogit { coefficients, .. } => assert_eq!(coefficients["X"], 0.0),
            _ => panic!(),
        }
    }

    #[test]
    fn check_rejects_non_parent_coefficient() {
        let mut m = scenario("S-1A").unwrap().model;
        if let Some(Mechanism::BernoulliLogit { coefficients, .. }) = m.mechanisms.get_mut("X") {
            coefficients.insert("Y".into(), 1.0);
        }
        assert!(matches!(m.check(), Err(ScmError::NotAParent { .. })));
    }
}
