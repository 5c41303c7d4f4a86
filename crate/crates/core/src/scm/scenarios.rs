//! Benchmark scenarios built on the DAG fixtures with parameter set P1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{true_effect_pooled, CohortConfig, Estimand, Mechanism, ScmError, StructuralModel};
use crate::dag::fixtures;
use crate::types::{expit, Measure};

/// Label of the benchmark parameter set.
pub const PARAMETER_SET: &str = "P1";
/// Default rows per cohort.
pub const DEFAULT_N: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    /// Name of the DAG fixture the model is built on.
    pub dag: String,
    pub parameter_set: String,
    pub model: StructuralModel,
    pub cohorts: Vec<CohortConfig>,
    /// Column an analyst would use as the exposure (a proxy in the
    /// measurement scenarios).
    pub analysed_exposure: String,
    /// Marginal odds ratio of the true exposure in the pooled target
    /// population, frozen from exact enumeration.
    pub true_marginal_or: f64,
}

impl Scenario {
    /// Same scenario with every cohort resized to `n`.
    pub fn with_n(&self, n: usize) -> Scenario {
        let mut s = self.clone();
        for c in &mut s.cohorts {
            c.n = n;
        }
        s
    }

    pub fn is_multi_cohort(&self) -> bool {
        self.cohorts.len() > 1
    }

    /// Recomputes the marginal odds ratio by enumeration.
    pub fn compute_true_or(&self) -> Result<f64, ScmError> {
        Ok(true_effect_pooled(&self.model, &self.cohorts, &Estimand::Marginal, Measure::OddsRatio)?.value)
    }
}

fn logit_mech(intercept: f64, coefs: &[(&str, f64)]) -> Mechanism {
    Mechanism::BernoulliLogit {
        intercept,
        coefficients: coefs.iter().map(|(k, b)| (k.to_string(), *b)).collect(),
    }
}

fn priors(items: &[(&str, f64)]) -> BTreeMap<String, f64> {
    items.iter().map(|(k, p)| (k.to_string(), *p)).collect()
}

fn dag(name: &str) -> crate::dag::CausalDag {
    fixtures::by_name(name).expect("bundled fixture")
}

fn two_cohorts(selection: Option<&str>) -> Vec<CohortConfig> {
    ["cohort1", "cohort2"]
        .iter()
        .map(|id| CohortConfig { selection: selection.map(str::to_string), ..CohortConfig::new(id, DEFAULT_N) })
        .collect()
}

fn one_cohort(selection: Option<&str>) -> Vec<CohortConfig> {
    vec![CohortConfig { selection: selection.map(str::to_string), ..CohortConfig::new("cohort1", DEFAULT_N) }]
}

fn model(dag_name: &str, priors: BTreeMap<String, f64>, mechanisms: Vec<(&str, Mechanism)>) -> StructuralModel {
    StructuralModel {
        dag: dag(dag_name),
        priors,
        mechanisms: mechanisms.into_iter().map(|(k, m)| (k.to_string(), m)).collect(),
        exposure: "X".into(),
        outcome: "Y".into(),
    }
}

fn build(id: &str, description: &str, dag_name: &str, model: StructuralModel, cohorts: Vec<CohortConfig>, analysed: &str, or: f64) -> Scenario {
    Scenario {
        id: id.into(),
        description: description.into(),
        dag: dag_name.into(),
        parameter_set: PARAMETER_SET.into(),
        model,
        cohorts,
        analysed_exposure: analysed.into(),
        true_marginal_or: or,
    }
}

fn s1a() -> Scenario {
    build(
        "S-1A",
        "within-cohort confounding by measured C and unmeasured U",
        "DAG-1A",
        model(
            "DAG-1A",
            priors(&[("C", 0.5), ("U", 0.5)]),
            vec![
                ("X", logit_mech(-0.5, &[("C", 0.8), ("U", 0.8)])),
                ("Y", logit_mech(-1.0, &[("X", 0.7), ("C", 0.8), ("U", 0.8)])),
            ],
        ),
        one_cohort(None),
        "X",
        1.915_707_478_144_638_8,
    )
}

fn s1b() -> Scenario {
    build(
        "S-1B",
        "S-1A pooled over two cohorts whose indicator affects exposure and outcome",
        "DAG-1B",
        model(
            "DAG-1B",
            priors(&[("C", 0.5), ("U", 0.5), ("S", 0.5)]),
            vec![
                ("X", logit_mech(-0.5, &[("C", 0.8), ("U", 0.8), ("S", 0.6)])),
                ("Y", logit_mech(-1.0, &[("X", 0.7), ("C", 0.8), ("U", 0.8), ("S", 0.6)])),
            ],
        ),
        two_cohorts(None),
        "X",
        1.897_272_843_667_746_6,
    )
}

fn s2a() -> Scenario {
    build(
        "S-2A",
        "participation P caused by exposure and by A, which also causes the outcome",
        "DAG-2A",
        model(
            "DAG-2A",
            priors(&[("A", 0.5), ("X", expit(-0.5))]),
            vec![
                ("Y", logit_mech(-1.0, &[("X", 0.7), ("A", 0.8)])),
                ("P", logit_mech(0.5, &[("X", -0.7), ("A", -0.9)])),
            ],
        ),
        one_cohort(Some("P")),
        "X",
        1.960_911_117_810_888_9,
    )
}

fn s2b() -> Scenario {
    build(
        "S-2B",
        "S-2A pooled over two cohorts whose indicator affects participation and outcome",
        "DAG-2B",
        model(
            "DAG-2B",
            priors(&[("A", 0.5), ("X", expit(-0.5)), ("S", 0.5)]),
            vec![
                ("Y", logit_mech(-1.0, &[("X", 0.7), ("A", 0.8), ("S", 0.6)])),
                ("P", logit_mech(0.5, &[("X", -0.7), ("A", -0.9), ("S", 0.6)])),
            ],
        ),
        two_cohorts(Some("P")),
        "X",
        1.934_575_870_372_864_2,
    )
}

fn s3a() -> Scenario {
    build(
        "S-3A",
        "nondifferential misclassification of the exposure (sensitivity 0.85, specificity 0.95)",
        "DAG-3A",
        model(
            "DAG-3A",
            priors(&[("X", expit(-0.5)), ("U_X", 0.5)]),
            vec![
                ("Y", logit_mech(-1.0, &[("X", 0.7)])),
                ("X*", Mechanism::Misclassify { source: "X".into(), sensitivity: 0.85, specificity: 0.95 }),
            ],
        ),
        one_cohort(None),
        "X*",
        0.7_f64.exp(),
    )
}

fn s3b() -> Scenario {
    let mut cohorts = two_cohorts(None);
    cohorts[1].overrides.insert("X*.sensitivity".into(), 0.75);
    cohorts[1].overrides.insert("X*.specificity".into(), 0.90);
    build(
        "S-3B",
        "cohorts measure the exposure with different instruments; pooled measure X** harmonises them",
        "DAG-3B",
        model(
            "DAG-3B",
            priors(&[("X", expit(-0.5)), ("U_X", 0.5), ("S", 0.5)]),
            vec![
                ("Y", logit_mech(-1.0, &[("X", 0.7)])),
                ("X*", Mechanism::Misclassify { source: "X".into(), sensitivity: 0.85, specificity: 0.95 }),
                ("X**", Mechanism::Deterministic { parents: vec!["X*".into(), "S".into()], table: vec![0.0, 1.0, 0.0, 1.0] }),
            ],
        ),
        cohorts,
        "X**",
        0.7_f64.exp(),
    )
}

/// The six benchmark scenarios in id order.
pub fn scenario_library() -> Vec<Scenario> {
    vec![s1a(), s1b(), s2a(), s2b(), s3a(), s3b()]
}

pub fn scenario(id: &str) -> Result<Scenario, ScmError> {
    scenario_library()
        .into_iter()
        .find(|s| s.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| ScmError::UnknownScenario(id.to_string()))
}

/// S-1B with U pushing the outcome up in one cohort and down in the
/// other. Whether the pooled biases offset depends on the parameters.
pub fn cancellation_demo() -> Scenario {
    let mut s = s1b();
    s.id = "S-1B-cancel".into();
    s.description = "S-1B with opposite-signed effects of U on the outcome per cohort".into();
    s.cohorts[0].overrides.insert("Y.U".into(), 0.8);
    s.cohorts[1].overrides.insert("Y.U".into(), -0.8);
    s.true_marginal_or = s.compute_true_or().expect("enumerable");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_scenarios() {
        let lib = scenario_library();
        let ids: Vec<_> = lib.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["S-1A", "S-1B", "S-2A", "S-2B", "S-3A", "S-3B"]);
        assert!(matches!(scenario("S-9"), Err(ScmError::UnknownScenario(_))));
        assert_eq!(scenario("s-1a").unwrap().id, "S-1A");
    }

    #[test]
    fn stored_truth_matches_enumeration() {
        for s in scenario_library() {
            let t = s.compute_true_or().unwrap();
            assert!((t - s.true_marginal_or).abs() < 1e-12, "{}: {t:.17}", s.id);
        }
    }

    #[test]
    fn s1b_extends_s1a_by_indicator_terms_only() {
        let (a, b) = (scenario("S-1A").unwrap().model, scenario("S-1B").unwrap().model);
        let stripped = b.without_node("S");
        assert_eq!(stripped.mechanisms, a.mechanisms);
        assert_eq!(stripped.priors, a.priors);
        for node in ["X", "Y"] {
            match &b.mechanisms[node] {
                Mechanism::BernoulliLogit { coefficients, .. } => assert_eq!(coefficients["S"], 0.6),
                _ => panic!(),
            }
        }
    }

    #[test]
    fn cancellation_demo_is_enumerable() {
        let s = cancellation_demo();
        assert!(s.true_marginal_or > 1.0);
        assert_eq!(s.with_n(10).cohorts.iter().map(|c| c.n).sum::<usize>(), 20);
    }
}
