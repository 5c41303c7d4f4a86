//! Replication sweeps at smoke scale plus the misclassification round trip.

use cohortforge::bias_audit::{
    misclassification_correct, misclassify_expected, pooling_contrast, run_scenario, EstimatorConfig, Remedy, ScenarioRef,
    ScenarioSpec, TwoByTwo,
};
use cohortforge::estimators::Method;
use cohortforge::scm::scenario;
use proptest::prelude::*;

fn spec(id: &str, cfgs: Vec<EstimatorConfig>, r: usize, n: usize, seed: u64) -> ScenarioSpec {
    let mut s = ScenarioSpec::new(id, cfgs, r, seed);
    s.n_per_cohort = Some(n);
    s.bootstrap = 50;
    s
}

#[test]
fn crude_is_confounded_and_oracle_adjustment_is_not() {
    let cfgs = vec![
        EstimatorConfig::new("crude", Method::Crude, &[]),
        EstimatorConfig::new("g-computation {C, U}", Method::GComputation, &["C", "U"]),
    ];
    let r = run_scenario(&spec("S-1A", cfgs, 60, 5_000, 1)).unwrap();
    let crude = r.row("crude").unwrap();
    let g = r.row("g-computation {C, U}").unwrap();
    assert!(crude.bias_present, "{}", r.summary());
    assert!(g.bias_absent, "{}", r.summary());
    assert!((0.85..=1.0).contains(&g.coverage), "{}", r.summary());
    assert_eq!(g.n_ok + g.failed + g.nonconverged, 60);
}

#[test]
fn attenuation_grows_as_sensitivity_falls() {
    let crude = || vec![EstimatorConfig::new("crude X*", Method::Crude, &[])];
    let mut medians = Vec::new();
    for sens in [0.95, 0.85, 0.75] {
        let mut s = spec("S-3A", crude(), 40, 5_000, 3);
        s.overrides.insert("X*.sensitivity".into(), sens);
        let r = run_scenario(&s).unwrap();
        let row = &r.rows[0];
        assert!(row.median > 0.0 && row.median < row.truth, "{}", r.summary());
        medians.push(row.median);
    }
    assert!(medians[0] >= medians[1] && medians[1] >= medians[2], "{medians:?}");
}

#[test]
fn pooling_contrast_is_symmetric_under_cohort_relabelling() {
    let cfg = EstimatorConfig::new("g {C}", Method::GComputation, &["C"]);
    let mut a = spec("S-1B", vec![cfg], 12, 2_000, 9);
    a.remove_nodes = vec!["U".into()];
    let mut relabelled = scenario("S-1B").unwrap();
    relabelled.cohorts[0].id = "cohort2".into();
    relabelled.cohorts[1].id = "cohort1".into();
    let mut b = a.clone();
    b.scenario = ScenarioRef::Custom(Box::new(relabelled));
    let ca = pooling_contrast(&a, Remedy::CohortIndicator).unwrap();
    let cb = pooling_contrast(&b, Remedy::CohortIndicator).unwrap();
    assert_eq!(ca.without, cb.without);
    assert_eq!(ca.with, cb.with);
    assert_eq!(ca.reduction.to_bits(), cb.reduction.to_bits());
}

#[test]
fn identical_cohorts_leave_nothing_to_remove() {
    let cfg = EstimatorConfig::new("g {C}", Method::GComputation, &["C"]);
    let mut s = spec("S-1B", vec![cfg], 40, 2_000, 4);
    s.remove_nodes = vec!["U".into(), "S".into()];
    let c = pooling_contrast(&s, Remedy::CohortIndicator).unwrap();
    let gap = (c.with.mean - c.without.mean).abs();
    assert!(gap < 3.0 * c.without.mc_se.max(c.with.mc_se), "{}", c.report.summary());
    assert!(c.without.bias_absent && c.with.bias_absent, "{}", c.report.summary());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn correction_inverts_forward_misclassification(
        sens in 0.55f64..=1.0,
        spec in 0.55f64..=1.0,
        cells in prop::array::uniform4(1.0f64..10_000.0),
    ) {
        prop_assume!(sens + spec > 1.05);
        let truth = TwoByTwo::new(cells[0], cells[1], cells[2], cells[3]);
        let observed = misclassify_expected(&truth, sens, spec).unwrap();
        let c = misclassification_correct(&observed, sens, spec).unwrap();
        let pairs = [
            (c.corrected.exposed_cases, truth.exposed_cases),
            (c.corrected.exposed_noncases, truth.exposed_noncases),
            (c.corrected.unexposed_cases, truth.unexposed_cases),
            (c.corrected.unexposed_noncases, truth.unexposed_noncases),
        ];
        for (x, y) in pairs {
            prop_assert!((x / y - 1.0).abs() < 1e-8, "{x} vs {y}");
        }
    }
}
