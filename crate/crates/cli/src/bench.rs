//! Built-in estimator sets for `bench <scenario id>`.

use cohortforge::bias_audit::{EstimatorConfig, ScenarioSpec};
use cohortforge::estimators::Method;
use cohortforge::scm::scenario_library;

fn cfg(label: &str, method: Method, covs: &[&str]) -> EstimatorConfig {
    EstimatorConfig::new(label, method, covs)
}

fn restricted(mut c: EstimatorConfig) -> EstimatorConfig {
    c.restrict_to_selected = true;
    c
}

fn with_indicator(mut c: EstimatorConfig) -> EstimatorConfig {
    c.cohort_indicator = true;
    c
}

fn on_exposure(mut c: EstimatorConfig, exposure: &str) -> EstimatorConfig {
    c.exposure = Some(exposure.into());
    c
}

fn participation(mut c: EstimatorConfig, covs: &[&str]) -> EstimatorConfig {
    c.participation = Some(covs.iter().map(|s| s.to_string()).collect());
    c
}

/// Default estimator configurations for a library scenario.
pub fn default_estimators(id: &str) -> Vec<EstimatorConfig> {
    match id {
        "S-1A" => vec![
            cfg("crude", Method::Crude, &[]),
            cfg("conditional {C}", Method::Conditional, &["C"]),
            cfg("ipw {C}", Method::Ipw, &["C"]),
            cfg("g-computation {C}", Method::GComputation, &["C"]),
            cfg("aipw {C}", Method::Aipw, &["C"]),
            cfg("g-computation {C, U}", Method::GComputation, &["C", "U"]),
        ],
        "S-1B" => vec![
            cfg("crude pooled", Method::Crude, &[]),
            cfg("g-computation {C, U}", Method::GComputation, &["C", "U"]),
            with_indicator(cfg("g-computation {C, U} + cohort", Method::GComputation, &["C", "U"])),
            with_indicator(cfg("conditional {C, U} + cohort", Method::Conditional, &["C", "U"])),
        ],
        "S-2A" => vec![
            restricted(cfg("crude, participants only", Method::Crude, &[])),
            participation(cfg("crude, participation-weighted {X, A}", Method::Crude, &[]), &["X", "A"]),
            cfg("crude, full cohort", Method::Crude, &[]),
        ],
        "S-2B" => vec![
            restricted(cfg("crude, participants only", Method::Crude, &[])),
            participation(cfg("crude, participation-weighted {X, A}", Method::Crude, &[]), &["X", "A"]),
            participation(cfg("crude, participation-weighted {X, A, cohort}", Method::Crude, &[]), &["X", "A", "cohort"]),
        ],
        "S-3A" => vec![cfg("crude on X*", Method::Crude, &[]), on_exposure(cfg("crude on X", Method::Crude, &[]), "X")],
        "S-3B" => vec![
            cfg("crude on X**", Method::Crude, &[]),
            with_indicator(cfg("conditional on X** + cohort", Method::Conditional, &[])),
            on_exposure(cfg("crude on X", Method::Crude, &[]), "X"),
        ],
        _ => vec![cfg("crude", Method::Crude, &[])],
    }
}

/// Specs for a library id or `all`.
pub fn builtin_specs(target: &str, replications: usize, n: usize, seed: u64) -> Option<Vec<ScenarioSpec>> {
    let ids: Vec<String> = if target.eq_ignore_ascii_case("all") {
        scenario_library().into_iter().map(|s| s.id).collect()
    } else {
        let s = scenario_library().into_iter().find(|s| s.id.eq_ignore_ascii_case(target))?;
        vec![s.id]
    };
    Some(
        ids.iter()
            .map(|id| {
                let mut spec = ScenarioSpec::new(id, default_estimators(id), replications, seed);
                spec.n_per_cohort = Some(n);
                spec
            })
            .collect(),
    )
}
