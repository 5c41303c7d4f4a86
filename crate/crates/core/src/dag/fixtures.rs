//! Canonical DAGs for confounding (1A/1B), selection (2A/2B) and
//! measurement (3A/3B) bias, single-cohort and with a cohort indicator.

use std::path::Path;

use super::CausalDag;

/// Names accepted by [`by_name`], paired with their file stems.
pub const NAMES: [(&str, &str); 8] = [
    ("DAG-1A", "dag_1a"),
    ("DAG-1B", "dag_1b"),
    ("DAG-2A", "dag_2a"),
    ("DAG-2B", "dag_2b"),
    ("DAG-3A", "dag_3a"),
    ("DAG-3A-differential", "dag_3a_differential"),
    ("DAG-3B-core", "dag_3b_core"),
    ("DAG-3B", "dag_3b"),
];

fn parse(text: &str) -> CausalDag {
    CausalDag::from_json(text).expect("bundled DAG fixture parses")
}

/// Confounding through a measured (C) and an unmeasured (U) common cause.
pub fn dag_1a() -> CausalDag {
    parse(include_str!("../../fixtures/dags/dag_1a.json"))
}

/// DAG-1A plus a cohort indicator affecting exposure and outcome.
pub fn dag_1b() -> CausalDag {
    parse(include_str!("../../fixtures/dags/dag_1b.json"))
}

/// Restriction to participants (P) with maternal age (A) causing both
/// participation and the outcome.
pub fn dag_2a() -> CausalDag {
    parse(include_str!("../../fixtures/dags/dag_2a.json"))
}

pub fn dag_2b() -> CausalDag {
    parse(include_str!("../../fixtures/dags/dag_2b.json"))
}

/// Analysis through a measured exposure X* with error source U_X.
pub fn dag_3a() -> CausalDag {
    parse(include_str!("../../fixtures/dags/dag_3a.json"))
}

/// DAG-3A with a measured outcome Y* that also depends on the true exposure.
pub fn dag_3a_differential() -> CausalDag {
    parse(include_str!("../../fixtures/dags/dag_3a_differential.json"))
}

/// DAG-3A with cohort-dependent measurement of X*.
pub fn dag_3b_core() -> CausalDag {
    parse(include_str!("../../fixtures/dags/dag_3b_core.json"))
}

/// DAG-3B-core plus the harmonised pooled exposure X** derived from X* and S.
pub fn dag_3b() -> CausalDag {
    parse(include_str!("../../fixtures/dags/dag_3b.json"))
}

/// Bundled fixture by display name (`DAG-1A`) or file stem (`dag_1a`).
pub fn by_name(name: &str) -> Option<CausalDag> {
    let stem = NAMES.iter().find(|(n, s)| n.eq_ignore_ascii_case(name) || *s == name)?.1;
    Some(match stem {
        "dag_1a" => dag_1a(),
        "dag_1b" => dag_1b(),
        "dag_2a" => dag_2a(),
        "dag_2b" => dag_2b(),
        "dag_3a" => dag_3a(),
        "dag_3a_differential" => dag_3a_differential(),
        "dag_3b_core" => dag_3b_core(),
        _ => dag_3b(),
    })
}

/// Loads a fixture from `<dir>/dags/<stem>.json`, for overriding the bundled copies.
pub fn load_from_dir(dir: &Path, name: &str) -> Option<std::io::Result<String>> {
    let stem = NAMES.iter().find(|(n, s)| n.eq_ignore_ascii_case(name) || *s == name)?.1;
    Some(std::fs::read_to_string(dir.join("dags").join(format!("{stem}.json"))))
}
