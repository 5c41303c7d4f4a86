//! Bundled protocols with their per-cohort emulation plans.

use std::path::Path;

use super::{EmulationPlan, ProtocolFile, TargetTrialProtocol};

pub const NAMES: [&str; 2] = ["spry2020", "oconnor2020"];

pub fn parse(text: &str) -> serde_json::Result<(TargetTrialProtocol, Vec<EmulationPlan>)> {
    serde_json::from_str::<ProtocolFile>(text).map(ProtocolFile::into_parts)
}

fn bundled(text: &str) -> (TargetTrialProtocol, Vec<EmulationPlan>) {
    parse(text).expect("bundled protocol fixture parses")
}

/// Maternal mental health before conception and infant emotional reactivity,
/// emulated in two intergenerational cohorts.
pub fn spry() -> (TargetTrialProtocol, Vec<EmulationPlan>) {
    bundled(include_str!("../../fixtures/protocols/spry2020.json"))
}

/// Childhood adversity and inflammation, emulated in a birth cohort and a
/// national cohort with a later biomarker module.
pub fn oconnor() -> (TargetTrialProtocol, Vec<EmulationPlan>) {
    bundled(include_str!("../../fixtures/protocols/oconnor2020.json"))
}

pub fn by_name(name: &str) -> Option<(TargetTrialProtocol, Vec<EmulationPlan>)> {
    match name.trim_end_matches(".json") {
        "spry2020" | "spry" => Some(spry()),
        "oconnor2020" | "oconnor" => Some(oconnor()),
        _ => None,
    }
}

/// Reads `<dir>/protocols/<name>.json`, for overriding the bundled copies.
pub fn load_from_dir(dir: &Path, name: &str) -> Option<std::io::Result<String>> {
    let stem = name.trim_end_matches(".json");
    let stem = match stem {
        "spry" => "spry2020",
        "oconnor" => "oconnor2020",
        s => s,
    };
    NAMES.contains(&stem).then(|| std::fs::read_to_string(dir.join("protocols").join(format!("{stem}.json"))))
}
