use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::TargetTrialProtocol;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolValidation {
    pub violations: Vec<String>,
    /// Interpretive caveats that do not invalidate the protocol.
    pub warnings: Vec<String>,
}

impl ProtocolValidation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_protocol(p: &TargetTrialProtocol) -> ProtocolValidation {
    let mut v = ProtocolValidation::default();
    let required = [
        ("eligibility", p.eligibility.text.as_str()),
        ("eligibility setting", p.eligibility.population.setting.as_str()),
        ("exposure construct", p.exposure_construct.as_str()),
        ("assignment", p.assignment.as_str()),
        ("follow-up start", p.follow_up.start.event.as_str()),
        ("follow-up end", p.follow_up.end.event.as_str()),
        ("outcome", p.outcome.construct.as_str()),
    ];
    for (name, text) in required {
        if text.trim().is_empty() {
            v.violations.push(format!("missing component: {name}"));
        }
    }

    if p.arms.len() < 2 {
        v.violations.push("needs comparator + ≥1 intervention arm".to_string());
    }
    let mut ids = BTreeSet::new();
    for arm in &p.arms {
        if !ids.insert(arm.id.as_str()) {
            v.violations.push(format!("duplicate arm `{}`", arm.id));
        }
    }
    let comparators = p.arms.iter().filter(|a| a.comparator).count();
    match comparators {
        0 => v.violations.push("no comparator arm".to_string()),
        1 if !p.arms[0].comparator => v.violations.push("comparator arm must be listed first".to_string()),
        1 => {}
        n => v.violations.push(format!("{n} comparator arms; exactly one is allowed")),
    }
    if p.follow_up.start.ordinal >= p.follow_up.end.ordinal {
        v.violations.push("follow-up start does not precede its end".to_string());
    }

    for arm in &p.arms {
        if arm.intervention_mechanism.as_deref().is_none_or(|m| m.trim().is_empty()) {
            v.warnings.push(format!(
                "arm `{}` names no intervention mechanism; the contrast may not correspond to a well-defined intervention",
                arm.id
            ));
        }
    }
    v
}
