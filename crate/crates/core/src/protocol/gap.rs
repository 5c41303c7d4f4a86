use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    Confounder, EmulationPlan, MissingDataStrategy, ProtocolError, TargetTrialProtocol,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProtocolComponent {
    Eligibility,
    Treatment,
    Assignment,
    FollowUp,
    Outcome,
}

impl ProtocolComponent {
    pub const ALL: [ProtocolComponent; 5] = [
        ProtocolComponent::Eligibility,
        ProtocolComponent::Treatment,
        ProtocolComponent::Assignment,
        ProtocolComponent::FollowUp,
        ProtocolComponent::Outcome,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ProtocolComponent::Eligibility => "Eligibility criteria",
            ProtocolComponent::Treatment => "Treatment strategies",
            ProtocolComponent::Assignment => "Assignment procedures",
            ProtocolComponent::FollowUp => "Follow-up period",
            ProtocolComponent::Outcome => "Outcome",
        }
    }
}

impl fmt::Display for ProtocolComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BiasKind {
    Confounding,
    Selection,
    Measurement,
}

impl BiasKind {
    /// Whether bias of this kind can arise at the given protocol component.
    pub fn arises_at(self, component: ProtocolComponent) -> bool {
        use ProtocolComponent::*;
        match self {
            BiasKind::Confounding => component == Assignment,
            BiasKind::Selection => component == Eligibility,
            BiasKind::Measurement => matches!(component, Treatment | Assignment | FollowUp | Outcome),
        }
    }
}

impl fmt::Display for BiasKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntryScope {
    Within(String),
    Across,
}

impl fmt::Display for EntryScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryScope::Within(c) => write!(f, "within {c}"),
            EntryScope::Across => f.write_str("across"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasRiskEntry {
    pub protocol_component: ProtocolComponent,
    pub bias_kind: BiasKind,
    pub scope: EntryScope,
    /// Cohorts involved, sorted.
    pub cohorts: Vec<String>,
    pub description: String,
}

impl BiasRiskEntry {
    fn sort_key(&self) -> (ProtocolComponent, u8, &str, BiasKind, &str) {
        let (rank, cohort) = match &self.scope {
            EntryScope::Within(c) => (0, c.as_str()),
            EntryScope::Across => (1, ""),
        };
        (self.protocol_component, rank, cohort, self.bias_kind, &self.description)
    }
}

struct Sink(Vec<BiasRiskEntry>);

impl Sink {
    fn within(&mut self, cohort: &str, component: ProtocolComponent, kind: BiasKind, description: String) {
        self.push(component, kind, EntryScope::Within(cohort.to_string()), vec![cohort.to_string()], description);
    }

    fn across(&mut self, pair: (&str, &str), component: ProtocolComponent, kind: BiasKind, description: String) {
        let cohorts = vec![pair.0.to_string(), pair.1.to_string()];
        let description = format!("{} vs {}: {description}", pair.0, pair.1);
        self.push(component, kind, EntryScope::Across, cohorts, description);
    }

    fn push(
        &mut self,
        component: ProtocolComponent,
        kind: BiasKind,
        scope: EntryScope,
        cohorts: Vec<String>,
        description: String,
    ) {
        debug_assert!(kind.arises_at(component), "{kind} cannot arise at {component}");
        self.0.push(BiasRiskEntry { protocol_component: component, bias_kind: kind, scope, cohorts, description });
    }
}

fn check_plans(protocol: &TargetTrialProtocol, plans: &[EmulationPlan]) -> Result<(), ProtocolError> {
    if plans.is_empty() {
        return Err(ProtocolError::NoPlans);
    }
    let arm_ids: BTreeSet<&str> = protocol.arms.iter().map(|a| a.id.as_str()).collect();
    let mut seen = BTreeSet::new();
    for plan in plans {
        if !seen.insert(plan.cohort.as_str()) {
            return Err(ProtocolError::DuplicateCohort(plan.cohort.clone()));
        }
        for m in &plan.exposure_measures {
            if !arm_ids.contains(m.arm.as_str()) {
                return Err(ProtocolError::UnknownArm { cohort: plan.cohort.clone(), arm: m.arm.clone() });
            }
        }
        for arm in &protocol.arms {
            if !plan.exposure_measures.iter().any(|m| m.arm == arm.id) {
                return Err(ProtocolError::MissingArm { cohort: plan.cohort.clone(), arm: arm.id.clone() });
            }
        }
        if let MissingDataStrategy::MultipleImputation { m, .. } = plan.missing_data_strategy {
            if m < 2 {
                return Err(ProtocolError::TooFewImputations { cohort: plan.cohort.clone(), m });
            }
        }
    }
    Ok(())
}

fn opt(s: &Option<String>) -> &str {
    s.as_deref().unwrap_or("unspecified")
}

fn join<I: IntoIterator<Item = S>, S: AsRef<str>>(items: I) -> String {
    items.into_iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>().join(", ")
}

fn instruments(plan: &EmulationPlan) -> BTreeSet<&str> {
    plan.exposure_measures.iter().flat_map(|m| m.instruments.iter().map(String::as_str)).collect()
}

fn within_entries(protocol: &TargetTrialProtocol, plan: &EmulationPlan, out: &mut Sink) {
    use BiasKind::*;
    use ProtocolComponent::*;
    let c = plan.cohort.as_str();
    let sel = &plan.sample_selection;
    let pop = &protocol.eligibility.population;

    if sel.geography != pop.setting {
        out.within(c, Eligibility, Selection, format!(
            "sample drawn from {} while the target population is {}",
            sel.geography, pop.setting
        ));
    }
    if pop.epoch.is_some() && sel.recruitment_epoch != pop.epoch {
        out.within(c, Eligibility, Selection, format!(
            "recruitment epoch {} differs from target epoch {}",
            opt(&sel.recruitment_epoch),
            opt(&pop.epoch)
        ));
    }
    if let Some(window) = &sel.screening_window {
        out.within(c, Eligibility, Selection, format!("sample restricted by screening window: {window}"));
    }
    if plan.missing_data_strategy == MissingDataStrategy::CompleteCase {
        out.within(c, Eligibility, Selection,
            "complete-case analysis restricts the sample to participants with full data".to_string());
    }

    let measured = instruments(plan);
    let construct = protocol.exposure_construct.as_str();
    if measured.len() != 1 || !measured.contains(construct) {
        out.within(c, Treatment, Measurement, format!(
            "exposure `{construct}` measured through {}",
            join(&measured)
        ));
    }

    if !plan.randomized {
        let names: Vec<&str> = plan.confounders.iter().map(|x| x.name.as_str()).collect();
        let adjusted = if names.is_empty() { "no measured confounders".to_string() } else { join(&names) };
        out.within(c, Assignment, Confounding, format!(
            "no randomisation; {:?} adjustment for {adjusted} leaves residual confounding possible",
            plan.adjustment_approach
        ));
    }
    let proxies: Vec<&str> = plan.confounders.iter().filter(|x| x.proxy).map(|x| x.name.as_str()).collect();
    if !proxies.is_empty() {
        out.within(c, Assignment, Measurement, format!("confounders measured through proxies: {}", join(proxies)));
    }

    let fu = &protocol.follow_up;
    if plan.timing.start_age != fu.start.age || plan.timing.end_age != fu.end.age {
        out.within(c, FollowUp, Measurement, format!(
            "measurement window {} to {} differs from follow-up {} to {}",
            opt(&plan.timing.start_age),
            opt(&plan.timing.end_age),
            opt(&fu.start.age),
            opt(&fu.end.age)
        ));
    }

    let om = &plan.outcome_measure;
    if om.instrument != protocol.outcome.construct {
        out.within(c, Outcome, Measurement, format!(
            "outcome `{}` measured by {} ({} report)",
            protocol.outcome.construct, om.instrument, if om.reporter.is_empty() { "unspecified" } else { &om.reporter }
        ));
    } else if om.threshold != protocol.outcome.threshold {
        out.within(c, Outcome, Measurement, format!(
            "outcome threshold {} differs from target {}",
            opt(&om.threshold),
            opt(&protocol.outcome.threshold)
        ));
    }
}

fn confounder_map(plan: &EmulationPlan) -> BTreeMap<&str, &Confounder> {
    plan.confounders.iter().map(|x| (x.name.as_str(), x)).collect()
}

fn across_entries(a: &EmulationPlan, b: &EmulationPlan, out: &mut Sink) {
    use BiasKind::*;
    use ProtocolComponent::*;
    let pair = (a.cohort.as_str(), b.cohort.as_str());
    let (sa, sb) = (&a.sample_selection, &b.sample_selection);

    let mut design = Vec::new();
    if sa.recruitment_epoch != sb.recruitment_epoch {
        design.push("calendar period");
        out.across(pair, Eligibility, Selection, format!(
            "recruitment epochs differ ({} vs {})",
            opt(&sa.recruitment_epoch),
            opt(&sb.recruitment_epoch)
        ));
    }
    if sa.geography != sb.geography {
        design.push("geography");
        out.across(pair, Eligibility, Selection, format!("geography differs ({} vs {})", sa.geography, sb.geography));
    }
    if sa.screening_window != sb.screening_window {
        out.across(pair, Eligibility, Selection, format!(
            "screening windows differ ({} vs {})",
            opt(&sa.screening_window),
            opt(&sb.screening_window)
        ));
    }
    if sa.recruitment_route != sb.recruitment_route {
        out.across(pair, Eligibility, Selection, format!(
            "recruitment routes differ ({} vs {})",
            opt(&sa.recruitment_route),
            opt(&sb.recruitment_route)
        ));
    }
    if a.missing_data_strategy != b.missing_data_strategy {
        out.across(pair, Eligibility, Selection, format!(
            "missing-data strategies differ ({:?} vs {:?})",
            a.missing_data_strategy, b.missing_data_strategy
        ));
    }

    let (ia, ib) = (instruments(a), instruments(b));
    if ia != ib {
        out.across(pair, Treatment, Measurement, format!(
            "exposure instruments differ ({} vs {})",
            join(&ia),
            join(&ib)
        ));
    }
    let rules = |p: &EmulationPlan| -> Vec<(String, Vec<String>)> {
        let mut v: Vec<_> = p.exposure_measures.iter().map(|m| (m.arm.clone(), m.threshold_rules.clone())).collect();
        v.sort();
        v
    };
    if ia == ib && rules(a) != rules(b) {
        out.across(pair, Treatment, Measurement, "exposure threshold rules differ".to_string());
    }
    let waves = |p: &EmulationPlan| -> BTreeSet<String> {
        p.exposure_measures.iter().flat_map(|m| m.waves.iter().cloned()).collect()
    };
    if waves(a) != waves(b) {
        out.across(pair, FollowUp, Measurement, format!(
            "exposure waves differ ({} vs {})",
            join(waves(a)),
            join(waves(b))
        ));
    }
    if a.timing.start_age != b.timing.start_age || a.timing.end_age != b.timing.end_age {
        out.across(pair, FollowUp, Measurement, format!(
            "measurement timing differs ({} to {} vs {} to {})",
            opt(&a.timing.start_age),
            opt(&a.timing.end_age),
            opt(&b.timing.start_age),
            opt(&b.timing.end_age)
        ));
    }

    if !design.is_empty() {
        out.across(pair, Assignment, Confounding, format!(
            "systematic cohort differences in {} can open paths through the cohort indicator",
            design.join(" and ")
        ));
    }
    let (ca, cb) = (confounder_map(a), confounder_map(b));
    let only: Vec<&str> = ca.keys().filter(|k| !cb.contains_key(*k))
        .chain(cb.keys().filter(|k| !ca.contains_key(*k)))
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !only.is_empty() {
        out.across(pair, Assignment, Confounding, format!(
            "confounders available in only one cohort: {}",
            join(only)
        ));
    }
    for (name, x) in &ca {
        if let Some(y) = cb.get(name) {
            if x.measure != y.measure || x.coding != y.coding {
                out.across(pair, Assignment, Measurement, format!("confounder `{name}` measured or coded differently"));
            }
        }
    }

    let (oa, ob) = (&a.outcome_measure, &b.outcome_measure);
    if oa != ob {
        out.across(pair, Outcome, Measurement, format!(
            "outcome measurement differs ({}, {} report, {} vs {}, {} report, {})",
            oa.instrument, oa.reporter, opt(&oa.threshold), ob.instrument, ob.reporter, opt(&ob.threshold)
        ));
    }
}

/// Compares every plan against the protocol, then every pair of plans
/// against each other. Entries are ordered by component, then cohort.
pub fn emulation_gap_report(
    protocol: &TargetTrialProtocol,
    plans: &[EmulationPlan],
) -> Result<Vec<BiasRiskEntry>, ProtocolError> {
    check_plans(protocol, plans)?;
    let mut sorted: Vec<&EmulationPlan> = plans.iter().collect();
    sorted.sort_by(|x, y| x.cohort.cmp(&y.cohort));

    let mut sink = Sink(Vec::new());
    for plan in &sorted {
        within_entries(protocol, plan, &mut sink);
    }
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            across_entries(a, b, &mut sink);
        }
    }
    let mut entries = sink.0;
    entries.sort_by(|x, y| x.sort_key().cmp(&y.sort_key()));
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::fixtures;

    #[test]
    fn consistency_table() {
        use ProtocolComponent::*;
        assert!(BiasKind::Confounding.arises_at(Assignment));
        assert!(!BiasKind::Confounding.arises_at(Eligibility));
        assert!(BiasKind::Selection.arises_at(Eligibility));
        assert!(!BiasKind::Selection.arises_at(Outcome));
        for c in [Treatment, Assignment, FollowUp, Outcome] {
            assert!(BiasKind::Measurement.arises_at(c));
        }
        assert!(!BiasKind::Measurement.arises_at(Eligibility));
    }

    #[test]
    fn mirror_plan_has_no_gaps() {
        for (p, _) in [fixtures::spry(), fixtures::oconnor()] {
            let plan = EmulationPlan::mirror(&p, "M");
            assert_eq!(emulation_gap_report(&p, &[plan]).unwrap(), vec![]);
        }
    }

    #[test]
    fn identical_plans_have_no_across_entries() {
        let (p, plans) = fixtures::spry();
        let mut twin = plans[0].clone();
        twin.cohort = "TWIN".into();
        let entries = emulation_gap_report(&p, &[plans[0].clone(), twin]).unwrap();
        assert!(!entries.is_empty());
        assert!(entries.iter().all(|e| e.scope != EntryScope::Across));
    }

    #[test]
    fn spry_screening_window_within_both_cohorts() {
        let (p, plans) = fixtures::spry();
        let entries = emulation_gap_report(&p, &plans).unwrap();
        for cohort in ["VIHCS", "ATPG3"] {
            assert!(entries.iter().any(|e| e.scope == EntryScope::Within(cohort.into())
                && e.bias_kind == BiasKind::Selection
                && e.protocol_component == ProtocolComponent::Eligibility
                && e.description.contains("29–35")), "{cohort}");
        }
    }

    #[test]
    fn spry_instruments_across() {
        let (p, plans) = fixtures::spry();
        let entries = emulation_gap_report(&p, &plans).unwrap();
        let e = entries
            .iter()
            .find(|e| e.scope == EntryScope::Across && e.protocol_component == ProtocolComponent::Treatment)
            .expect("treatment across entry");
        assert_eq!(e.bias_kind, BiasKind::Measurement);
        for inst in ["CIS-R", "GHQ-12", "SMFQ", "RBPCSF", "RCMAS", "DASS-21"] {
            assert!(e.description.contains(inst), "{inst}");
        }
        assert!(entries.iter().any(|e| e.scope == EntryScope::Across
            && e.bias_kind == BiasKind::Selection
            && e.description.contains("2006–2013")));
    }

    #[test]
    fn order_is_component_then_cohort() {
        let (p, plans) = fixtures::oconnor();
        let entries = emulation_gap_report(&p, &plans).unwrap();
        let keys: Vec<_> = entries.iter().map(|e| e.sort_key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn plan_order_does_not_matter() {
        let (p, mut plans) = fixtures::spry();
        let a = emulation_gap_report(&p, &plans).unwrap();
        plans.reverse();
        assert_eq!(a, emulation_gap_report(&p, &plans).unwrap());
    }

    #[test]
    fn errors() {
        let (p, plans) = fixtures::spry();
        assert_eq!(emulation_gap_report(&p, &[]), Err(ProtocolError::NoPlans));
        let mut bad = plans[0].clone();
        bad.exposure_measures[0].arm = "nope".into();
        assert!(matches!(emulation_gap_report(&p, &[bad]), Err(ProtocolError::UnknownArm { .. })));
        let mut bad = plans[0].clone();
        bad.exposure_measures.pop();
        assert!(matches!(emulation_gap_report(&p, &[bad]), Err(ProtocolError::MissingArm { .. })));
        let mut bad = plans[0].clone();
        bad.missing_data_strategy = MissingDataStrategy::MultipleImputation {
            scope: crate::types::ImputationScope::PerCohort,
            m: 1,
        };
        assert!(matches!(emulation_gap_report(&p, &[bad]), Err(ProtocolError::TooFewImputations { .. })));
    }
}
