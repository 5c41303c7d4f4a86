//! Target-trial protocols, per-cohort emulation plans, and the audits that
//! turn mismatches between them into bias-risk entries.
//!
//! Comparison is structural: free text is carried for display, while the
//! declared flags (epochs, geography, instrument ids, wave ids, codings)
//! decide whether two components differ.

pub mod fixtures;
mod gap;
mod harmonize;
mod render;
mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{EstimandScope, ImputationScope};

pub use gap::{emulation_gap_report, BiasKind, BiasRiskEntry, EntryScope, ProtocolComponent};
pub use harmonize::{harmonization_audit, CohortCoding, HarmonizationAudit, VariableAudit};
pub use render::{render_audit, render_entries, EmulationReport, Format};
pub use validate::{validate_protocol, ProtocolValidation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrialProtocol {
    pub title: String,
    pub eligibility: Eligibility,
    /// Ordered; the first arm is the comparator.
    pub arms: Vec<Arm>,
    /// Construct the treatment strategies act on; a plan measuring it
    /// directly introduces no exposure measurement error.
    #[serde(default)]
    pub exposure_construct: String,
    pub assignment: String,
    pub follow_up: FollowUp,
    pub outcome: OutcomeSpec,
    pub effect_measure: EffectMeasureSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<ComponentNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eligibility {
    pub text: String,
    pub population: Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    #[serde(default)]
    pub age_at_entry: Option<String>,
    pub setting: String,
    #[serde(default)]
    pub epoch: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub comparator: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention_mechanism: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUp {
    pub start: TimePoint,
    pub end: TimePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub event: String,
    /// Explicit ordering of events; start must be strictly before end.
    pub ordinal: i64,
    #[serde(default)]
    pub age: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeScale {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub construct: String,
    pub scale: OutcomeScale,
    #[serde(default)]
    pub threshold: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectMeasure {
    OddsRatio,
    RiskRatio,
    RiskDifference,
    /// Percentage difference in means, for continuous outcomes.
    PercentMeanDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectMeasureSpec {
    pub measure: EffectMeasure,
    pub scope: EstimandScope,
    #[serde(default)]
    pub text: String,
}

/// Free-text remark attached to a protocol component, carried verbatim
/// into rendered reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentNote {
    pub component: ProtocolComponent,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulationPlan {
    pub cohort: String,
    pub sample_selection: SampleSelection,
    pub exposure_measures: Vec<ArmMeasure>,
    pub confounders: Vec<Confounder>,
    pub adjustment_approach: AdjustmentApproach,
    /// Set only for emulations where assignment really was randomised.
    #[serde(default)]
    pub randomized: bool,
    pub timing: Timing,
    pub outcome_measure: OutcomeMeasure,
    pub missing_data_strategy: MissingDataStrategy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<ComponentNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSelection {
    pub text: String,
    #[serde(default)]
    pub recruitment_epoch: Option<String>,
    pub geography: String,
    #[serde(default)]
    pub screening_window: Option<String>,
    #[serde(default)]
    pub recruitment_route: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMeasure {
    pub arm: String,
    #[serde(default)]
    pub description: String,
    pub instruments: Vec<String>,
    #[serde(default)]
    pub waves: Vec<String>,
    #[serde(default)]
    pub threshold_rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confounder {
    pub name: String,
    pub measure: String,
    /// Category labels, or empty for a continuous measure.
    #[serde(default)]
    pub coding: Vec<String>,
    /// Measured through a proxy rather than directly.
    #[serde(default)]
    pub proxy: bool,
    /// Merge map from this cohort's categories onto a coarser shared coding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonized_to: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjustmentApproach {
    Regression,
    #[serde(rename = "IPW")]
    Ipw,
    GComputation,
    #[serde(rename = "AIPW")]
    Aipw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub start: String,
    pub end: String,
    #[serde(default)]
    pub start_age: Option<String>,
    #[serde(default)]
    pub end_age: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMeasure {
    pub instrument: String,
    pub reporter: String,
    #[serde(default)]
    pub threshold: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MissingDataStrategy {
    CompleteCase,
    MultipleImputation { scope: ImputationScope, m: usize },
}

impl EmulationPlan {
    /// A plan that copies the protocol component for component: randomised,
    /// measuring the constructs themselves, with no missing data handling.
    pub fn mirror(protocol: &TargetTrialProtocol, cohort: &str) -> EmulationPlan {
        let pop = &protocol.eligibility.population;
        EmulationPlan {
            cohort: cohort.to_string(),
            sample_selection: SampleSelection {
                text: protocol.eligibility.text.clone(),
                recruitment_epoch: pop.epoch.clone(),
                geography: pop.setting.clone(),
                screening_window: None,
                recruitment_route: None,
            },
            exposure_measures: protocol
                .arms
                .iter()
                .map(|a| ArmMeasure {
                    arm: a.id.clone(),
                    description: a.description.clone(),
                    instruments: vec![protocol.exposure_construct.clone()],
                    waves: Vec::new(),
                    threshold_rules: Vec::new(),
                })
                .collect(),
            confounders: Vec::new(),
            adjustment_approach: AdjustmentApproach::Regression,
            randomized: true,
            timing: Timing {
                start: protocol.follow_up.start.event.clone(),
                end: protocol.follow_up.end.event.clone(),
                start_age: protocol.follow_up.start.age.clone(),
                end_age: protocol.follow_up.end.age.clone(),
            },
            outcome_measure: OutcomeMeasure {
                instrument: protocol.outcome.construct.clone(),
                reporter: String::new(),
                threshold: protocol.outcome.threshold.clone(),
            },
            missing_data_strategy: MissingDataStrategy::MultipleImputation {
                scope: ImputationScope::PerCohort,
                m: 2,
            },
            notes: Vec::new(),
        }
    }
}

/// A protocol file may carry its emulation plans alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProtocolFile {
    Bundle { protocol: TargetTrialProtocol, plans: Vec<EmulationPlan> },
    Protocol(TargetTrialProtocol),
}

impl ProtocolFile {
    pub fn into_parts(self) -> (TargetTrialProtocol, Vec<EmulationPlan>) {
        match self {
            ProtocolFile::Bundle { protocol, plans } => (protocol, plans),
            ProtocolFile::Protocol(p) => (p, Vec::new()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("at least one emulation plan is required")]
    NoPlans,
    #[error("harmonisation audit needs at least two plans")]
    TooFewPlans,
    #[error("plan for cohort `{cohort}` references unknown arm `{arm}`")]
    UnknownArm { cohort: String, arm: String },
    #[error("plan for cohort `{cohort}` has no exposure measure for arm `{arm}`")]
    MissingArm { cohort: String, arm: String },
    #[error("plan for cohort `{cohort}`: multiple imputation needs m >= 2 (got {m})")]
    TooFewImputations { cohort: String, m: usize },
    #[error("duplicate plan for cohort `{0}`")]
    DuplicateCohort(String),
    #[error("unknown report format `{0}` (expected text, json or markdown)")]
    UnknownFormat(String),
}
