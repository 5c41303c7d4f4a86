use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Confounder, EmulationPlan, ProtocolError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortCoding {
    pub cohort: String,
    /// `None` when the variable is not collected in this cohort.
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableAudit {
    pub name: String,
    pub codings: Vec<CohortCoding>,
    /// The coarsest coding every cohort can be mapped onto. Empty for
    /// continuous variables.
    pub common_coding: Vec<String>,
    /// Cohorts whose native categories are collapsed to reach the common coding.
    pub lossy_cohorts: Vec<String>,
    /// Cohorts with a different coding and no merge map onto the common one.
    pub unmapped_cohorts: Vec<String>,
    pub subset_only: bool,
}

impl VariableAudit {
    pub fn has_loss(&self) -> bool {
        !self.lossy_cohorts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmonizationAudit {
    pub cohorts: Vec<String>,
    pub variables: Vec<VariableAudit>,
}

fn category_set(c: &[String]) -> BTreeSet<&str> {
    c.iter().map(String::as_str).collect()
}

/// Whether `from` is carried onto `target` by its merge map.
fn maps_onto(from: &Confounder, target: &[String]) -> bool {
    let target = category_set(target);
    match &from.harmonized_to {
        Some(map) => from.coding.iter().all(|c| map.get(c).is_some_and(|t| target.contains(t.as_str()))),
        None => false,
    }
}

/// Per shared confounder: native codings, the coarsest common coding,
/// which cohorts lose information, and which lack the variable altogether.
pub fn harmonization_audit(plans: &[EmulationPlan]) -> Result<HarmonizationAudit, ProtocolError> {
    if plans.len() < 2 {
        return Err(ProtocolError::TooFewPlans);
    }
    let mut names: Vec<&str> = Vec::new();
    for p in plans {
        for c in &p.confounders {
            if !names.contains(&c.name.as_str()) {
                names.push(&c.name);
            }
        }
    }

    let mut variables = Vec::new();
    for name in names {
        let present: Vec<(&str, &Confounder)> = plans
            .iter()
            .filter_map(|p| p.confounders.iter().find(|c| c.name == name).map(|c| (p.cohort.as_str(), c)))
            .collect();
        let codings = plans
            .iter()
            .map(|p| CohortCoding {
                cohort: p.cohort.clone(),
                categories: p.confounders.iter().find(|c| c.name == name).map(|c| c.coding.clone()),
            })
            .collect();
        // Fewest categories wins; earlier cohorts break ties.
        let target = present
            .iter()
            .min_by_key(|(_, c)| c.coding.len())
            .map(|(_, c)| c.coding.clone())
            .unwrap_or_default();
        let mut lossy = Vec::new();
        let mut unmapped = Vec::new();
        for (cohort, c) in &present {
            if category_set(&c.coding) == category_set(&target) {
                continue;
            }
            if maps_onto(c, &target) {
                if c.coding.len() > target.len() {
                    lossy.push(cohort.to_string());
                }
            } else {
                unmapped.push(cohort.to_string());
            }
        }
        variables.push(VariableAudit {
            name: name.to_string(),
            codings,
            common_coding: target,
            lossy_cohorts: lossy,
            unmapped_cohorts: unmapped,
            subset_only: present.len() < plans.len(),
        });
    }
    Ok(HarmonizationAudit { cohorts: plans.iter().map(|p| p.cohort.clone()).collect(), variables })
}
