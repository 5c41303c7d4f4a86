use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CohortConfig, Compiled, Kernel, ScmError, StructuralModel};
use crate::types::{EstimandScope, Measure};

/// Largest number of random nodes the enumerator will expand (2^20 states).
pub const MAX_STOCHASTIC_NODES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope")]
pub enum Estimand {
    Marginal,
    /// Average over the strata distribution of the within-stratum contrast.
    Conditional { strata: Vec<String> },
}

impl Estimand {
    pub fn scope(&self) -> EstimandScope {
        match self {
            Estimand::Marginal => EstimandScope::Marginal,
            Estimand::Conditional { .. } => EstimandScope::Conditional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueEffect {
    pub measure: Measure,
    pub scope: EstimandScope,
    /// Natural scale (odds ratio, risk ratio or risk difference).
    pub value: f64,
    /// Log scale for ratios, natural scale for the difference.
    pub analysis_value: f64,
    /// P(Y = 1 | do(X = 0)) and P(Y = 1 | do(X = 1)); marginal estimands only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risks: Option<(f64, f64)>,
}

fn natural(measure: Measure, analysis: f64) -> f64 {
    if measure.is_ratio() {
        analysis.exp()
    } else {
        analysis
    }
}

type StratumKey = Vec<u64>;

/// Joint mass under do(X = a): per stratum key, (P(Y = 1, Z = z), P(Z = z)).
fn interventional(c: &Compiled, cohort: Option<usize>, a: f64, strata: &[usize]) -> Result<BTreeMap<StratumKey, (f64, f64)>, ScmError> {
    let n = c.ids.len();
    let mut relevant = vec![false; n];
    let mut stack: Vec<usize> = strata.iter().copied().chain([c.outcome]).collect();
    while let Some(i) = stack.pop() {
        if relevant[i] || i == c.exposure {
            relevant[i] = true;
            continue;
        }
        relevant[i] = true;
        match &c.kernels[i] {
            Kernel::Logit { terms, .. } => stack.extend(terms.iter().map(|t| t.0)),
            Kernel::Table { parents, .. } => stack.extend(parents.iter().copied()),
            Kernel::Misclassify { source, .. } => stack.push(*source),
            Kernel::Root(_) | Kernel::Cohort(_) => {}
        }
    }
    let order: Vec<usize> = c.order.iter().copied().filter(|&i| relevant[i]).collect();
    let random = order
        .iter()
        .filter(|&&i| i != c.exposure && c.kernels[i].is_stochastic() && !(cohort.is_some() && matches!(c.kernels[i], Kernel::Cohort(_))))
        .count();
    if random > MAX_STOCHASTIC_NODES {
        return Err(ScmError::StateSpaceTooLarge(random));
    }

    let mut acc: BTreeMap<StratumKey, (f64, f64)> = BTreeMap::new();
    let mut vals = vec![0.0; n];
    #[allow(clippy::too_many_arguments)]
    fn walk(
        c: &Compiled,
        order: &[usize],
        pos: usize,
        vals: &mut Vec<f64>,
        prob: f64,
        cohort: Option<usize>,
        a: f64,
        strata: &[usize],
        acc: &mut BTreeMap<StratumKey, (f64, f64)>,
    ) {
        if pos == order.len() {
            let key: StratumKey = strata.iter().map(|&s| vals[s].to_bits()).collect();
            let e = acc.entry(key).or_insert((0.0, 0.0));
            e.0 += prob * vals[c.outcome];
            e.1 += prob;
            return;
        }
        let i = order[pos];
        let fixed = if i == c.exposure {
            Some(a)
        } else {
            match (&c.kernels[i], cohort) {
                (Kernel::Cohort(_), Some(k)) => Some(k as f64),
                (Kernel::Table { .. }, _) => Some(c.kernels[i].lookup(vals)),
                _ => None,
            }
        };
        if let Some(v) = fixed {
            vals[i] = v;
            walk(c, order, pos + 1, vals, prob, cohort, a, strata, acc);
            return;
        }
        let p = c.kernels[i].p_one(vals).expect("stochastic kernel");
        for (v, w) in [(1.0, p), (0.0, 1.0 - p)] {
            if w > 0.0 {
                vals[i] = v;
                walk(c, order, pos + 1, vals, prob * w, cohort, a, strata, acc);
            }
        }
    }
    walk(c, &order, 0, &mut vals, 1.0, cohort, a, strata, &mut acc);
    Ok(acc)
}

/// Target-trial truth for a single population: exposure set by
/// intervention, everything else enumerated exactly.
pub fn true_effect(model: &StructuralModel, estimand: &Estimand, measure: Measure) -> Result<TrueEffect, ScmError> {
    true_effect_pooled(model, &[], estimand, measure)
}

/// Truth for the population formed by the cohorts in proportion to their
/// sizes. Each cohort uses its overrides and fixes the cohort indicator to
/// its index. With no cohorts the model is enumerated as is.
pub fn true_effect_pooled(
    model: &StructuralModel,
    cohorts: &[CohortConfig],
    estimand: &Estimand,
    measure: Measure,
) -> Result<TrueEffect, ScmError> {
    let mut parts: Vec<(f64, Compiled, Option<usize>)> = Vec::new();
    if cohorts.is_empty() {
        parts.push((1.0, Compiled::new(model)?, None));
    } else {
        let total: f64 = cohorts.iter().map(|c| c.n as f64).sum();
        for (k, c) in cohorts.iter().enumerate() {
            parts.push((c.n as f64 / total, Compiled::new(&model.with_overrides(&c.overrides)?)?, Some(k)));
        }
    }
    let strata_ids: &[String] = match estimand {
        Estimand::Marginal => &[],
        Estimand::Conditional { strata } => strata,
    };

    let mut risks = [0.0, 0.0];
    let mut conditional = 0.0;
    for (w, c, cohort) in &parts {
        let mut strata = Vec::new();
        for s in strata_ids {
            let i = c.index_of(s).ok_or_else(|| ScmError::UnknownNode(s.clone()))?;
            if c.descendants_of_exposure[i] {
                return Err(ScmError::StratumDescendant(s.clone()));
            }
            strata.push(i);
        }
        let r0 = interventional(c, *cohort, 0.0, &strata)?;
        let r1 = interventional(c, *cohort, 1.0, &strata)?;
        for (key, (y0, pz)) in &r0 {
            let (y1, _) = r1[key];
            if *pz <= 0.0 {
                continue;
            }
            risks[0] += w * y0;
            risks[1] += w * y1;
            if !strata.is_empty() {
                conditional += w * pz * measure.contrast(y1 / pz, y0 / pz);
            }
        }
    }
    let (analysis_value, risks) = match estimand {
        Estimand::Marginal => (measure.contrast(risks[1], risks[0]), Some((risks[0], risks[1]))),
        Estimand::Conditional { strata } if strata.is_empty() => (measure.contrast(risks[1], risks[0]), None),
        Estimand::Conditional { .. } => (conditional, None),
    };
    Ok(TrueEffect {
        measure,
        scope: estimand.scope(),
        value: natural(measure, analysis_value),
        analysis_value,
        risks,
    })
}
