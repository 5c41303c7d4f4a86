//! Two-step pooling of per-cohort estimates.

use serde::{Deserialize, Serialize};

use super::{EffectEstimate, EstimatorError};
use crate::types::{EstimandScope, Measure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaInput {
    pub label: String,
    /// Log scale for ratio measures.
    pub log_effect: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResult {
    pub labels: Vec<String>,
    pub fixed: f64,
    /// Exactly 1 / sum of fixed weights.
    pub fixed_var: f64,
    pub fixed_se: f64,
    pub random: f64,
    pub random_se: f64,
    pub tau2: f64,
    pub q: f64,
    pub df: usize,
    /// Percent, in [0, 100].
    pub i2: f64,
    pub fixed_weights: Vec<f64>,
    pub random_weights: Vec<f64>,
}

/// Inverse-variance fixed effect and DerSimonian-Laird random effects.
pub fn meta_fixed_random(inputs: &[MetaInput]) -> Result<MetaResult, EstimatorError> {
    if inputs.len() < 2 {
        return Err(EstimatorError::InvalidInput(format!("meta-analysis needs at least 2 inputs, got {}", inputs.len())));
    }
    if let Some(i) = inputs.iter().position(|m| !(m.se > 0.0 && m.se.is_finite())) {
        return Err(EstimatorError::NonPositiveSe(i));
    }
    let w: Vec<f64> = inputs.iter().map(|m| 1.0 / (m.se * m.se)).collect();
    let sw: f64 = w.iter().sum();
    let fixed = inputs.iter().zip(&w).map(|(m, w)| w * m.log_effect).sum::<f64>() / sw;
    let q: f64 = inputs.iter().zip(&w).map(|(m, w)| w * (m.log_effect - fixed).powi(2)).sum();
    let df = inputs.len() - 1;
    let sw2: f64 = w.iter().map(|w| w * w).sum();
    let tau2 = ((q - df as f64) / (sw - sw2 / sw)).max(0.0);
    let wr: Vec<f64> = inputs.iter().map(|m| 1.0 / (m.se * m.se + tau2)).collect();
    let swr: f64 = wr.iter().sum();
    let random = inputs.iter().zip(&wr).map(|(m, w)| w * m.log_effect).sum::<f64>() / swr;
    let i2 = if q > 0.0 { ((q - df as f64) / q).max(0.0) * 100.0 } else { 0.0 };
    Ok(MetaResult {
        labels: inputs.iter().map(|m| m.label.clone()).collect(),
        fixed,
        fixed_var: 1.0 / sw,
        fixed_se: (1.0 / sw).sqrt(),
        random,
        random_se: (1.0 / swr).sqrt(),
        tau2,
        q,
        df,
        i2,
        fixed_weights: w,
        random_weights: wr,
    })
}

/// A published odds ratio with its 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedEstimate {
    pub cohort: String,
    pub arm: String,
    pub or: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ReportedEstimate {
    /// Log-scale SE recovered from the interval width.
    pub fn se_log(&self) -> f64 {
        (self.hi.ln() - self.lo.ln()) / 3.92
    }

    pub fn meta_input(&self) -> MetaInput {
        MetaInput { label: self.cohort.clone(), log_effect: self.or.ln(), se: self.se_log() }
    }
}

#[derive(Deserialize)]
struct ReportedFile {
    estimates: Vec<ReportedEstimate>,
}

/// Published per-cohort and pooled estimates for the three exposed arms of
/// the maternal mental health example. Fixed inputs, not reproducible outputs.
pub fn reported_table() -> Vec<ReportedEstimate> {
    let f: ReportedFile =
        serde_json::from_str(include_str!("../../fixtures/estimates/spry2020_estimates.json")).expect("bundled estimates parse");
    f.estimates
}

/// Pre-computed estimates passed through as effect estimates, keeping the
/// reported interval.
pub fn replication_from_reported(reported: &[ReportedEstimate]) -> Vec<EffectEstimate> {
    reported
        .iter()
        .map(|r| EffectEstimate {
            method: "reported".into(),
            estimand: Measure::OddsRatio,
            scope: EstimandScope::Conditional,
            cohort: r.cohort.clone(),
            arm: r.arm.clone(),
            point: r.or,
            log_point: r.or.ln(),
            se_log: r.se_log(),
            ci_low: r.lo,
            ci_high: r.hi,
            n_used: 0,
            converged: true,
            warnings: Vec::new(),
        })
        .collect()
}
