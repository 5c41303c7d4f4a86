use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::cells::Cells;
use super::logistic::{fit_dense, FitResult};
use super::{Analysis, EffectEstimate, EstimatorError, Method, OutcomeModel, COHORT_COVARIATE, POOLED_TAG};
use crate::scm::Dataset;
use crate::seed;
use crate::types::{expit, Measure};

/// Fewest rows per arm a cohort needs in a replication analysis.
pub const MIN_ARM_ROWS: usize = 10;
/// Propensities must stay inside (POSITIVITY_BOUND, 1 - POSITIVITY_BOUND).
const POSITIVITY_BOUND: f64 = 0.01;
const TRIM_QUANTILES: (f64, f64) = (0.01, 0.99);

struct Point {
    contrasts: Vec<f64>,
    analytic_se: Option<Vec<f64>>,
    converged: bool,
    warnings: Vec<String>,
    n_used: f64,
}

fn fit(x: DMatrix<f64>, y: Vec<f64>, w: Vec<f64>) -> Result<FitResult, EstimatorError> {
    fit_dense(&x, &DVector::from_vec(y), &DVector::from_vec(w))
}

fn dot(beta: &[f64], row: &[f64]) -> f64 {
    beta.iter().zip(row).map(|(b, x)| b * x).sum()
}

/// Intercept, arm indicators, covariates and optional arm-by-covariate terms.
fn outcome_row(cells: &Cells, i: usize, arm: usize, cols: &[usize], interaction: bool) -> Vec<f64> {
    let k = cells.n_arms();
    let mut row = Vec::with_capacity(1 + k + cols.len() * k);
    row.push(1.0);
    row.extend((1..k).map(|a| (arm == a) as u8 as f64));
    row.extend(cols.iter().map(|&j| cells.x[i][j]));
    if interaction {
        for a in 1..k {
            row.extend(cols.iter().map(|&j| if arm == a { cells.x[i][j] } else { 0.0 }));
        }
    }
    row
}

fn fit_outcome(cells: &Cells, w: &[f64], cols: &[usize], interaction: bool) -> Result<FitResult, EstimatorError> {
    let rows: Vec<Vec<f64>> = (0..cells.len()).map(|i| outcome_row(cells, i, cells.arm[i], cols, interaction)).collect();
    let p = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let y = cells.y.iter().map(|&v| if v.is_nan() { 0.0 } else { v }).collect();
    fit(x, y, w.to_vec())
}

/// Weights of the analysed cells: counts, times inverse participation
/// probabilities when requested. Zero for non-participants.
fn analysis_weights(cells: &Cells, counts: &[f64], a: &Analysis) -> Result<(Vec<f64>, bool), EstimatorError> {
    let Some(covs) = &a.participation else {
        return Ok((counts.to_vec(), true));
    };
    let others: Vec<String> = covs.iter().filter(|c| **c != a.exposure).cloned().collect();
    let cols = cells.cols(&others);
    let arms = if others.len() < covs.len() { cells.n_arms() - 1 } else { 0 };
    let row = |i: usize| {
        let mut r = vec![1.0];
        r.extend(cols.iter().map(|&j| cells.x[i][j]));
        r.extend((1..=arms).map(|k| (cells.arm[i] == k) as u8 as f64));
        r
    };
    let rows: Vec<Vec<f64>> = (0..cells.len()).map(row).collect();
    let x = DMatrix::from_fn(cells.len(), cols.len() + arms + 1, |i, j| rows[i][j]);
    let y = cells.selected.iter().map(|&s| s as u8 as f64).collect();
    let f = fit(x, y, counts.to_vec())?;
    let w = (0..cells.len())
        .map(|i| if cells.selected[i] { counts[i] / expit(dot(&f.coefficients, &rows[i])) } else { 0.0 })
        .collect();
    Ok((w, f.converged))
}

fn weighted_quantile(values: &[(f64, f64)], q: f64) -> f64 {
    let mut v: Vec<(f64, f64)> = values.iter().copied().filter(|(_, w)| *w > 0.0).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = v.iter().map(|x| x.1).sum();
    let mut acc = 0.0;
    for (x, w) in &v {
        acc += w;
        if acc >= q * total {
            return *x;
        }
    }
    v.last().map_or(f64::NAN, |x| x.0)
}

/// P(arm | covariates) per cell, trimmed to the 1st/99th percentiles and
/// checked for positivity.
fn propensities(cells: &Cells, w: &[f64], covs: &[String], warnings: &mut Vec<String>) -> Result<(Vec<Vec<f64>>, bool), EstimatorError> {
    let cols = cells.cols(covs);
    let k = cells.n_arms();
    let x = DMatrix::from_fn(cells.len(), cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cells.x[i][cols[j - 1]] });
    let mut converged = true;
    let mut p = vec![vec![0.0; k]; cells.len()];
    let targets: Vec<usize> = if k == 2 { vec![1] } else { (0..k).collect() };
    for &t in &targets {
        let y = cells.arm.iter().map(|&a| (a == t) as u8 as f64).collect();
        let f = fit(x.clone(), y, w.to_vec())?;
        converged &= f.converged;
        for (i, row) in p.iter_mut().enumerate() {
            let mut r = vec![1.0];
            r.extend(cols.iter().map(|&j| cells.x[i][j]));
            row[t] = expit(dot(&f.coefficients, &r));
        }
    }
    for row in &mut p {
        if k == 2 {
            row[0] = 1.0 - row[1];
        } else {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    let mut capped = 0.0;
    for t in 0..k {
        let vals: Vec<(f64, f64)> = (0..cells.len()).map(|i| (p[i][t], w[i])).collect();
        let (lo, hi) = (weighted_quantile(&vals, TRIM_QUANTILES.0), weighted_quantile(&vals, TRIM_QUANTILES.1));
        for i in 0..cells.len() {
            let v = p[i][t].clamp(lo, hi);
            if v != p[i][t] {
                if cells.arm[i] == t {
                    capped += w[i];
                }
                p[i][t] = v;
            }
        }
    }
    if capped > 0.0 {
        warnings.push(format!("propensity capped at the 1st/99th percentile for {capped} weighted row(s)"));
    }
    let mut bad: Vec<String> = (0..cells.len())
        .filter(|&i| w[i] > 0.0 && p[i].iter().any(|&v| v <= POSITIVITY_BOUND || v >= 1.0 - POSITIVITY_BOUND))
        .map(|i| cells.stratum_label(i, &cols))
        .collect();
    bad.sort();
    bad.dedup();
    if !bad.is_empty() {
        return Err(EstimatorError::Positivity(bad));
    }
    Ok((p, converged))
}

fn contrasts(measure: Measure, risks: &[f64]) -> Result<Vec<f64>, EstimatorError> {
    let out: Vec<f64> = risks[1..].iter().map(|&r| measure.contrast(r, risks[0])).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(EstimatorError::InvalidInput("an arm risk is 0 or 1; the contrast is undefined".into()));
    }
    Ok(out)
}

fn crude_risks(cells: &Cells, w: &[f64]) -> Vec<f64> {
    (0..cells.n_arms())
        .map(|k| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in (0..cells.len()).filter(|&i| cells.arm[i] == k && w[i] > 0.0) {
                num += w[i] * cells.y[i];
                den += w[i];
            }
            num / den
        })
        .collect()
}

/// Delta-method SEs of crude contrasts from unweighted counts.
fn crude_se(measure: Measure, cells: &Cells, w: &[f64]) -> Vec<f64> {
    let mut cases = vec![0.0; cells.n_arms()];
    let mut n = vec![0.0; cells.n_arms()];
    for i in 0..cells.len() {
        n[cells.arm[i]] += w[i];
        if w[i] > 0.0 {
            cases[cells.arm[i]] += w[i] * cells.y[i];
        }
    }
    (1..cells.n_arms())
        .map(|k| {
            let (a, n1, c, n0) = (cases[k], n[k], cases[0], n[0]);
            match measure {
                Measure::OddsRatio => (1.0 / a + 1.0 / (n1 - a) + 1.0 / c + 1.0 / (n0 - c)).sqrt(),
                Measure::RiskRatio => (1.0 / a - 1.0 / n1 + 1.0 / c - 1.0 / n0).sqrt(),
                Measure::RiskDifference => {
                    let (r1, r0) = (a / n1, c / n0);
                    (r1 * (1.0 - r1) / n1 + r0 * (1.0 - r0) / n0).sqrt()
                }
            }
        })
        .collect()
}

fn arm_predictions(cells: &Cells, fit: &FitResult, cols: &[usize], interaction: bool) -> Vec<Vec<f64>> {
    (0..cells.len())
        .map(|i| (0..cells.n_arms()).map(|k| expit(dot(&fit.coefficients, &outcome_row(cells, i, k, cols, interaction)))).collect())
        .collect()
}

/// Empirical outcome mean per arm within each covariate stratum.
fn saturated_predictions(cells: &Cells, w: &[f64], cols: &[usize]) -> Result<Vec<Vec<f64>>, EstimatorError> {
    let key = |i: usize| cols.iter().map(|&j| cells.x[i][j].to_bits()).collect::<Vec<u64>>();
    let mut sums: BTreeMap<(Vec<u64>, usize), (f64, f64)> = BTreeMap::new();
    for i in (0..cells.len()).filter(|&i| w[i] > 0.0) {
        let e = sums.entry((key(i), cells.arm[i])).or_default();
        e.0 += w[i] * cells.y[i];
        e.1 += w[i];
    }
    let mut empty = Vec::new();
    let mut out = Vec::with_capacity(cells.len());
    for i in 0..cells.len() {
        let mut row = Vec::with_capacity(cells.n_arms());
        for k in 0..cells.n_arms() {
            match sums.get(&(key(i), k)) {
                Some((s, n)) => row.push(s / n),
                None => {
                    if w[i] > 0.0 {
                        empty.push(format!("{} in arm {}", cells.stratum_label(i, cols), cells.arms[k]));
                    }
                    row.push(f64::NAN);
                }
            }
        }
        out.push(row);
    }
    if !empty.is_empty() {
        empty.sort();
        empty.dedup();
        return Err(EstimatorError::Positivity(empty));
    }
    Ok(out)
}

fn standardise(w: &[f64], m: &[Vec<f64>], k: usize) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    (0..k).map(|a| (0..w.len()).filter(|&i| w[i] > 0.0).map(|i| w[i] * m[i][a]).sum::<f64>() / total).collect()
}

fn point(cells: &Cells, counts: &[f64], a: &Analysis, method: Method) -> Result<Point, EstimatorError> {
    let (w, mut converged) = analysis_weights(cells, counts, a)?;
    let weighted = a.participation.is_some();
    let mut warnings = Vec::new();
    let k = cells.n_arms();
    let n_used: f64 = (0..cells.len()).filter(|&i| cells.selected[i]).map(|i| counts[i]).sum();
    let cols = cells.cols(&a.covariates);
    let (contrasts, analytic_se) = match method {
        Method::Crude => {
            let r = crude_risks(cells, &w);
            (contrasts(a.measure, &r)?, (!weighted).then(|| crude_se(a.measure, cells, &w)))
        }
        Method::Conditional => {
            if a.measure != Measure::OddsRatio {
                return Err(EstimatorError::InvalidInput("conditional estimates are odds ratios".into()));
            }
            let f = fit_outcome(cells, &w, &cols, false)?;
            converged &= f.converged;
            let c: Vec<f64> = (1..k).map(|j| f.coefficients[j]).collect();
            (c, (!weighted).then(|| (1..k).map(|j| f.se(j)).collect()))
        }
        Method::Ipw => {
            let (p, conv) = propensities(cells, &w, a.propensity_covariates(), &mut warnings)?;
            converged &= conv;
            let ipw: Vec<f64> = (0..cells.len()).map(|i| w[i] / p[i][cells.arm[i]]).collect();
            (contrasts(a.measure, &crude_risks(cells, &ipw))?, None)
        }
        Method::GComputation => {
            let m = match a.outcome_model {
                OutcomeModel::Saturated => saturated_predictions(cells, &w, &cols)?,
                model => {
                    let inter = model == OutcomeModel::Interaction;
                    let f = fit_outcome(cells, &w, &cols, inter)?;
                    converged &= f.converged;
                    arm_predictions(cells, &f, &cols, inter)
                }
            };
            (contrasts(a.measure, &standardise(&w, &m, k))?, None)
        }
        Method::Aipw => {
            let f = fit_outcome(cells, &w, &cols, a.outcome_model == OutcomeModel::Interaction)?;
            converged &= f.converged;
            let m = arm_predictions(cells, &f, &cols, a.outcome_model == OutcomeModel::Interaction);
            let (p, conv) = propensities(cells, &w, a.propensity_covariates(), &mut warnings)?;
            converged &= conv;
            let total: f64 = w.iter().sum();
            let risks: Vec<f64> = (0..k)
                .map(|arm| {
                    (0..cells.len())
                        .filter(|&i| w[i] > 0.0)
                        .map(|i| {
                            let aug = if cells.arm[i] == arm { (cells.y[i] - m[i][arm]) / p[i][arm] } else { 0.0 };
                            w[i] * (aug + m[i][arm])
                        })
                        .sum::<f64>()
                        / total
                })
                .collect();
            (contrasts(a.measure, &risks)?, None)
        }
    };
    Ok(Point { contrasts, analytic_se, converged, warnings, n_used })
}

fn run(cells: &Cells, a: &Analysis, method: Method) -> Result<Vec<EffectEstimate>, EstimatorError> {
    let base = point(cells, &cells.count, a, method)?;
    let mut warnings = base.warnings.clone();
    if method == Method::Conditional {
        warnings.push("conditional odds ratio; not collapsible to the marginal estimand".into());
    }
    let se: Vec<f64> = match &base.analytic_se {
        Some(se) => se.clone(),
        None => {
            let mut draws: Vec<Vec<f64>> = Vec::with_capacity(a.bootstrap);
            let mut failed = 0;
            for b in 0..a.bootstrap {
                let mut rng = seed::rng(seed::derive(a.seed, b as u64));
                let counts = cells.resample(&mut rng);
                match point(cells, &counts, a, method) {
                    Ok(p) if p.converged => draws.push(p.contrasts),
                    _ => failed += 1,
                }
            }
            if failed > 0 {
                warnings.push(format!("{failed} of {} bootstrap resamples failed and were skipped", a.bootstrap));
            }
            if draws.len() < 2 {
                warnings.push("too few bootstrap resamples for a standard error".into());
                vec![f64::NAN; base.contrasts.len()]
            } else {
                let m = draws.len() as f64;
                (0..base.contrasts.len())
                    .map(|j| {
                        let mean = draws.iter().map(|d| d[j]).sum::<f64>() / m;
                        (draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
                    })
                    .collect()
            }
        }
    };
    let method_tag = match &a.participation {
        Some(_) => format!("{}+participation-ipw", method.tag()),
        None => method.tag().to_string(),
    };
    let measure = if method == Method::Conditional { Measure::OddsRatio } else { a.measure };
    Ok(base
        .contrasts
        .iter()
        .zip(&se)
        .enumerate()
        .map(|(j, (&v, &s))| {
            let (point, ci_low, ci_high) = EffectEstimate::from_scale(measure, v, s);
            EffectEstimate {
                method: method_tag.clone(),
                estimand: measure,
                scope: method.scope(),
                cohort: cells.cohort_tag.clone(),
                arm: cells.arms[j + 1].clone(),
                point,
                log_point: v,
                se_log: s,
                ci_low,
                ci_high,
                n_used: base.n_used.round() as usize,
                converged: base.converged,
                warnings: warnings.clone(),
            }
        })
        .collect())
}

/// Runs `method` on the rows of `ds`. Missing values in analysed columns
/// are an error; apply a missing-data strategy first.
pub fn estimate(ds: &Dataset, a: &Analysis, method: Method) -> Result<Vec<EffectEstimate>, EstimatorError> {
    let cells = Cells::build(ds, a)?;
    run(&cells, a, method)
}

pub fn crude(ds: &Dataset, exposure: &str, outcome: &str, measure: Measure) -> Result<Vec<EffectEstimate>, EstimatorError> {
    estimate(ds, &Analysis::new(exposure, outcome).measure(measure), Method::Crude)
}

/// Odds ratios of each arm against the comparator (lowest code) from a
/// logistic model of the outcome on arm indicators and `covariates`.
pub fn conditional_or(ds: &Dataset, exposure: &str, outcome: &str, covariates: &[String]) -> Result<Vec<EffectEstimate>, EstimatorError> {
    estimate(ds, &Analysis::new(exposure, outcome).covariates(covariates), Method::Conditional)
}

/// Hajek inverse-probability-weighted marginal contrasts with bootstrap SEs.
pub fn ipw_marginal(
    ds: &Dataset,
    exposure: &str,
    outcome: &str,
    covariates: &[String],
    stabilized: bool,
    seed: u64,
) -> Result<Vec<EffectEstimate>, EstimatorError> {
    let a = Analysis::new(exposure, outcome).covariates(covariates).stabilized(stabilized).seed(seed);
    estimate(ds, &a, Method::Ipw)
}

pub fn g_computation(
    ds: &Dataset,
    exposure: &str,
    outcome: &str,
    covariates: &[String],
    model: OutcomeModel,
    seed: u64,
) -> Result<Vec<EffectEstimate>, EstimatorError> {
    let a = Analysis::new(exposure, outcome).covariates(covariates).outcome_model(model).seed(seed);
    estimate(ds, &a, Method::GComputation)
}

/// Augmented IPW with separate outcome- and propensity-model covariates.
pub fn aipw(
    ds: &Dataset,
    exposure: &str,
    outcome: &str,
    outcome_covariates: &[String],
    propensity_covariates: &[String],
    seed: u64,
) -> Result<Vec<EffectEstimate>, EstimatorError> {
    let a = Analysis::new(exposure, outcome).covariates(outcome_covariates).propensity(propensity_covariates).seed(seed);
    estimate(ds, &a, Method::Aipw)
}

/// One analysis of the stacked cohorts, adjusting for the cohort when
/// `include_cohort_indicator` is set.
pub fn pooled_analysis(
    ds: &Dataset,
    a: &Analysis,
    include_cohort_indicator: bool,
    method: Method,
) -> Result<Vec<EffectEstimate>, EstimatorError> {
    let a = if include_cohort_indicator { a.with_cohort_indicator() } else { a.clone() };
    let mut out = estimate(ds, &a, method)?;
    for e in &mut out {
        e.cohort = POOLED_TAG.into();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortResult {
    pub cohort: String,
    pub estimates: Vec<EffectEstimate>,
    /// Set instead of estimates when the cohort has too few rows in an arm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub insufficient_data: Option<String>,
}

/// The same analysis in every cohort separately, in cohort order.
/// `per_cohort_covariates` replaces the covariate set for listed cohorts.
pub fn replication_analysis(
    ds: &Dataset,
    a: &Analysis,
    method: Method,
    per_cohort_covariates: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<CohortResult>, EstimatorError> {
    let xj = ds.column_index(&a.exposure).ok_or_else(|| EstimatorError::UnknownColumn(a.exposure.clone()))?;
    let mut arms: Vec<f64> = ds.values[xj].iter().flatten().copied().collect();
    arms.sort_by(f64::total_cmp);
    arms.dedup();
    let mut out = Vec::new();
    for id in &ds.cohort_ids {
        let sub = ds.cohort_subset(id).expect("listed cohort");
        if sub.n_rows() == 0 {
            continue;
        }
        let analysed = |r: usize| a.participation.is_none() || sub.selected[r];
        let short: Vec<String> = arms
            .iter()
            .filter_map(|&v| {
                let n = (0..sub.n_rows()).filter(|&r| analysed(r) && sub.values[xj][r] == Some(v)).count();
                (n < MIN_ARM_ROWS).then(|| format!("exposure {v} has {n} row(s) (< {MIN_ARM_ROWS})"))
            })
            .collect();
        if !short.is_empty() {
            out.push(CohortResult { cohort: id.clone(), estimates: Vec::new(), insufficient_data: Some(short.join("; ")) });
            continue;
        }
        let mut local = a.clone();
        if let Some(c) = per_cohort_covariates.get(id) {
            local.covariates = c.clone();
        }
        local.covariates.retain(|c| c != COHORT_COVARIATE);
        if let Some(p) = local.propensity.as_mut() {
            p.retain(|c| c != COHORT_COVARIATE);
        }
        out.push(CohortResult { cohort: id.clone(), estimates: estimate(&sub, &local, method)?, insufficient_data: None });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub arm: String,
    /// Difference in conditional log-OR between the second and first cohort.
    pub log_or: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub converged: bool,
}

/// Wald tests of arm-by-cohort product terms in a logistic model with arm,
/// cohort and covariate main effects. Needs exactly two cohorts.
pub fn heterogeneity_interaction(ds: &Dataset, a: &Analysis) -> Result<Vec<InteractionTerm>, EstimatorError> {
    let mut present: Vec<usize> = ds.cohort.clone();
    present.sort_unstable();
    present.dedup();
    if present.len() != 2 {
        return Err(EstimatorError::NeedTwoCohorts(present.len()));
    }
    let mut local = a.clone();
    local.covariates.retain(|c| c != COHORT_COVARIATE);
    local.covariates.insert(0, COHORT_COVARIATE.into());
    local.propensity = None;
    local.participation = None;
    let cells = Cells::build(ds, &local)?;
    let k = cells.n_arms();
    let cohort_col = cells.cols(&[COHORT_COVARIATE.to_string()])[0];
    let cols = cells.cols(&local.covariates[1..]);
    let rows: Vec<Vec<f64>> = (0..cells.len())
        .map(|i| {
            let s = cells.x[i][cohort_col];
            let mut r = vec![1.0];
            r.extend((1..k).map(|j| (cells.arm[i] == j) as u8 as f64));
            r.push(s);
            r.extend((1..k).map(|j| (cells.arm[i] == j) as u8 as f64 * s));
            r.extend(cols.iter().map(|&c| cells.x[i][c]));
            r
        })
        .collect();
    let x = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let f = fit(x, cells.y.clone(), cells.count.clone())?;
    let normal = Normal::standard();
    Ok((1..k)
        .map(|j| {
            let idx = k + j;
            let (b, se) = (f.coefficients[idx], f.se(idx));
            let z = b / se;
            InteractionTerm {
                arm: cells.arms[j].clone(),
                log_or: b,
                se,
                z,
                p_value: 2.0 * (1.0 - normal.cdf(z.abs())),
                converged: f.converged,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{scenario, simulate, CohortConfig};
    use crate::types::EstimandScope;

    /// Dataset from explicit (x, y, c, count) patterns.
    fn table(patterns: &[(f64, f64, f64, usize)]) -> Dataset {
        let mut ds = Dataset {
            columns: vec!["X".into(), "Y".into(), "C".into()],
            cohort_ids: vec!["a".into()],
            cohort: Vec::new(),
            values: vec![Vec::new(); 3],
            selected: Vec::new(),
            levels: Default::default(),
        };
        for &(x, y, c, n) in patterns {
            for _ in 0..n {
                ds.values[0].push(Some(x));
                ds.values[1].push(Some(y));
                ds.values[2].push(Some(c));
                ds.cohort.push(0);
                ds.selected.push(true);
            }
        }
        ds
    }

    fn confounded() -> Dataset {
        table(&[
            (1.0, 1.0, 1.0, 60),
            (1.0, 0.0, 1.0, 40),
            (0.0, 1.0, 1.0, 30),
            (0.0, 0.0, 1.0, 20),
            (1.0, 1.0, 0.0, 10),
            (1.0, 0.0, 0.0, 30),
            (0.0, 1.0, 0.0, 25),
            (0.0, 0.0, 0.0, 100),
        ])
    }

    #[test]
    fn unadjusted_conditional_equals_crude_cross_product() {
        let ds = confounded();
        let c = conditional_or(&ds, "X", "Y", &[]).unwrap();
        let r = crude(&ds, "X", "Y", Measure::OddsRatio).unwrap();
        let cross = (70.0 * 120.0) / (70.0 * 55.0);
        assert!((c[0].point - cross).abs() < 1e-8);
        assert!((r[0].point - cross).abs() < 1e-12);
        assert!((c[0].se_log - r[0].se_log).abs() < 1e-8);
        assert_eq!(c[0].scope, EstimandScope::Conditional);
        assert!(c[0].ci_low <= c[0].point && c[0].point <= c[0].ci_high);
    }

    #[test]
    fn saturated_g_computation_is_direct_standardisation() {
        let ds = confounded();
        let g = g_computation(&ds, "X", "Y", &["C".into()], OutcomeModel::Saturated, 1).unwrap();
        // Hand standardisation: P(C=1) = 150/315.
        let pc = 150.0 / 315.0;
        let r1 = pc * 0.6 + (1.0 - pc) * 0.25;
        let r0 = pc * 0.6 + (1.0 - pc) * (25.0 / 125.0);
        let or = (r1 / (1.0 - r1)) / (r0 / (1.0 - r0));
        assert!((g[0].point - or).abs() < 1e-12);
    }

    #[test]
    fn ipw_stabilisation_does_not_move_the_point() {
        let ds = confounded();
        let a = ipw_marginal(&ds, "X", "Y", &["C".into()], false, 3).unwrap();
        let b = ipw_marginal(&ds, "X", "Y", &["C".into()], true, 3).unwrap();
        assert!((a[0].log_point - b[0].log_point).abs() < 1e-10);
        // Saturated propensity on a binary confounder reproduces standardisation.
        let g = g_computation(&ds, "X", "Y", &["C".into()], OutcomeModel::Saturated, 1).unwrap();
        assert!((a[0].log_point - g[0].log_point).abs() < 1e-9);
    }

    #[test]
    fn constant_weights_reduce_ipw_to_crude() {
        // Covariate independent of exposure: every propensity is the same.
        let ds = table(&[
            (1.0, 1.0, 1.0, 20),
            (1.0, 0.0, 1.0, 30),
            (0.0, 1.0, 1.0, 10),
            (0.0, 0.0, 1.0, 40),
            (1.0, 1.0, 0.0, 10),
            (1.0, 0.0, 0.0, 40),
            (0.0, 1.0, 0.0, 5),
            (0.0, 0.0, 0.0, 45),
        ]);
        let i = ipw_marginal(&ds, "X", "Y", &["C".into()], true, 1).unwrap();
        let c = crude(&ds, "X", "Y", Measure::OddsRatio).unwrap();
        assert!((i[0].log_point - c[0].log_point).abs() < 1e-10);
    }

    #[test]
    fn positivity_violation_names_the_stratum() {
        let ds = table(&[(1.0, 1.0, 1.0, 50), (1.0, 0.0, 1.0, 50), (1.0, 1.0, 0.0, 30), (0.0, 0.0, 0.0, 30), (0.0, 1.0, 0.0, 5)]);
        match ipw_marginal(&ds, "X", "Y", &["C".into()], false, 1) {
            Err(EstimatorError::Positivity(s)) => assert_eq!(s, vec!["C=1".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_values_are_rejected() {
        let mut ds = confounded();
        ds.values[2][0] = None;
        assert_eq!(
            conditional_or(&ds, "X", "Y", &["C".into()]).unwrap_err(),
            EstimatorError::MissingValues { column: "C".into(), rows: 1 }
        );
    }

    #[test]
    fn single_cohort_pooled_ignores_indicator_flag() {
        let s = scenario("S-1A").unwrap();
        let ds = simulate(&s.model.without_node("U"), &[CohortConfig::new("only", 3000)], 4).unwrap();
        let a = Analysis::new("X", "Y").covariates(&["C"]).bootstrap(20).seed(2);
        let with = pooled_analysis(&ds, &a, true, Method::GComputation).unwrap();
        let without = pooled_analysis(&ds, &a, false, Method::GComputation).unwrap();
        assert_eq!(with[0].log_point, without[0].log_point);
        assert_eq!(with[0].se_log, without[0].se_log);
    }

    #[test]
    fn four_arm_exposure_gives_three_contrasts() {
        let mut ds = table(&[]);
        let mut id = 0u64;
        for x in 0..4 {
            for y in 0..2 {
                for _ in 0..(20 + 5 * x + 7 * y) {
                    id += 1;
                    ds.values[0].push(Some(x as f64));
                    ds.values[1].push(Some(y as f64));
                    ds.values[2].push(Some((id % 2) as f64));
                    ds.cohort.push(0);
                    ds.selected.push(true);
                }
            }
        }
        ds.levels.insert("X".into(), vec!["none".into(), "adolescence".into(), "young adulthood".into(), "both".into()]);
        let c = conditional_or(&ds, "X", "Y", &["C".into()]).unwrap();
        let arms: Vec<_> = c.iter().map(|e| e.arm.as_str()).collect();
        assert_eq!(arms, ["adolescence", "young adulthood", "both"]);
        let g = g_computation(&ds, "X", "Y", &["C".into()], OutcomeModel::MainEffects, 1).unwrap();
        assert_eq!(g.len(), 3);
        let i = ipw_marginal(&ds, "X", "Y", &["C".into()], false, 1).unwrap();
        assert_eq!(i.len(), 3);
    }

    #[test]
    fn interaction_equals_difference_of_saturated_log_ors() {
        let mut ds = confounded();
        let other = table(&[(1.0, 1.0, 0.0, 40), (1.0, 0.0, 0.0, 35), (0.0, 1.0, 0.0, 22), (0.0, 0.0, 0.0, 61)]);
        ds.cohort_ids.push("b".into());
        for r in 0..other.n_rows() {
            for j in 0..3 {
                ds.values[j].push(other.values[j][r]);
            }
            ds.cohort.push(1);
            ds.selected.push(true);
        }
        let a = Analysis::new("X", "Y");
        let t = heterogeneity_interaction(&ds, &a).unwrap();
        let per = replication_analysis(&ds, &Analysis::new("X", "Y"), Method::Conditional, &BTreeMap::new()).unwrap();
        let diff = per[1].estimates[0].log_point - per[0].estimates[0].log_point;
        assert!((t[0].log_or - diff).abs() < 1e-6);
        assert!(t[0].p_value > 0.0 && t[0].p_value < 1.0);
        assert!(matches!(heterogeneity_interaction(&confounded(), &a), Err(EstimatorError::NeedTwoCohorts(1))));
    }

    #[test]
    fn replication_marks_sparse_cohort_only() {
        let mut ds = confounded();
        let extra = table(&[(0.0, 1.0, 0.0, 30), (0.0, 0.0, 0.0, 30), (1.0, 1.0, 0.0, 3)]);
        ds.cohort_ids.push("sparse".into());
        for r in 0..extra.n_rows() {
            for j in 0..3 {
                ds.values[j].push(extra.values[j][r]);
            }
            ds.cohort.push(1);
            ds.selected.push(true);
        }
        let res = replication_analysis(&ds, &Analysis::new("X", "Y"), Method::Crude, &BTreeMap::new()).unwrap();
        assert_eq!(res.len(), 2);
        assert!(res[0].insufficient_data.is_none() && res[0].estimates.len() == 1);
        assert_eq!(res[0].estimates[0].cohort, "a");
        assert!(res[1].insufficient_data.as_deref().unwrap().contains("exposure 1 has 3 row(s)"));
    }
}
