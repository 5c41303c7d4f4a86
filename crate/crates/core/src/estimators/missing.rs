//! Complete-case restriction, chained-equations multiple imputation and
//! Rubin's rules.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::effects::estimate;
use super::logistic::{fit_dense, fit_linear};
use super::{Analysis, EffectEstimate, EstimatorError, Method};
use crate::scm::Dataset;
use crate::seed;
use crate::types::{expit, ImputationScope};

/// Chained-equation cycles before each completed dataset is taken.
pub const BURN_IN_CYCLES: usize = 10;

fn column_indices(ds: &Dataset, columns: &[String]) -> Result<Vec<usize>, EstimatorError> {
    let mut idx = columns
        .iter()
        .map(|c| ds.column_index(c).ok_or_else(|| EstimatorError::UnknownColumn(c.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    if idx.is_empty() {
        idx = (0..ds.columns.len()).collect();
    }
    Ok(idx)
}

/// Rows with every listed column observed (all columns when `columns` is
/// empty).
pub fn complete_case(ds: &Dataset, columns: &[String]) -> Result<Dataset, EstimatorError> {
    let idx = column_indices(ds, columns)?;
    let keep: Vec<bool> = (0..ds.n_rows()).map(|r| idx.iter().all(|&j| ds.values[j][r].is_some())).collect();
    Ok(ds.filter_rows(&keep))
}

/// One chain over `rows`, filling missing values of `vars` in place.
struct Chain<'a> {
    ds: &'a Dataset,
    rows: Vec<usize>,
    vars: Vec<usize>,
    /// Extra always-observed predictors (cohort indicators), per row.
    extra: Vec<Vec<f64>>,
    label: String,
}

impl Chain<'_> {
    fn run<R: Rng>(&self, rng: &mut R) -> Result<Vec<(usize, usize, f64)>, EstimatorError> {
        let n = self.rows.len();
        let mut vals: Vec<Vec<f64>> = self.vars.iter().map(|&j| self.rows.iter().map(|&r| self.ds.values[j][r].unwrap_or(f64::NAN)).collect()).collect();
        let miss: Vec<Vec<bool>> = vals.iter().map(|c| c.iter().map(|v| v.is_nan()).collect()).collect();
        let counts: Vec<usize> = miss.iter().map(|m| m.iter().filter(|&&b| b).count()).collect();
        let mut order: Vec<usize> = (0..self.vars.len()).filter(|&v| counts[v] > 0).collect();
        order.sort_by_key(|&v| (counts[v], self.vars[v]));
        if order.is_empty() {
            return Ok(Vec::new());
        }
        for &v in &order {
            let name = &self.ds.columns[self.vars[v]];
            if counts[v] == n {
                return Err(EstimatorError::FullyMissing { column: name.clone(), cohort: self.label.clone() });
            }
            let complete_predictor = (0..self.vars.len()).any(|u| u != v && counts[u] == 0) || !self.extra.is_empty();
            if !complete_predictor {
                return Err(EstimatorError::InvalidInput(format!("`{name}` has no fully observed predictor to impute from")));
            }
            let observed: Vec<f64> = vals[v].iter().copied().filter(|x| !x.is_nan()).collect();
            for i in 0..n {
                if miss[v][i] {
                    vals[v][i] = *observed.choose(rng).expect("observed values");
                }
            }
        }
        let binary: Vec<bool> = vals.iter().map(|c| c.iter().all(|&x| x == 0.0 || x == 1.0)).collect();
        let codes: Vec<Option<Vec<f64>>> = self
            .vars
            .iter()
            .zip(&vals)
            .map(|(&j, c)| {
                self.ds.levels.get(&self.ds.columns[j]).map(|_| {
                    let mut u = c.clone();
                    u.sort_by(f64::total_cmp);
                    u.dedup();
                    u
                })
            })
            .collect();
        let cycles = if order.len() == 1 { 1 } else { BURN_IN_CYCLES };
        for _ in 0..cycles {
            for &v in &order {
                self.update(v, &mut vals, &miss[v], binary[v], codes[v].as_deref(), rng)?;
            }
        }
        let mut out = Vec::new();
        for &v in &order {
            for i in (0..n).filter(|&i| miss[v][i]) {
                out.push((self.vars[v], self.rows[i], vals[v][i]));
            }
        }
        Ok(out)
    }

    fn update<R: Rng>(
        &self,
        v: usize,
        vals: &mut [Vec<f64>],
        miss: &[bool],
        binary: bool,
        codes: Option<&[f64]>,
        rng: &mut R,
    ) -> Result<(), EstimatorError> {
        let n = self.rows.len();
        let row = |i: usize, vals: &[Vec<f64>]| -> Vec<f64> {
            let mut r = vec![1.0];
            r.extend((0..vals.len()).filter(|&u| u != v).map(|u| vals[u][i]));
            r.extend(self.extra.iter().map(|e| e[i]));
            r
        };
        let obs: Vec<usize> = (0..n).filter(|&i| !miss[i]).collect();
        let full: Vec<Vec<f64>> = (0..n).map(|i| row(i, vals)).collect();
        // Constant predictors among the observed rows carry no information.
        let p = full[0].len();
        let keep: Vec<usize> = (0..p).filter(|&j| j == 0 || obs.iter().any(|&i| full[i][j] != full[obs[0]][j])).collect();
        let mut cells: BTreeMap<Vec<u64>, (Vec<f64>, f64, f64)> = BTreeMap::new();
        for &i in &obs {
            let x: Vec<f64> = keep.iter().map(|&j| full[i][j]).collect();
            let mut key: Vec<u64> = x.iter().map(|z| z.to_bits()).collect();
            key.push(vals[v][i].to_bits());
            cells.entry(key).or_insert((x, vals[v][i], 0.0)).2 += 1.0;
        }
        let cells: Vec<(Vec<f64>, f64, f64)> = cells.into_values().collect();
        let w: Vec<f64> = cells.iter().map(|c| Gamma::new(c.2, 1.0).expect("positive count").sample(rng)).collect();
        let x = DMatrix::from_fn(cells.len(), keep.len(), |i, j| cells[i].0[j]);
        let y = DVector::from_iterator(cells.len(), cells.iter().map(|c| c.1));
        let w = DVector::from_vec(w);
        let predict = |beta: &[f64], i: usize| keep.iter().zip(beta).map(|(&j, b)| b * full[i][j]).sum::<f64>();
        if binary {
            let f = fit_dense(&x, &y, &w)?;
            for i in (0..n).filter(|&i| miss[i]) {
                vals[v][i] = (rng.gen::<f64>() < expit(predict(&f.coefficients, i))) as u8 as f64;
            }
        } else {
            let (beta, sigma2) = fit_linear(&x, &y, &w)?;
            let beta: Vec<f64> = beta.iter().copied().collect();
            let sd = sigma2.sqrt();
            for i in (0..n).filter(|&i| miss[i]) {
                let z: f64 = StandardNormal.sample(rng);
                let draw = predict(&beta, i) + sd * z;
                vals[v][i] = match codes {
                    Some(c) => *c.iter().min_by(|a, b| (*a - draw).abs().total_cmp(&(*b - draw).abs())).unwrap(),
                    None => draw,
                };
            }
        }
        Ok(())
    }
}

fn cohort_dummies(ds: &Dataset, rows: &[usize]) -> Vec<Vec<f64>> {
    let mut present: Vec<usize> = rows.iter().map(|&r| ds.cohort[r]).collect();
    present.sort_unstable();
    present.dedup();
    present.iter().skip(1).map(|&k| rows.iter().map(|&r| (ds.cohort[r] == k) as u8 as f64).collect()).collect()
}

/// `m` completed copies of `ds`. Only the listed columns are imputed or
/// used as predictors; binary columns get logistic models, others linear
/// models (labelled columns snap to the nearest observed code).
pub fn multiple_impute(
    ds: &Dataset,
    columns: &[String],
    m: usize,
    scope: ImputationScope,
    seed: u64,
) -> Result<Vec<Dataset>, EstimatorError> {
    if m < 2 {
        return Err(EstimatorError::InvalidInput(format!("multiple imputation needs m >= 2, got {m}")));
    }
    let vars = column_indices(ds, columns)?;
    let chains: Vec<Chain> = match scope {
        ImputationScope::PooledWithIndicator => {
            let rows: Vec<usize> = (0..ds.n_rows()).collect();
            let extra = cohort_dummies(ds, &rows);
            vec![Chain { ds, rows, vars: vars.clone(), extra, label: "all cohorts".into() }]
        }
        ImputationScope::PerCohort => (0..ds.cohort_ids.len())
            .map(|k| Chain {
                ds,
                rows: (0..ds.n_rows()).filter(|&r| ds.cohort[r] == k).collect(),
                vars: vars.clone(),
                extra: Vec::new(),
                label: ds.cohort_ids[k].clone(),
            })
            .filter(|c| !c.rows.is_empty())
            .collect(),
    };
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut out = ds.clone();
            for (k, chain) in chains.iter().enumerate() {
                let mut rng = seed::rng(seed::derive_path(seed, &[i as u64, k as u64]));
                for (j, r, v) in chain.run(&mut rng)? {
                    out.values[j][r] = Some(v);
                }
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubinResult {
    pub theta: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    /// Barnard-Rubin degrees of freedom; infinite when nothing is missing
    /// and no complete-data df is given.
    pub df: f64,
    pub m: usize,
}

/// Pools `(estimate, variance)` pairs. `complete_df` is the degrees of
/// freedom the analysis would have without missing data.
pub fn rubin_pool(estimates: &[(f64, f64)], complete_df: Option<f64>) -> Result<RubinResult, EstimatorError> {
    let m = estimates.len();
    if m < 2 {
        return Err(EstimatorError::InvalidInput(format!("Rubin's rules need m >= 2, got {m}")));
    }
    let mf = m as f64;
    // Shifted mean: identical estimates pool to exactly that value.
    let base = estimates[0].0;
    let theta = base + estimates.iter().map(|e| e.0 - base).sum::<f64>() / mf;
    let within = estimates.iter().map(|e| e.1).sum::<f64>() / mf;
    let between = estimates.iter().map(|e| (e.0 - theta).powi(2)).sum::<f64>() / (mf - 1.0);
    let total = within + (1.0 + 1.0 / mf) * between;
    let lambda = (1.0 + 1.0 / mf) * between / total;
    let df_old = if lambda > 0.0 { (mf - 1.0) / (lambda * lambda) } else { f64::INFINITY };
    let df = match complete_df {
        Some(c) if c.is_finite() => {
            let df_obs = (c + 1.0) / (c + 3.0) * c * (1.0 - lambda);
            if df_old.is_infinite() {
                df_obs
            } else {
                df_old * df_obs / (df_old + df_obs)
            }
        }
        _ => df_old,
    };
    Ok(RubinResult { theta, within, between, total, df, m })
}

/// Imputes, runs `method` on every completed dataset and pools each arm's
/// contrast by Rubin's rules with a t interval.
pub fn mi_estimate(
    ds: &Dataset,
    columns: &[String],
    m: usize,
    scope: ImputationScope,
    a: &Analysis,
    method: Method,
) -> Result<Vec<EffectEstimate>, EstimatorError> {
    let imputed = multiple_impute(ds, columns, m, scope, seed::derive(a.seed, u64::MAX))?;
    let mut per: Vec<Vec<EffectEstimate>> = Vec::with_capacity(m);
    for (i, d) in imputed.iter().enumerate() {
        let local = a.clone().seed(seed::derive(a.seed, i as u64));
        per.push(estimate(d, &local, method)?);
    }
    let mut out = Vec::new();
    for j in 0..per[0].len() {
        let first = &per[0][j];
        let pairs: Vec<(f64, f64)> = per.iter().map(|e| (e[j].log_point, e[j].se_log * e[j].se_log)).collect();
        let complete_df = (first.n_used as f64 - per[0].len() as f64 - 1.0).max(1.0);
        let r = rubin_pool(&pairs, Some(complete_df))?;
        let se = r.total.sqrt();
        let q = if r.df.is_finite() {
            StudentsT::new(0.0, 1.0, r.df).map(|t| t.inverse_cdf(0.975)).unwrap_or(1.959_963_984_540_054)
        } else {
            1.959_963_984_540_054
        };
        let (lo, hi) = (r.theta - q * se, r.theta + q * se);
        let ratio = first.estimand.is_ratio();
        let tr = |v: f64| if ratio { v.exp() } else { v };
        let mut warnings: Vec<String> = per.iter().flat_map(|e| e[j].warnings.clone()).collect();
        warnings.sort();
        warnings.dedup();
        if r.between == 0.0 {
            warnings.push("imputations are identical; no missing information".into());
        }
        out.push(EffectEstimate {
            method: format!("{}+mi", first.method),
            estimand: first.estimand,
            scope: first.scope,
            cohort: first.cohort.clone(),
            arm: first.arm.clone(),
            point: tr(r.theta),
            log_point: r.theta,
            se_log: se,
            ci_low: tr(lo),
            ci_high: tr(hi),
            n_used: first.n_used,
            converged: per.iter().all(|e| e[j].converged),
            warnings,
        });
    }
    Ok(out)
}
