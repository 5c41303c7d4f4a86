//! Rows collapsed to unique (covariates, arm, outcome, participation)
//! patterns with counts. Every estimator works on these weighted cells, so
//! bootstrap resampling only redraws the counts.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::{Analysis, EstimatorError, COHORT_COVARIATE, POOLED_TAG};
use crate::scm::Dataset;

pub(crate) struct Cells {
    pub names: Vec<String>,
    /// Covariate name to its expanded column indices.
    pub groups: Vec<(String, Vec<usize>)>,
    pub x: Vec<Vec<f64>>,
    pub arm: Vec<usize>,
    /// NaN for non-participants when participation weighting is requested.
    pub y: Vec<f64>,
    pub selected: Vec<bool>,
    pub count: Vec<f64>,
    pub arms: Vec<String>,
    pub cohort_tag: String,
}

fn fmt_code(v: f64) -> String {
    format!("{v}")
}

/// Expanded columns of one covariate: (names, per-row values).
fn expand(ds: &Dataset, name: &str, rows: &[usize]) -> Result<(Vec<String>, Vec<Vec<f64>>), EstimatorError> {
    if name == COHORT_COVARIATE {
        let mut present: Vec<usize> = rows.iter().map(|&r| ds.cohort[r]).collect();
        present.sort_unstable();
        present.dedup();
        let names = present[1.min(present.len())..].iter().map(|&k| format!("cohort={}", ds.cohort_ids[k])).collect();
        let vals = present[1.min(present.len())..]
            .iter()
            .map(|&k| rows.iter().map(|&r| (ds.cohort[r] == k) as u8 as f64).collect())
            .collect();
        return Ok((names, vals));
    }
    let j = ds.column_index(name).ok_or_else(|| EstimatorError::UnknownColumn(name.to_string()))?;
    let col = &ds.values[j];
    let missing = rows.iter().filter(|&&r| col[r].is_none()).count();
    if missing > 0 {
        return Err(EstimatorError::MissingValues { column: name.to_string(), rows: missing });
    }
    let values: Vec<f64> = rows.iter().map(|&r| col[r].unwrap()).collect();
    match ds.levels.get(name) {
        Some(levels) if levels.len() > 2 => {
            let mut present = values.clone();
            present.sort_by(f64::total_cmp);
            present.dedup();
            let rest = &present[1.min(present.len())..];
            let label = |v: f64| levels.get(v as usize).cloned().unwrap_or_else(|| fmt_code(v));
            Ok((
                rest.iter().map(|&v| format!("{name}={}", label(v))).collect(),
                rest.iter().map(|&v| values.iter().map(|&x| (x == v) as u8 as f64).collect()).collect(),
            ))
        }
        _ => Ok((vec![name.to_string()], vec![values])),
    }
}

impl Cells {
    pub fn build(ds: &Dataset, a: &Analysis) -> Result<Cells, EstimatorError> {
        let use_selection = a.participation.is_some();
        let rows: Vec<usize> = (0..ds.n_rows()).collect();
        if rows.is_empty() {
            return Err(EstimatorError::Empty);
        }
        let analysed: Vec<bool> = rows.iter().map(|&r| !use_selection || ds.selected[r]).collect();
        if !analysed.iter().any(|&b| b) {
            return Err(EstimatorError::Empty);
        }

        let mut covs: Vec<String> = Vec::new();
        let participation = a.participation.as_deref().unwrap_or(&[]);
        if participation.contains(&a.outcome) {
            return Err(EstimatorError::InvalidInput(format!(
                "participation model cannot use the outcome `{}`, which non-participants lack",
                a.outcome
            )));
        }
        // The exposure enters the participation model through arm indicators.
        let participation = participation.iter().filter(|c| **c != a.exposure);
        for c in a.covariates.iter().chain(a.propensity_covariates()).chain(participation) {
            if !covs.contains(c) {
                covs.push(c.clone());
            }
        }
        let mut names = Vec::new();
        let mut groups = Vec::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for c in &covs {
            if *c == a.exposure || *c == a.outcome {
                return Err(EstimatorError::InvalidInput(format!("`{c}` cannot be both a covariate and an endpoint")));
            }
            let (n, v) = expand(ds, c, &rows)?;
            groups.push((c.clone(), (names.len()..names.len() + n.len()).collect()));
            names.extend(n);
            columns.extend(v);
        }

        let xj = ds.column_index(&a.exposure).ok_or_else(|| EstimatorError::UnknownColumn(a.exposure.clone()))?;
        let yj = ds.column_index(&a.outcome).ok_or_else(|| EstimatorError::UnknownColumn(a.outcome.clone()))?;
        let xmiss = rows.iter().filter(|&&r| ds.values[xj][r].is_none()).count();
        if xmiss > 0 {
            return Err(EstimatorError::MissingValues { column: a.exposure.clone(), rows: xmiss });
        }
        let ymiss = rows.iter().filter(|&&r| analysed[r] && ds.values[yj][r].is_none()).count();
        if ymiss > 0 {
            return Err(EstimatorError::MissingValues { column: a.outcome.clone(), rows: ymiss });
        }
        if rows.iter().any(|&r| analysed[r] && !matches!(ds.values[yj][r], Some(v) if v == 0.0 || v == 1.0)) {
            return Err(EstimatorError::InvalidInput(format!("outcome `{}` must be coded 0/1", a.outcome)));
        }

        let mut codes: Vec<f64> = rows.iter().map(|&r| ds.values[xj][r].unwrap()).collect();
        codes.sort_by(f64::total_cmp);
        codes.dedup();
        if codes.len() < 2 {
            return Err(EstimatorError::TooFewArms(codes.len()));
        }
        let arm_labels: Vec<String> = codes
            .iter()
            .map(|&v| match ds.levels.get(&a.exposure) {
                Some(l) if (v as usize) < l.len() => l[v as usize].clone(),
                _ => fmt_code(v),
            })
            .collect();

        let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut cells = Cells {
            names,
            groups,
            x: Vec::new(),
            arm: Vec::new(),
            y: Vec::new(),
            selected: Vec::new(),
            count: Vec::new(),
            arms: arm_labels,
            cohort_tag: String::new(),
        };
        for (i, &r) in rows.iter().enumerate() {
            let x: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            let arm = codes.binary_search_by(|c| c.total_cmp(&ds.values[xj][r].unwrap())).unwrap();
            let y = if analysed[r] { ds.values[yj][r].unwrap() } else { f64::NAN };
            let mut key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            key.extend([arm as u64, y.to_bits(), analysed[r] as u64]);
            let c = *index.entry(key).or_insert_with(|| {
                cells.x.push(x);
                cells.arm.push(arm);
                cells.y.push(y);
                cells.selected.push(analysed[r]);
                cells.count.push(0.0);
                cells.count.len() - 1
            });
            cells.count[c] += 1.0;
        }
        let mut present: Vec<usize> = rows.iter().map(|&r| ds.cohort[r]).collect();
        present.sort_unstable();
        present.dedup();
        cells.cohort_tag = if present.len() == 1 { ds.cohort_ids[present[0]].clone() } else { POOLED_TAG.into() };
        Ok(cells)
    }

    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    /// Expanded column indices of the named covariates.
    pub fn cols(&self, covs: &[String]) -> Vec<usize> {
        covs.iter()
            .flat_map(|c| self.groups.iter().find(|(n, _)| n == c).map(|g| g.1.clone()).unwrap_or_default())
            .collect()
    }

    pub fn stratum_label(&self, cell: usize, cols: &[usize]) -> String {
        if cols.is_empty() {
            return "(all rows)".into();
        }
        cols.iter().map(|&j| format!("{}={}", self.names[j], self.x[cell][j])).collect::<Vec<_>>().join(", ")
    }

    /// Multinomial redraw of the cell counts with the same total.
    pub fn resample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut left = self.count.iter().sum::<f64>().round() as u64;
        let mut mass: f64 = self.count.iter().sum();
        let mut out = vec![0.0; self.len()];
        for (i, &c) in self.count.iter().enumerate() {
            if left == 0 {
                break;
            }
            let p = if mass > 0.0 { (c / mass).clamp(0.0, 1.0) } else { 1.0 };
            let k = if p >= 1.0 { left } else { Binomial::new(left, p).expect("valid binomial").sample(rng) };
            out[i] = k as f64;
            left -= k;
            mass -= c;
        }
        out
    }
}
