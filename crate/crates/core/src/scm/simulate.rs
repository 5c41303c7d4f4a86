use std::collections::BTreeSet;

use rand::Rng;

use super::{CohortConfig, Compiled, Dataset, Kernel, Missingness, ScmError, StructuralModel};
use crate::dag::NodeKind;
use crate::seed;
use crate::types::expit;

enum MissPlan {
    Mcar(f64),
    Mar { intercept: f64, terms: Vec<(usize, f64)> },
}

fn check_cohort(c: &CohortConfig, compiled: &Compiled) -> Result<Vec<(usize, MissPlan)>, ScmError> {
    let bad = |msg: String| ScmError::BadCohort { cohort: c.id.clone(), msg };
    if c.n == 0 {
        return Err(bad("n must be at least 1".into()));
    }
    if let Some(sel) = &c.selection {
        compiled.index_of(sel).ok_or_else(|| bad(format!("selection node `{sel}` does not exist")))?;
    }
    let missing_cols: BTreeSet<&str> = c.missingness.keys().map(String::as_str).collect();
    let mut plans = Vec::new();
    for (col, m) in &c.missingness {
        let j = compiled.index_of(col).ok_or_else(|| bad(format!("missingness on unknown node `{col}`")))?;
        if compiled.kinds[j] == NodeKind::CohortIndicator {
            return Err(bad("the cohort indicator cannot be missing".into()));
        }
        let plan = match m {
            Missingness::Mcar { rate } => {
                if !(0.0..=1.0).contains(rate) {
                    return Err(bad(format!("missingness rate for `{col}` outside [0, 1]")));
                }
                MissPlan::Mcar(*rate)
            }
            Missingness::Mar { intercept, coefficients } => {
                let mut terms = Vec::new();
                for (k, &b) in coefficients {
                    let i = compiled.index_of(k).ok_or_else(|| bad(format!("MAR predictor `{k}` does not exist")))?;
                    if missing_cols.contains(k.as_str()) {
                        return Err(bad(format!("MAR predictor `{k}` is itself incomplete")));
                    }
                    terms.push((i, b));
                }
                MissPlan::Mar { intercept: *intercept, terms }
            }
        };
        plans.push((j, plan));
    }
    Ok(plans)
}

/// Draws one row by ancestral sampling; `cohort` feeds any cohort-indicator root.
pub(crate) fn draw_row<R: Rng>(c: &Compiled, cohort: usize, vals: &mut [f64], rng: &mut R) {
    for &i in &c.order {
        vals[i] = match &c.kernels[i] {
            Kernel::Cohort(_) => cohort as f64,
            Kernel::Table { .. } => c.kernels[i].lookup(vals),
            k => {
                let p = k.p_one(vals).expect("stochastic kernel");
                (rng.gen::<f64>() < p) as u8 as f64
            }
        };
    }
}

/// Ancestral sampling per cohort with the cohort's overrides, then
/// selection flags, then missingness. Cohort `k` in config order draws
/// from its own stream derived from `seed`.
pub fn simulate(model: &StructuralModel, cohorts: &[CohortConfig], seed: u64) -> Result<Dataset, ScmError> {
    let base = Compiled::new(model)?;
    let columns: Vec<usize> =
        (0..base.ids.len()).filter(|&i| base.kinds[i] != NodeKind::CohortIndicator).collect();
    let total: usize = cohorts.iter().map(|c| c.n).sum();
    let mut ds = Dataset {
        columns: columns.iter().map(|&i| base.ids[i].clone()).collect(),
        cohort_ids: cohorts.iter().map(|c| c.id.clone()).collect(),
        cohort: Vec::with_capacity(total),
        values: vec![Vec::with_capacity(total); columns.len()],
        selected: Vec::with_capacity(total),
        levels: Default::default(),
    };
    let mut seen = BTreeSet::new();
    for (k, cfg) in cohorts.iter().enumerate() {
        if !seen.insert(cfg.id.as_str()) {
            return Err(ScmError::BadCohort { cohort: cfg.id.clone(), msg: "duplicate cohort id".into() });
        }
        let compiled = Compiled::new(&model.with_overrides(&cfg.overrides)?)?;
        let miss = check_cohort(cfg, &compiled)?;
        let sel = cfg.selection.as_ref().and_then(|s| compiled.index_of(s));
        let col_pos: Vec<Option<usize>> =
            (0..compiled.ids.len()).map(|i| columns.iter().position(|&c| c == i)).collect();
        let mut rng = seed::rng(seed::derive(seed, k as u64));
        let mut vals = vec![0.0; compiled.ids.len()];
        for _ in 0..cfg.n {
            draw_row(&compiled, k, &mut vals, &mut rng);
            let mut missing = vec![false; compiled.ids.len()];
            for (j, plan) in &miss {
                let p = match plan {
                    MissPlan::Mcar(r) => *r,
                    MissPlan::Mar { intercept, terms } => {
                        expit(terms.iter().fold(*intercept, |acc, &(i, b)| acc + b * vals[i]))
                    }
                };
                missing[*j] = rng.gen::<f64>() < p;
            }
            for (i, pos) in col_pos.iter().enumerate() {
                if let Some(p) = pos {
                    ds.values[*p].push(if missing[i] { None } else { Some(vals[i]) });
                }
            }
            ds.cohort.push(k);
            ds.selected.push(sel.is_none_or(|s| vals[s] != 0.0));
        }
    }
    Ok(ds)
}
