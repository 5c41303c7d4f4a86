//! Matrix-inversion correction of a 2x2 table for exposure misclassification.

use serde::{Deserialize, Serialize};

use super::AuditError;

/// Exposure-by-outcome counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoByTwo {
    pub exposed_cases: f64,
    pub exposed_noncases: f64,
    pub unexposed_cases: f64,
    pub unexposed_noncases: f64,
}

impl TwoByTwo {
    pub fn new(exposed_cases: f64, exposed_noncases: f64, unexposed_cases: f64, unexposed_noncases: f64) -> Self {
        TwoByTwo { exposed_cases, exposed_noncases, unexposed_cases, unexposed_noncases }
    }

    pub fn odds_ratio(&self) -> f64 {
        self.exposed_cases * self.unexposed_noncases / (self.exposed_noncases * self.unexposed_cases)
    }

    fn cells(&self) -> [f64; 4] {
        [self.exposed_cases, self.exposed_noncases, self.unexposed_cases, self.unexposed_noncases]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassificationCorrection {
    pub observed: TwoByTwo,
    pub corrected: TwoByTwo,
    pub observed_or: f64,
    pub corrected_or: f64,
}

fn check_rates(sensitivity: f64, specificity: f64) -> Result<(), AuditError> {
    for (name, v) in [("sensitivity", sensitivity), ("specificity", specificity)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(AuditError::Inconsistent(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok(())
}

/// Expected observed counts when the true exposure is recorded with the
/// given sensitivity and specificity, independently of the outcome.
pub fn misclassify_expected(truth: &TwoByTwo, sensitivity: f64, specificity: f64) -> Result<TwoByTwo, AuditError> {
    check_rates(sensitivity, specificity)?;
    let flip = |exposed: f64, unexposed: f64| {
        (sensitivity * exposed + (1.0 - specificity) * unexposed, (1.0 - sensitivity) * exposed + specificity * unexposed)
    };
    let (a, c) = flip(truth.exposed_cases, truth.unexposed_cases);
    let (b, d) = flip(truth.exposed_noncases, truth.unexposed_noncases);
    Ok(TwoByTwo::new(a, b, c, d))
}

/// Back-calculates true exposure counts within each outcome stratum.
pub fn misclassification_correct(
    observed: &TwoByTwo,
    sensitivity: f64,
    specificity: f64,
) -> Result<MisclassificationCorrection, AuditError> {
    check_rates(sensitivity, specificity)?;
    let denom = sensitivity + specificity - 1.0;
    if denom.abs() < 1e-12 {
        return Err(AuditError::NonInvertible);
    }
    if denom < 0.0 {
        return Err(AuditError::Inconsistent("sensitivity + specificity must exceed 1".into()));
    }
    if observed.cells().iter().any(|&v| v.is_nan() || v < 0.0) {
        return Err(AuditError::Inconsistent("observed counts must be non-negative".into()));
    }
    let solve = |exposed: f64, unexposed: f64| {
        let total = exposed + unexposed;
        let t = (exposed - (1.0 - specificity) * total) / denom;
        (t, total - t)
    };
    let (a, c) = solve(observed.exposed_cases, observed.unexposed_cases);
    let (b, d) = solve(observed.exposed_noncases, observed.unexposed_noncases);
    let corrected = TwoByTwo::new(a, b, c, d);
    if corrected.cells().iter().any(|&v| v < 0.0) {
        return Err(AuditError::Inconsistent(format!("corrected table has a negative cell: {corrected:?}")));
    }
    Ok(MisclassificationCorrection { observed: *observed, corrected, observed_or: observed.odds_ratio(), corrected_or: corrected.odds_ratio() })
}
