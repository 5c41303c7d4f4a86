//! Small vocabulary types shared across modules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Contrast scale of an effect estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "OR")]
    OddsRatio,
    #[serde(rename = "RR")]
    RiskRatio,
    #[serde(rename = "RD")]
    RiskDifference,
}

impl Measure {
    /// Ratio measures are summarised on the log scale.
    pub fn is_ratio(self) -> bool {
        !matches!(self, Measure::RiskDifference)
    }

    pub fn short(self) -> &'static str {
        match self {
            Measure::OddsRatio => "OR",
            Measure::RiskRatio => "RR",
            Measure::RiskDifference => "RD",
        }
    }

    /// Contrast of `risk` against `reference` on the analysis scale
    /// (log for ratios, natural for the difference).
    pub fn contrast(self, risk: f64, reference: f64) -> f64 {
        match self {
            Measure::OddsRatio => logit(risk) - logit(reference),
            Measure::RiskRatio => risk.ln() - reference.ln(),
            Measure::RiskDifference => risk - reference,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Measure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "OR" => Ok(Measure::OddsRatio),
            "RR" => Ok(Measure::RiskRatio),
            "RD" => Ok(Measure::RiskDifference),
            _ => Err(format!("unknown measure `{s}` (expected OR, RR or RD)")),
        }
    }
}

/// Population-averaged versus covariate-conditional contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimandScope {
    Marginal,
    Conditional,
}

impl fmt::Display for EstimandScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimandScope::Marginal => "marginal",
            EstimandScope::Conditional => "conditional",
        })
    }
}

/// Where multiple imputation runs when several cohorts are analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImputationScope {
    PerCohort,
    PooledWithIndicator,
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_inverts_logit() {
        for p in [1e-6, 0.1, 0.5, 0.73, 0.999] {
            assert!((expit(logit(p)) - p).abs() < 1e-12);
        }
        assert!(expit(-800.0) >= 0.0 && expit(800.0) <= 1.0);
    }

    #[test]
    fn contrasts() {
        assert!((Measure::OddsRatio.contrast(0.5, 0.5)).abs() < 1e-15);
        assert!((Measure::RiskRatio.contrast(0.4, 0.2) - 2f64.ln()).abs() < 1e-15);
        assert!((Measure::RiskDifference.contrast(0.4, 0.1) - 0.3).abs() < 1e-15);
        assert_eq!("rr".parse::<Measure>(), Ok(Measure::RiskRatio));
    }
}
