//! Effect estimation on multi-cohort datasets: logistic regression,
//! conditional and standardised (IPW, g-computation, AIPW) estimators,
//! pooled and per-cohort analyses, two-step meta-analysis, interaction
//! tests, complete-case analysis and multiple imputation.

mod cells;
mod effects;
mod logistic;
mod meta;
mod missing;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{EstimandScope, Measure};

pub use effects::{
    aipw, conditional_or, crude, estimate, g_computation, heterogeneity_interaction, ipw_marginal, pooled_analysis,
    replication_analysis, CohortResult, InteractionTerm, MIN_ARM_ROWS,
};
pub use logistic::{fit_logistic, FitResult, DIVERGENCE_BOUND, MAX_ITERATIONS};
pub use meta::{meta_fixed_random, replication_from_reported, reported_table, MetaInput, MetaResult, ReportedEstimate};
pub use missing::{complete_case, mi_estimate, multiple_impute, rubin_pool, RubinResult, BURN_IN_CYCLES};

/// Covariate name that refers to the dataset's cohort membership.
pub const COHORT_COVARIATE: &str = "cohort";
/// Cohort tag of estimates computed on more than one cohort.
pub const POOLED_TAG: &str = "pooled";
/// Default number of bootstrap resamples for marginal estimators.
pub const DEFAULT_BOOTSTRAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Unadjusted marginal contrast.
    Crude,
    /// Logistic regression coefficient(s) of the arm indicators.
    Conditional,
    Ipw,
    GComputation,
    Aipw,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Crude => "crude",
            Method::Conditional => "conditional",
            Method::Ipw => "ipw",
            Method::GComputation => "g-computation",
            Method::Aipw => "aipw",
        }
    }

    pub fn scope(self) -> EstimandScope {
        match self {
            Method::Conditional => EstimandScope::Conditional,
            _ => EstimandScope::Marginal,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "crude" => Ok(Method::Crude),
            "conditional" | "regression" => Ok(Method::Conditional),
            "ipw" => Ok(Method::Ipw),
            "g-computation" | "gcomputation" | "gcomp" => Ok(Method::GComputation),
            "aipw" => Ok(Method::Aipw),
            _ => Err(format!("unknown method `{s}`")),
        }
    }
}

/// Functional form of the outcome model used for standardisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum OutcomeModel {
    #[default]
    MainEffects,
    /// Main effects plus arm-by-covariate products.
    Interaction,
    /// Empirical outcome mean in every arm-by-covariate cell.
    Saturated,
}

/// What to estimate and how. Covariate names are dataset columns or
/// [`COHORT_COVARIATE`]; categorical columns with more than two levels
/// and the cohort enter as indicator sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub exposure: String,
    pub outcome: String,
    /// Outcome-model (and default propensity-model) covariates.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Propensity-model covariates when they differ from `covariates`.
    #[serde(default)]
    pub propensity: Option<Vec<String>>,
    /// When set, non-participants stay in the data and participants are
    /// weighted by the inverse of P(selected | these covariates).
    #[serde(default)]
    pub participation: Option<Vec<String>>,
    #[serde(default = "default_measure")]
    pub measure: Measure,
    #[serde(default)]
    pub outcome_model: OutcomeModel,
    #[serde(default)]
    pub stabilized: bool,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_measure() -> Measure {
    Measure::OddsRatio
}

fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}

impl Analysis {
    pub fn new(exposure: &str, outcome: &str) -> Self {
        Analysis {
            exposure: exposure.into(),
            outcome: outcome.into(),
            covariates: Vec::new(),
            propensity: None,
            participation: None,
            measure: Measure::OddsRatio,
            outcome_model: OutcomeModel::MainEffects,
            stabilized: false,
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
        }
    }

    pub fn covariates<S: AsRef<str>>(mut self, covs: &[S]) -> Self {
        self.covariates = covs.iter().map(|c| c.as_ref().to_string()).collect();
        self
    }

    pub fn propensity<S: AsRef<str>>(mut self, covs: &[S]) -> Self {
        self.propensity = Some(covs.iter().map(|c| c.as_ref().to_string()).collect());
        self
    }

    pub fn participation<S: AsRef<str>>(mut self, covs: &[S]) -> Self {
        self.participation = Some(covs.iter().map(|c| c.as_ref().to_string()).collect());
        self
    }

    pub fn measure(mut self, m: Measure) -> Self {
        self.measure = m;
        self
    }

    pub fn outcome_model(mut self, m: OutcomeModel) -> Self {
        self.outcome_model = m;
        self
    }

    pub fn stabilized(mut self, s: bool) -> Self {
        self.stabilized = s;
        self
    }

    pub fn bootstrap(mut self, b: usize) -> Self {
        self.bootstrap = b;
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }

    pub(crate) fn propensity_covariates(&self) -> &[String] {
        self.propensity.as_deref().unwrap_or(&self.covariates)
    }

    /// Copy with the cohort added to the outcome and propensity covariates.
    pub fn with_cohort_indicator(&self) -> Analysis {
        let mut a = self.clone();
        let add = |v: &mut Vec<String>| {
            if !v.iter().any(|c| c == COHORT_COVARIATE) {
                v.push(COHORT_COVARIATE.into());
            }
        };
        add(&mut a.covariates);
        if let Some(p) = a.propensity.as_mut() {
            add(p);
        }
        a
    }
}

/// One arm-versus-comparator contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub method: String,
    pub estimand: Measure,
    pub scope: EstimandScope,
    /// Cohort id, or [`POOLED_TAG`].
    pub cohort: String,
    pub arm: String,
    /// Natural scale.
    pub point: f64,
    /// Log scale for ratios, natural scale for the difference.
    pub log_point: f64,
    /// Standard error on the scale of `log_point`.
    pub se_log: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_used: usize,
    pub converged: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EffectEstimate {
    /// Fills point and 95% Wald interval from an analysis-scale value and SE.
    pub(crate) fn from_scale(measure: Measure, value: f64, se: f64) -> (f64, f64, f64) {
        let z = 1.959_963_984_540_054;
        let (lo, hi) = (value - z * se, value + z * se);
        if measure.is_ratio() {
            (value.exp(), lo.exp(), hi.exp())
        } else {
            (value, lo, hi)
        }
    }

    pub fn covers(&self, truth_log: f64) -> bool {
        let z = 1.959_963_984_540_054;
        (self.log_point - truth_log).abs() <= z * self.se_log
    }

    pub fn csv_header() -> &'static str {
        "method,estimand,scope,cohort,arm,point,ci_low,ci_high,se_log,n_used,converged,warnings"
    }

    pub fn csv_row(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            quote(&self.method),
            self.estimand,
            self.scope,
            quote(&self.cohort),
            quote(&self.arm),
            self.point,
            self.ci_low,
            self.ci_high,
            self.se_log,
            self.n_used,
            self.converged,
            quote(&self.warnings.join("; "))
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{column}` has {rows} missing value(s); choose a missing-data strategy first")]
    MissingValues { column: String, rows: usize },
    #[error("design matrix is rank deficient (rank {rank} of {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },
    #[error("exposure needs at least two arms, found {0}")]
    TooFewArms(usize),
    #[error("positivity violated in strata: {}", .0.join("; "))]
    Positivity(Vec<String>),
    #[error("no rows to analyse")]
    Empty,
    #[error("{0}")]
    InvalidInput(String),
    #[error("needs exactly two cohorts, found {0}")]
    NeedTwoCohorts(usize),
    #[error("imputable column `{column}` is entirely missing in cohort `{cohort}`")]
    FullyMissing { column: String, cohort: String },
    #[error("meta-analysis input {0} has a non-positive standard error")]
    NonPositiveSe(usize),
}
