//! Monte Carlo bias benchmarks: estimator configurations swept over
//! simulated scenarios and compared with exact target-trial truth, plus a
//! point correction for exposure misclassification.

mod qba;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    complete_case, estimate, mi_estimate, Analysis, EffectEstimate, EstimatorError, Method, OutcomeModel, COHORT_COVARIATE,
    DEFAULT_BOOTSTRAP,
};
use crate::scm::{
    restrict_to_selected, scenario, simulate, true_effect_pooled, Dataset, Estimand, Missingness, Scenario, ScmError,
};
use crate::seed;
use crate::types::{EstimandScope, ImputationScope, Measure};

pub use qba::{misclassification_correct, misclassify_expected, MisclassificationCorrection, TwoByTwo};

/// |bias| above this many Monte Carlo SEs counts as bias present.
pub const BIAS_PRESENT_Z: f64 = 4.0;
/// |bias| below this many Monte Carlo SEs counts as bias absent.
pub const BIAS_ABSENT_Z: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("invalid benchmark spec: {0}")]
    InvalidSpec(String),
    #[error("scenario `{0}` has a single cohort; a pooling contrast needs at least two")]
    SingleCohort(String),
    #[error("misclassification matrix is non-invertible (sensitivity + specificity = 1)")]
    NonInvertible,
    #[error("parameters inconsistent with data: {0}")]
    Inconsistent(String),
}

/// Run-size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Smoke,
    Acceptance,
}

impl Profile {
    /// (replications, rows per cohort).
    pub fn sizes(self) -> (usize, usize) {
        match self {
            Profile::Smoke => (20, 2_000),
            Profile::Acceptance => (200, 20_000),
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smoke" => Ok(Profile::Smoke),
            "acceptance" => Ok(Profile::Acceptance),
            _ => Err(format!("unknown profile `{s}` (expected smoke or acceptance)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    Custom(Box<Scenario>),
}

impl ScenarioRef {
    pub fn resolve(&self) -> Result<Scenario, AuditError> {
        match self {
            ScenarioRef::Named(id) => Ok(scenario(id)?),
            ScenarioRef::Custom(s) => Ok((**s).clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "strategy")]
pub enum MissingData {
    /// Analyse as is; missing values make the replication fail.
    #[default]
    None,
    CompleteCase,
    MultipleImputation { m: usize, scope: ImputationScope },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub label: String,
    pub method: Method,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub propensity: Option<Vec<String>>,
    #[serde(default)]
    pub outcome_model: OutcomeModel,
    #[serde(default)]
    pub missing_data: MissingData,
    #[serde(default)]
    pub cohort_indicator: bool,
    /// Analyse participants only.
    #[serde(default)]
    pub restrict_to_selected: bool,
    /// Weight participants by inverse participation probability.
    #[serde(default)]
    pub participation: Option<Vec<String>>,
    /// Defaults to the scenario's analysed exposure.
    #[serde(default)]
    pub exposure: Option<String>,
    /// Extra variables for the imputation model only.
    #[serde(default)]
    pub auxiliary: Vec<String>,
}

impl EstimatorConfig {
    pub fn new(label: &str, method: Method, covariates: &[&str]) -> Self {
        EstimatorConfig {
            label: label.into(),
            method,
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
            propensity: None,
            outcome_model: OutcomeModel::MainEffects,
            missing_data: MissingData::None,
            cohort_indicator: false,
            restrict_to_selected: false,
            participation: None,
            exposure: None,
            auxiliary: Vec::new(),
        }
    }

    /// Columns an analysis reads, without the cohort pseudo-covariate.
    fn columns(&self, exposure: &str, outcome: &str) -> Vec<String> {
        let mut cols = vec![exposure.to_string(), outcome.to_string()];
        let extra = self.propensity.iter().flatten().chain(self.participation.iter().flatten());
        for c in self.covariates.iter().chain(extra).chain(&self.auxiliary) {
            if c != COHORT_COVARIATE && !cols.contains(c) {
                cols.push(c.clone());
            }
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: ScenarioRef,
    pub estimators: Vec<EstimatorConfig>,
    pub replications: usize,
    /// Overrides every cohort's size when set.
    #[serde(default)]
    pub n_per_cohort: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Nodes deleted from the generating model (e.g. an unmeasured confounder).
    #[serde(default)]
    pub remove_nodes: Vec<String>,
    /// Parameter overrides applied to every cohort.
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    /// Missingness added to every cohort.
    #[serde(default)]
    pub missingness: BTreeMap<String, Missingness>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Keep the per-replication log.
    #[serde(default)]
    pub raw_log: bool,
}

fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}

impl ScenarioSpec {
    pub fn new(scenario_id: &str, estimators: Vec<EstimatorConfig>, replications: usize, seed: u64) -> Self {
        ScenarioSpec {
            scenario: ScenarioRef::Named(scenario_id.into()),
            estimators,
            replications,
            n_per_cohort: None,
            seed,
            remove_nodes: Vec::new(),
            overrides: BTreeMap::new(),
            missingness: BTreeMap::new(),
            bootstrap: DEFAULT_BOOTSTRAP,
            raw_log: false,
        }
    }

    /// Scenario with removals, overrides, missingness and sizes applied.
    pub fn prepared(&self) -> Result<Scenario, AuditError> {
        if self.replications == 0 {
            return Err(AuditError::InvalidSpec("replications must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(AuditError::InvalidSpec("no estimator configurations".into()));
        }
        let mut s = self.scenario.resolve()?;
        for node in &self.remove_nodes {
            if s.model.dag.nodes.iter().all(|n| n.id != *node) {
                return Err(ScmError::UnknownNode(node.clone()).into());
            }
            s.model = s.model.without_node(node);
        }
        for c in &mut s.cohorts {
            if let Some(n) = self.n_per_cohort {
                c.n = n;
            }
            c.overrides.extend(self.overrides.iter().map(|(k, v)| (k.clone(), *v)));
            c.missingness.extend(self.missingness.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        s.model.check()?;
        for c in &s.cohorts {
            s.model.with_overrides(&c.overrides)?.check()?;
        }
        Ok(s)
    }
}

/// Aggregate over replications for one estimator configuration. Log-OR
/// scale throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub label: String,
    pub method: String,
    pub scope: EstimandScope,
    pub truth: f64,
    pub mean: f64,
    pub median: f64,
    pub bias: f64,
    pub sd: f64,
    /// sd / sqrt(n_ok).
    pub mc_se: f64,
    /// bias / mc_se.
    pub z: f64,
    pub bias_present: bool,
    pub bias_absent: bool,
    pub coverage: f64,
    pub mean_ci_width: f64,
    pub n_ok: usize,
    pub nonconverged: usize,
    pub failed: usize,
    pub warnings: Vec<String>,
}

impl BiasRow {
    pub fn csv_header() -> &'static str {
        "label,method,scope,truth,mean,median,bias,sd,mc_se,z,bias_present,bias_absent,coverage,mean_ci_width,n_ok,nonconverged,failed,warnings"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            quote(&self.label),
            quote(&self.method),
            self.scope,
            self.truth,
            self.mean,
            self.median,
            self.bias,
            self.sd,
            self.mc_se,
            self.z,
            self.bias_present,
            self.bias_absent,
            self.coverage,
            self.mean_ci_width,
            self.n_ok,
            self.nonconverged,
            self.failed,
            quote(&self.warnings.join("; "))
        )
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One estimator result in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub replication: usize,
    pub label: String,
    pub log_point: Option<f64>,
    pub se_log: Option<f64>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub scenario: String,
    pub description: String,
    pub replications: usize,
    pub n_per_cohort: Vec<usize>,
    pub seed: u64,
    pub thresholds: String,
    pub rows: Vec<BiasRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<RawRecord>>,
}

impl BiasReport {
    pub fn row(&self, label: &str) -> Option<&BiasRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("scenario,{}\n", BiasRow::csv_header());
        for r in &self.rows {
            let _ = writeln!(s, "{},{}", quote(&self.scenario), r.csv_row());
        }
        s
    }

    pub fn raw_csv(&self) -> Option<String> {
        let raw = self.raw.as_ref()?;
        let mut s = String::from("scenario,replication,label,log_point,se_log,converged,error\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in raw {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                quote(&self.scenario),
                r.replication,
                quote(&r.label),
                opt(r.log_point),
                opt(r.se_log),
                r.converged,
                quote(r.error.as_deref().unwrap_or(""))
            );
        }
        Some(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Fixed-width table for terminals.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} ({} replications, n per cohort {:?}, seed {})\n",
            self.scenario, self.replications, self.n_per_cohort, self.seed
        );
        let _ = writeln!(
            s,
            "{:<32} {:>9} {:>9} {:>9} {:>8} {:>8} {:>6}  {}",
            "estimator", "truth", "mean", "bias", "mc_se", "coverage", "ok", "verdict"
        );
        for r in &self.rows {
            let verdict = if r.bias_present {
                "bias present"
            } else if r.bias_absent {
                "bias absent"
            } else {
                "inconclusive"
            };
            let _ = writeln!(
                s,
                "{:<32} {:>9.4} {:>9.4} {:>9.4} {:>8.4} {:>8.3} {:>6}  {}",
                r.label, r.truth, r.mean, r.bias, r.mc_se, r.coverage, r.n_ok, verdict
            );
            for w in &r.warnings {
                let _ = writeln!(s, "    warning: {w}");
            }
        }
        s
    }
}

/// Analysis-scale truth for one configuration.
fn truth_for(s: &Scenario, cfg: &EstimatorConfig) -> Result<f64, ScmError> {
    let estimand = match cfg.method.scope() {
        EstimandScope::Marginal => Estimand::Marginal,
        EstimandScope::Conditional => {
            Estimand::Conditional { strata: cfg.covariates.iter().filter(|c| *c != COHORT_COVARIATE).cloned().collect() }
        }
    };
    Ok(true_effect_pooled(&s.model, &s.cohorts, &estimand, Measure::OddsRatio)?.analysis_value)
}

fn analyse(
    ds: &Dataset,
    s: &Scenario,
    cfg: &EstimatorConfig,
    bootstrap: usize,
    seed: u64,
) -> Result<EffectEstimate, EstimatorError> {
    let exposure = cfg.exposure.clone().unwrap_or_else(|| s.analysed_exposure.clone());
    let outcome = s.model.outcome.clone();
    let mut a = Analysis::new(&exposure, &outcome)
        .covariates(&cfg.covariates)
        .outcome_model(cfg.outcome_model)
        .bootstrap(bootstrap)
        .seed(seed);
    a.propensity = cfg.propensity.clone();
    a.participation = cfg.participation.clone();
    if cfg.cohort_indicator {
        a = a.with_cohort_indicator();
    }
    let restricted;
    let data = if cfg.restrict_to_selected {
        restricted = restrict_to_selected(ds);
        &restricted
    } else {
        ds
    };
    let cols = cfg.columns(&exposure, &outcome);
    let out = match cfg.missing_data {
        MissingData::None => estimate(data, &a, cfg.method)?,
        MissingData::CompleteCase => estimate(&complete_case(data, &cols)?, &a, cfg.method)?,
        MissingData::MultipleImputation { m, scope } => mi_estimate(data, &cols, m, scope, &a, cfg.method)?,
    };
    out.into_iter().next().ok_or(EstimatorError::Empty)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn aggregate(cfg: &EstimatorConfig, truth: f64, results: &[Result<EffectEstimate, String>], mut warnings: Vec<String>) -> BiasRow {
    let ok: Vec<&EffectEstimate> = results.iter().filter_map(|r| r.as_ref().ok()).filter(|e| e.converged).collect();
    let nonconverged = results.iter().filter(|r| matches!(r, Ok(e) if !e.converged)).count();
    let failed = results.iter().filter(|r| r.is_err()).count();
    let mut errors: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    errors.sort();
    errors.dedup();
    warnings.extend(errors.iter().take(3).map(|e| format!("replication failed: {e}")));
    let mut est_warnings: Vec<String> = ok.iter().flat_map(|e| e.warnings.iter().cloned()).filter(|w| !w.contains("bootstrap")).collect();
    est_warnings.sort();
    est_warnings.dedup();
    if est_warnings.len() > 3 {
        let extra = est_warnings.len() - 3;
        est_warnings.truncate(3);
        est_warnings.push(format!("{extra} further estimator warning(s)"));
    }
    warnings.extend(est_warnings);
    let n = ok.len() as f64;
    let mut points: Vec<f64> = ok.iter().map(|e| e.log_point).collect();
    let mean = points.iter().sum::<f64>() / n;
    let sd = if ok.len() > 1 { (points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { f64::NAN };
    let mc_se = sd / n.sqrt();
    let bias = mean - truth;
    let z = bias / mc_se;
    let coverage = ok.iter().filter(|e| e.covers(truth)).count() as f64 / n;
    let mean_ci_width = ok.iter().map(|e| 2.0 * 1.959_963_984_540_054 * e.se_log).sum::<f64>() / n;
    BiasRow {
        label: cfg.label.clone(),
        method: ok.first().map_or_else(|| cfg.method.tag().to_string(), |e| e.method.clone()),
        scope: cfg.method.scope(),
        truth,
        mean,
        median: median(&mut points),
        bias,
        sd,
        mc_se,
        z,
        bias_present: z.abs() > BIAS_PRESENT_Z,
        bias_absent: z.abs() < BIAS_ABSENT_Z,
        coverage,
        mean_ci_width,
        n_ok: ok.len(),
        nonconverged,
        failed,
        warnings,
    }
}

/// Simulates `replications` datasets and runs every configuration on each.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<BiasReport, AuditError> {
    let s = spec.prepared()?;
    let has_missing = s.cohorts.iter().any(|c| !c.missingness.is_empty());
    let mut truths = Vec::new();
    let mut warnings = Vec::new();
    for cfg in &spec.estimators {
        let mut w = Vec::new();
        let truth = match truth_for(&s, cfg) {
            Ok(t) => t,
            Err(e) => {
                w.push(format!("no exact truth for this estimand: {e}"));
                f64::NAN
            }
        };
        if matches!(cfg.missing_data, MissingData::MultipleImputation { .. }) && !has_missing {
            w.push("multiple imputation requested but the scenario has no missing data".into());
        }
        if cfg.cohort_indicator && !s.is_multi_cohort() {
            w.push("cohort indicator requested on a single-cohort scenario; it has no effect".into());
        }
        truths.push(truth);
        warnings.push(w);
    }
    let per_rep: Vec<Vec<Result<EffectEstimate, String>>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| {
            let rep_seed = seed::derive_path(spec.seed, &[r as u64]);
            match simulate(&s.model, &s.cohorts, seed::derive(rep_seed, 0)) {
                Ok(ds) => spec
                    .estimators
                    .iter()
                    .enumerate()
                    .map(|(j, cfg)| {
                        analyse(&ds, &s, cfg, spec.bootstrap, seed::derive_path(rep_seed, &[1, j as u64])).map_err(|e| e.to_string())
                    })
                    .collect(),
                Err(e) => spec.estimators.iter().map(|_| Err(e.to_string())).collect(),
            }
        })
        .collect();
    let rows = spec
        .estimators
        .iter()
        .enumerate()
        .map(|(j, cfg)| {
            let results: Vec<Result<EffectEstimate, String>> = per_rep.iter().map(|r| r[j].clone()).collect();
            aggregate(cfg, truths[j], &results, warnings[j].clone())
        })
        .collect();
    let raw = spec.raw_log.then(|| {
        per_rep
            .iter()
            .enumerate()
            .flat_map(|(r, res)| {
                spec.estimators.iter().zip(res).map(move |(cfg, e)| match e {
                    Ok(e) => RawRecord {
                        replication: r,
                        label: cfg.label.clone(),
                        log_point: Some(e.log_point),
                        se_log: Some(e.se_log),
                        converged: e.converged,
                        error: None,
                    },
                    Err(msg) => RawRecord {
                        replication: r,
                        label: cfg.label.clone(),
                        log_point: None,
                        se_log: None,
                        converged: false,
                        error: Some(msg.clone()),
                    },
                })
            })
            .collect()
    });
    Ok(BiasReport {
        scenario: s.id.clone(),
        description: s.description.clone(),
        replications: spec.replications,
        n_per_cohort: s.cohorts.iter().map(|c| c.n).collect(),
        seed: spec.seed,
        thresholds: format!("bias present: |bias| > {BIAS_PRESENT_Z} MC-SE; bias absent: |bias| < {BIAS_ABSENT_Z} MC-SE"),
        rows,
        raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "remedy")]
pub enum Remedy {
    /// Adds the cohort indicator to the estimator's covariates.
    CohortIndicator,
    /// Replaces complete-case analysis with pooled imputation including the
    /// cohort indicator.
    MultipleImputation { m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingContrast {
    pub remedy: Remedy,
    pub without: BiasRow,
    pub with: BiasRow,
    /// 1 - |bias with| / |bias without|.
    pub reduction: f64,
    pub report: BiasReport,
}

/// Runs the single estimator of `spec` with and without `remedy` on the same
/// replications.
pub fn pooling_contrast(spec: &ScenarioSpec, remedy: Remedy) -> Result<PoolingContrast, AuditError> {
    let s = spec.prepared()?;
    if !s.is_multi_cohort() {
        return Err(AuditError::SingleCohort(s.id));
    }
    let [base] = spec.estimators.as_slice() else {
        return Err(AuditError::InvalidSpec("a pooling contrast takes exactly one estimator configuration".into()));
    };
    let mut without = base.clone();
    let mut with = base.clone();
    match remedy {
        Remedy::CohortIndicator => {
            without.cohort_indicator = false;
            with.cohort_indicator = true;
        }
        Remedy::MultipleImputation { m } => {
            without.missing_data = MissingData::CompleteCase;
            with.missing_data = MissingData::MultipleImputation { m, scope: ImputationScope::PooledWithIndicator };
        }
    }
    without.label = format!("{} (without remedy)", base.label);
    with.label = format!("{} (with remedy)", base.label);
    let mut paired = spec.clone();
    paired.estimators = vec![without, with];
    let report = run_scenario(&paired)?;
    let (w0, w1) = (report.rows[0].clone(), report.rows[1].clone());
    let reduction = 1.0 - w1.bias.abs() / w0.bias.abs();
    Ok(PoolingContrast { remedy, without: w0, with: w1, reduction, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_is_reproducible() {
        let mut spec = ScenarioSpec::new("S-1A", vec![EstimatorConfig::new("crude", Method::Crude, &[])], 1, 5);
        spec.n_per_cohort = Some(500);
        let a = run_scenario(&spec).unwrap();
        let b = run_scenario(&spec).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows[0].n_ok, 1);
        assert!(a.rows[0].sd.is_nan());
    }

    #[test]
    fn spec_validation() {
        let spec = ScenarioSpec::new("S-1A", vec![EstimatorConfig::new("crude", Method::Crude, &[])], 0, 5);
        assert!(matches!(run_scenario(&spec), Err(AuditError::InvalidSpec(_))));
        let spec = ScenarioSpec::new("S-7", vec![EstimatorConfig::new("crude", Method::Crude, &[])], 1, 5);
        assert!(matches!(run_scenario(&spec), Err(AuditError::Scm(ScmError::UnknownScenario(_)))));
        let spec = ScenarioSpec::new("S-1A", vec![EstimatorConfig::new("crude", Method::Crude, &[])], 2, 5);
        assert!(matches!(pooling_contrast(&spec, Remedy::CohortIndicator), Err(AuditError::SingleCohort(_))));
    }

    #[test]
    fn mi_without_missingness_warns_and_runs() {
        let mut cfg = EstimatorConfig::new("mi", Method::Crude, &[]);
        cfg.missing_data = MissingData::MultipleImputation { m: 2, scope: ImputationScope::PooledWithIndicator };
        let mut spec = ScenarioSpec::new("S-1A", vec![cfg], 2, 1);
        spec.n_per_cohort = Some(300);
        let r = run_scenario(&spec).unwrap();
        assert!(r.rows[0].warnings.iter().any(|w| w.contains("no missing data")));
        assert_eq!(r.rows[0].n_ok, 2);
    }

    #[test]
    fn missing_values_without_strategy_count_as_failures() {
        let mut spec = ScenarioSpec::new("S-1A", vec![EstimatorConfig::new("crude", Method::Crude, &[])], 3, 1);
        spec.n_per_cohort = Some(300);
        spec.missingness.insert("Y".into(), Missingness::Mcar { rate: 0.1 });
        spec.raw_log = true;
        let r = run_scenario(&spec).unwrap();
        assert_eq!(r.rows[0].failed, 3);
        assert!(r.rows[0].warnings[0].starts_with("replication failed"));
        assert_eq!(r.raw.as_ref().unwrap().len(), 3);
        assert!(r.raw_csv().unwrap().lines().count() == 4);
    }

    #[test]
    fn spec_json_round_trip() {
        let mut spec = ScenarioSpec::new("S-2B", vec![EstimatorConfig::new("g", Method::GComputation, &["A", "cohort"])], 10, 3);
        spec.estimators[0].missing_data = MissingData::MultipleImputation { m: 5, scope: ImputationScope::PerCohort };
        let text = serde_json::to_string(&spec).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let minimal: ScenarioSpec =
            serde_json::from_str(r#"{"scenario": "S-1A", "replications": 3, "estimators": [{"label": "c", "method": "Crude"}]}"#).unwrap();
        assert_eq!(minimal.bootstrap, DEFAULT_BOOTSTRAP);
    }
}
