//! Target-trial emulation toolkit for multi-cohort causal inference.
//!
//! - [`dag`]: typed causal DAGs, d-separation, bias-path classification and audits.
//! - [`protocol`]: target-trial protocols, emulation plans and gap reports.
//! - [`scm`]: structural causal models, multi-cohort simulation and exact truth.
//! - [`estimators`]: effect estimation, meta-analysis and multiple imputation.
//! - [`bias_audit`]: Monte Carlo bias benchmarks against exact truth and misclassification correction.

pub mod bias_audit;
pub mod dag;
pub mod estimators;
pub mod protocol;
pub mod scm;
pub mod seed;
pub mod types;
