use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EstimatorError;

/// Maximum IRLS iterations before a fit is flagged as non-converged.
pub const MAX_ITERATIONS: usize = 50;
/// Coefficient magnitude treated as divergence (separation).
pub const DIVERGENCE_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    /// Inverse observed information at the final coefficients.
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Largest absolute score component at the final coefficients.
    pub max_score: f64,
}

impl FitResult {
    pub fn se(&self, j: usize) -> f64 {
        self.covariance[j][j].sqrt()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_lik(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    (0..y.len()).map(|i| w[i] * (y[i] * eta[i] - softplus(eta[i]))).sum()
}

/// Score vector and information matrix at `beta`.
fn score_info(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eta = x * beta;
    let p = eta.map(crate::types::expit);
    let resid = DVector::from_iterator(y.len(), (0..y.len()).map(|i| w[i] * (y[i] - p[i])));
    let score = x.tr_mul(&resid);
    let mut xw = x.clone();
    for i in 0..x.nrows() {
        let v = w[i] * p[i] * (1.0 - p[i]);
        xw.row_mut(i).scale_mut(v);
    }
    (score, x.tr_mul(&xw))
}

fn invert(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| m.clone().try_inverse())
        .unwrap_or_else(|| m.clone().pseudo_inverse(1e-12).expect("pseudo-inverse"))
}

pub(crate) fn check_rank(x: &DMatrix<f64>, w: &DVector<f64>) -> Result<(), EstimatorError> {
    let mut xs = x.clone();
    for i in 0..x.nrows() {
        xs.row_mut(i).scale_mut(w[i].max(0.0).sqrt());
    }
    let p = x.ncols();
    let sv = xs.singular_values();
    let max = sv.max();
    let rank = sv.iter().filter(|&&s| s > max * 1e-10).count();
    if max == 0.0 || rank < p {
        return Err(EstimatorError::RankDeficient { rank: if max == 0.0 { 0 } else { rank }, columns: p });
    }
    Ok(())
}

/// Weighted logistic regression by iteratively reweighted least squares
/// with step halving. Separation shows up as a non-converged result.
pub(crate) fn fit_dense(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<FitResult, EstimatorError> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(EstimatorError::InvalidInput("logistic response must be 0 or 1".into()));
    }
    if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(EstimatorError::InvalidInput("weights must be finite and non-negative".into()));
    }
    check_rank(x, w)?;
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let mut ll = log_lik(x, y, w, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let (score, info) = score_info(x, y, w, &beta);
        if score.amax() < 1e-8 {
            converged = true;
            break;
        }
        let step = match info.clone().cholesky() {
            Some(c) => c.solve(&score),
            None => match info.lu().solve(&score) {
                Some(s) => s,
                None => break,
            },
        };
        let mut t = 1.0;
        let (mut next, mut ll_next);
        loop {
            next = &beta + &step * t;
            ll_next = log_lik(x, y, w, &next);
            if ll_next >= ll - 1e-12 * ll.abs() || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        let rel = (ll_next - ll).abs() / ll.abs().max(1e-300);
        beta = next;
        ll = ll_next;
        if beta.amax() > DIVERGENCE_BOUND {
            break;
        }
        if rel < 1e-10 {
            converged = true;
            break;
        }
    }
    let (score, info) = score_info(x, y, w, &beta);
    let cov = invert(&info);
    Ok(FitResult {
        coefficients: beta.iter().copied().collect(),
        covariance: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        converged,
        iterations,
        log_likelihood: ll,
        max_score: score.amax(),
    })
}

/// Fits `P(y = 1) = expit(x · beta)`. `x` holds one row per observation
/// (include a column of ones for an intercept); `weights` default to 1.
pub fn fit_logistic(x: &[Vec<f64>], y: &[f64], weights: Option<&[f64]>) -> Result<FitResult, EstimatorError> {
    let n = x.len();
    if n == 0 || y.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(EstimatorError::InvalidInput("design, response and weights must have equal, non-zero length".into()));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(EstimatorError::InvalidInput("ragged design matrix".into()));
    }
    let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let wv = weights.map_or_else(|| DVector::from_element(n, 1.0), DVector::from_column_slice);
    fit_dense(&xm, &yv, &wv)
}

/// Weighted least squares: coefficients and weighted residual variance.
pub(crate) fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<(DVector<f64>, f64), EstimatorError> {
    check_rank(x, w)?;
    let mut xw = x.clone();
    for i in 0..x.nrows() {
        xw.row_mut(i).scale_mut(w[i]);
    }
    let xtwx = x.tr_mul(&xw);
    let xtwy = xw.tr_mul(y);
    let beta = invert(&xtwx) * xtwy;
    let resid = y - x * &beta;
    let wsum: f64 = w.sum();
    let dof = (wsum - x.ncols() as f64).max(1.0);
    let sigma2 = (0..y.len()).map(|i| w[i] * resid[i] * resid[i]).sum::<f64>() / dof;
    Ok((beta, sigma2))
}
