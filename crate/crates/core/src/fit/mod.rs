//! Weighted censored maximum-likelihood fitting of Weibull accelerated
//! failure time (AFT) models and logistic regression.
//!
//! The AFT model puts an extreme-value error on log time:
//! `log t = lp + sigma * eps`, so the weighted log-likelihood is
//! `sum_i w_i * (status_i * (z_i - log(sigma * t_i)) - exp(z_i))` with
//! `z_i = (log t_i - lp_i) / sigma`. The scale is estimated on the log scale
//! so the optimization stays unconstrained. Covariances come from observed
//! information at the optimum and are diagnostics only; confidence intervals
//! for downstream estimands come from bootstrapping the whole pipeline.

pub mod optim;

use crate::error::{Error, Result};
pub use optim::{maximize, Optimum};

/// One design row. Survival fits read `response` as a positive time in days
/// with `event` as the censoring indicator; logistic fits read `response` as
/// a 0/1 label and ignore `event`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub response: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
    pub weight: f64,
}

impl DesignRow {
    pub fn survival(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        Self { response: time, event, covariates, weight: 1.0 }
    }

    pub fn binary(label: bool, covariates: Vec<f64>) -> Self {
        Self { response: if label { 1.0 } else { 0.0 }, event: false, covariates, weight: 1.0 }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// A fitted Weibull AFT model.
#[derive(Debug, Clone, PartialEq)]
pub struct AftFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Scale `sigma` of the extreme-value error on log time.
    pub scale: f64,
    /// Covariance of `(intercept, coefficients..., log scale)` from observed
    /// information at the optimum.
    pub covariance: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl AftFit {
    /// Standard error of the j-th covariate coefficient.
    pub fn coefficient_se(&self, j: usize) -> f64 {
        self.covariance[j + 1][j + 1].max(0.0).sqrt()
    }

    pub fn intercept_se(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    /// Standard error of `scale` via the delta method from log scale.
    pub fn scale_se(&self) -> f64 {
        let k = self.covariance.len() - 1;
        self.scale * self.covariance[k][k].max(0.0).sqrt()
    }

    /// Survival function at zero covariates:
    /// `S(t) = exp(-((t / exp(intercept))^(1/scale)))`.
    pub fn baseline_survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let z = (t.ln() - self.intercept) / self.scale;
        (-z.exp()).exp()
    }
}

/// A fitted logistic regression model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Covariance of `(intercept, coefficients...)`.
    pub covariance: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn coefficient_se(&self, j: usize) -> f64 {
        self.covariance[j + 1][j + 1].max(0.0).sqrt()
    }

    pub fn linear_predictor(&self, covariates: &[f64]) -> f64 {
        self.intercept + optim::dot(&self.coefficients, covariates)
    }

    /// Predicted probability, strictly inside (0, 1) for finite inputs.
    pub fn predict_probability(&self, covariates: &[f64]) -> f64 {
        let lp = self.linear_predictor(covariates);
        1.0 / (1.0 + (-lp).exp())
    }
}

/// Coefficient bound beyond which a logistic fit is declared separated:
/// odds of exp(30) have no data support in these designs.
pub const SEPARATION_BOUND: f64 = 30.0;

struct Prepared<'a> {
    rows: Vec<&'a DesignRow>,
    ncov: usize,
}

fn prepare(rows: &[DesignRow], survival: bool) -> Result<Prepared<'_>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no design rows"));
    }
    let ncov = rows[0].covariates.len();
    let mut kept = Vec::with_capacity(rows.len());
    for row in rows {
        if row.covariates.len() != ncov {
            return Err(Error::InvalidObservation(format!(
                "covariate vector length {} differs from {}",
                row.covariates.len(),
                ncov
            )));
        }
        if !row.weight.is_finite() || row.weight < 0.0 {
            return Err(Error::InvalidObservation(format!(
                "weight must be nonnegative and finite, got {}",
                row.weight
            )));
        }
        if row.covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidObservation("non-finite covariate".into()));
        }
        if row.weight == 0.0 {
            continue;
        }
        if survival {
            if !row.response.is_finite() || row.response <= 0.0 {
                return Err(Error::InvalidObservation(format!(
                    "survival time must be positive and finite, got {}",
                    row.response
                )));
            }
        } else if row.response != 0.0 && row.response != 1.0 {
            return Err(Error::InvalidObservation(format!(
                "binary label must be 0 or 1, got {}",
                row.response
            )));
        }
        kept.push(row);
    }
    if kept.is_empty() {
        return Err(Error::ZeroTotalWeight);
    }
    Ok(Prepared { rows: kept, ncov })
}

/// Rank check of the weighted design (with intercept) via the Gram matrix.
fn check_full_rank(prep: &Prepared<'_>) -> Result<()> {
    let p = prep.ncov + 1;
    let mut gram = vec![vec![0.0; p]; p];
    for row in &prep.rows {
        let mut x = Vec::with_capacity(p);
        x.push(1.0);
        x.extend_from_slice(&row.covariates);
        for i in 0..p {
            for j in 0..p {
                gram[i][j] += row.weight * x[i] * x[j];
            }
        }
    }
    if optim::invert(&gram).is_none() {
        return Err(Error::SingularDesign);
    }
    Ok(())
}

/// Weighted log-likelihood and analytic gradient of the Weibull AFT at
/// `theta = [intercept, coefficients..., log scale]`.
///
/// Rows with zero weight are skipped. Returns negative infinity (with a
/// zero gradient) where the likelihood underflows.
pub fn aft_log_likelihood(rows: &[DesignRow], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let prep = prepare(rows, true)?;
    if theta.len() != prep.ncov + 2 {
        return Err(Error::InvalidObservation(format!(
            "theta must have {} entries, got {}",
            prep.ncov + 2,
            theta.len()
        )));
    }
    let weights: Vec<f64> = prep.rows.iter().map(|r| r.weight).collect();
    let log_times: Vec<f64> = prep.rows.iter().map(|r| r.response.ln()).collect();
    Ok(aft_value_grad(&prep.rows, &weights, &log_times, theta))
}

fn aft_value_grad(
    rows: &[&DesignRow],
    weights: &[f64],
    log_times: &[f64],
    theta: &[f64],
) -> (f64, Vec<f64>) {
    let dim = theta.len();
    let log_sigma = theta[dim - 1];
    if log_sigma.abs() > 300.0 {
        return (f64::NEG_INFINITY, vec![0.0; dim]);
    }
    let sigma = log_sigma.exp();
    let mut value = 0.0;
    let mut grad = vec![0.0; dim];
    for ((row, &log_t), &w) in rows.iter().zip(log_times).zip(weights) {
        let mut lp = theta[0];
        for (j, &xj) in row.covariates.iter().enumerate() {
            lp += theta[j + 1] * xj;
        }
        let z = (log_t - lp) / sigma;
        if z > 700.0 {
            return (f64::NEG_INFINITY, vec![0.0; dim]);
        }
        let ez = z.exp();
        let status = if row.event { 1.0 } else { 0.0 };
        value += w * (status * (z - log_sigma - log_t) - ez);
        let common = w * (ez - status) / sigma;
        grad[0] += common;
        for (j, &xj) in row.covariates.iter().enumerate() {
            grad[j + 1] += common * xj;
        }
        grad[dim - 1] += w * (z * (ez - status) - status);
    }
    (value, grad)
}

/// Weighted censored Weibull AFT maximum likelihood.
///
/// Requires at least one positively weighted event and a full-rank design.
/// With all weights 1 this is the ordinary censored Weibull AFT MLE.
pub fn fit_weibull_aft(rows: &[DesignRow]) -> Result<AftFit> {
    let prep = prepare(rows, true)?;
    let weighted_events: f64 =
        prep.rows.iter().filter(|r| r.event).map(|r| r.weight).sum();
    if weighted_events <= 0.0 {
        return Err(Error::NonIdentifiable("no events with positive weight"));
    }
    check_full_rank(&prep)?;

    let p = prep.ncov;
    let dim = p + 2; // intercept, covariates, log scale

    // Normalizing weights by their mean makes point estimates exactly
    // invariant to rescaling all weights; the covariance is scaled back
    // afterwards.
    let mean_weight: f64 =
        prep.rows.iter().map(|r| r.weight).sum::<f64>() / prep.rows.len() as f64;
    let norm_weights: Vec<f64> = prep.rows.iter().map(|r| r.weight / mean_weight).collect();

    // Cache log times.
    let log_times: Vec<f64> = prep.rows.iter().map(|r| r.response.ln()).collect();

    let objective =
        |theta: &[f64]| -> (f64, Vec<f64>) { aft_value_grad(&prep.rows, &norm_weights, &log_times, theta) };

    let hessian = |theta: &[f64]| -> Vec<Vec<f64>> {
        let log_sigma = theta[dim - 1];
        let sigma = log_sigma.exp();
        let mut h = vec![vec![0.0; dim]; dim];
        for ((row, &log_t), &w) in prep.rows.iter().zip(&log_times).zip(&norm_weights) {
            let mut lp = theta[0];
            for (j, &xj) in row.covariates.iter().enumerate() {
                lp += theta[j + 1] * xj;
            }
            let z = (log_t - lp) / sigma;
            let ez = z.exp();
            let status = if row.event { 1.0 } else { 0.0 };
            let mut x = Vec::with_capacity(p + 1);
            x.push(1.0);
            x.extend_from_slice(&row.covariates);
            // Beta block.
            let beta_beta = -w * ez / (sigma * sigma);
            for i in 0..=p {
                for j in 0..=p {
                    h[i][j] += beta_beta * x[i] * x[j];
                }
            }
            // Beta / log-sigma cross terms.
            let cross = -w * (ez * z + ez - status) / sigma;
            for i in 0..=p {
                h[i][dim - 1] += cross * x[i];
                h[dim - 1][i] += cross * x[i];
            }
            // log-sigma block.
            h[dim - 1][dim - 1] += -w * (z * z * ez + z * (ez - status));
        }
        h
    };

    // Start: intercept at the log weighted mean event time, slopes zero,
    // sigma one.
    let mean_event_time: f64 = prep
        .rows
        .iter()
        .filter(|r| r.event)
        .map(|r| r.weight * r.response)
        .sum::<f64>()
        / weighted_events;
    let mut start = vec![0.0; dim];
    start[0] = mean_event_time.ln();

    let opt = maximize(objective, Some(hessian), &start)?;

    let mut covariance = negated_inverse(&opt.hessian).ok_or(Error::SingularDesign)?;
    for row in &mut covariance {
        for v in row.iter_mut() {
            *v /= mean_weight;
        }
    }
    Ok(AftFit {
        intercept: opt.point[0],
        coefficients: opt.point[1..=p].to_vec(),
        scale: opt.point[dim - 1].exp(),
        covariance,
        log_likelihood: mean_weight * opt.value,
        converged: opt.converged,
        iterations: opt.iterations,
    })
}

/// Weighted Bernoulli maximum likelihood with an intercept.
///
/// Errors on single-label data and on complete separation (any coefficient
/// beyond `SEPARATION_BOUND` in absolute value).
pub fn fit_logistic(rows: &[DesignRow]) -> Result<LogisticFit> {
    let prep = prepare(rows, false)?;
    let has_ones = prep.rows.iter().any(|r| r.response == 1.0);
    let has_zeros = prep.rows.iter().any(|r| r.response == 0.0);
    if !has_ones || !has_zeros {
        return Err(Error::NonIdentifiable("both labels must be present"));
    }
    check_full_rank(&prep)?;

    let p = prep.ncov;
    let dim = p + 1;

    let mean_weight: f64 =
        prep.rows.iter().map(|r| r.weight).sum::<f64>() / prep.rows.len() as f64;
    let norm_weights: Vec<f64> = prep.rows.iter().map(|r| r.weight / mean_weight).collect();

    let objective = |theta: &[f64]| -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; dim];
        for (row, &w) in prep.rows.iter().zip(&norm_weights) {
            let mut lp = theta[0];
            for (j, &xj) in row.covariates.iter().enumerate() {
                lp += theta[j + 1] * xj;
            }
            // log(1 + exp(lp)) without overflow
            let log1p_exp = if lp > 0.0 { lp + (-lp).exp().ln_1p() } else { lp.exp().ln_1p() };
            let prob = 1.0 / (1.0 + (-lp).exp());
            value += w * (row.response * lp - log1p_exp);
            let resid = w * (row.response - prob);
            grad[0] += resid;
            for (j, &xj) in row.covariates.iter().enumerate() {
                grad[j + 1] += resid * xj;
            }
        }
        (value, grad)
    };

    let hessian = |theta: &[f64]| -> Vec<Vec<f64>> {
        let mut h = vec![vec![0.0; dim]; dim];
        for (row, &w) in prep.rows.iter().zip(&norm_weights) {
            let mut lp = theta[0];
            for (j, &xj) in row.covariates.iter().enumerate() {
                lp += theta[j + 1] * xj;
            }
            let prob = 1.0 / (1.0 + (-lp).exp());
            let curvature = -w * prob * (1.0 - prob);
            let mut x = Vec::with_capacity(dim);
            x.push(1.0);
            x.extend_from_slice(&row.covariates);
            for i in 0..dim {
                for j in 0..dim {
                    h[i][j] += curvature * x[i] * x[j];
                }
            }
        }
        h
    };

    let start = vec![0.0; dim];
    let opt = match maximize(objective, Some(hessian), &start) {
        Ok(opt) => opt,
        Err(Error::NonConvergence { last_point, iterations }) => {
            if optim::max_norm(&last_point) > SEPARATION_BOUND {
                return Err(Error::Separation { bound: SEPARATION_BOUND });
            }
            return Err(Error::NonConvergence { last_point, iterations });
        }
        Err(e) => return Err(e),
    };
    if optim::max_norm(&opt.point) > SEPARATION_BOUND {
        return Err(Error::Separation { bound: SEPARATION_BOUND });
    }

    let mut covariance = negated_inverse(&opt.hessian).ok_or(Error::SingularDesign)?;
    for row in &mut covariance {
        for v in row.iter_mut() {
            *v /= mean_weight;
        }
    }
    Ok(LogisticFit {
        intercept: opt.point[0],
        coefficients: opt.point[1..].to_vec(),
        covariance,
        log_likelihood: mean_weight * opt.value,
        converged: opt.converged,
        iterations: opt.iterations,
    })
}

/// Covariance from observed information: invert `-H` and symmetrize.
#[allow(clippy::needless_range_loop)]
fn negated_inverse(h: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = h.len();
    let info: Vec<Vec<f64>> = h.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
    let mut cov = optim::invert(&info)?;
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (cov[i][j] + cov[j][i]);
            cov[i][j] = avg;
            cov[j][i] = avg;
        }
    }
    Some(cov)
}
