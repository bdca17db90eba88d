//! Nuisance models for the doubly robust estimator: a logistic propensity
//! score fitted by iteratively reweighted least squares and a least-squares
//! outcome regression on comparison units.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const STEP_TOLERANCE: f64 = 1e-8;
const SEPARATION_TOLERANCE: f64 = 1e-10;
const RANK_TOLERANCE: f64 = 1e-10;

/// Fitted logistic propensity score.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    /// Intercept first, then one coefficient per covariate column.
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Least-squares fit of an outcome change on covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeFit {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    /// Fitted values for every row of the covariate matrix, controls or not.
    pub fitted: Vec<f64>,
}

/// Prepend a column of ones.
pub fn with_intercept(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    covariates.clone().insert_column(0, 1.0)
}

fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

pub(crate) fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Maximum-likelihood logistic regression of `treated` on an intercept plus
/// `covariates` (one row per unit, no intercept column).
///
/// Newton–Raphson in IRLS form, stopping once the largest coefficient update
/// falls below 1e-8 or after 100 iterations. A fitted probability within 1e-10
/// of 0 or 1 is reported as separation, naming the covariate with the largest
/// coefficient in absolute value.
pub fn fit_propensity(
    covariates: &DMatrix<f64>,
    treated: &[bool],
    names: &[String],
) -> Result<PropensityFit> {
    let n = covariates.nrows();
    if treated.len() != n {
        return Err(Error::validation(
            "treated",
            "length differs from covariate rows",
        ));
    }
    if names.len() != covariates.ncols() {
        return Err(Error::validation(
            "covariates",
            "one name per covariate column required",
        ));
    }
    let x = with_intercept(covariates);
    let k = x.ncols();
    let rank = numerical_rank(&x);
    if rank < k || n < k {
        return Err(Error::RankDeficient { rank, columns: k });
    }
    let y = DVector::from_iterator(n, treated.iter().map(|&d| if d { 1.0 } else { 0.0 }));

    let mut beta = DVector::<f64>::zeros(k);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let eta = &x * &beta;
        let p = eta.map(logistic);
        let w = p.map(|pi| (pi * (1.0 - pi)).max(1e-300));
        // X'WX and X'(y − p)
        let mut xtwx = DMatrix::<f64>::zeros(k, k);
        let mut score = DVector::<f64>::zeros(k);
        for i in 0..n {
            let row = x.row(i);
            let resid = y[i] - p[i];
            for a in 0..k {
                score[a] += row[a] * resid;
                for b in 0..=a {
                    xtwx[(a, b)] += w[i] * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let step = match xtwx.cholesky() {
            Some(chol) => chol.solve(&score),
            None => break,
        };
        if step.iter().any(|s| !s.is_finite()) {
            break;
        }
        beta += &step;
        if step.amax() < STEP_TOLERANCE {
            converged = true;
            break;
        }
    }

    let fitted: Vec<f64> = (&x * &beta).iter().map(|&e| logistic(e)).collect();
    let pinned = fitted
        .iter()
        .any(|&p| !p.is_finite() || p < SEPARATION_TOLERANCE || p > 1.0 - SEPARATION_TOLERANCE);
    if pinned || beta.iter().any(|b| !b.is_finite()) {
        let covariate = (1..k)
            .max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs()))
            .map(|j| names[j - 1].clone())
            .unwrap_or_else(|| "(intercept)".to_string());
        return Err(Error::Separation { covariate });
    }
    Ok(PropensityFit {
        coefficients: beta.iter().copied().collect(),
        fitted,
        iterations,
        converged,
    })
}

/// Least squares of `outcome` on an intercept plus `covariates`, using only
/// rows flagged in `control`. Solved by Householder QR.
pub fn fit_outcome_regression(
    covariates: &DMatrix<f64>,
    outcome: &[f64],
    control: &[bool],
) -> Result<OutcomeFit> {
    let n = covariates.nrows();
    if outcome.len() != n || control.len() != n {
        return Err(Error::validation(
            "outcome",
            "length differs from covariate rows",
        ));
    }
    let x = with_intercept(covariates);
    let k = x.ncols();
    let rows: Vec<usize> = (0..n).filter(|&i| control[i]).collect();
    if rows.len() < k {
        return Err(Error::validation(
            "control",
            format!(
                "{} control units for {k} regression coefficients",
                rows.len()
            ),
        ));
    }
    let xc = x.select_rows(rows.iter());
    let yc = DVector::from_iterator(rows.len(), rows.iter().map(|&i| outcome[i]));
    let rank = numerical_rank(&xc);
    if rank < k {
        return Err(Error::RankDeficient { rank, columns: k });
    }
    let qr = xc.qr();
    let qty = qr.q().transpose() * &yc;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { rank, columns: k })?;
    let fitted = (&x * &beta).iter().copied().collect();
    Ok(OutcomeFit {
        coefficients: beta.iter().copied().collect(),
        fitted,
    })
}
