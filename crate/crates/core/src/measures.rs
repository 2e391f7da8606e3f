//! Prediction-error measures over independent test points: per-design IMSE,
//! maximal IMSE, and IPFS by the normal approximation (APFS) and by the
//! indicator of a false selection under the true means.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kriging::FittedSK;
use crate::problems::ProblemSpec;
use crate::sampling::std_normal_cdf;

/// Test sample size by covariate dimension: 10³ for d = 1, 10⁴ up to d = 5, 10⁵ beyond.
pub fn default_test_points(dim: usize) -> usize {
    match dim {
        0 | 1 => 1_000,
        2..=5 => 10_000,
        _ => 100_000,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub imse_per_design: Vec<f64>,
    /// Monte Carlo standard errors of the IMSE estimates.
    pub imse_se_per_design: Vec<f64>,
    pub max_imse: f64,
    pub ipfs_apfs: f64,
    /// `None` when no true means were supplied.
    pub ipfs_indicator: Option<f64>,
    /// Mean of `(ŷ_i(x0) − y_i(x0))²` over the test points, when true means are known.
    pub sq_err_per_design: Option<Vec<f64>>,
    pub max_sq_err: Option<f64>,
    pub m_prime: usize,
    pub delta0: f64,
}

/// Index of the smallest prediction; ties go to the lowest index.
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Approximate probability of false selection at one point from
/// per-design predictions and MSEs.
pub fn apfs_from(yhat: &[f64], mse: &[f64], delta0: f64) -> f64 {
    let best = argmin_first(yhat);
    let mut s = 0.0;
    for i in 0..yhat.len() {
        if i == best {
            continue;
        }
        let gap = yhat[i] - yhat[best] + delta0;
        let sd = (mse[i] + mse[best]).sqrt();
        s += if sd > 0.0 {
            std_normal_cdf(-gap / sd)
        } else if gap < 0.0 {
            1.0
        } else {
            0.0
        };
    }
    s
}

/// APFS at `x0` for fitted models.
pub fn apfs(models: &[FittedSK], x0: &[f64], delta0: f64) -> Result<f64> {
    let mut yhat = Vec::with_capacity(models.len());
    let mut mse = Vec::with_capacity(models.len());
    for m in models {
        let (y, p) = m.predict_with_mse(x0)?;
        yhat.push(y);
        mse.push(p.total);
    }
    Ok(apfs_from(&yhat, &mse, delta0))
}

/// Mean optimal MSE over the test points.
pub fn imse_estimate(model: &FittedSK, test_points: &[Vec<f64>]) -> Result<f64> {
    let v: Vec<f64> = test_points
        .par_iter()
        .map(|x| model.mse_opt(x).map(|p| p.total))
        .collect::<Result<_>>()?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// `(mean APFS, mean false-selection indicator)` over the test points.
pub fn ipfs_estimate(
    models: &[FittedSK],
    test_points: &[Vec<f64>],
    delta0: f64,
    truth: Option<&ProblemSpec>,
) -> Result<(f64, f64)> {
    if truth.is_none() {
        return Err(Error::Unsupported("indicator IPFS needs the true mean responses".into()));
    }
    let r = evaluate(models, test_points, delta0, truth)?;
    Ok((r.ipfs_apfs, r.ipfs_indicator.unwrap()))
}

struct PointResult {
    mse: Vec<f64>,
    apfs: f64,
    false_sel: Option<bool>,
    sq_err: Option<Vec<f64>>,
}

/// All measures in one pass over the test points.
pub fn evaluate(
    models: &[FittedSK],
    test_points: &[Vec<f64>],
    delta0: f64,
    truth: Option<&ProblemSpec>,
) -> Result<MeasureReport> {
    if models.is_empty() || test_points.is_empty() {
        return Err(Error::Config("measures need at least one model and one test point".into()));
    }
    if !(delta0 >= 0.0) {
        return Err(Error::Config("δ0 must be nonnegative".into()));
    }
    if let Some(p) = truth {
        if p.k() != models.len() {
            return Err(Error::Config(format!("{} models for {} designs", models.len(), p.k())));
        }
    }
    let k = models.len();
    let per_point: Vec<PointResult> = test_points
        .par_iter()
        .map(|x| {
            let mut yhat = Vec::with_capacity(k);
            let mut mse = Vec::with_capacity(k);
            for m in models {
                let (y, p) = m.predict_with_mse(x)?;
                yhat.push(y);
                mse.push(p.total);
            }
            let apfs = apfs_from(&yhat, &mse, delta0);
            let false_sel = truth.map(|p| {
                let chosen = argmin_first(&yhat);
                let (_, best) = p.optimal_design(x);
                p.true_mean(chosen, x) - best >= delta0
            });
            let sq_err = truth.map(|p| yhat.iter().enumerate().map(|(i, y)| (y - p.true_mean(i, x)).powi(2)).collect());
            Ok(PointResult { mse, apfs, false_sel, sq_err })
        })
        .collect::<Result<_>>()?;

    let mp = per_point.len() as f64;
    let mut imse = vec![0.0; k];
    for r in &per_point {
        for (acc, v) in imse.iter_mut().zip(&r.mse) {
            *acc += v;
        }
    }
    imse.iter_mut().for_each(|v| *v /= mp);
    let mut sq = vec![0.0; k];
    for r in &per_point {
        for i in 0..k {
            sq[i] += (r.mse[i] - imse[i]).powi(2);
        }
    }
    let imse_se = sq
        .iter()
        .map(|s| if per_point.len() > 1 { (s / (mp - 1.0) / mp).sqrt() } else { f64::NAN })
        .collect();
    let max_imse = imse.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ipfs_apfs = per_point.iter().map(|r| r.apfs).sum::<f64>() / mp;
    let ipfs_indicator = truth.map(|_| per_point.iter().filter(|r| r.false_sel == Some(true)).count() as f64 / mp);
    let sq_err_per_design = truth.map(|_| {
        let mut acc = vec![0.0; k];
        for r in &per_point {
            for (a, v) in acc.iter_mut().zip(r.sq_err.as_ref().unwrap()) {
                *a += v;
            }
        }
        acc.into_iter().map(|v| v / mp).collect::<Vec<f64>>()
    });
    let max_sq_err = sq_err_per_design.as_ref().map(|v| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    Ok(MeasureReport {
        imse_per_design: imse,
        imse_se_per_design: imse_se,
        max_imse,
        ipfs_apfs,
        ipfs_indicator,
        sq_err_per_design,
        max_sq_err,
        m_prime: test_points.len(),
        delta0,
    })
}
