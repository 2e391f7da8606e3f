//! Simulation-noise variance estimates at the design points. The noise
//! covariance is diagonal, so only per-point variances are stored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Points per design below which the automatic degree uses a pooled mean.
pub const AUTO_DEGREE_THRESHOLD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Per-point sample variances.
    Raw,
    /// Least-squares smoothing of the sample variances on `1` or `(1, x)`;
    /// `None` picks degree 0 below [`AUTO_DEGREE_THRESHOLD`] points and 1
    /// otherwise, unless the linear fit is nonpositive at some point.
    LeastSquares { degree: Option<u8> },
    /// A known constant noise variance.
    Known { variance: f64 },
}

impl Default for NoiseMode {
    fn default() -> Self {
        NoiseMode::LeastSquares { degree: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub per_point_var: Vec<f64>,
    pub reps: Vec<usize>,
    pub mode: NoiseMode,
    pub floor: f64,
    /// Set when least-squares smoothing was requested but the design matrix
    /// was rank deficient, so raw variances were used.
    pub fell_back_to_raw: bool,
}

impl NoiseEstimate {
    /// Diagonal of `Σ_ε`: `σ̃²(x_j) / n_j`.
    pub fn diag(&self) -> Vec<f64> {
        self.per_point_var.iter().zip(&self.reps).map(|(v, n)| v / *n as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.per_point_var.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_point_var.is_empty()
    }
}

/// Unbiased per-point sample variances of a replication table
/// (`table[j]` holds the outputs at point `j`).
pub fn sample_variances(table: &[Vec<f64>]) -> Result<Vec<f64>> {
    table
        .iter()
        .enumerate()
        .map(|(j, ys)| {
            if ys.len() < 2 {
                return Err(Error::InsufficientReplications { point: j, reps: ys.len() });
            }
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            Ok(ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0))
        })
        .collect()
}

pub fn default_floor(raw: &[f64]) -> f64 {
    1e-10 * raw.iter().cloned().fold(1.0, f64::max)
}

/// Fitted values of the least-squares regression of `raw` on the degree-0 or
/// degree-1 polynomial basis, floored. Returns `None` when the design matrix
/// is rank deficient.
pub fn smooth_variances(raw: &[f64], points: &[Vec<f64>], degree: u8, floor: f64) -> Option<Vec<f64>> {
    let m = raw.len();
    if m == 0 || points.len() != m {
        return None;
    }
    if degree == 0 {
        let mean = raw.iter().sum::<f64>() / m as f64;
        return Some(vec![mean.max(floor); m]);
    }
    let d = points[0].len();
    let p = d + 1;
    if m <= p {
        return None;
    }
    // Centered covariates for a better-conditioned normal system.
    let center: Vec<f64> = (0..d).map(|l| points.iter().map(|x| x[l]).sum::<f64>() / m as f64).collect();
    let row = |x: &[f64]| -> Vec<f64> {
        std::iter::once(1.0).chain(x.iter().zip(&center).map(|(v, c)| v - c)).collect()
    };
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for (x, y) in points.iter().zip(raw) {
        let r = row(x);
        for a in 0..p {
            xty[a] += r[a] * y;
            for b in 0..p {
                xtx[a * p + b] += r[a] * r[b];
            }
        }
    }
    let trace: f64 = (0..p).map(|i| xtx[i * p + i]).sum();
    let chol = Cholesky::factor(xtx, p).ok()?;
    if chol.min_pivot().powi(2) <= 1e-12 * trace {
        return None;
    }
    let coef = chol.solve(&xty);
    Some(
        points
            .iter()
            .map(|x| crate::linalg::dot(&row(x), &coef).max(floor))
            .collect(),
    )
}

/// Builds the noise estimate for one design from its replication table.
pub fn estimate_noise(table: &[Vec<f64>], points: &[Vec<f64>], mode: NoiseMode) -> Result<NoiseEstimate> {
    let reps: Vec<usize> = table.iter().map(Vec::len).collect();
    if let NoiseMode::Known { variance } = mode {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Config("known noise variance must be positive".into()));
        }
        if let Some(j) = reps.iter().position(|n| *n == 0) {
            return Err(Error::InsufficientReplications { point: j, reps: 0 });
        }
        return Ok(NoiseEstimate {
            per_point_var: vec![variance; table.len()],
            reps,
            mode,
            floor: variance,
            fell_back_to_raw: false,
        });
    }
    let raw = sample_variances(table)?;
    let floor = default_floor(&raw);
    let floored = |v: &[f64]| v.iter().map(|x| x.max(floor)).collect::<Vec<_>>();
    let (per_point_var, fell_back_to_raw) = match mode {
        NoiseMode::Raw => (floored(&raw), false),
        NoiseMode::LeastSquares { degree } => {
            let deg = degree.unwrap_or(if raw.len() < AUTO_DEGREE_THRESHOLD { 0 } else { 1 });
            if deg > 1 {
                return Err(Error::Config(format!("noise basis degree must be 0 or 1, got {deg}")));
            }
            match smooth_variances(&raw, points, deg, floor) {
                // The automatic choice drops to the pooled mean when the linear
                // fit has to be clipped somewhere.
                Some(v) if degree.is_none() && deg == 1 && v.iter().any(|x| *x <= floor) => {
                    (smooth_variances(&raw, points, 0, floor).unwrap(), false)
                }
                Some(v) => (v, false),
                None => (floored(&raw), true),
            }
        }
        NoiseMode::Known { .. } => unreachable!(),
    };
    Ok(NoiseEstimate { per_point_var, reps, mode, floor, fell_back_to_raw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn sample_variance_cases() {
        assert_eq!(sample_variances(&[vec![1.0, 3.0]]).unwrap(), vec![2.0]);
        assert_eq!(sample_variances(&[vec![4.0; 5]]).unwrap(), vec![0.0]);
        assert_eq!(
            sample_variances(&[vec![1.0, 2.0], vec![1.0]]),
            Err(Error::InsufficientReplications { point: 1, reps: 1 })
        );
    }

    #[test]
    fn large_sample_variance_near_truth() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let nd = Normal::new(0.0, 2f64.sqrt()).unwrap();
        let ys: Vec<f64> = (0..100_000).map(|_| nd.sample(&mut rng)).collect();
        let v = sample_variances(&[ys]).unwrap()[0];
        assert!((v - 2.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn degree_zero_is_pooled_mean() {
        let raw = [1.0, 2.0, 6.0];
        let pts = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(smooth_variances(&raw, &pts, 0, 1e-10).unwrap(), vec![3.0; 3]);
    }

    #[test]
    fn degree_one_reproduces_linear_target() {
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0 + i as f64, 0.5 * i as f64 * i as f64]).collect();
        let raw: Vec<f64> = pts.iter().map(|x| 0.5 + 0.2 * x[0] + 0.01 * x[1]).collect();
        let fit = smooth_variances(&raw, &pts, 1, 1e-10).unwrap();
        for (a, b) in fit.iter().zip(&raw) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn homoscedastic_fit_stays_in_range() {
        let raw = [1.9, 2.1, 2.0, 1.95, 2.05, 2.02];
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let fit = smooth_variances(&raw, &pts, 1, 1e-10).unwrap();
        assert!(fit.iter().all(|v| *v >= 1.9 && *v <= 2.1));
    }

    #[test]
    fn rank_deficient_design_falls_back() {
        let table = vec![vec![1.0, 2.0], vec![1.0, 4.0], vec![0.0, 1.0]];
        let pts = vec![vec![2.0]; 3];
        let est = estimate_noise(&table, &pts, NoiseMode::LeastSquares { degree: Some(1) }).unwrap();
        assert!(est.fell_back_to_raw);
        assert_eq!(est.per_point_var, vec![0.5, 4.5, 0.5]);
    }

    #[test]
    fn floor_applies_to_zero_variance() {
        let table = vec![vec![3.0, 3.0], vec![1.0, 1.0]];
        let est = estimate_noise(&table, &[vec![0.0], vec![1.0]], NoiseMode::Raw).unwrap();
        assert!(est.per_point_var.iter().all(|v| *v >= est.floor && *v > 0.0));
        assert_eq!(est.floor, 1e-10);
    }

    #[test]
    fn diag_divides_by_reps() {
        let table = vec![vec![0.0, 2.0], vec![0.0, 2.0, 4.0, 6.0]];
        let est = estimate_noise(&table, &[vec![0.0], vec![1.0]], NoiseMode::Known { variance: 2.0 }).unwrap();
        assert_eq!(est.diag(), vec![1.0, 0.5]);
    }

    #[test]
    fn auto_degree_avoids_clipped_linear_fit() {
        // Variances growing convexly in x: the linear fit is negative at the left end.
        let points: Vec<Vec<f64>> = (0..30).map(|j| vec![j as f64 / 29.0]).collect();
        let table: Vec<Vec<f64>> = points
            .iter()
            .map(|x| {
                let s = 0.01 + 10.0 * x[0].powi(6);
                vec![-s.sqrt(), s.sqrt()]
            })
            .collect();
        let auto = estimate_noise(&table, &points, NoiseMode::default()).unwrap();
        let raw = sample_variances(&table).unwrap();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        assert!(auto.per_point_var.iter().all(|v| (v - mean).abs() < 1e-12));
        let linear = estimate_noise(&table, &points, NoiseMode::LeastSquares { degree: Some(1) }).unwrap();
        assert_eq!(linear.per_point_var[0], linear.floor);
    }
}
