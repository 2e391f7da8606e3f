//! Covariance kernels: the four stationary families used in the experiments
//! and the finite-rank linear kernel `a (xᵀx' + b)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Kernel family as selected in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[serde(rename = "sqexp")]
    SqExp,
    Matern52,
    Matern32,
    Exp,
    FiniteRankLinear,
}

impl KernelFamily {
    pub const STATIONARY: [KernelFamily; 4] =
        [KernelFamily::SqExp, KernelFamily::Matern52, KernelFamily::Matern32, KernelFamily::Exp];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SqExp => "sqexp",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Exp => "exp",
            KernelFamily::FiniteRankLinear => "finite_rank_linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sqexp" => Some(KernelFamily::SqExp),
            "matern52" => Some(KernelFamily::Matern52),
            "matern32" => Some(KernelFamily::Matern32),
            "exp" => Some(KernelFamily::Exp),
            "finite_rank_linear" => Some(KernelFamily::FiniteRankLinear),
            _ => None,
        }
    }

    pub fn is_stationary(self) -> bool {
        self != KernelFamily::FiniteRankLinear
    }

    /// Matérn smoothness ν; the squared exponential is the ν → ∞ limit.
    pub fn smoothness(self) -> Option<f64> {
        match self {
            KernelFamily::SqExp => Some(f64::INFINITY),
            KernelFamily::Matern52 => Some(2.5),
            KernelFamily::Matern32 => Some(1.5),
            KernelFamily::Exp => Some(0.5),
            KernelFamily::FiniteRankLinear => None,
        }
    }

    /// Correlation at distance `r` for unit variance and rate `phi`.
    /// Must only be called on stationary families.
    #[inline]
    pub fn correlation(self, phi: f64, r: f64) -> f64 {
        match self {
            KernelFamily::SqExp => (-phi * r * r).exp(),
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * phi * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
            KernelFamily::Matern32 => {
                let s = 3f64.sqrt() * phi * r;
                (1.0 + s) * (-s).exp()
            }
            KernelFamily::Exp => (-phi * r).exp(),
            KernelFamily::FiniteRankLinear => unreachable!("finite-rank kernel is not stationary"),
        }
    }
}

/// A fully parameterized covariance kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Stationary { family: KernelFamily, tau2: f64, phi: f64 },
    FiniteRankLinear { a: f64, b: f64 },
}

impl KernelSpec {
    pub fn stationary(family: KernelFamily, tau2: f64, phi: f64) -> Result<Self> {
        if !family.is_stationary() {
            return Err(Error::Config(format!("{} is not a stationary family", family.name())));
        }
        check_positive("tau2", tau2)?;
        check_positive("phi", phi)?;
        Ok(KernelSpec::Stationary { family, tau2, phi })
    }

    pub fn finite_rank(a: f64, b: f64) -> Result<Self> {
        check_positive("a", a)?;
        check_positive("b", b)?;
        Ok(KernelSpec::FiniteRankLinear { a, b })
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            KernelSpec::Stationary { family, .. } => *family,
            KernelSpec::FiniteRankLinear { .. } => KernelFamily::FiniteRankLinear,
        }
    }

    /// `(tau2, phi)` for stationary kernels.
    pub fn stationary_params(&self) -> Option<(f64, f64)> {
        match self {
            KernelSpec::Stationary { tau2, phi, .. } => Some((*tau2, *phi)),
            KernelSpec::FiniteRankLinear { .. } => None,
        }
    }

    /// `Σ_M(x, x')`.
    pub fn eval(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        if x.len() != x_prime.len() {
            return Err(Error::Config(format!(
                "dimension mismatch: {} vs {}",
                x.len(),
                x_prime.len()
            )));
        }
        if x.iter().chain(x_prime).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite kernel input".into()));
        }
        Ok(self.eval_unchecked(x, x_prime))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        match *self {
            KernelSpec::Stationary { family, tau2, phi } => {
                let r2: f64 = x.iter().zip(x_prime).map(|(a, b)| (a - b) * (a - b)).sum();
                tau2 * family.correlation(phi, r2.sqrt())
            }
            KernelSpec::FiniteRankLinear { a, b } => {
                let ip: f64 = x.iter().zip(x_prime).map(|(u, v)| u * v).sum();
                a * (ip + b)
            }
        }
    }

    /// Scale used for relative jitter: `τ²` for stationary kernels,
    /// `a (max‖x‖² + b)` over `points` for the finite-rank kernel.
    pub fn jitter_scale(&self, points: &[Vec<f64>]) -> f64 {
        match *self {
            KernelSpec::Stationary { tau2, .. } => tau2,
            KernelSpec::FiniteRankLinear { a, b } => {
                let max_sq = points
                    .iter()
                    .map(|p| p.iter().map(|v| v * v).sum::<f64>())
                    .fold(0.0, f64::max);
                a * (max_sq + b)
            }
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("kernel parameter {name} must be positive and finite, got {v}")))
    }
}

/// Covariance matrix over a set of points, with jitter already on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    entries: Vec<f64>,
    jitter: f64,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Absolute jitter added to each diagonal entry.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(self.entries.clone(), self.n)
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }
}

/// Builds `Σ_M(x^m, x^m) + jitter_rel·scale·I` and checks that it factorizes.
pub fn gram(spec: &KernelSpec, points: &[Vec<f64>], jitter_rel: f64) -> Result<GramMatrix> {
    let g = gram_unchecked(spec, points, jitter_rel)?;
    g.cholesky()?;
    Ok(g)
}

/// Builds the jittered Gram matrix without attempting a factorization.
pub fn gram_unchecked(spec: &KernelSpec, points: &[Vec<f64>], jitter_rel: f64) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(Error::Config("Gram matrix needs at least one point".into()));
    }
    if !(jitter_rel >= 0.0) {
        return Err(Error::Config("jitter must be nonnegative".into()));
    }
    let n = points.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval(&points[i], &points[j])?;
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    let jitter = jitter_rel * spec.jitter_scale(points);
    for i in 0..n {
        entries[i * n + i] += jitter;
    }
    Ok(GramMatrix { n, entries, jitter })
}

/// `Σ_M(x^m, x0)`.
pub fn cross_cov(spec: &KernelSpec, points: &[Vec<f64>], x0: &[f64]) -> Result<Vec<f64>> {
    points.iter().map(|p| spec.eval(p, x0)).collect()
}
