//! Kernel eigenvalues with respect to the covariate distribution and the
//! effective dimensionality `γ(a) = Σ μ_l / (μ_l + a)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram_unchecked, KernelSpec};
use crate::sampling::{draw_latin_hypercube, RngStream, SamplingDistribution, SamplingKind};

pub const DEFAULT_NYSTROM_NODES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSource {
    ClosedFormSe1d,
    FiniteRank,
    Nystrom,
}

/// Leading eigenvalues `μ_0 ≥ μ_1 ≥ …` plus a bound on the mass not retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSequence {
    pub source: EigenSource,
    pub values: Vec<f64>,
    pub tail_bound: f64,
}

impl EigenSequence {
    pub fn new(source: EigenSource, mut values: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) || !(tail_bound >= 0.0) {
            return Err(Error::Numeric("eigenvalues must be finite and nonnegative".into()));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { source, values, tail_bound })
    }

    /// Number of retained eigenvalues.
    pub fn truncation(&self) -> usize {
        self.values.len()
    }

    /// `tr(Σ_M)`: retained mass plus tail bound.
    pub fn trace(&self) -> f64 {
        self.values.iter().sum::<f64>() + self.tail_bound
    }

    /// `Σ_{l > ζ} μ_l`: the mass beyond the first `zeta` eigenvalues.
    pub fn trace_tail(&self, zeta: usize) -> f64 {
        let kept = zeta.min(self.values.len());
        self.values[kept..].iter().sum::<f64>() + self.tail_bound
    }
}

/// Closed-form eigenvalues of `τ² exp(-φ r²)` on the real line under
/// `N(0, 1/(4 a₁))`, indexed from zero.
pub fn se_gaussian_eigenvalues(tau2: f64, phi: f64, a1: f64, count: usize) -> Result<EigenSequence> {
    if !(phi > 0.0 && a1 > 0.0 && tau2 > 0.0) || count == 0 {
        return Err(Error::Config("closed-form SE eigenvalues need positive φ, a₁, τ² and count".into()));
    }
    let (lead, a3) = se_gaussian_constants(phi, a1);
    let values: Vec<f64> = (0..count).map(|l| tau2 * lead * a3.powi(l as i32)).collect();
    let tail = tau2 * lead * a3.powi(count as i32) / (1.0 - a3);
    EigenSequence::new(EigenSource::ClosedFormSe1d, values, tail)
}

/// `(√(2a₁/(a₁+a₂+φ)), a₃)` for the Gaussian-measure SE eigenproblem.
pub fn se_gaussian_constants(phi: f64, a1: f64) -> (f64, f64) {
    let a2 = (a1 * a1 + 2.0 * a1 * phi).sqrt();
    let denom = a1 + a2 + phi;
    ((2.0 * a1 / denom).sqrt(), phi / denom)
}

/// Numerical eigenvalues of the integral operator via the eigenvalues of
/// `Gram / n_nodes` over a Latin hypercube sample from `dist`.
pub fn nystrom_eigenvalues(
    spec: &KernelSpec,
    dist: &SamplingDistribution,
    n_nodes: usize,
    count: usize,
    stream: &RngStream,
) -> Result<EigenSequence> {
    if count == 0 || count > n_nodes {
        return Err(Error::Config(format!(
            "need 1 ≤ retained eigenvalues ({count}) ≤ nodes ({n_nodes})"
        )));
    }
    let nodes = draw_latin_hypercube(dist, n_nodes, stream)?;
    let g = gram_unchecked(spec, &nodes, 0.0)?;
    let scale = 1.0 / n_nodes as f64;
    let mean_diag = (0..n_nodes).map(|i| g.get(i, i)).sum::<f64>() * scale;
    let m = DMatrix::from_row_slice(n_nodes, n_nodes, g.entries()) * scale;
    let eig = m
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))?;
    let mut all: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    all.sort_by(|a, b| b.total_cmp(a));
    all.truncate(count);
    let tail = (mean_diag - all.iter().sum::<f64>()).max(0.0);
    EigenSequence::new(EigenSource::Nystrom, all, tail)
}

/// Eigenvalues of `a (xᵀx' + b)`: those of `a·E[x̃ x̃ᵀ]` with `x̃ = (√b, x)`,
/// assuming independent coordinates under `dist`.
pub fn finite_rank_eigenvalues(a: f64, b: f64, dist: &SamplingDistribution) -> Result<EigenSequence> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Config("finite-rank kernel needs a, b > 0".into()));
    }
    let mom = dist.moments();
    let d = mom.len();
    let p = d + 1;
    let mut s = DMatrix::<f64>::zeros(p, p);
    s[(0, 0)] = b;
    for i in 0..d {
        s[(0, i + 1)] = b.sqrt() * mom[i].0;
        s[(i + 1, 0)] = s[(0, i + 1)];
        for j in 0..d {
            s[(i + 1, j + 1)] = if i == j { mom[i].1 } else { mom[i].0 * mom[j].0 };
        }
    }
    let eig = (s * a).symmetric_eigen();
    let values = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    EigenSequence::new(EigenSource::FiniteRank, values, 0.0)
}

/// `γ(a) = Σ μ_l/(μ_l + a)`; the unretained mass contributes at most `tail/a`,
/// which is the amount added.
pub fn effective_dimension(eigs: &EigenSequence, a: f64) -> f64 {
    assert!(a > 0.0, "effective dimension needs a > 0");
    eigs.values.iter().map(|mu| mu / (mu + a)).sum::<f64>() + eigs.tail_bound / a
}

/// Whether the closed-form Gaussian SE eigenvalues apply to `(spec, dist)`.
pub fn closed_form_applies(spec: &KernelSpec, dist: &SamplingDistribution) -> bool {
    matches!(spec, KernelSpec::Stationary { family: crate::kernels::KernelFamily::SqExp, .. })
        && dist.kind() == SamplingKind::Normal
        && dist.dim() == 1
        && dist.mean_param()[0] == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::sampling::{CovariateSpace, Purpose, StreamPath};

    fn stream(seed: u64) -> RngStream {
        RngStream::new(seed, StreamPath::new(0, Purpose::NystromNodes))
    }

    #[test]
    fn closed_form_geometric_decay() {
        let e = se_gaussian_eigenvalues(1.0, 1.0, 1.0, 20).unwrap();
        let a3 = 1.0 / (2.0 + 3f64.sqrt());
        for w in e.values.windows(2) {
            assert!(w[1] > 0.0 && w[1] < w[0]);
            assert!((w[0] / w[1] - 1.0 / a3).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_mass_is_tau2() {
        let e = se_gaussian_eigenvalues(1.0, 1.0, 1.0, 50).unwrap();
        let (lead, a3) = se_gaussian_constants(1.0, 1.0);
        assert!((e.trace() - lead / (1.0 - a3)).abs() < 1e-12);
        assert!((e.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nystrom_trace_identity_for_stationary_kernel() {
        let k = KernelSpec::stationary(KernelFamily::SqExp, 1.0, 0.3).unwrap();
        let dist = SamplingDistribution::uniform(CovariateSpace::cube(1.0, 10.0, 1).unwrap()).unwrap();
        let e = nystrom_eigenvalues(&k, &dist, 500, 40, &stream(3)).unwrap();
        assert!((e.trace() - 1.0).abs() < 1e-8);
        assert_eq!(e.source, EigenSource::Nystrom);
    }

    #[test]
    fn nystrom_finite_rank_has_rank_two_in_one_dimension() {
        let k = KernelSpec::finite_rank(1.0, 1.0).unwrap();
        let dist = SamplingDistribution::uniform(CovariateSpace::cube(1.0, 10.0, 1).unwrap()).unwrap();
        let e = nystrom_eigenvalues(&k, &dist, 300, 10, &stream(5)).unwrap();
        let big = e.values.iter().filter(|v| **v > 1e-8 * e.values[0]).count();
        assert!(big <= 2);
    }

    #[test]
    fn nystrom_matches_closed_form() {
        // Standard normal sampling.
        let (a1, phi) = (0.25, 1.0);
        let k = KernelSpec::stationary(KernelFamily::SqExp, 1.0, phi).unwrap();
        let sd = 1.0 / (4.0 * a1 as f64).sqrt();
        let dist = SamplingDistribution::normal(vec![0.0], vec![sd]).unwrap();
        let exact = se_gaussian_eigenvalues(1.0, phi, a1, 5).unwrap();
        let approx = nystrom_eigenvalues(&k, &dist, 500, 5, &stream(11)).unwrap();
        for (x, y) in exact.values.iter().zip(&approx.values) {
            assert!((x - y).abs() / x < 0.05, "{x} vs {y}");
        }
    }

    #[test]
    fn finite_rank_operator_eigenvalues() {
        let dist = SamplingDistribution::uniform(CovariateSpace::cube(1.0, 10.0, 1).unwrap()).unwrap();
        let e = finite_rank_eigenvalues(1.0, 1.0, &dist).unwrap();
        assert_eq!(e.truncation(), 2);
        // trace of E[x̃x̃ᵀ] = b + E[x²] = 1 + 37
        assert!((e.trace() - 38.0).abs() < 1e-10);
    }

    #[test]
    fn effective_dimension_examples() {
        let one = EigenSequence::new(EigenSource::FiniteRank, vec![1.0], 0.0).unwrap();
        assert!((effective_dimension(&one, 1.0) - 0.5).abs() < 1e-15);
        let two = EigenSequence::new(EigenSource::FiniteRank, vec![2.0, 1.0], 0.0).unwrap();
        assert!((effective_dimension(&two, 0.5) - (0.8 + 1.0 / 1.5)).abs() < 1e-12);
        assert!(effective_dimension(&two, 2e6) < 3.0 / 2e6);
    }

    #[test]
    fn trace_tail_counts_remaining_mass() {
        let e = EigenSequence::new(EigenSource::Nystrom, vec![3.0, 2.0, 1.0], 0.5).unwrap();
        assert_eq!(e.trace_tail(0), 6.5);
        assert_eq!(e.trace_tail(2), 1.5);
        assert_eq!(e.trace_tail(10), 0.5);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn effective_dimension_decreasing_and_bounded(
            values in proptest::collection::vec(1e-6f64..10.0, 1..30),
            tail in 0.0f64..1.0,
            a in 1e-4f64..100.0,
            factor in 1.001f64..10.0,
        ) {
            let e = EigenSequence::new(EigenSource::Nystrom, values, tail).unwrap();
            let (g1, g2) = (effective_dimension(&e, a), effective_dimension(&e, a * factor));
            prop_assert!(g2 < g1);
            let bound = (e.truncation() as f64 + tail / a).min(e.trace() / a);
            prop_assert!(g1 <= bound * (1.0 + 1e-12));
        }
    }
}
