//! Covariate sampling distributions and reproducible random streams.
//!
//! Every random draw in the crate comes from an [`RngStream`]: a master seed
//! plus a structured path. The path is hashed into a fresh ChaCha seed, so a
//! stream's output never depends on which thread or in which order other
//! streams were consumed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Support of the covariate `x ∈ R^d`: a box, or all of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpace {
    dim: usize,
    bounds: Option<Vec<(f64, f64)>>,
}

impl CovariateSpace {
    pub fn bounded(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config("covariate space needs at least one dimension".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!(
                    "dimension {i}: bounds [{lo}, {hi}] must be finite with lo < hi"
                )));
            }
        }
        Ok(Self { dim: bounds.len(), bounds: Some(bounds) })
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::bounded(vec![(lo, hi); dim])
    }

    pub fn unbounded(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("covariate space needs at least one dimension".into()));
        }
        Ok(Self { dim, bounds: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }

    pub fn is_bounded(&self) -> bool {
        self.bounds.is_some()
    }

    /// Midpoint of the box; `None` for an unbounded space.
    pub fn center(&self) -> Option<Vec<f64>> {
        self.bounds
            .as_ref()
            .map(|b| b.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && match &self.bounds {
                Some(b) => x.iter().zip(b).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
                None => x.iter().all(|v| v.is_finite()),
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    Uniform,
    TruncatedNormal,
    Normal,
}

impl SamplingKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplingKind::Uniform => "uniform",
            SamplingKind::TruncatedNormal => "truncated_normal",
            SamplingKind::Normal => "normal",
        }
    }
}

/// The fixed covariate distribution `P_X` (independent across dimensions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    kind: SamplingKind,
    mean: Vec<f64>,
    stdev: Vec<f64>,
    space: CovariateSpace,
}

/// Acceptance below this rate makes rejection sampling pointless.
const MAX_REJECTIONS: usize = 1_000_000;

impl SamplingDistribution {
    pub fn uniform(space: CovariateSpace) -> Result<Self> {
        Self::new(SamplingKind::Uniform, vec![], vec![], space)
    }

    pub fn truncated_normal(mean: Vec<f64>, stdev: Vec<f64>, space: CovariateSpace) -> Result<Self> {
        Self::new(SamplingKind::TruncatedNormal, mean, stdev, space)
    }

    pub fn normal(mean: Vec<f64>, stdev: Vec<f64>) -> Result<Self> {
        let space = CovariateSpace::unbounded(mean.len())?;
        Self::new(SamplingKind::Normal, mean, stdev, space)
    }

    pub fn new(
        kind: SamplingKind,
        mean: Vec<f64>,
        stdev: Vec<f64>,
        space: CovariateSpace,
    ) -> Result<Self> {
        let d = space.dim();
        match kind {
            SamplingKind::Uniform => {
                if !space.is_bounded() {
                    return Err(Error::Config("uniform sampling requires a bounded space".into()));
                }
            }
            SamplingKind::TruncatedNormal | SamplingKind::Normal => {
                if kind == SamplingKind::TruncatedNormal && !space.is_bounded() {
                    return Err(Error::Config(
                        "truncated normal sampling requires a bounded space".into(),
                    ));
                }
                if kind == SamplingKind::Normal && space.is_bounded() {
                    return Err(Error::Config("normal sampling requires an unbounded space".into()));
                }
                if mean.len() != d || stdev.len() != d {
                    return Err(Error::Config(format!(
                        "mean and stdev must have {d} entries (got {} and {})",
                        mean.len(),
                        stdev.len()
                    )));
                }
                if stdev.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return Err(Error::Config("stdev must be positive and finite".into()));
                }
                if mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::Config("mean must be finite".into()));
                }
            }
        }
        Ok(Self { kind, mean, stdev, space })
    }

    pub fn kind(&self) -> SamplingKind {
        self.kind
    }

    pub fn space(&self) -> &CovariateSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn mean_param(&self) -> &[f64] {
        &self.mean
    }

    pub fn stdev_param(&self) -> &[f64] {
        &self.stdev
    }

    /// Per-dimension first and second raw moments `(E[x], E[x²])` of the distribution.
    pub fn moments(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|j| match self.kind {
                SamplingKind::Uniform => {
                    let (lo, hi) = self.space.bounds().unwrap()[j];
                    (0.5 * (lo + hi), (lo * lo + lo * hi + hi * hi) / 3.0)
                }
                SamplingKind::Normal => {
                    let (m, s) = (self.mean[j], self.stdev[j]);
                    (m, m * m + s * s)
                }
                SamplingKind::TruncatedNormal => {
                    let (lo, hi) = self.space.bounds().unwrap()[j];
                    truncated_normal_moments(self.mean[j], self.stdev[j], lo, hi)
                }
            })
            .collect()
    }

    /// Inverse marginal CDF of coordinate `j` at `u ∈ (0, 1)`.
    pub fn quantile(&self, j: usize, u: f64) -> f64 {
        match self.kind {
            SamplingKind::Uniform => {
                let (lo, hi) = self.space.bounds().unwrap()[j];
                lo + u * (hi - lo)
            }
            SamplingKind::Normal => self.mean[j] + self.stdev[j] * std_normal_quantile(u),
            SamplingKind::TruncatedNormal => {
                let (lo, hi) = self.space.bounds().unwrap()[j];
                let (m, s) = (self.mean[j], self.stdev[j]);
                let (pa, pb) = (std_normal_cdf((lo - m) / s), std_normal_cdf((hi - m) / s));
                (m + s * std_normal_quantile(pa + u * (pb - pa))).clamp(lo, hi)
            }
        }
    }

    fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut x = Vec::with_capacity(d);
        for j in 0..d {
            let v = match self.kind {
                SamplingKind::Uniform => {
                    let (lo, hi) = self.space.bounds().unwrap()[j];
                    rng.random_range(lo..=hi)
                }
                SamplingKind::Normal => {
                    let z: f64 = StandardNormal.sample(rng);
                    self.mean[j] + self.stdev[j] * z
                }
                SamplingKind::TruncatedNormal => {
                    let (lo, hi) = self.space.bounds().unwrap()[j];
                    let normal = Normal::new(self.mean[j], self.stdev[j])
                        .map_err(|e| Error::Config(e.to_string()))?;
                    let mut attempts = 0;
                    loop {
                        let v = normal.sample(rng);
                        if v >= lo && v <= hi {
                            break v;
                        }
                        attempts += 1;
                        if attempts > MAX_REJECTIONS {
                            return Err(Error::Config(format!(
                                "truncated normal on dimension {j} has negligible mass inside [{lo}, {hi}]"
                            )));
                        }
                    }
                }
            };
            x.push(v);
        }
        Ok(x)
    }
}

/// Standard normal quantile.
pub fn std_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF, accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `(E[x], E[x²])` of `N(mean, sd²)` truncated (renormalized) to `[lo, hi]`.
pub fn truncated_normal_moments(mean: f64, sd: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let z = std_normal_cdf(b) - std_normal_cdf(a);
    let (pa, pb) = (std_normal_pdf(a), std_normal_pdf(b));
    let shift = (pa - pb) / z;
    let m1 = mean + sd * shift;
    let var = sd * sd * (1.0 + (a * pa - b * pb) / z - shift * shift);
    (m1, var + m1 * m1)
}

/// What a random stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    TrainingCovariates,
    TestCovariates,
    Simulation,
    NystromNodes,
    AdaptivePool,
    Subsample,
    Verification,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::TrainingCovariates => 1,
            Purpose::TestCovariates => 2,
            Purpose::Simulation => 3,
            Purpose::NystromNodes => 4,
            Purpose::AdaptivePool => 5,
            Purpose::Subsample => 6,
            Purpose::Verification => 7,
        }
    }
}

/// Address of a stream below the master seed.
///
/// `stage` identifies the schedule checkpoint or adaptive step within a macro
/// replication, so that the same design/point indices at different stages get
/// unrelated draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamPath {
    pub macro_rep: u64,
    pub purpose: Purpose,
    pub stage: u64,
    pub design: u64,
    pub point: u64,
    pub replication: u64,
}

impl StreamPath {
    pub fn new(macro_rep: u64, purpose: Purpose) -> Self {
        Self { macro_rep, purpose, stage: 0, design: 0, point: 0, replication: 0 }
    }

    pub fn stage(mut self, stage: u64) -> Self {
        self.stage = stage;
        self
    }

    pub fn design(mut self, design: u64) -> Self {
        self.design = design;
        self
    }

    pub fn point(mut self, point: u64) -> Self {
        self.point = point;
        self
    }

    pub fn replication(mut self, replication: u64) -> Self {
        self.replication = replication;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub path: StreamPath,
}

impl RngStream {
    pub fn new(master_seed: u64, path: StreamPath) -> Self {
        Self { master_seed, path }
    }

    pub fn with_path(&self, path: StreamPath) -> Self {
        Self { master_seed: self.master_seed, path }
    }

    /// A generator seeded from a SHA-256 digest of `(master_seed, path)`.
    pub fn rng(&self) -> ChaCha8Rng {
        let p = &self.path;
        let mut hasher = Sha256::new();
        hasher.update(b"simcov/stream/v1");
        for word in [
            self.master_seed,
            p.macro_rep,
            p.purpose.code(),
            p.stage,
            p.design,
            p.point,
            p.replication,
        ] {
            hasher.update(word.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed)
    }
}

/// Latin hypercube sample of size `m`: every coordinate has exactly one point
/// in each of `m` equal-probability strata, and each point is marginally
/// distributed as `dist`.
pub fn draw_latin_hypercube(dist: &SamplingDistribution, m: usize, stream: &RngStream) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::Config("number of covariate points must be at least 1".into()));
    }
    let mut rng = stream.rng();
    let d = dist.dim();
    let mut pts = vec![vec![0.0; d]; m];
    let mut strata: Vec<usize> = (0..m).collect();
    for j in 0..d {
        strata.shuffle(&mut rng);
        for (p, s) in pts.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            let u = ((*s as f64 + u) / m as f64).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            p[j] = dist.quantile(j, u);
        }
    }
    Ok(pts)
}

/// Draws `m` i.i.d. covariate points from `dist`.
pub fn draw_covariates(dist: &SamplingDistribution, m: usize, stream: &RngStream) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::Config("number of covariate points must be at least 1".into()));
    }
    let mut rng = stream.rng();
    (0..m).map(|_| dist.draw_one(&mut rng)).collect()
}

/// Draws an independent test sample. The stream must not be a training stream.
pub fn draw_test_points(
    dist: &SamplingDistribution,
    m_prime: usize,
    stream: &RngStream,
) -> Result<Vec<Vec<f64>>> {
    if stream.path.purpose == Purpose::TrainingCovariates {
        return Err(Error::Config(
            "test points must be drawn from a stream distinct from the training covariates".into(),
        ));
    }
    draw_covariates(dist, m_prime, stream)
}
