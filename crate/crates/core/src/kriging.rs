//! Stochastic kriging for one design: maximum-likelihood hyperparameters,
//! GLS trend, the MSE-optimal predictor and its optimal MSE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::linalg::{dot, Cholesky};
use crate::noise::{estimate_noise, NoiseEstimate, NoiseMode};

pub const DEFAULT_JITTER: f64 = 1e-8;
pub const DEFAULT_SEARCH_BUDGET: usize = 320;
pub const DEFAULT_WARM_BUDGET: usize = 60;
const GRID_SIDE: usize = 16;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    /// Simple kriging: no trend term.
    None,
    /// Ordinary kriging: `f(x) = 1`.
    Constant,
    /// Universal kriging with `f(x) = (1, x)`.
    Linear,
}

impl RegressorKind {
    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::None => "none",
            RegressorKind::Constant => "constant",
            RegressorKind::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(RegressorKind::None),
            "constant" => Some(RegressorKind::Constant),
            "linear" => Some(RegressorKind::Linear),
            _ => None,
        }
    }

    pub fn q(self, dim: usize) -> usize {
        match self {
            RegressorKind::None => 0,
            RegressorKind::Constant => 1,
            RegressorKind::Linear => dim + 1,
        }
    }

    pub fn basis(self, x: &[f64]) -> Vec<f64> {
        match self {
            RegressorKind::None => Vec::new(),
            RegressorKind::Constant => vec![1.0],
            RegressorKind::Linear => std::iter::once(1.0).chain(x.iter().copied()).collect(),
        }
    }
}

/// How hyperparameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyper {
    /// Full multi-start maximum likelihood for the family.
    Mle(KernelFamily),
    /// Maximum likelihood restarted on a small grid around a previous optimum.
    WarmStart(KernelSpec),
    /// No estimation.
    Fixed(KernelSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub regressors: RegressorKind,
    pub noise: NoiseMode,
    pub search_budget: usize,
    pub warm_budget: usize,
    pub jitter_rel: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            regressors: RegressorKind::Constant,
            noise: NoiseMode::default(),
            search_budget: DEFAULT_SEARCH_BUDGET,
            warm_budget: DEFAULT_WARM_BUDGET,
            jitter_rel: DEFAULT_JITTER,
        }
    }
}

/// Training data for one design: points, sample means and noise estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SkData {
    pub points: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub noise: NoiseEstimate,
}

impl SkData {
    /// Builds the data from a replication table (`table[j]` = outputs at point `j`).
    pub fn from_replications(points: Vec<Vec<f64>>, table: &[Vec<f64>], mode: NoiseMode) -> Result<Self> {
        if points.len() != table.len() {
            return Err(Error::Config("points and replication table differ in length".into()));
        }
        let noise = estimate_noise(table, &points, mode)?;
        let means = table.iter().map(|ys| ys.iter().sum::<f64>() / ys.len() as f64).collect();
        Ok(Self { points, means, noise })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Optimal MSE split into the contributions from estimating `M` and `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsePair {
    pub mse_m: f64,
    pub mse_beta: f64,
    pub total: f64,
}

/// A fitted single-design model. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FittedSK {
    kernel: KernelSpec,
    regressors: RegressorKind,
    beta_hat: Vec<f64>,
    noise: NoiseEstimate,
    points: Vec<Vec<f64>>,
    means: Vec<f64>,
    chol: Cholesky,
    loglik: f64,
    // L⁻¹F, one column per regressor.
    g_cols: Vec<Vec<f64>>,
    info_chol: Option<Cholesky>,
    // Σ_y⁻¹ (Ȳ − Fβ̂)
    alpha: Vec<f64>,
    jitter: f64,
    jitter_rel: f64,
    evaluations: usize,
    feature: Option<FeatureCache>,
}

/// Feature-space summaries for `a (xᵀx' + b)`, where `k(x0) = a Z x̃0` and
/// every query costs `O(d²)` instead of `O(m²)`.
#[derive(Debug, Clone)]
struct FeatureCache {
    a: f64,
    b: f64,
    // WᵀW with W = L⁻¹Z, row-major p×p
    wtw: Vec<f64>,
    // GᵀW, one row per regressor
    gtw: Vec<Vec<f64>>,
    // Zᵀα
    zt_alpha: Vec<f64>,
}

impl FeatureCache {
    fn new(a: f64, b: f64, points: &[Vec<f64>], chol: &Cholesky, g_cols: &[Vec<f64>], alpha: &[f64]) -> Self {
        let z: Vec<Vec<f64>> = points.iter().map(|x| tilde(b, x)).collect();
        let p = z[0].len();
        let w_cols: Vec<Vec<f64>> = (0..p)
            .map(|c| {
                let mut col: Vec<f64> = z.iter().map(|row| row[c]).collect();
                chol.solve_lower_in_place(&mut col);
                col
            })
            .collect();
        let mut wtw = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                let v = dot(&w_cols[i], &w_cols[j]);
                wtw[i * p + j] = v;
                wtw[j * p + i] = v;
            }
        }
        let gtw = g_cols.iter().map(|g| w_cols.iter().map(|w| dot(g, w)).collect()).collect();
        let zt_alpha = (0..p).map(|c| z.iter().zip(alpha).map(|(row, al)| row[c] * al).sum()).collect();
        Self { a, b, wtw, gtw, zt_alpha }
    }
}

struct Gls {
    g_cols: Vec<Vec<f64>>,
    info_chol: Option<Cholesky>,
    beta: Vec<f64>,
    resid: Vec<f64>,
    loglik: f64,
}

fn design_matrix(regressors: RegressorKind, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = points.first().map_or(0, Vec::len);
    let q = regressors.q(d);
    (0..q)
        .map(|c| points.iter().map(|x| regressors.basis(x)[c]).collect())
        .collect()
}

fn check_regressor_rank(f_cols: &[Vec<f64>]) -> Result<()> {
    let q = f_cols.len();
    if q == 0 {
        return Ok(());
    }
    let m = f_cols[0].len();
    if m < q {
        return Err(Error::Regressor(format!("{m} points cannot identify {q} trend coefficients")));
    }
    let mut ftf = vec![0.0; q * q];
    for a in 0..q {
        for b in 0..q {
            ftf[a * q + b] = dot(&f_cols[a], &f_cols[b]);
        }
    }
    let trace: f64 = (0..q).map(|i| ftf[i * q + i]).sum();
    match Cholesky::factor(ftf, q) {
        Ok(c) if c.min_pivot().powi(2) > 1e-12 * trace => Ok(()),
        _ => Err(Error::Regressor("columns of the design matrix are linearly dependent".into())),
    }
}

fn gls(chol: &Cholesky, f_cols: &[Vec<f64>], means: &[f64]) -> Result<Gls> {
    let m = means.len();
    let mut z = means.to_vec();
    chol.solve_lower_in_place(&mut z);
    let g_cols: Vec<Vec<f64>> = f_cols
        .iter()
        .map(|c| {
            let mut v = c.clone();
            chol.solve_lower_in_place(&mut v);
            v
        })
        .collect();
    let q = g_cols.len();
    let (beta, info_chol) = if q == 0 {
        (Vec::new(), None)
    } else {
        let mut info = vec![0.0; q * q];
        for a in 0..q {
            for b in 0..=a {
                let v = dot(&g_cols[a], &g_cols[b]);
                info[a * q + b] = v;
                info[b * q + a] = v;
            }
        }
        let ic = Cholesky::factor(info, q).map_err(|_| Error::Regressor("GLS information matrix is singular".into()))?;
        let gz: Vec<f64> = g_cols.iter().map(|c| dot(c, &z)).collect();
        (ic.solve(&gz), Some(ic))
    };
    let mut resid = z;
    for (c, b) in g_cols.iter().zip(&beta) {
        for (r, g) in resid.iter_mut().zip(c) {
            *r -= g * b;
        }
    }
    let quad = dot(&resid, &resid);
    let loglik = -0.5 * (chol.log_det() + quad + m as f64 * LN_2PI);
    Ok(Gls { g_cols, info_chol, beta, resid, loglik })
}

/// Pairwise geometry reused across likelihood evaluations.
struct Geometry {
    m: usize,
    // Pairwise distances (stationary) or inner products (finite rank), row-major.
    pair: Vec<f64>,
    max_sq_norm: f64,
}

impl Geometry {
    fn new(points: &[Vec<f64>], stationary: bool) -> Self {
        let m = points.len();
        let mut pair = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = if stationary {
                    points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                } else {
                    dot(&points[i], &points[j])
                };
                pair[i * m + j] = v;
                pair[j * m + i] = v;
            }
        }
        let max_sq_norm = points.iter().map(|p| dot(p, p)).fold(0.0, f64::max);
        Self { m, pair, max_sq_norm }
    }

    fn sigma_y(&self, spec: &KernelSpec, noise_diag: &[f64], jitter_rel: f64) -> (Vec<f64>, f64) {
        let m = self.m;
        let mut s = vec![0.0; m * m];
        let jitter = match *spec {
            KernelSpec::Stationary { family, tau2, phi } => {
                for i in 0..m {
                    for j in 0..i {
                        s[i * m + j] = tau2 * family.correlation(phi, self.pair[i * m + j]);
                    }
                    s[i * m + i] = tau2;
                }
                jitter_rel * tau2
            }
            KernelSpec::FiniteRankLinear { a, b } => {
                for i in 0..m {
                    for j in 0..=i {
                        s[i * m + j] = a * (self.pair[i * m + j] + b);
                    }
                }
                jitter_rel * a * (self.max_sq_norm + b)
            }
        };
        for i in 0..m {
            s[i * m + i] += noise_diag[i] + jitter;
        }
        (s, jitter)
    }
}

fn median_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let m = points.len();
    let mut d = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in 0..i {
            let r = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if r > 0.0 {
                d.push(r);
            }
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    *d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Parameter box for the search, as centers of log-ranges
/// `(log p1 range, log p2 range)` where `p1` is the variance-like parameter.
fn search_box(family: KernelFamily, data: &SkData) -> ((f64, f64), (f64, f64)) {
    let v = variance(&data.means);
    let base = if v > 1e-300 { v } else { data.noise.per_point_var.iter().sum::<f64>() / data.len() as f64 };
    let base = if base > 1e-300 { base } else { 1.0 };
    match family {
        KernelFamily::FiniteRankLinear => {
            let msq = data.points.iter().map(|p| dot(p, p)).sum::<f64>() / data.len() as f64;
            let msq = if msq > 0.0 { msq } else { 1.0 };
            let a0 = base / msq;
            ((a0 * 1e-3, a0 * 1e3), (msq * 1e-2, msq * 1e2))
        }
        _ => {
            let med = median_pairwise_distance(&data.points);
            let scale = if family == KernelFamily::SqExp { 1.0 / (med * med) } else { 1.0 / med };
            ((base * 1e-3, base * 1e3), (scale * 1e-2, scale * 1e2))
        }
    }
}

fn make_spec(family: KernelFamily, p1: f64, p2: f64) -> KernelSpec {
    match family {
        KernelFamily::FiniteRankLinear => KernelSpec::FiniteRankLinear { a: p1, b: p2 },
        f => KernelSpec::Stationary { family: f, tau2: p1, phi: p2 },
    }
}

fn spec_params(spec: &KernelSpec) -> (f64, f64) {
    match *spec {
        KernelSpec::Stationary { tau2, phi, .. } => (tau2, phi),
        KernelSpec::FiniteRankLinear { a, b } => (a, b),
    }
}

struct Search<'a> {
    family: KernelFamily,
    geo: Geometry,
    noise_diag: Vec<f64>,
    f_cols: Vec<Vec<f64>>,
    data: &'a SkData,
    jitter_rel: f64,
    evals: usize,
    budget: usize,
    best: Option<(f64, f64, f64)>, // (loglik, log p1, log p2)
}

impl Search<'_> {
    fn eval(&mut self, lp1: f64, lp2: f64) -> f64 {
        if self.evals >= self.budget {
            return f64::NEG_INFINITY;
        }
        self.evals += 1;
        let spec = make_spec(self.family, lp1.exp(), lp2.exp());
        let (s, _) = self.geo.sigma_y(&spec, &self.noise_diag, self.jitter_rel);
        let ll = match Cholesky::factor(s, self.geo.m) {
            Ok(chol) => gls(&chol, &self.f_cols, &self.data.means).map_or(f64::NEG_INFINITY, |g| g.loglik),
            Err(_) => f64::NEG_INFINITY,
        };
        let ll = if ll.is_finite() { ll } else { f64::NEG_INFINITY };
        // Strict improvement keeps the first maximizer in scan order.
        if ll > self.best.map_or(f64::NEG_INFINITY, |b| b.0) {
            self.best = Some((ll, lp1, lp2));
        }
        ll
    }

    fn grid(&mut self, r1: (f64, f64), r2: (f64, f64), side: usize) {
        let (a1, b1) = (r1.0.ln(), r1.1.ln());
        let (a2, b2) = (r2.0.ln(), r2.1.ln());
        let step = |a: f64, b: f64, i: usize| if side == 1 { 0.5 * (a + b) } else { a + (b - a) * i as f64 / (side - 1) as f64 };
        for i in 0..side {
            for j in 0..side {
                self.eval(step(a1, b1, i), step(a2, b2, j));
            }
        }
    }

    /// Alternating golden-section line searches in log space around the incumbent.
    fn refine(&mut self, mut half_width: (f64, f64)) {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut axis = 0;
        while self.evals + 2 <= self.budget {
            let Some((_, c1, c2)) = self.best else { return };
            let center = if axis == 0 { c1 } else { c2 };
            let hw = if axis == 0 { half_width.0 } else { half_width.1 };
            let (mut lo, mut hi) = (center - hw, center + hw);
            let at = |s: &mut Self, t: f64| if axis == 0 { s.eval(t, c2) } else { s.eval(c1, t) };
            let mut x1 = hi - INV_PHI * (hi - lo);
            let mut x2 = lo + INV_PHI * (hi - lo);
            let mut f1 = at(self, x1);
            let mut f2 = at(self, x2);
            for _ in 0..6 {
                if self.evals >= self.budget {
                    break;
                }
                if f1 >= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - INV_PHI * (hi - lo);
                    f1 = at(self, x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + INV_PHI * (hi - lo);
                    f2 = at(self, x2);
                }
            }
            if axis == 0 {
                half_width.0 *= 0.5;
            } else {
                half_width.1 *= 0.5;
            }
            axis = 1 - axis;
        }
    }
}

/// Fits a model from a replication table.
pub fn fit(points: Vec<Vec<f64>>, table: &[Vec<f64>], hyper: Hyper, opts: &FitOptions) -> Result<FittedSK> {
    let data = SkData::from_replications(points, table, opts.noise)?;
    fit_data(data, hyper, opts)
}

/// Fits a model given sample means and a noise estimate.
pub fn fit_data(data: SkData, hyper: Hyper, opts: &FitOptions) -> Result<FittedSK> {
    let m = data.len();
    if m == 0 {
        return Err(Error::Config("cannot fit a model without points".into()));
    }
    if data.means.len() != m || data.noise.len() != m {
        return Err(Error::Config("means, noise and points differ in length".into()));
    }
    if data.means.iter().chain(data.points.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite training data".into()));
    }
    let f_cols = design_matrix(opts.regressors, &data.points);
    check_regressor_rank(&f_cols)?;

    let (spec, evaluations) = match hyper {
        Hyper::Fixed(spec) => (spec, 0),
        Hyper::Mle(family) | Hyper::WarmStart(KernelSpec::Stationary { family, .. })
            if m < 2 =>
        {
            // A single point carries no information about correlation length.
            let ((lo1, hi1), (lo2, hi2)) = search_box(family, &data);
            (make_spec(family, (lo1 * hi1).sqrt(), (lo2 * hi2).sqrt()), 0)
        }
        Hyper::Mle(family) | Hyper::WarmStart(KernelSpec::Stationary { family, .. }) => {
            let mut s = Search {
                family,
                geo: Geometry::new(&data.points, family.is_stationary()),
                noise_diag: data.noise.diag(),
                f_cols: f_cols.clone(),
                data: &data,
                jitter_rel: opts.jitter_rel,
                evals: 0,
                budget: 0,
                best: None,
            };
            let (r1, r2) = search_box(family, &data);
            let full_step1 = (r1.1 / r1.0).ln() / (GRID_SIDE - 1) as f64;
            let full_step2 = (r2.1 / r2.0).ln() / (GRID_SIDE - 1) as f64;
            if let Hyper::WarmStart(prev) = hyper {
                s.budget = opts.warm_budget.max(9);
                let (p1, p2) = spec_params(&prev);
                let w1 = (2.0 * full_step1).exp();
                let w2 = (2.0 * full_step2).exp();
                let side = ((s.budget as f64 * 0.5).sqrt().floor() as usize).clamp(3, 5);
                s.grid((p1 / w1, p1 * w1), (p2 / w2, p2 * w2), side);
                s.refine((full_step1, full_step2));
            } else {
                s.budget = opts.search_budget.max(4);
                let side = ((s.budget as f64 * 0.8).sqrt().floor() as usize).clamp(2, GRID_SIDE);
                s.grid(r1, r2, side);
                let k = (side - 1) as f64;
                s.refine(((r1.1 / r1.0).ln() / k, (r2.1 / r2.0).ln() / k));
            }
            let Some((_, lp1, lp2)) = s.best else {
                return Err(Error::Fit("every hyperparameter candidate was ill-conditioned".into()));
            };
            (make_spec(family, lp1.exp(), lp2.exp()), s.evals)
        }
        Hyper::WarmStart(spec @ KernelSpec::FiniteRankLinear { .. }) => {
            return fit_data(data, Hyper::Mle(spec.family()), opts);
        }
    };
    let mut model = FittedSK::build(spec, opts.regressors, data, opts.jitter_rel)?;
    model.evaluations = evaluations;
    Ok(model)
}

impl FittedSK {
    /// Conditions the model on `data` with fixed hyperparameters.
    pub fn build(kernel: KernelSpec, regressors: RegressorKind, data: SkData, jitter_rel: f64) -> Result<Self> {
        let f_cols = design_matrix(regressors, &data.points);
        check_regressor_rank(&f_cols)?;
        let geo = Geometry::new(&data.points, kernel.family().is_stationary());
        let (s, jitter) = geo.sigma_y(&kernel, &data.noise.diag(), jitter_rel);
        let chol = Cholesky::factor(s, data.len())?;
        let g = gls(&chol, &f_cols, &data.means)?;
        let mut alpha = g.resid;
        chol.solve_upper_in_place(&mut alpha);
        let feature = match kernel {
            KernelSpec::FiniteRankLinear { a, b } => {
                Some(FeatureCache::new(a, b, &data.points, &chol, &g.g_cols, &alpha))
            }
            KernelSpec::Stationary { .. } => None,
        };
        Ok(Self {
            kernel,
            regressors,
            beta_hat: g.beta,
            noise: data.noise,
            points: data.points,
            means: data.means,
            chol,
            loglik: g.loglik,
            g_cols: g.g_cols,
            info_chol: g.info_chol,
            alpha,
            jitter,
            jitter_rel,
            evaluations: 0,
            feature,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn regressors(&self) -> RegressorKind {
        self.regressors
    }

    pub fn beta_hat(&self) -> &[f64] {
        &self.beta_hat
    }

    pub fn noise(&self) -> &NoiseEstimate {
        &self.noise
    }

    pub fn train_points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn train_means(&self) -> &[f64] {
        &self.means
    }

    pub fn chol(&self) -> &Cholesky {
        &self.chol
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    /// Number of likelihood evaluations spent on hyperparameter search.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// `Σ_y` as assembled for the factorization (jitter included).
    pub fn sigma_y(&self) -> Vec<f64> {
        let m = self.points.len();
        let geo = Geometry::new(&self.points, self.kernel.family().is_stationary());
        let (mut s, _) = geo.sigma_y(&self.kernel, &self.noise.diag(), self.jitter_rel);
        for i in 0..m {
            for j in 0..i {
                s[j * m + i] = s[i * m + j];
            }
        }
        s
    }

    /// Log-likelihood of the training means at other hyperparameters of the same family.
    pub fn loglik_at(&self, kernel: &KernelSpec) -> Result<f64> {
        let data = SkData { points: self.points.clone(), means: self.means.clone(), noise: self.noise.clone() };
        Ok(FittedSK::build(*kernel, self.regressors, data, self.jitter_rel)?.loglik)
    }

    fn check_dim(&self, x0: &[f64]) {
        assert_eq!(x0.len(), self.points[0].len(), "query point dimension mismatch");
    }

    /// `ŷ(x0)`.
    pub fn predict(&self, x0: &[f64]) -> f64 {
        self.check_dim(x0);
        if let Some(fc) = &self.feature {
            return dot(&self.regressors.basis(x0), &self.beta_hat) + fc.a * dot(&tilde(fc.b, x0), &fc.zt_alpha);
        }
        let k: Vec<f64> = self.points.iter().map(|p| self.kernel.eval_unchecked(p, x0)).collect();
        dot(&self.regressors.basis(x0), &self.beta_hat) + dot(&k, &self.alpha)
    }

    /// Optimal MSE at `x0` and its decomposition.
    pub fn mse_opt(&self, x0: &[f64]) -> Result<MsePair> {
        Ok(self.predict_with_mse(x0)?.1)
    }

    /// `(ŷ(x0), MSE(x0))` sharing one cross-covariance evaluation.
    pub fn predict_with_mse(&self, x0: &[f64]) -> Result<(f64, MsePair)> {
        self.check_dim(x0);
        match &self.feature {
            Some(fc) => self.predict_with_mse_features(fc, x0),
            None => self.predict_with_mse_dense(x0),
        }
    }

    /// The `O(m²)` path through the cross-covariance vector, for any kernel.
    pub fn predict_with_mse_dense(&self, x0: &[f64]) -> Result<(f64, MsePair)> {
        self.check_dim(x0);
        let mut v: Vec<f64> = self.points.iter().map(|p| self.kernel.eval_unchecked(p, x0)).collect();
        let f0 = self.regressors.basis(x0);
        let yhat = dot(&f0, &self.beta_hat) + dot(&v, &self.alpha);
        self.chol.solve_lower_in_place(&mut v);
        let k00 = self.kernel.eval_unchecked(x0, x0);
        let vv = dot(&v, &v);
        let gv: Vec<f64> = self.g_cols.iter().map(|g| dot(g, &v)).collect();
        self.finish(yhat, k00, vv, &f0, &gv)
    }

    fn predict_with_mse_features(&self, fc: &FeatureCache, x0: &[f64]) -> Result<(f64, MsePair)> {
        let t = tilde(fc.b, x0);
        let p = t.len();
        let f0 = self.regressors.basis(x0);
        let yhat = dot(&f0, &self.beta_hat) + fc.a * dot(&t, &fc.zt_alpha);
        let k00 = fc.a * dot(&t, &t);
        let mut quad = 0.0;
        for i in 0..p {
            quad += t[i] * dot(&fc.wtw[i * p..(i + 1) * p], &t);
        }
        let vv = fc.a * fc.a * quad;
        let gv: Vec<f64> = fc.gtw.iter().map(|row| fc.a * dot(row, &t)).collect();
        self.finish(yhat, k00, vv, &f0, &gv)
    }

    /// MSE from `k00`, `‖L⁻¹k‖²` and `Gᵀ L⁻¹k`.
    fn finish(&self, yhat: f64, k00: f64, vv: f64, f0: &[f64], gv: &[f64]) -> Result<(f64, MsePair)> {
        let mse_m_raw = k00 - vv;
        let tol = 1e-8 * k00.abs().max(self.jitter);
        if !mse_m_raw.is_finite() || mse_m_raw < -tol.max(1e-10 * k00.abs()) * 1e2 {
            return Err(Error::Numeric(format!("negative MSE {mse_m_raw:e} at query point")));
        }
        let mse_m = mse_m_raw.max(0.0);
        let mse_beta = match &self.info_chol {
            None => 0.0,
            Some(ic) => {
                let mut eta: Vec<f64> = f0.iter().zip(gv).map(|(f, g)| f - g).collect();
                ic.solve_lower_in_place(&mut eta);
                dot(&eta, &eta)
            }
        };
        Ok((yhat, MsePair { mse_m, mse_beta, total: mse_m + mse_beta }))
    }
}

/// Closed forms for `a (xᵀx' + b)` with `f ≡ 0` and homogeneous noise `σ²/n`,
/// evaluated in the `(d+1)`-dimensional feature space.
#[derive(Debug, Clone)]
pub struct FiniteRankClosedForm {
    a: f64,
    b: f64,
    s: f64,
    // Cholesky of I + (a n / σ²) ZᵀZ
    chol: Cholesky,
    // Z
    z: Vec<Vec<f64>>,
}

impl FiniteRankClosedForm {
    pub fn new(a: f64, b: f64, sigma2: f64, n: usize, points: &[Vec<f64>]) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && sigma2 > 0.0) || n == 0 || points.is_empty() {
            return Err(Error::Config("finite-rank closed form needs a, b, σ² > 0, n ≥ 1 and points".into()));
        }
        let z: Vec<Vec<f64>> = points.iter().map(|x| tilde(b, x)).collect();
        let p = z[0].len();
        let c = a * n as f64 / sigma2;
        let mut mat = vec![0.0; p * p];
        for row in &z {
            for i in 0..p {
                for j in 0..p {
                    mat[i * p + j] += c * row[i] * row[j];
                }
            }
        }
        for i in 0..p {
            mat[i * p + i] += 1.0;
        }
        Ok(Self { a, b, s: sigma2 / n as f64, chol: Cholesky::factor(mat, p)?, z })
    }

    /// `a x̃₀ᵀ (I + (a n/σ²) ZᵀZ)⁻¹ x̃₀`.
    pub fn mse(&self, x0: &[f64]) -> f64 {
        let mut t = tilde(self.b, x0);
        self.chol.solve_lower_in_place(&mut t);
        self.a * dot(&t, &t)
    }

    /// `a x̃₀ᵀ Zᵀ (a Z Zᵀ + (σ²/n) I)⁻¹ Ȳ`, via `Zᵀ(aZZᵀ + sI)⁻¹ = (aZᵀZ + sI)⁻¹Zᵀ`
    /// and `aZᵀZ + sI = s (I + (a/s) ZᵀZ)`.
    pub fn predict(&self, means: &[f64], x0: &[f64]) -> f64 {
        let p = self.z[0].len();
        let mut zty = vec![0.0; p];
        for (row, y) in self.z.iter().zip(means) {
            for i in 0..p {
                zty[i] += row[i] * y;
            }
        }
        let w = self.chol.solve(&zty);
        self.a * dot(&tilde(self.b, x0), &w) / self.s
    }
}

fn tilde(b: f64, x: &[f64]) -> Vec<f64> {
    std::iter::once(b.sqrt()).chain(x.iter().copied()).collect()
}

/// Finite-rank optimal MSE at one query point.
pub fn finite_rank_mse(a: f64, b: f64, sigma2: f64, n: usize, points: &[Vec<f64>], x0: &[f64]) -> Result<f64> {
    Ok(FiniteRankClosedForm::new(a, b, sigma2, n, points)?.mse(x0))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            (0.1f64..10.0, 0.05f64..5.0).prop_map(|(t, p)| KernelSpec::stationary(KernelFamily::SqExp, t, p).unwrap()),
            (0.1f64..10.0, 0.05f64..5.0).prop_map(|(t, p)| KernelSpec::stationary(KernelFamily::Matern52, t, p).unwrap()),
            (0.1f64..10.0, 0.05f64..5.0).prop_map(|(t, p)| KernelSpec::stationary(KernelFamily::Matern32, t, p).unwrap()),
            (0.1f64..10.0, 0.05f64..5.0).prop_map(|(t, p)| KernelSpec::stationary(KernelFamily::Exp, t, p).unwrap()),
            (0.01f64..2.0, 0.1f64..5.0).prop_map(|(a, b)| KernelSpec::finite_rank(a, b).unwrap()),
        ]
    }

    fn regressors() -> impl Strategy<Value = RegressorKind> {
        prop_oneof![Just(RegressorKind::None), Just(RegressorKind::Constant), Just(RegressorKind::Linear)]
    }

    fn data(m: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(proptest::collection::vec(1.0f64..10.0, 2), m),
            proptest::collection::vec(-5.0f64..5.0, m),
            proptest::collection::vec(-5.0f64..5.0, m),
            proptest::collection::vec(0.01f64..2.0, m),
        )
    }

    fn sk(points: &[Vec<f64>], means: Vec<f64>, var: &[f64]) -> SkData {
        SkData {
            points: points.to_vec(),
            means,
            noise: NoiseEstimate {
                per_point_var: var.to_vec(),
                reps: vec![10; var.len()],
                mode: NoiseMode::Raw,
                floor: 0.0,
                fell_back_to_raw: false,
            },
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mse_identities(
            s in spec(),
            reg in regressors(),
            (points, y1, y2, var) in (5usize..25).prop_flat_map(data),
            x0 in proptest::collection::vec(0.0f64..11.0, 2),
        ) {
            let Ok(a) = FittedSK::build(s, reg, sk(&points, y1.clone(), &var), DEFAULT_JITTER) else {
                return Ok(());
            };
            let b = FittedSK::build(s, reg, sk(&points, y2.clone(), &var), DEFAULT_JITTER).unwrap();
            let pa = a.mse_opt(&x0).unwrap();
            prop_assert!((pa.mse_m + pa.mse_beta - pa.total).abs() <= 1e-8 * pa.total.max(f64::MIN_POSITIVE));
            prop_assert!(pa.total >= 0.0);
            // The MSE never looks at the observed means.
            prop_assert_eq!(pa, b.mse_opt(&x0).unwrap());
            if reg == RegressorKind::None {
                let sum: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| p + q).collect();
                let c = FittedSK::build(s, reg, sk(&points, sum, &var), DEFAULT_JITTER).unwrap();
                let lhs = c.predict(&x0);
                let rhs = a.predict(&x0) + b.predict(&x0);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + a.predict(&x0).abs() + b.predict(&x0).abs()));
            }
        }
    }
}
