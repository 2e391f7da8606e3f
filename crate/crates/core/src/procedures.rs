//! Experiment drivers: the static fixed-distribution convergence experiment,
//! the Adaptive MSE Procedure, and prediction of the number of covariate
//! points needed for a target maximal IMSE.

use rand::seq::index::sample as index_sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::kriging::{fit, FitOptions, FittedSK, Hyper};
use crate::linalg::simple_ols;
use crate::measures::{evaluate, MeasureReport};
use crate::problems::ProblemSpec;
use crate::sampling::{draw_covariates, draw_test_points, Purpose, RngStream, SamplingDistribution, StreamPath};

pub const DEFAULT_POOL_SIZE: usize = 512;
pub const DEFAULT_RESAMPLES: usize = 10;
pub const DEFAULT_SUBSAMPLE_SCHEDULE: [usize; 6] = [10, 15, 23, 35, 53, 80];

/// Kernel hyperparameters: estimated by maximum likelihood or held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Estimate(KernelFamily),
    Fixed(KernelSpec),
}

impl KernelChoice {
    pub fn family(&self) -> KernelFamily {
        match self {
            KernelChoice::Estimate(f) => *f,
            KernelChoice::Fixed(spec) => spec.family(),
        }
    }

    pub fn label(&self) -> &'static str {
        self.family().name()
    }

    fn hyper(&self, previous: Option<KernelSpec>) -> Hyper {
        match (self, previous) {
            (KernelChoice::Fixed(spec), _) => Hyper::Fixed(*spec),
            (KernelChoice::Estimate(_), Some(prev)) => Hyper::WarmStart(prev),
            (KernelChoice::Estimate(f), None) => Hyper::Mle(*f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub dist: SamplingDistribution,
    pub m_schedule: Vec<usize>,
    /// Replications per (design, point).
    pub n: usize,
    pub delta0: f64,
    pub kernel: KernelChoice,
    pub fit: FitOptions,
    pub macro_reps: usize,
    pub master_seed: u64,
    /// Test sample size `m'` for the Monte Carlo measures.
    pub test_points: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_schedule.is_empty() || self.m_schedule[0] == 0 {
            return Err(Error::Config("m schedule must be nonempty and start at m ≥ 1".into()));
        }
        if self.m_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("m schedule must be strictly increasing".into()));
        }
        if self.n == 0 || self.macro_reps == 0 || self.test_points == 0 {
            return Err(Error::Config("n, macro_reps and test_points must be at least 1".into()));
        }
        if !(self.delta0 >= 0.0) {
            return Err(Error::Config("δ0 must be nonnegative".into()));
        }
        if self.dist.dim() != self.problem.dim {
            return Err(Error::Config(format!(
                "sampling distribution has dimension {}, problem has {}",
                self.dist.dim(),
                self.problem.dim
            )));
        }
        Ok(())
    }

    fn stream(&self, macro_rep: usize, purpose: Purpose) -> RngStream {
        RngStream::new(self.master_seed, StreamPath::new(macro_rep as u64, purpose))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Static,
    Adaptive,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Static => "static",
            Strategy::Adaptive => "adaptive",
        }
    }
}

/// Outcome of one (macro rep, m) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub macro_rep: usize,
    pub m: usize,
    pub report: Option<MeasureReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub strategy: Strategy,
    pub problem: String,
    pub kernel: String,
    pub dist: String,
    pub m: usize,
    pub n: usize,
    /// Macro replications that produced measures.
    pub macro_reps: usize,
    pub failures: usize,
    pub mean_max_imse: f64,
    pub se_max_imse: f64,
    pub mean_ipfs_ind: f64,
    pub se_ipfs_ind: f64,
    pub mean_ipfs_apfs: f64,
    pub se_ipfs_apfs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `cells[r][s]` for macro rep `r` and schedule entry `s`.
    pub cells: Vec<Vec<Cell>>,
    pub warnings: Vec<String>,
}

impl ConvergenceTable {
    /// Per-macro-rep max IMSE at schedule entry `s`, `None` for failed cells.
    pub fn max_imse_by_rep(&self, s: usize) -> Vec<Option<f64>> {
        self.cells.iter().map(|rep| rep[s].report.as_ref().map(|r| r.max_imse)).collect()
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn is_cell_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::IllConditioned { .. } | Error::Numeric(_) | Error::Fit(_) | Error::Regressor(_) | Error::InsufficientReplications { .. }
    )
}

struct RepOutcome {
    cells: Vec<Cell>,
    noise_fallbacks: usize,
}

fn summarize(cfg: &ExperimentConfig, strategy: Strategy, reps: Vec<RepOutcome>) -> ConvergenceTable {
    let mut warnings = Vec::new();
    let fallbacks: usize = reps.iter().map(|r| r.noise_fallbacks).sum();
    if fallbacks > 0 {
        warnings.push(format!(
            "{}: noise smoothing was rank deficient in {fallbacks} fits; raw sample variances used",
            strategy.name()
        ));
    }
    let cells: Vec<Vec<Cell>> = reps.into_iter().map(|r| r.cells).collect();
    let rows = cfg
        .m_schedule
        .iter()
        .enumerate()
        .map(|(s, &m)| {
            let ok: Vec<&MeasureReport> = cells.iter().filter_map(|rep| rep[s].report.as_ref()).collect();
            let failures = cells.len() - ok.len();
            if failures > 0 {
                let first = cells.iter().find_map(|rep| rep[s].error.clone()).unwrap_or_default();
                warnings.push(format!("{} m={m}: {failures} macro replications failed ({first})", strategy.name()));
            }
            let imse: Vec<f64> = ok.iter().map(|r| r.max_imse).collect();
            let ind: Vec<f64> = ok.iter().filter_map(|r| r.ipfs_indicator).collect();
            let apfs: Vec<f64> = ok.iter().map(|r| r.ipfs_apfs).collect();
            let (mean_max_imse, se_max_imse) = mean_se(&imse);
            let (mean_ipfs_ind, se_ipfs_ind) = mean_se(&ind);
            let (mean_ipfs_apfs, se_ipfs_apfs) = mean_se(&apfs);
            ConvergenceRow {
                strategy,
                problem: cfg.problem.kind.name().to_string(),
                kernel: cfg.kernel.label().to_string(),
                dist: cfg.dist.kind().name().to_string(),
                m,
                n: cfg.n,
                macro_reps: ok.len(),
                failures,
                mean_max_imse,
                se_max_imse,
                mean_ipfs_ind,
                se_ipfs_ind,
                mean_ipfs_apfs,
                se_ipfs_apfs,
            }
        })
        .collect();
    ConvergenceTable { rows, cells, warnings }
}

/// Simulates `n` outputs per design at `points[from..]` and appends them to `tables`.
fn simulate_into(
    cfg: &ExperimentConfig,
    stream: &RngStream,
    points: &[Vec<f64>],
    from: usize,
    n: usize,
    tables: &mut [Vec<Vec<f64>>],
) -> Result<()> {
    let new: Vec<Vec<Vec<f64>>> = (0..cfg.problem.k())
        .into_par_iter()
        .map(|i| {
            (from..points.len())
                .map(|j| {
                    let s = stream.with_path(stream.path.design(i as u64).point(j as u64));
                    cfg.problem.sample(i, &points[j], n, &s)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    for (t, rows) in tables.iter_mut().zip(new) {
        t.extend(rows);
    }
    Ok(())
}

/// Fits one model per design on the first `m` points.
fn fit_designs(
    cfg: &ExperimentConfig,
    points: &[Vec<f64>],
    tables: &[Vec<Vec<f64>>],
    m: usize,
    previous: &[Option<KernelSpec>],
) -> Result<Vec<FittedSK>> {
    (0..cfg.problem.k())
        .into_par_iter()
        .map(|i| fit(points[..m].to_vec(), &tables[i][..m], cfg.kernel.hyper(previous[i]), &cfg.fit))
        .collect()
}

fn measure_cell(
    cfg: &ExperimentConfig,
    macro_rep: usize,
    m: usize,
    fitted: Result<Vec<FittedSK>>,
    tests: &[Vec<f64>],
    previous: &mut [Option<KernelSpec>],
    noise_fallbacks: &mut usize,
) -> Result<Cell> {
    let outcome = fitted.and_then(|models| {
        for (p, model) in previous.iter_mut().zip(&models) {
            *p = Some(*model.kernel());
            *noise_fallbacks += model.noise().fell_back_to_raw as usize;
        }
        evaluate(&models, tests, cfg.delta0, Some(&cfg.problem))
    });
    match outcome {
        Ok(report) => Ok(Cell { macro_rep, m, report: Some(report), error: None }),
        Err(e) if is_cell_failure(&e) => Ok(Cell { macro_rep, m, report: None, error: Some(e.to_string()) }),
        Err(e) => Err(e),
    }
}

/// Static sampling from `P_X`: per macro replication, a nested sequence of
/// covariate points whose prefixes give each `m` in the schedule.
pub fn run_static_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let max_m = *cfg.m_schedule.last().unwrap();
    let reps: Vec<RepOutcome> = (0..cfg.macro_reps)
        .into_par_iter()
        .map(|r| {
            let points = draw_covariates(&cfg.dist, max_m, &cfg.stream(r, Purpose::TrainingCovariates))?;
            let tests = draw_test_points(&cfg.dist, cfg.test_points, &cfg.stream(r, Purpose::TestCovariates))?;
            let mut tables = vec![Vec::new(); cfg.problem.k()];
            simulate_into(cfg, &cfg.stream(r, Purpose::Simulation), &points, 0, cfg.n, &mut tables)?;
            let mut previous = vec![None; cfg.problem.k()];
            let mut noise_fallbacks = 0;
            let mut cells = Vec::with_capacity(cfg.m_schedule.len());
            for &m in &cfg.m_schedule {
                let fitted = fit_designs(cfg, &points, &tables, m, &previous);
                cells.push(measure_cell(cfg, r, m, fitted, &tests, &mut previous, &mut noise_fallbacks)?);
            }
            Ok(RepOutcome { cells, noise_fallbacks })
        })
        .collect::<Result<_>>()?;
    Ok(summarize(cfg, Strategy::Static, reps))
}

/// `max_i MSE_i(x)`.
pub fn max_mse(models: &[FittedSK], x: &[f64]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for m in models {
        best = best.max(m.mse_opt(x)?.total);
    }
    Ok(best)
}

/// Index and value of the candidate with the largest `max_i MSE_i`; the first
/// one wins ties.
pub fn pool_argmax(models: &[FittedSK], pool: &[Vec<f64>]) -> Result<(usize, f64)> {
    if pool.is_empty() || models.is_empty() {
        return Err(Error::Config("adaptive step needs models and a nonempty candidate pool".into()));
    }
    let crit: Vec<f64> = pool.par_iter().map(|x| max_mse(models, x)).collect::<Result<_>>()?;
    let mut best = 0;
    for (j, c) in crit.iter().enumerate().skip(1) {
        if *c > crit[best] {
            best = j;
        }
    }
    Ok((best, crit[best]))
}

/// Next covariate point of the Adaptive MSE Procedure, maximized over a pool
/// of `pool_size` draws from `dist`.
pub fn adaptive_mse_step(
    models: &[FittedSK],
    dist: &SamplingDistribution,
    pool_size: usize,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    let pool = draw_covariates(dist, pool_size, stream)?;
    let (j, _) = pool_argmax(models, &pool)?;
    Ok(pool[j].clone())
}

/// The Adaptive MSE Procedure: start at the center of the covariate space with
/// `n0` replications per design, then add the pool maximizer of the largest
/// MSE one point at a time, refitting after each addition.
pub fn run_adaptive_experiment(cfg: &ExperimentConfig, n0: usize, pool_size: usize) -> Result<ConvergenceTable> {
    cfg.validate()?;
    if n0 == 0 || pool_size == 0 {
        return Err(Error::Config("n0 and pool_size must be at least 1".into()));
    }
    let center = cfg
        .dist
        .space()
        .center()
        .ok_or_else(|| Error::Config("the adaptive procedure needs a bounded covariate space".into()))?;
    let max_m = *cfg.m_schedule.last().unwrap();
    let reps: Vec<RepOutcome> = (0..cfg.macro_reps)
        .into_par_iter()
        .map(|r| {
            let tests = draw_test_points(&cfg.dist, cfg.test_points, &cfg.stream(r, Purpose::TestCovariates))?;
            let sim = cfg.stream(r, Purpose::Simulation);
            let mut points = vec![center.clone()];
            let mut tables = vec![Vec::new(); cfg.problem.k()];
            simulate_into(cfg, &sim, &points, 0, n0, &mut tables)?;
            let mut previous: Vec<Option<KernelSpec>> = vec![None; cfg.problem.k()];
            let mut noise_fallbacks = 0;
            let mut cells = Vec::with_capacity(cfg.m_schedule.len());
            let mut failed: Option<String> = None;
            loop {
                let m = points.len();
                // Few points say little about the correlation length; search afresh until m ≥ 3.
                let warm: Vec<Option<KernelSpec>> = if m >= 3 { previous.clone() } else { vec![None; previous.len()] };
                let models = match fit_designs(cfg, &points, &tables, m, &warm) {
                    Ok(models) => models,
                    Err(e) if is_cell_failure(&e) => {
                        failed = Some(e.to_string());
                        break;
                    }
                    Err(e) => return Err(e),
                };
                if cfg.m_schedule.contains(&m) {
                    let cell =
                        measure_cell(cfg, r, m, Ok(models.clone()), &tests, &mut previous, &mut noise_fallbacks)?;
                    cells.push(cell);
                } else {
                    for (p, model) in previous.iter_mut().zip(&models) {
                        *p = Some(*model.kernel());
                        noise_fallbacks += model.noise().fell_back_to_raw as usize;
                    }
                }
                if m >= max_m {
                    break;
                }
                let pool_stream = cfg.stream(r, Purpose::AdaptivePool).with_path(
                    StreamPath::new(r as u64, Purpose::AdaptivePool).stage(m as u64),
                );
                let x = match adaptive_mse_step(&models, &cfg.dist, pool_size, &pool_stream) {
                    Ok(x) => x,
                    Err(e) if is_cell_failure(&e) => {
                        failed = Some(e.to_string());
                        break;
                    }
                    Err(e) => return Err(e),
                };
                points.push(x);
                simulate_into(cfg, &sim, &points, m, n0, &mut tables)?;
            }
            // Checkpoints not reached after a failure.
            for &m in &cfg.m_schedule[cells.len()..] {
                cells.push(Cell { macro_rep: r, m, report: None, error: failed.clone() });
            }
            Ok(RepOutcome { cells, noise_fallbacks })
        })
        .collect::<Result<_>>()?;
    let mut table = summarize(cfg, Strategy::Adaptive, reps);
    table.warnings.push(format!("adaptive argmax taken over a pool of {pool_size} draws from the sampling distribution"));
    Ok(table)
}

/// Covariate points of one adaptive macro replication, in selection order.
pub fn adaptive_design_points(cfg: &ExperimentConfig, n0: usize, pool_size: usize, macro_rep: usize) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let center = cfg
        .dist
        .space()
        .center()
        .ok_or_else(|| Error::Config("the adaptive procedure needs a bounded covariate space".into()))?;
    let max_m = *cfg.m_schedule.last().unwrap();
    let sim = cfg.stream(macro_rep, Purpose::Simulation);
    let mut points = vec![center];
    let mut tables = vec![Vec::new(); cfg.problem.k()];
    simulate_into(cfg, &sim, &points, 0, n0, &mut tables)?;
    let mut previous: Vec<Option<KernelSpec>> = vec![None; cfg.problem.k()];
    while points.len() < max_m {
        let m = points.len();
        let warm: Vec<Option<KernelSpec>> = if m >= 3 { previous.clone() } else { vec![None; previous.len()] };
        let models = fit_designs(cfg, &points, &tables, m, &warm)?;
        for (p, model) in previous.iter_mut().zip(&models) {
            *p = Some(*model.kernel());
        }
        let pool_stream =
            RngStream::new(cfg.master_seed, StreamPath::new(macro_rep as u64, Purpose::AdaptivePool).stage(m as u64));
        points.push(adaptive_mse_step(&models, &cfg.dist, pool_size, &pool_stream)?);
        simulate_into(cfg, &sim, &points, m, n0, &mut tables)?;
    }
    Ok(points)
}

/// Fitted power law `log IMSE = intercept + slope · log m` and the implied
/// number of points for a target precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MPrediction {
    pub m_hat: usize,
    /// `exp((log c0 − intercept)/slope)` before rounding up.
    pub m_continuous: f64,
    pub slope: f64,
    pub intercept: f64,
    pub c0: f64,
}

/// Smallest integer `m` whose fitted maximal IMSE is at most `c0`.
pub fn predict_m_from_line(slope: f64, intercept: f64, c0: f64) -> Result<MPrediction> {
    if !(c0 > 0.0) {
        return Err(Error::Config(format!("target precision must be positive, got {c0}")));
    }
    if !(slope < 0.0) {
        return Err(Error::NoConvergence { slope });
    }
    let m_continuous = ((c0.ln() - intercept) / slope).exp();
    if !m_continuous.is_finite() || m_continuous > 1e15 {
        return Err(Error::Numeric(format!("predicted m = {m_continuous:e} is out of range")));
    }
    // Guard against ceil(200.0000000001) = 201 from rounding in the fit.
    let m_hat = ((m_continuous * (1.0 - 1e-9)).ceil() as usize).max(1);
    Ok(MPrediction { m_hat, m_continuous, slope, intercept, c0 })
}

/// OLS of `log(max IMSE)` on `log m`, then [`predict_m_from_line`].
pub fn predict_m_for_target(imse_by_m: &[(usize, f64)], c0: f64) -> Result<MPrediction> {
    if imse_by_m.len() < 3 {
        return Err(Error::Config(format!("need at least 3 (m, IMSE) pairs, got {}", imse_by_m.len())));
    }
    if imse_by_m.iter().any(|(m, v)| *m == 0 || !(*v > 0.0)) {
        return Err(Error::Config("sizes must be positive and IMSE values strictly positive".into()));
    }
    let x: Vec<f64> = imse_by_m.iter().map(|(m, _)| (*m as f64).ln()).collect();
    let y: Vec<f64> = imse_by_m.iter().map(|(_, v)| v.ln()).collect();
    let (intercept, slope, _) = simple_ols(&x, &y);
    predict_m_from_line(slope, intercept, c0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetPrecisionConfig {
    /// `m_schedule` holds the subsample sizes, the last being the full `m`;
    /// `macro_reps` is the number of verification replications.
    pub base: ExperimentConfig,
    pub c0: f64,
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPrecisionResult {
    /// Averaged max IMSE per subsample size.
    pub schedule: Vec<(usize, f64)>,
    pub prediction: MPrediction,
    /// Max IMSE with `m_hat` points per verification replication.
    pub verified_max_imse: Vec<Option<f64>>,
    pub median_verified: Option<f64>,
    pub mean_verified: Option<f64>,
    pub warnings: Vec<String>,
}

fn max_imse_of(cfg: &ExperimentConfig, points: &[Vec<f64>], tables: &[Vec<Vec<f64>>], tests: &[Vec<f64>]) -> Result<f64> {
    let m = points.len();
    let models = fit_designs(cfg, points, tables, m, &vec![None; cfg.problem.k()])?;
    Ok(evaluate(&models, tests, cfg.delta0, Some(&cfg.problem))?.max_imse)
}

fn subset<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

fn sorted_sample(stream: &RngStream, n: usize, k: usize) -> Vec<usize> {
    let mut v = index_sample(&mut stream.rng(), n, k).into_vec();
    v.sort_unstable();
    v
}

/// Subsample-fit-extrapolate prediction of `m_0`, then verification with
/// `m_hat` points built from the existing sample plus fresh draws.
pub fn run_target_precision(cfg: &TargetPrecisionConfig) -> Result<TargetPrecisionResult> {
    let base = &cfg.base;
    base.validate()?;
    if base.m_schedule.len() < 3 {
        return Err(Error::Config("target-precision schedule needs at least 3 sizes".into()));
    }
    if cfg.resamples == 0 {
        return Err(Error::Config("resamples must be at least 1".into()));
    }
    let m = *base.m_schedule.last().unwrap();
    let points = draw_covariates(&base.dist, m, &base.stream(0, Purpose::TrainingCovariates))?;
    let tests = draw_test_points(&base.dist, base.test_points, &base.stream(0, Purpose::TestCovariates))?;
    let sim = base.stream(0, Purpose::Simulation);
    let mut tables = vec![Vec::new(); base.problem.k()];
    simulate_into(base, &sim, &points, 0, base.n, &mut tables)?;

    let mut warnings = Vec::new();
    let mut schedule = Vec::new();
    for (l, &ml) in base.m_schedule.iter().enumerate() {
        let resamples = if ml == m { 1 } else { cfg.resamples };
        let vals: Vec<Result<f64>> = (0..resamples)
            .into_par_iter()
            .map(|rs| {
                let idx = if ml == m {
                    (0..m).collect()
                } else {
                    let path = StreamPath::new(0, Purpose::Subsample).stage(l as u64).replication(rs as u64);
                    sorted_sample(&RngStream::new(base.master_seed, path), m, ml)
                };
                let t: Vec<Vec<Vec<f64>>> = tables.iter().map(|t| subset(t, &idx)).collect();
                max_imse_of(base, &subset(&points, &idx), &t, &tests)
            })
            .collect();
        let mut ok = Vec::new();
        for v in vals {
            match v {
                Ok(v) => ok.push(v),
                Err(e) if is_cell_failure(&e) => warnings.push(format!("subsample m={ml}: {e}")),
                Err(e) => return Err(e),
            }
        }
        if ok.is_empty() {
            warnings.push(format!("subsample size {ml} dropped: every fit failed"));
        } else {
            schedule.push((ml, ok.iter().sum::<f64>() / ok.len() as f64));
        }
    }
    let prediction = predict_m_for_target(&schedule, cfg.c0)?;
    let m_hat = prediction.m_hat;

    let verified: Vec<Result<f64>> = (0..base.macro_reps)
        .into_par_iter()
        .map(|v| {
            let stage = v as u64 + 1;
            let ver = RngStream::new(base.master_seed, StreamPath::new(0, Purpose::Verification).stage(stage));
            let vtests = draw_test_points(&base.dist, base.test_points, &base.stream(v + 1, Purpose::TestCovariates))?;
            if m_hat <= m {
                let idx = sorted_sample(&ver, m, m_hat);
                let t: Vec<Vec<Vec<f64>>> = tables.iter().map(|t| subset(t, &idx)).collect();
                return max_imse_of(base, &subset(&points, &idx), &t, &vtests);
            }
            let mut all = points.clone();
            all.extend(draw_covariates(&base.dist, m_hat - m, &ver)?);
            let mut t = tables.clone();
            simulate_into(base, &sim.with_path(sim.path.stage(stage)), &all, m, base.n, &mut t)?;
            max_imse_of(base, &all, &t, &vtests)
        })
        .collect();
    let mut verified_max_imse = Vec::with_capacity(verified.len());
    for v in verified {
        match v {
            Ok(v) => verified_max_imse.push(Some(v)),
            Err(e) if is_cell_failure(&e) => {
                warnings.push(format!("verification failed: {e}"));
                verified_max_imse.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let mut ok: Vec<f64> = verified_max_imse.iter().flatten().copied().collect();
    ok.sort_by(f64::total_cmp);
    let median_verified = match ok.len() {
        0 => None,
        n if n % 2 == 1 => Some(ok[n / 2]),
        n => Some(0.5 * (ok[n / 2 - 1] + ok[n / 2])),
    };
    let mean_verified = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
    Ok(TargetPrecisionResult { schedule, prediction, verified_max_imse, median_verified, mean_verified, warnings })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn power_law_recovered(log_a in -5.0f64..5.0, s in -3.0f64..-0.1) {
            let rows: Vec<(usize, f64)> =
                [10usize, 15, 23, 35, 53, 80].iter().map(|m| (*m, (log_a + s * (*m as f64).ln()).exp())).collect();
            let c0 = (log_a + s * 120f64.ln()).exp();
            let p = predict_m_for_target(&rows, c0).unwrap();
            prop_assert!((p.m_hat as i64 - 120).abs() <= 1);
            prop_assert!((p.slope - s).abs() < 1e-9);
            prop_assert!((p.intercept - log_a).abs() < 1e-9);
        }
    }
}
