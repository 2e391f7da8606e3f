//! TOML run configuration: schema, presets, `--set` overrides and hashing.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use simcov::kernels::{KernelFamily, KernelSpec};
use simcov::kriging::{FitOptions, RegressorKind, DEFAULT_JITTER, DEFAULT_SEARCH_BUDGET, DEFAULT_WARM_BUDGET};
use simcov::measures::default_test_points;
use simcov::noise::NoiseMode;
use simcov::problems::{Mm1Params, ProblemKind, ProblemSpec};
use simcov::procedures::{KernelChoice, DEFAULT_POOL_SIZE, DEFAULT_RESAMPLES, DEFAULT_SUBSAMPLE_SCHEDULE};
use simcov::rates::DEFAULT_ZETA_MAX;
use simcov::sampling::{CovariateSpace, SamplingDistribution, SamplingKind};
use simcov::spectrum::DEFAULT_NYSTROM_NODES;

use crate::CliError;

pub const PRESETS: &[(&str, &str)] = &[
    ("dejong1d-quick", include_str!("../presets/dejong1d-quick.toml")),
    ("dejong1d-paper", include_str!("../presets/dejong1d-paper.toml")),
    ("griewank1d-paper", include_str!("../presets/griewank1d-paper.toml")),
    ("dejong3d-paper", include_str!("../presets/dejong3d-paper.toml")),
    ("griewank10d-paper", include_str!("../presets/griewank10d-paper.toml")),
    ("mm1-paper", include_str!("../presets/mm1-paper.toml")),
    ("mm1-paper-truncnorm", include_str!("../presets/mm1-paper-truncnorm.toml")),
    ("griewank10d-compare", include_str!("../presets/griewank10d-compare.toml")),
    ("mm1-predict-m", include_str!("../presets/mm1-predict-m.toml")),
    ("allocate-example", include_str!("../presets/allocate-example.toml")),
];

/// A scalar that broadcasts, or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    fn broadcast(&self, dim: usize, what: &str) -> Result<Vec<T>, CliError> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); dim]),
            OneOrMany::Many(v) if v.len() == dim => Ok(v.clone()),
            OneOrMany::Many(v) => Err(CliError::Config(format!("{what} has {} entries, expected {dim}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: Option<ProblemCfg>,
    pub sampling: Option<SamplingCfg>,
    pub experiment: Option<ExperimentCfg>,
    #[serde(default)]
    pub fit: FitCfg,
    pub adaptive: Option<AdaptiveCfg>,
    pub predict_m: Option<PredictMCfg>,
    pub allocate: Option<AllocateCfg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemCfg {
    pub kind: ProblemKind,
    #[serde(default = "one")]
    pub dim: usize,
    /// Service rates for the queue; defaults to `6 + 0.3 i`.
    pub rates: Option<Vec<f64>>,
    pub c_u: Option<f64>,
    pub cap: Option<f64>,
    pub customers: Option<usize>,
    pub warmup: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingCfg {
    pub kind: SamplingKind,
    pub lower: Option<OneOrMany<f64>>,
    pub upper: Option<OneOrMany<f64>>,
    pub mean: Option<OneOrMany<f64>>,
    pub stdev: Option<OneOrMany<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentCfg {
    #[serde(default)]
    pub kernels: Vec<KernelFamily>,
    /// Hyperparameters held fixed instead of estimated; replaces `kernels`.
    pub fixed_kernel: Option<KernelSpec>,
    pub m: Vec<usize>,
    pub n: OneOrMany<usize>,
    pub delta0: f64,
    pub macro_reps: usize,
    pub seed: u64,
    pub test_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCfg {
    /// Least-squares smoothing with the degree picked from the number of points.
    Auto,
    Constant,
    Linear,
    Raw,
    Known,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitCfg {
    #[serde(default = "constant_regressor")]
    pub regressors: RegressorKind,
    #[serde(default = "auto_noise")]
    pub noise: NoiseCfg,
    pub noise_variance: Option<f64>,
    #[serde(default = "search_budget")]
    pub search_budget: usize,
    #[serde(default = "warm_budget")]
    pub warm_budget: usize,
    #[serde(default = "jitter")]
    pub jitter: f64,
}

impl Default for FitCfg {
    fn default() -> Self {
        Self {
            regressors: RegressorKind::Constant,
            noise: NoiseCfg::Auto,
            noise_variance: None,
            search_budget: DEFAULT_SEARCH_BUDGET,
            warm_budget: DEFAULT_WARM_BUDGET,
            jitter: DEFAULT_JITTER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveCfg {
    /// Replications per point; defaults to the experiment's `n`.
    pub n0: Option<usize>,
    #[serde(default = "pool_size")]
    pub pool_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictMCfg {
    pub c0: f64,
    #[serde(default = "subsample_schedule")]
    pub schedule: Vec<usize>,
    #[serde(default = "resamples")]
    pub resamples: usize,
    /// Defaults to the first of `experiment.kernels`.
    pub kernel: Option<KernelFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocateCfg {
    pub n_tot: usize,
    pub m: usize,
    #[serde(default = "grid_resolution")]
    pub grid_resolution: f64,
    #[serde(default = "zeta_max")]
    pub zeta_max: usize,
    #[serde(default = "nystrom_nodes")]
    pub nystrom_nodes: usize,
    #[serde(default = "eig_count")]
    pub eig_count: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    pub designs: Vec<DesignCfg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignCfg {
    pub kernel: KernelSpec,
    #[serde(default = "two")]
    pub r_star: f64,
    #[serde(default = "unit")]
    pub rho_star: f64,
    #[serde(default = "unit")]
    pub sigma_bar2: f64,
    #[serde(default = "unit")]
    pub sigma_under2: f64,
    #[serde(default = "unit")]
    pub c_f: f64,
}

fn one() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn two() -> f64 {
    2.0
}
fn unit() -> f64 {
    1.0
}
fn constant_regressor() -> RegressorKind {
    RegressorKind::Constant
}
fn auto_noise() -> NoiseCfg {
    NoiseCfg::Auto
}
fn search_budget() -> usize {
    DEFAULT_SEARCH_BUDGET
}
fn warm_budget() -> usize {
    DEFAULT_WARM_BUDGET
}
fn jitter() -> f64 {
    DEFAULT_JITTER
}
fn pool_size() -> usize {
    DEFAULT_POOL_SIZE
}
fn subsample_schedule() -> Vec<usize> {
    DEFAULT_SUBSAMPLE_SCHEDULE.to_vec()
}
fn resamples() -> usize {
    DEFAULT_RESAMPLES
}
fn grid_resolution() -> f64 {
    1e-3
}
fn zeta_max() -> usize {
    DEFAULT_ZETA_MAX
}
fn nystrom_nodes() -> usize {
    DEFAULT_NYSTROM_NODES
}
fn eig_count() -> usize {
    200
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

fn parse_error(origin: &str, text: &str, err: toml::de::Error) -> CliError {
    let msg = err.message().trim().to_string();
    match err.span() {
        Some(span) => {
            let (line, col) = line_col(text, span.start);
            CliError::Config(format!("{origin}:{line}:{col}: {msg}"))
        }
        None => CliError::Config(format!("{origin}: {msg}")),
    }
}

/// Reads a config file or a named preset; returns the text and a label for messages.
pub fn source_text(config: Option<&Path>, preset: Option<&str>) -> Result<(String, String), CliError> {
    match (config, preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok((text, path.display().to_string()))
        }
        (None, Some(name)) => PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, t)| (t.to_string(), format!("preset:{n}")))
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                CliError::Config(format!("unknown preset `{name}` (available: {})", names.join(", ")))
            }),
        _ => Err(CliError::Config("give exactly one of --config or --preset".into())),
    }
}

/// Parses `text`, then applies `key=value` overrides with dotted keys.
/// Values are read as TOML when possible and as bare strings otherwise.
pub fn load(origin: &str, text: &str, overrides: &[String]) -> Result<Config, CliError> {
    let cfg: Config = toml::from_str(text).map_err(|e| parse_error(origin, text, e))?;
    if overrides.is_empty() {
        return Ok(cfg);
    }
    let mut table: toml::Table = text.parse().map_err(|e| parse_error(origin, text, e))?;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {o}: expected key=value")))?;
        let value = parse_value(raw.trim());
        set_path(&mut table, key.trim(), value).map_err(|m| CliError::Config(format!("--set {o}: {m}")))?;
    }
    let merged = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
    toml::from_str(&merged).map_err(|e| {
        let msg = e.message().trim().to_string();
        CliError::Config(format!("{origin} (after --set): {msg}"))
    })
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err("empty key segment".into());
    }
    let (last, path) = parts.split_last().unwrap();
    let mut cur = table;
    for p in path {
        cur = match cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(t) => t,
            // Arrays of tables are addressed by index: `designs.1.kernel`.
            toml::Value::Array(items) => {
                return set_in_array(items, &parts[path.iter().position(|q| q == p).unwrap() + 1..], value);
            }
            _ => return Err(format!("`{p}` is not a table")),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn set_in_array(items: &mut [toml::Value], rest: &[&str], value: toml::Value) -> Result<(), String> {
    let (idx, tail) = rest.split_first().ok_or("expected an index after an array")?;
    let i: usize = idx.parse().map_err(|_| format!("`{idx}` is not an array index"))?;
    let len = items.len();
    let item = items.get_mut(i).ok_or_else(|| format!("index {i} out of range for {len} entries"))?;
    if tail.is_empty() {
        *item = value;
        return Ok(());
    }
    match item {
        toml::Value::Table(t) => set_path(t, &tail.join("."), value),
        toml::Value::Array(inner) => set_in_array(inner, tail, value),
        _ => Err(format!("entry {i} is not a table")),
    }
}

impl Config {
    /// Hex SHA-256 of the canonical JSON form (keys sorted).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let bytes = serde_json::to_vec(&value).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
    }

    pub fn experiment(&self) -> Result<&ExperimentCfg, CliError> {
        Self::section(&self.experiment, "experiment")
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let p = Self::section(&self.problem, "problem")?;
        let spec = match p.kind {
            ProblemKind::DeJong => ProblemSpec::dejong(p.dim)?,
            ProblemKind::Griewank => ProblemSpec::griewank(p.dim)?,
            ProblemKind::Mm1 => {
                if p.dim != 1 {
                    return Err(CliError::Config("the queue problem has dim = 1".into()));
                }
                let d = Mm1Params::default();
                let params = Mm1Params {
                    c_u: p.c_u.unwrap_or(d.c_u),
                    cap: p.cap.unwrap_or(d.cap),
                    customers: p.customers.unwrap_or(d.customers),
                    warmup: p.warmup.unwrap_or(d.warmup),
                };
                match &p.rates {
                    Some(r) => ProblemSpec::mm1_with_rates(r.iter().map(|v| vec![*v]).collect(), params)?,
                    None => ProblemSpec::mm1(params)?,
                }
            }
        };
        if p.kind != ProblemKind::Mm1 && (p.rates.is_some() || p.c_u.is_some() || p.cap.is_some()) {
            return Err(CliError::Config("rates, c_u and cap apply only to the mm1 problem".into()));
        }
        Ok(spec)
    }

    /// Dimension from `[problem]`, else from the sampling bounds or mean.
    fn dim(&self) -> Result<usize, CliError> {
        if let Some(p) = &self.problem {
            return Ok(p.dim);
        }
        let s = Self::section(&self.sampling, "sampling")?;
        let from = s.lower.as_ref().or(s.mean.as_ref());
        Ok(match from {
            Some(OneOrMany::Many(v)) => v.len(),
            _ => 1,
        })
    }

    pub fn distribution(&self) -> Result<SamplingDistribution, CliError> {
        let s = Self::section(&self.sampling, "sampling")?;
        let dim = self.dim()?;
        let need = |v: &Option<OneOrMany<f64>>, what: &str| -> Result<Vec<f64>, CliError> {
            v.as_ref()
                .ok_or_else(|| CliError::Config(format!("sampling.{what} is required for {}", s.kind.name())))?
                .broadcast(dim, &format!("sampling.{what}"))
        };
        let bounded = || -> Result<CovariateSpace, CliError> {
            let lo = need(&s.lower, "lower")?;
            let hi = need(&s.upper, "upper")?;
            Ok(CovariateSpace::bounded(lo.into_iter().zip(hi).collect())?)
        };
        Ok(match s.kind {
            SamplingKind::Uniform => SamplingDistribution::uniform(bounded()?)?,
            SamplingKind::TruncatedNormal => {
                SamplingDistribution::truncated_normal(need(&s.mean, "mean")?, need(&s.stdev, "stdev")?, bounded()?)?
            }
            SamplingKind::Normal => {
                if s.lower.is_some() || s.upper.is_some() {
                    return Err(CliError::Config("normal sampling is unbounded; drop lower/upper".into()));
                }
                SamplingDistribution::normal(need(&s.mean, "mean")?, need(&s.stdev, "stdev")?)?
            }
        })
    }

    pub fn fit_options(&self) -> Result<FitOptions, CliError> {
        let f = &self.fit;
        let noise = match f.noise {
            NoiseCfg::Auto => NoiseMode::LeastSquares { degree: None },
            NoiseCfg::Constant => NoiseMode::LeastSquares { degree: Some(0) },
            NoiseCfg::Linear => NoiseMode::LeastSquares { degree: Some(1) },
            NoiseCfg::Raw => NoiseMode::Raw,
            NoiseCfg::Known => NoiseMode::Known {
                variance: f
                    .noise_variance
                    .ok_or_else(|| CliError::Config("fit.noise = \"known\" needs fit.noise_variance".into()))?,
            },
        };
        if f.noise != NoiseCfg::Known && f.noise_variance.is_some() {
            return Err(CliError::Config("fit.noise_variance applies only with fit.noise = \"known\"".into()));
        }
        if f.search_budget == 0 || f.warm_budget == 0 || !(f.jitter >= 0.0) {
            return Err(CliError::Config("fit budgets must be positive and jitter nonnegative".into()));
        }
        Ok(FitOptions {
            regressors: f.regressors,
            noise,
            search_budget: f.search_budget,
            warm_budget: f.warm_budget,
            jitter_rel: f.jitter,
        })
    }

    /// Kernel choices in the order they appear.
    pub fn kernel_choices(&self) -> Result<Vec<KernelChoice>, CliError> {
        let e = self.experiment()?;
        match (&e.fixed_kernel, e.kernels.is_empty()) {
            (Some(spec), true) => Ok(vec![KernelChoice::Fixed(*spec)]),
            (Some(_), false) => Err(CliError::Config("give either experiment.kernels or experiment.fixed_kernel".into())),
            (None, true) => Err(CliError::Config("experiment.kernels is empty".into())),
            (None, false) => {
                if e.kernels.contains(&KernelFamily::FiniteRankLinear) {
                    return Err(CliError::Config(
                        "finite_rank_linear has no hyperparameters to estimate; use experiment.fixed_kernel".into(),
                    ));
                }
                Ok(e.kernels.iter().map(|f| KernelChoice::Estimate(*f)).collect())
            }
        }
    }

    pub fn test_points(&self) -> Result<usize, CliError> {
        let e = self.experiment()?;
        Ok(e.test_points.unwrap_or_else(|| default_test_points(self.dim().unwrap_or(1))))
    }

    pub fn adaptive(&self) -> AdaptiveCfg {
        self.adaptive.clone().unwrap_or(AdaptiveCfg { n0: None, pool_size: DEFAULT_POOL_SIZE })
    }

    pub fn predict_m(&self) -> Result<&PredictMCfg, CliError> {
        Self::section(&self.predict_m, "predict_m")
    }

    pub fn allocate(&self) -> Result<&AllocateCfg, CliError> {
        Self::section(&self.allocate, "allocate")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset(name: &str) -> Config {
        let (text, origin) = source_text(None, Some(name)).unwrap();
        load(&origin, &text, &[]).unwrap()
    }

    #[test]
    fn every_preset_parses_and_resolves() {
        for (name, _) in PRESETS {
            let cfg = preset(name);
            cfg.distribution().unwrap();
            cfg.fit_options().unwrap();
            if cfg.experiment.is_some() {
                cfg.problem_spec().unwrap();
                assert!(!cfg.kernel_choices().unwrap().is_empty(), "{name}");
            }
        }
    }

    #[test]
    fn quick_preset_shape() {
        let cfg = preset("dejong1d-quick");
        let e = cfg.experiment().unwrap();
        assert_eq!(e.m, vec![5, 12, 28]);
        assert_eq!(e.macro_reps, 5);
        assert_eq!(cfg.kernel_choices().unwrap().len(), 4);
    }

    #[test]
    fn mm1_preset_settings() {
        let cfg = preset("mm1-paper");
        let p = cfg.problem_spec().unwrap();
        assert_eq!(p.k(), 10);
        assert!((p.designs[0][0] - 6.3).abs() < 1e-12 && (p.designs[9][0] - 9.0).abs() < 1e-12);
        assert_eq!((p.mm1.c_u, p.mm1.cap), (0.1, 2.5));
        assert_eq!(cfg.distribution().unwrap().space().bounds().unwrap(), &[(0.5, 4.5)]);
        let e = cfg.experiment().unwrap();
        assert_eq!(e.m, vec![5, 10, 20, 40, 80, 160, 320, 640]);
        assert_eq!(e.n.to_vec(), vec![5, 10]);
        assert_eq!(e.delta0, 0.01);
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let text = "[problem]\nkind = \"dejong\"\n\n[sampling]\nkind = \"uniform\"\nlowr = 1.0\n";
        match load("bad.toml", text, &[]) {
            Err(CliError::Config(m)) => assert!(m.starts_with("bad.toml:6:1:"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_variant_is_line_anchored() {
        let text = "[problem]\nkind = \"rosenbrock\"\n";
        match load("bad.toml", text, &[]) {
            Err(CliError::Config(m)) => assert!(m.starts_with("bad.toml:2:"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_replace_and_insert() {
        let (text, origin) = source_text(None, Some("dejong1d-quick")).unwrap();
        let cfg = load(
            &origin,
            &text,
            &["experiment.macro_reps=2".into(), "experiment.m=[5, 9]".into(), "fit.noise=raw".into()],
        )
        .unwrap();
        let e = cfg.experiment().unwrap();
        assert_eq!((e.macro_reps, e.m.clone()), (2, vec![5, 9]));
        assert_eq!(cfg.fit.noise, NoiseCfg::Raw);
        assert!(load(&origin, &text, &["experiment.bogus=1".into()]).is_err());
        assert!(load(&origin, &text, &["nokey".into()]).is_err());
    }

    #[test]
    fn overrides_index_into_arrays_of_tables() {
        let (text, origin) = source_text(None, Some("allocate-example")).unwrap();
        let cfg = load(&origin, &text, &["allocate.designs.1.kernel.tau2=1.0".into()]).unwrap();
        assert_eq!(cfg.allocate().unwrap().designs[0], cfg.allocate().unwrap().designs[1]);
        assert!(load(&origin, &text, &["allocate.designs.5.r_star=3".into()]).is_err());
        assert!(load(&origin, &text, &["allocate.designs.x.r_star=3".into()]).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = preset("dejong1d-quick");
        assert_eq!(a.hash(), preset("dejong1d-quick").hash());
        assert_eq!(a.hash().len(), 64);
        let (text, origin) = source_text(None, Some("dejong1d-quick")).unwrap();
        let b = load(&origin, &text, &["experiment.seed=2".into()]).unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn scalar_bounds_broadcast() {
        let text = "[problem]\nkind = \"griewank\"\ndim = 3\n[sampling]\nkind = \"uniform\"\nlower = 1\nupper = 4\n";
        let cfg = load("x", text, &[]).unwrap();
        assert_eq!(cfg.distribution().unwrap().space().bounds().unwrap(), &[(1.0, 4.0); 3]);
    }

    #[test]
    fn known_noise_needs_variance() {
        let text = "[fit]\nnoise = \"known\"\n";
        assert!(load("x", text, &[]).unwrap().fit_options().is_err());
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
