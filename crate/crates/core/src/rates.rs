//! Theoretical convergence rates of the maximal IMSE, the finite-rank exact
//! limit, empirical log-log slopes, and the budget-allocation bound `R_i(ϱ)`
//! with its min–max allocation.

use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kriging::RegressorKind;
use crate::linalg::simple_ols;
use crate::sampling::SamplingDistribution;
use crate::spectrum::{effective_dimension, EigenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum KernelClass {
    FiniteRank,
    /// `μ_l ≲ exp(-c l^{κ/d})`.
    ExpDecay { kappa: f64 },
    /// `μ_l ≲ l^{-2ν/d - 1}`, requires `ν > d/2`.
    PolyDecay { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub class: KernelClass,
    pub d: usize,
    pub r_star: f64,
    pub rho_star: f64,
    /// Upper and lower bounds on the noise variance.
    pub sigma_bar2: f64,
    pub sigma_under2: f64,
    /// `C_f = max_s ‖f_s‖` in the kernel's RKHS.
    pub c_f: f64,
    /// Number of regressors.
    pub q: usize,
    /// `λ_min(E[f(X) f(X)ᵀ])`.
    pub lambda_min_ff: f64,
}

impl RateParams {
    /// `r_* = 2`, `ρ_* = 1`, unit noise bounds, constant regressor with `C_f = 1`.
    pub fn new(class: KernelClass, d: usize) -> Self {
        Self {
            class,
            d,
            r_star: 2.0,
            rho_star: 1.0,
            sigma_bar2: 1.0,
            sigma_under2: 1.0,
            c_f: 1.0,
            q: 1,
            lambda_min_ff: 1.0,
        }
    }

    /// Checks the constants and the decay class.
    pub fn validate(&self) -> Result<()> {
        self.validate_constants()?;
        match self.class {
            KernelClass::ExpDecay { kappa } if !(kappa > 0.0) => {
                return Err(Error::Config("κ_* must be positive".into()))
            }
            KernelClass::PolyDecay { nu } if !(nu > self.d as f64 / 2.0) => {
                return Err(Error::Config(format!("ν_* = {nu} must exceed d/2 = {}", self.d as f64 / 2.0)))
            }
            _ => {}
        }
        Ok(())
    }

    /// Checks what `R_i(ϱ)` uses; the decay class does not enter it.
    pub fn validate_constants(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if !(self.r_star >= 2.0) {
            return Err(Error::Config(format!("r_* must be at least 2, got {}", self.r_star)));
        }
        let positive = [self.rho_star, self.sigma_bar2, self.sigma_under2, self.lambda_min_ff];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.c_f >= 0.0) {
            return Err(Error::Config("ρ_*, noise bounds and λ_min must be positive; C_f nonnegative".into()));
        }
        if self.sigma_under2 > self.sigma_bar2 {
            return Err(Error::Config("lower noise bound exceeds upper bound".into()));
        }
        Ok(())
    }

    /// `C† = C_f² / λ_min(E[ffᵀ])`.
    pub fn c_dagger(&self) -> f64 {
        self.c_f * self.c_f / self.lambda_min_ff
    }
}

/// `λ_min(E[f(X) f(X)ᵀ])` under `dist`, assuming independent coordinates.
/// Returns 1 when there are no regressors.
pub fn regressor_min_eigenvalue(regressors: RegressorKind, dist: &SamplingDistribution) -> f64 {
    let mom = dist.moments();
    match regressors {
        RegressorKind::None | RegressorKind::Constant => 1.0,
        RegressorKind::Linear => {
            let p = mom.len() + 1;
            let mut s = DMatrix::<f64>::zeros(p, p);
            s[(0, 0)] = 1.0;
            for i in 0..mom.len() {
                s[(0, i + 1)] = mom[i].0;
                s[(i + 1, 0)] = mom[i].0;
                for j in 0..mom.len() {
                    s[(i + 1, j + 1)] = if i == j { mom[i].1 } else { mom[i].0 * mom[j].0 };
                }
            }
            s.symmetric_eigen().eigenvalues.min()
        }
    }
}

/// `R^F`, `R^E` or `R^P` at `(m, n)`.
pub fn rate_function(params: &RateParams, m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    let mn = m * n;
    let r = params.r_star;
    let d = params.d as f64;
    match params.class {
        KernelClass::FiniteRank => (1.0 / mn).max(m.powf(-r / 2.0)),
        KernelClass::ExpDecay { kappa } => {
            let l = mn.ln();
            (l.powf(d / kappa) / mn).max(l.powf(r * (kappa + d) / kappa) / m.powf(r / 2.0))
        }
        KernelClass::PolyDecay { nu } => {
            let a = mn.powf(-2.0 * nu / (2.0 * nu + d));
            let b = n.powf(d * r / (2.0 * nu + d)) * mn.ln().powf(r) / m.powf(r * (2.0 * nu - d) / (2.0 * nu + d));
            a.max(b)
        }
    }
}

/// Exponent of `m` in the fixed-`n` simplified rate (log factors dropped).
pub fn simplified_rate_exponent(class: KernelClass, d: usize) -> f64 {
    match class {
        KernelClass::FiniteRank | KernelClass::ExpDecay { .. } => -1.0,
        KernelClass::PolyDecay { nu } => -2.0 * nu / (2.0 * nu + d as f64),
    }
}

/// Limit of `mn · max IMSE` for `a (xᵀx' + b)` kernels: `(d+1) σ²`.
pub fn finite_rank_limit(d: usize, sigma2: f64) -> f64 {
    assert!(d >= 1, "dimension must be at least 1");
    (d as f64 + 1.0) * sigma2
}

/// OLS slope of `log(mean max IMSE)` on `log m` over rows with `m ≥ m_min`,
/// with its standard error.
pub fn fit_loglog_slope(rows: &[(usize, f64)], m_min: usize) -> Result<(f64, f64)> {
    let used: Vec<&(usize, f64)> = rows.iter().filter(|(m, v)| *m >= m_min && *v > 0.0).collect();
    if used.len() < 3 {
        return Err(Error::Config(format!("slope fit needs at least 3 rows with m ≥ {m_min}, got {}", used.len())));
    }
    let x: Vec<f64> = used.iter().map(|(m, _)| (*m as f64).ln()).collect();
    let y: Vec<f64> = used.iter().map(|(_, v)| v.ln()).collect();
    let (_, slope, se) = simple_ols(&x, &y);
    Ok((slope, se))
}

/// `b(m, ζ, r_*)`.
pub fn b_factor(m: usize, zeta: usize, r: f64) -> f64 {
    let t = r.max((zeta as f64).ln());
    t.sqrt().max(t / (m as f64).powf(0.5 - 1.0 / r))
}

/// Value of `R_i(ϱ)` and the `ζ` attaining the inner infimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub zeta: usize,
}

/// Precomputed per-design pieces of `R_i`.
struct DesignBound<'a> {
    p: &'a RateParams,
    eigs: &'a EigenSequence,
    trace: f64,
    // tails[ζ] = Σ_{l>ζ} μ_l for ζ = 0..=zeta_max
    tails: Vec<f64>,
}

impl<'a> DesignBound<'a> {
    fn new(p: &'a RateParams, eigs: &'a EigenSequence, zeta_max: usize) -> Self {
        let tails = (0..=zeta_max).map(|z| eigs.trace_tail(z)).collect();
        Self { p, eigs, trace: eigs.trace(), tails }
    }

    fn eval(&self, n_tot: f64, m: usize, rho: f64) -> BoundValue {
        let p = self.p;
        let tr = self.trace;
        let q = p.q as f64;
        let cd = p.c_dagger();
        let s = p.sigma_bar2 / (n_tot * rho);
        let gamma = effective_dimension(self.eigs, s);
        let lead = 2.0 * s * gamma + 64.0 * cd * q * p.sigma_bar2 * tr / (n_tot * rho);
        let a = 64.0 * cd * q * p.rho_star.powi(4) * p.sigma_bar2 / (p.sigma_under2 * p.sigma_under2) * tr * tr
            + 8.0 * cd * q * tr
            + 3.0 * tr / p.sigma_bar2
            + 1.0;
        let bcoef = 8.0 * cd * q * tr * tr + tr;
        let mut best = BoundValue { value: f64::INFINITY, zeta: 1 };
        for zeta in 1..self.tails.len() {
            let inner = a * self.tails[zeta] * n_tot * rho
                + bcoef
                    * (300.0 * p.rho_star * p.rho_star * b_factor(m, zeta, p.r_star) / (m as f64).sqrt() * gamma)
                        .powf(p.r_star);
            if inner < best.value {
                best = BoundValue { value: inner, zeta };
            }
        }
        BoundValue { value: lead + best.value, zeta: best.zeta }
    }

    /// The two terms outside the infimum.
    fn leading(&self, n_tot: f64, rho: f64) -> f64 {
        let p = self.p;
        let s = p.sigma_bar2 / (n_tot * rho);
        2.0 * s * effective_dimension(self.eigs, s)
            + 64.0 * p.c_dagger() * p.q as f64 * p.sigma_bar2 * self.trace / (n_tot * rho)
    }
}

fn check_inputs(params: &[RateParams], eigs: &[EigenSequence], n_tot: usize, m: usize, zeta_max: usize) -> Result<()> {
    if params.is_empty() || params.len() != eigs.len() {
        return Err(Error::Config("need one parameter set and one eigen sequence per design".into()));
    }
    if n_tot == 0 || m == 0 || zeta_max == 0 {
        return Err(Error::Config("n_tot, m and ζ_max must be positive".into()));
    }
    params.iter().try_for_each(RateParams::validate_constants)
}

/// `R_i(ϱ)` for one design.
pub fn design_bound(
    params: &RateParams,
    eigs: &EigenSequence,
    n_tot: usize,
    m: usize,
    rho: f64,
    zeta_max: usize,
) -> Result<BoundValue> {
    check_inputs(std::slice::from_ref(params), std::slice::from_ref(eigs), n_tot, m, zeta_max)?;
    if !(rho > 0.0) {
        return Err(Error::Config(format!("allocation fraction must be positive, got {rho}")));
    }
    Ok(DesignBound::new(params, eigs, zeta_max).eval(n_tot as f64, m, rho))
}

/// The two terms of `R_i(ϱ)` outside the infimum over `ζ`.
pub fn design_bound_leading(params: &RateParams, eigs: &EigenSequence, n_tot: usize, rho: f64) -> f64 {
    DesignBound::new(params, eigs, 0).leading(n_tot as f64, rho)
}

/// `(R_1(ϱ_1), …, R_k(ϱ_k))`.
pub fn allocation_bound(
    params: &[RateParams],
    eigs: &[EigenSequence],
    n_tot: usize,
    m: usize,
    rho: &[f64],
    zeta_max: usize,
) -> Result<Vec<f64>> {
    check_inputs(params, eigs, n_tot, m, zeta_max)?;
    if rho.len() != params.len() {
        return Err(Error::Config("allocation has the wrong length".into()));
    }
    if let Some(r) = rho.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::Config(format!("allocation fractions must be positive, got {r}")));
    }
    if rho.iter().sum::<f64>() > 1.0 + 1e-9 {
        return Err(Error::Config("allocation fractions sum to more than 1".into()));
    }
    Ok(params
        .iter()
        .zip(eigs)
        .zip(rho)
        .map(|((p, e), r)| DesignBound::new(p, e, zeta_max).eval(n_tot as f64, m, *r).value)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMethod {
    Bisection,
    GridSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub rho: Vec<f64>,
    pub bounds: Vec<f64>,
    pub max_bound: f64,
    pub method: AllocationMethod,
    pub warnings: Vec<String>,
}

pub const DEFAULT_ZETA_MAX: usize = 1000;

/// Minimizes `max_i R_i(ϱ_i)` over the simplex. Uses bisection on the common
/// level when every `R_i` is nonincreasing on a probe grid; otherwise falls
/// back to a projected grid search.
pub fn solve_allocation(
    params: &[RateParams],
    eigs: &[EigenSequence],
    n_tot: usize,
    m: usize,
    grid_resolution: f64,
    zeta_max: usize,
) -> Result<Allocation> {
    check_inputs(params, eigs, n_tot, m, zeta_max)?;
    let k = params.len();
    if !(grid_resolution > 0.0 && grid_resolution < 1.0 / k as f64) {
        return Err(Error::Config(format!("grid resolution must lie in (0, 1/k), got {grid_resolution}")));
    }
    let nt = n_tot as f64;
    let designs: Vec<DesignBound> = params.iter().zip(eigs).map(|(p, e)| DesignBound::new(p, e, zeta_max)).collect();
    let r = |i: usize, rho: f64| designs[i].eval(nt, m, rho).value;

    let probes: Vec<f64> = (0..=64).map(|j| grid_resolution.powf(1.0 - j as f64 / 64.0)).collect();
    let monotone = (0..k).all(|i| probes.windows(2).all(|w| r(i, w[1]) <= r(i, w[0]) * (1.0 + 1e-12)));

    let mut warnings = Vec::new();
    let (rho, method) = if monotone {
        // Smallest ϱ with R_i(ϱ) ≤ t, or None if even ϱ = 1 misses t.
        let rho_min = |i: usize, t: f64| -> Option<f64> {
            if r(i, 1.0) > t {
                return None;
            }
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid > 0.0 && r(i, mid) <= t {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(hi)
        };
        let feasible = |t: f64| -> Option<Vec<f64>> {
            let v: Option<Vec<f64>> = (0..k).map(|i| rho_min(i, t)).collect();
            v.filter(|v| v.iter().sum::<f64>() <= 1.0)
        };
        let mut t_hi = (0..k).map(|i| r(i, 1.0 / k as f64)).fold(f64::NEG_INFINITY, f64::max);
        let mut t_lo = (0..k).map(|i| r(i, 1.0)).fold(f64::NEG_INFINITY, f64::max);
        let mut best = feasible(t_hi).unwrap_or_else(|| vec![1.0 / k as f64; k]);
        for _ in 0..100 {
            if t_hi - t_lo <= 1e-12 * t_hi {
                break;
            }
            let t = 0.5 * (t_lo + t_hi);
            match feasible(t) {
                Some(v) => {
                    t_hi = t;
                    best = v;
                }
                None => t_lo = t,
            }
        }
        // Spread the slack proportionally; R_i is nonincreasing so this cannot hurt.
        let s: f64 = best.iter().sum();
        (best.iter().map(|v| v / s).collect::<Vec<_>>(), AllocationMethod::Bisection)
    } else {
        warnings.push("R_i is not monotone in the allocation; used projected grid search".to_string());
        (grid_search(k, grid_resolution, |i, rho| r(i, rho)), AllocationMethod::GridSearch)
    };
    let bounds: Vec<f64> = (0..k).map(|i| r(i, rho[i])).collect();
    let max_bound = bounds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Allocation { rho, bounds, max_bound, method, warnings })
}

fn grid_search(k: usize, res: f64, r: impl Fn(usize, f64) -> f64) -> Vec<f64> {
    let max_of = |rho: &[f64]| (0..k).map(|i| r(i, rho[i])).fold(f64::NEG_INFINITY, f64::max);
    if k == 1 {
        return vec![1.0];
    }
    if k == 2 {
        let steps = (1.0 / res).round() as usize;
        let mut best = (f64::INFINITY, vec![0.5, 0.5]);
        for j in 1..steps {
            let a = j as f64 / steps as f64;
            let v = max_of(&[a, 1.0 - a]);
            if v < best.0 {
                best = (v, vec![a, 1.0 - a]);
            }
        }
        return best.1;
    }
    // Pairwise transfers from the uniform allocation with a shrinking step.
    let mut rho = vec![1.0 / k as f64; k];
    let mut cur = max_of(&rho);
    let mut step = 0.25 / k as f64;
    while step >= res {
        let mut improved = false;
        for from in 0..k {
            for to in 0..k {
                if from == to || rho[from] - step < res {
                    continue;
                }
                let mut cand = rho.clone();
                cand[from] -= step;
                cand[to] += step;
                let v = max_of(&cand);
                if v < cur {
                    cur = v;
                    rho = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    rho
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{EigenSequence, EigenSource};

    fn fr(values: Vec<f64>) -> EigenSequence {
        EigenSequence::new(EigenSource::FiniteRank, values, 0.0).unwrap()
    }

    fn quiet(class: KernelClass) -> RateParams {
        RateParams { rho_star: 0.01, r_star: 4.0, q: 0, ..RateParams::new(class, 1) }
    }

    #[test]
    fn rate_examples() {
        let p = RateParams::new(KernelClass::FiniteRank, 1);
        assert!((rate_function(&p, 100, 10) - 1e-2).abs() < 1e-15);
        let p = RateParams { r_star: 4.0, ..RateParams::new(KernelClass::ExpDecay { kappa: 1.0 }, 1) };
        let (m, n) = (1_000_000_000_000usize, 10usize);
        let mn = (m * n) as f64;
        assert!((rate_function(&p, m, n) / (mn.ln() / mn) - 1.0).abs() < 1e-12);
        assert!((simplified_rate_exponent(KernelClass::PolyDecay { nu: 1.5 }, 1) + 0.75).abs() < 1e-15);
    }

    #[test]
    fn regressor_second_moments() {
        use crate::sampling::CovariateSpace;
        let dist = SamplingDistribution::uniform(CovariateSpace::cube(0.0, 1.0, 1).unwrap()).unwrap();
        assert_eq!(regressor_min_eigenvalue(RegressorKind::Constant, &dist), 1.0);
        // [[1, 1/2], [1/2, 1/3]] has smallest eigenvalue (4 − √13)/6.
        let v = regressor_min_eigenvalue(RegressorKind::Linear, &dist);
        assert!((v - (4.0 - 13f64.sqrt()) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn finite_rank_limits() {
        assert_eq!(finite_rank_limit(1, 2.0), 4.0);
        assert_eq!(finite_rank_limit(3, 1.0), 4.0);
    }

    #[test]
    fn loglog_slopes() {
        let rows: Vec<(usize, f64)> = [10, 20, 40, 80].iter().map(|m| (*m, 3.0 / *m as f64)).collect();
        assert!((fit_loglog_slope(&rows, 1).unwrap().0 + 1.0).abs() < 1e-9);
        let rows: Vec<(usize, f64)> = [10, 20, 40].iter().map(|m| (*m, (*m as f64).powf(-0.75))).collect();
        assert!((fit_loglog_slope(&rows, 1).unwrap().0 + 0.75).abs() < 1e-12);
        assert!(fit_loglog_slope(&rows, 15).is_err());
    }

    #[test]
    fn rejects_invalid_parameters() {
        let p = RateParams::new(KernelClass::PolyDecay { nu: 0.5 }, 1);
        assert!(p.validate().is_err());
        let p = RateParams { r_star: 1.5, ..RateParams::new(KernelClass::FiniteRank, 1) };
        assert!(p.validate().is_err());
        let e = fr(vec![1.0]);
        let p = RateParams::new(KernelClass::FiniteRank, 1);
        assert!(allocation_bound(&[p], &[e], 100, 10, &[0.0], 10).is_err());
    }

    #[test]
    fn infimum_attained_at_rank() {
        let p = quiet(KernelClass::FiniteRank);
        let e = fr(vec![2.0, 1.0]);
        let v = design_bound(&p, &e, 10_000, 1000, 0.5, 50).unwrap();
        assert_eq!(v.zeta, 2);
    }

    #[test]
    fn leading_terms_decrease_in_rho() {
        let p = RateParams::new(KernelClass::FiniteRank, 1);
        let e = fr(vec![2.0, 1.0]);
        let grid: Vec<f64> = (1..=100).map(|j| j as f64 / 100.0).collect();
        for w in grid.windows(2) {
            assert!(design_bound_leading(&p, &e, 1000, w[1]) < design_bound_leading(&p, &e, 1000, w[0]));
        }
    }

    fn log_grid() -> Vec<usize> {
        let mut g: Vec<usize> = (0..=30).map(|j| 10f64.powf(j as f64 / 10.0).round() as usize).collect();
        g.dedup();
        g
    }

    #[test]
    fn finite_rank_rate_nonincreasing_in_m_and_n() {
        for r_star in [2.0, 3.0, 6.0] {
            let p = RateParams { r_star, ..RateParams::new(KernelClass::FiniteRank, 2) };
            let g = log_grid();
            for &n in &g {
                for w in g.windows(2) {
                    assert!(rate_function(&p, w[1], n) <= rate_function(&p, w[0], n));
                    assert!(rate_function(&p, n, w[1]) <= rate_function(&p, n, w[0]));
                }
            }
        }
    }

    #[test]
    fn log_rates_nonincreasing_in_m_past_log_threshold() {
        // Each term (log mn)^A / m^B decreases in m once log(mn) > A/B.
        let classes = [(KernelClass::ExpDecay { kappa: 1.0 }, 1usize), (KernelClass::PolyDecay { nu: 1.5 }, 1)];
        for (class, d) in classes {
            let p = RateParams { r_star: 2.0, ..RateParams::new(class, d) };
            let threshold = match class {
                KernelClass::ExpDecay { kappa } => (p.r_star * (kappa + d as f64) / kappa / (p.r_star / 2.0)).exp(),
                KernelClass::PolyDecay { nu } => {
                    (p.r_star / (p.r_star * (2.0 * nu - d as f64) / (2.0 * nu + d as f64))).exp()
                }
                KernelClass::FiniteRank => unreachable!(),
            };
            let g = log_grid();
            for &n in &g {
                for w in g.windows(2) {
                    if ((w[0] * n) as f64) < threshold {
                        continue;
                    }
                    assert!(rate_function(&p, w[1], n) <= rate_function(&p, w[0], n), "{class:?} m={} n={n}", w[0]);
                }
            }
        }
    }

    #[test]
    fn bound_does_not_grow_with_budget() {
        // Only where the leading terms dominate; the γ(s)^r term grows with n_tot.
        let p = quiet(KernelClass::FiniteRank);
        let e = fr(vec![2.0, 1.0]);
        for rho in [0.05, 0.3, 1.0] {
            for n_tot in [100usize, 1000, 10_000] {
                let a = design_bound(&p, &e, n_tot, 1000, rho, 100).unwrap().value;
                let b = design_bound(&p, &e, 2 * n_tot, 1000, rho, 100).unwrap().value;
                assert!(b <= a);
            }
        }
    }

    #[test]
    fn quiet_bound_decreases_in_rho() {
        let p = quiet(KernelClass::FiniteRank);
        let e = fr(vec![2.0, 1.0]);
        let grid: Vec<f64> = (1..=100).map(|j| j as f64 / 100.0).collect();
        for w in grid.windows(2) {
            let a = design_bound(&p, &e, 10_000, 1000, w[0], 50).unwrap().value;
            let b = design_bound(&p, &e, 10_000, 1000, w[1], 50).unwrap().value;
            assert!(b < a);
        }
    }

    #[test]
    fn harder_design_gets_more_budget() {
        let p = quiet(KernelClass::FiniteRank);
        let e1 = fr(vec![2.0, 1.0]);
        let e2 = fr(vec![4.0, 2.0]);
        let a = solve_allocation(&[p, p], &[e1, e2], 10_000, 1000, 1e-3, 50).unwrap();
        assert_eq!(a.method, AllocationMethod::Bisection);
        assert!(a.rho[1] >= a.rho[0]);
    }

    #[test]
    fn allocation_matches_grid_oracle() {
        let p = quiet(KernelClass::FiniteRank);
        let e1 = fr(vec![2.0, 1.0]);
        let e2 = fr(vec![5.0, 0.5]);
        let a = solve_allocation(&[p, p], &[e1.clone(), e2.clone()], 10_000, 1000, 1e-3, 50).unwrap();
        let mut oracle = f64::INFINITY;
        for j in 1..1000 {
            let r = j as f64 / 1000.0;
            let v = allocation_bound(&[p, p], &[e1.clone(), e2.clone()], 10_000, 1000, &[r, 1.0 - r], 50).unwrap();
            oracle = oracle.min(v[0].max(v[1]));
        }
        assert!(a.max_bound <= oracle * 1.01, "{} vs {oracle}", a.max_bound);
    }

    #[test]
    fn non_monotone_bound_falls_back_to_grid() {
        // With ρ_* = 1 and small m the last term dominates and grows with ϱ.
        let p = RateParams::new(KernelClass::FiniteRank, 1);
        let e1 = fr(vec![2.0, 1.0]);
        let e2 = fr(vec![4.0, 2.0]);
        let a = solve_allocation(&[p, p], &[e1, e2], 1000, 50, 1e-3, 50).unwrap();
        assert_eq!(a.method, AllocationMethod::GridSearch);
        assert!(!a.warnings.is_empty());
        assert!((a.rho.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_designs_split_equally() {
        let p = quiet(KernelClass::FiniteRank);
        let e = fr(vec![2.0, 1.0]);
        let a = solve_allocation(&[p; 3], &[e.clone(), e.clone(), e], 30_000, 1000, 1e-3, 50).unwrap();
        for r in &a.rho {
            assert!((r - 1.0 / 3.0).abs() < 1e-6);
        }
        assert!((a.rho.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
