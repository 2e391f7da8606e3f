//! Benchmark problems with `k` designs: De Jong, Griewank and an M/M/1 queue
//! whose total cost is estimated by simulation.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[serde(rename = "dejong")]
    DeJong,
    Griewank,
    Mm1,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::DeJong => "dejong",
            ProblemKind::Griewank => "griewank",
            ProblemKind::Mm1 => "mm1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dejong" => Some(ProblemKind::DeJong),
            "griewank" => Some(ProblemKind::Griewank),
            "mm1" => Some(ProblemKind::Mm1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mm1Params {
    /// Cost per unit of service rate.
    pub c_u: f64,
    /// Cap on the total cost, also charged when the queue is unstable.
    pub cap: f64,
    /// Customers simulated per replication, including warmup.
    pub customers: usize,
    /// Leading customers discarded from the average.
    pub warmup: usize,
}

impl Default for Mm1Params {
    fn default() -> Self {
        Self { c_u: 0.1, cap: 2.5, customers: 1000, warmup: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    /// `z^i` for the benchmarks, `(λ_i)` for the queue.
    pub designs: Vec<Vec<f64>>,
    /// Standard deviation of the additive benchmark noise.
    pub noise_sd: f64,
    pub mm1: Mm1Params,
}

pub const BENCHMARK_NOISE_SD: f64 = std::f64::consts::SQRT_2;

impl ProblemSpec {
    /// De Jong with `z^i = (i, …, i)`, `i = 1..=10`.
    pub fn dejong(dim: usize) -> Result<Self> {
        Self::benchmark(ProblemKind::DeJong, dim)
    }

    /// Griewank with `z^i = (i, …, i)`, `i = 1..=10`.
    pub fn griewank(dim: usize) -> Result<Self> {
        Self::benchmark(ProblemKind::Griewank, dim)
    }

    fn benchmark(kind: ProblemKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("problem dimension must be at least 1".into()));
        }
        let designs = (1..=10).map(|i| vec![i as f64; dim]).collect();
        Ok(Self { kind, dim, designs, noise_sd: BENCHMARK_NOISE_SD, mm1: Mm1Params::default() })
    }

    /// The queue with `λ_i = 6 + 0.3 i`, `i = 1..=10`.
    pub fn mm1(params: Mm1Params) -> Result<Self> {
        let designs = (1..=10).map(|i| vec![6.0 + 0.3 * i as f64]).collect();
        Self::mm1_with_rates(designs, params)
    }

    pub fn mm1_with_rates(designs: Vec<Vec<f64>>, params: Mm1Params) -> Result<Self> {
        if designs.is_empty() || designs.iter().any(|d| d.len() != 1 || !(d[0] > 0.0)) {
            return Err(Error::Domain("service rates must be positive scalars".into()));
        }
        if !(params.c_u > 0.0 && params.cap > 0.0) || params.warmup >= params.customers {
            return Err(Error::Config("queue needs c_u > 0, U > 0 and warmup < customers".into()));
        }
        Ok(Self { kind: ProblemKind::Mm1, dim: 1, designs, noise_sd: 0.0, mm1: params })
    }

    pub fn k(&self) -> usize {
        self.designs.len()
    }

    /// Exact mean response `y_i(x)`.
    pub fn true_mean(&self, design: usize, x: &[f64]) -> f64 {
        let z = &self.designs[design];
        match self.kind {
            ProblemKind::DeJong => x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum(),
            ProblemKind::Griewank => {
                let s: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 4000.0;
                let p: f64 = x
                    .iter()
                    .zip(z)
                    .enumerate()
                    .map(|(l, (a, b))| ((a - b) / ((l + 1) as f64).sqrt()).cos())
                    .product();
                s - p + 1.0
            }
            ProblemKind::Mm1 => {
                let (lambda, rate) = (z[0], x[0]);
                let p = &self.mm1;
                if rate / lambda < 1.0 {
                    (1.0 / (lambda - rate) + p.c_u * lambda).min(p.cap)
                } else {
                    p.cap
                }
            }
        }
    }

    /// `n` simulation outputs for `design` at `x`.
    pub fn sample(&self, design: usize, x: &[f64], n: usize, stream: &RngStream) -> Result<Vec<f64>> {
        if design >= self.k() {
            return Err(Error::Config(format!("design index {design} out of range")));
        }
        if x.len() != self.dim {
            return Err(Error::Config(format!("covariate has {} entries, expected {}", x.len(), self.dim)));
        }
        let mut rng = stream.rng();
        match self.kind {
            ProblemKind::DeJong | ProblemKind::Griewank => {
                let mean = self.true_mean(design, x);
                let noise = Normal::new(0.0, self.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
                Ok((0..n).map(|_| mean + noise.sample(&mut rng)).collect())
            }
            ProblemKind::Mm1 => {
                let (lambda, rate) = (self.designs[design][0], x[0]);
                if !(rate > 0.0) || !(lambda > 0.0) {
                    return Err(Error::Domain(format!("arrival rate {rate} and service rate {lambda} must be positive")));
                }
                let p = &self.mm1;
                if rate >= lambda {
                    return Ok(vec![p.cap; n]);
                }
                let arrivals = Exp::new(rate).map_err(|e| Error::Domain(e.to_string()))?;
                let service = Exp::new(lambda).map_err(|e| Error::Domain(e.to_string()))?;
                Ok((0..n)
                    .map(|_| {
                        let w = mean_sojourn(&mut rng, &arrivals, &service, p.customers, p.warmup);
                        (w + p.c_u * lambda).min(p.cap)
                    })
                    .collect())
            }
        }
    }

    /// Best design at `x` (lowest index on ties) and its mean.
    pub fn optimal_design(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, self.true_mean(0, x));
        for i in 1..self.k() {
            let v = self.true_mean(i, x);
            if v < best.1 {
                best = (i, v);
            }
        }
        best
    }

    /// Cost-minimizing continuous service rate `λ* = x + 1/√c_u` of the queue.
    pub fn mm1_continuous_optimum(&self, x: f64) -> f64 {
        x + 1.0 / self.mm1.c_u.sqrt()
    }
}

/// Average sojourn time (wait plus service) of customers after warmup, from
/// the Lindley recursion started empty.
fn mean_sojourn<R: Rng + ?Sized>(rng: &mut R, arrivals: &Exp<f64>, service: &Exp<f64>, customers: usize, warmup: usize) -> f64 {
    let mut wait = 0.0f64;
    let mut total = 0.0;
    for j in 0..customers {
        let s = service.sample(rng);
        if j >= warmup {
            total += wait + s;
        }
        let a = arrivals.sample(rng);
        wait = (wait + s - a).max(0.0);
    }
    total / (customers - warmup) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{Purpose, StreamPath};

    fn stream(design: u64) -> RngStream {
        RngStream::new(42, StreamPath::new(0, Purpose::Simulation).design(design))
    }

    #[test]
    fn minima_at_design_centers() {
        let dj = ProblemSpec::dejong(3).unwrap();
        let gr = ProblemSpec::griewank(3).unwrap();
        assert_eq!(dj.true_mean(4, &[5.0; 3]), 0.0);
        assert!(gr.true_mean(4, &[5.0; 3]).abs() < 1e-15);
    }

    #[test]
    fn mm1_mean_at_continuous_optimum() {
        let q = ProblemSpec::mm1_with_rates(vec![vec![2.5 + 1.0 / 0.1f64.sqrt()]], Mm1Params::default()).unwrap();
        let expected = 2.0 * 0.1f64.sqrt() + 0.1 * 2.5;
        assert!((q.true_mean(0, &[2.5]) - expected).abs() < 1e-12);
        assert!((expected - 0.88246).abs() < 1e-5);
        assert!((q.mm1_continuous_optimum(2.5) - 5.66228).abs() < 1e-5);
    }

    #[test]
    fn benchmark_noise_moments() {
        let dj = ProblemSpec::dejong(1).unwrap();
        let n = 100_000;
        let ys = dj.sample(2, &[4.2], n, &stream(2)).unwrap();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let truth = dj.true_mean(2, &[4.2]);
        assert!((mean - truth).abs() < 3.0 * (2.0 / n as f64).sqrt());
        assert!((var - 2.0).abs() < 0.06);
    }

    #[test]
    fn unstable_queue_costs_cap() {
        let q = ProblemSpec::mm1_with_rates(vec![vec![3.0]], Mm1Params::default()).unwrap();
        assert_eq!(q.sample(0, &[3.5], 5, &stream(0)).unwrap(), vec![2.5; 5]);
        assert_eq!(q.true_mean(0, &[3.5]), 2.5);
    }

    #[test]
    fn queue_outputs_within_bounds_and_deterministic() {
        let q = ProblemSpec::mm1(Mm1Params::default()).unwrap();
        let a = q.sample(0, &[4.4], 50, &stream(0)).unwrap();
        assert!(a.iter().all(|v| *v > 0.0 && *v <= 2.5));
        assert_eq!(a, q.sample(0, &[4.4], 50, &stream(0)).unwrap());
        assert!(matches!(q.sample(0, &[-1.0], 1, &stream(0)), Err(Error::Domain(_))));
    }

    #[test]
    fn queue_grand_mean_matches_analytic() {
        let q = ProblemSpec::mm1(Mm1Params::default()).unwrap();
        let ys = q.sample(0, &[2.5], 1000, &stream(0)).unwrap();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let truth: f64 = 1.0 / (6.3 - 2.5) + 0.1 * 6.3;
        assert!((truth - 0.8932).abs() < 1e-4);
        assert!((mean - truth).abs() < 0.05 * truth);
        // Sojourn part alone, against 1/(λ − x).
        let soj = mean - 0.63;
        assert!((soj - 1.0 / 3.8).abs() < 0.05 / 3.8);
    }

    #[test]
    fn optimal_design_cases() {
        let dj = ProblemSpec::dejong(1).unwrap();
        assert_eq!(dj.optimal_design(&[3.4]).0, 2);
        // 5.5 is equidistant from designs 5 and 6; the lower index wins.
        assert_eq!(dj.optimal_design(&[5.5]).0, 4);
        let q = ProblemSpec::mm1(Mm1Params::default()).unwrap();
        let (i, v) = q.optimal_design(&[2.5]);
        for j in 0..q.k() {
            assert!(v <= q.true_mean(j, &[2.5]));
        }
        assert_eq!(i, 0);
    }
}
