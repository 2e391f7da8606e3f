//! Dense symmetric positive-definite factorization on row-major storage.
//!
//! Every SK fit performs hundreds of factorizations of the same size, so the
//! factor is kept in a flat `Vec<f64>` and the solves work in place.

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`, stored row-major
/// (the strict upper triangle is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors the symmetric matrix `a` (row-major, `n × n`). Only the lower
    /// triangle is read. Fails on the first pivot that is not strictly positive.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix storage does not match dimension");
        for i in 0..n {
            for j in 0..=i {
                let (head, tail) = a.split_at_mut(i * n);
                let row_i = &tail[..n];
                let dot: f64 = if j == i {
                    row_i[..j].iter().map(|v| v * v).sum()
                } else {
                    let row_j = &head[j * n..j * n + j];
                    row_i[..j].iter().zip(row_j).map(|(x, y)| x * y).sum()
                };
                let s = row_i[j] - dot;
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::IllConditioned { index: i, pivot: s });
                    }
                    tail[j] = s.sqrt();
                } else {
                    let d = head[j * n + j];
                    tail[j] = s / d;
                }
            }
            for v in &mut a[i * n + i + 1..(i + 1) * n] {
                *v = 0.0;
            }
        }
        Ok(Self { n, l: a })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// Row-major lower factor.
    pub fn factor_matrix(&self) -> &[f64] {
        &self.l
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let dot: f64 = row.iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
            b[i] = (b[i] - dot) / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in (0..n).rev() {
            b[i] /= self.l[i * n + i];
            let bi = b[i];
            let row = &self.l[i * n..i * n + i];
            for (bk, lik) in b[..i].iter_mut().zip(row) {
                *bk -= lik * bi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    /// Smallest diagonal entry of the factor.
    pub fn min_pivot(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).fold(f64::INFINITY, f64::min)
    }

    /// Reconstructs `L Lᵀ`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

/// Inverts a small symmetric positive-definite matrix (row-major).
pub fn spd_inverse(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let chol = Cholesky::factor(a.to_vec(), n)?;
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for c in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        let col = chol.solve(&e);
        for r in 0..n {
            inv[r * n + c] = col[r];
        }
    }
    Ok(inv)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quadratic form `xᵀ A x` for row-major `A`.
pub fn quad_form(a: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    (0..n)
        .map(|i| x[i] * dot(&a[i * n..(i + 1) * n], x))
        .sum()
}

/// Ordinary least squares `y ≈ c0 + c1·x`, returning `(intercept, slope, slope_stderr)`.
///
/// The slope standard error is `NaN` when there are only two points.
pub fn simple_ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if x.len() > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - intercept - slope * a;
                r * r
            })
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (intercept, slope, stderr)
}
