//! Streaming moments, simple regression and small dense least squares.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods shadow it whenever std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Running mean and variance; `merge` is exact, so partial accumulators can
/// be combined in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn mean_std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std_dev() / (self.count as f64).sqrt()
        }
    }

    /// Large-sample standard error of the standard deviation, `σ/√(2(N−1))`.
    pub fn std_dev_std_error(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.std_dev() / (2.0 * (self.count - 1) as f64).sqrt()
        }
    }
}

/// Streaming simple linear regression `y = a + b x`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Regression {
    count: u64,
    mean_x: f64,
    mean_y: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

/// Least-squares line with the standard error of its slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub slope_std_error: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl Regression {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.sxx += dx * (x - self.mean_x);
        self.syy += dy * (y - self.mean_y);
        self.sxy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, other: &Regression) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        let w = na * nb / n;
        self.sxx += other.sxx + dx * dx * w;
        self.syy += other.syy + dy * dy * w;
        self.sxy += other.sxy + dx * dy * w;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn fit(&self) -> Result<LineFit> {
        if self.count < 3 || self.sxx <= 0.0 {
            return Err(Error::InsufficientData {
                needed: 3,
                got: self.count as usize,
            });
        }
        let slope = self.sxy / self.sxx;
        let rss = (self.syy - slope * self.sxy).max(0.0);
        let slope_std_error = (rss / (self.count - 2) as f64 / self.sxx).sqrt();
        let r_squared = if self.syy > 0.0 {
            (slope * self.sxy / self.syy).clamp(0.0, 1.0)
        } else {
            1.0
        };
        Ok(LineFit {
            slope,
            slope_std_error,
            intercept: self.mean_y - slope * self.mean_x,
            r_squared,
        })
    }
}

/// Least-squares solution of `A c ≈ y` for a tall `A` given by rows.
///
/// Returns the coefficients and the residual norm `‖A c − y‖`. Uses
/// Householder QR so moderately ill-conditioned bases stay accurate.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if n == 0 || m < n || y.len() != m || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InsufficientData { needed: n.max(1), got: m });
    }
    // column-major copy of A and a copy of y, reduced in place
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = y.to_vec();
    for k in 0..n {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::param("basis", "columns are linearly dependent"));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k) {
                let dot: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum();
                let f = 2.0 * dot / vnorm2;
                for (c, vi) in col[k..].iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in b[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
    }
    let mut c = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[j][i] * c[j];
        }
        if a[i][i] == 0.0 {
            return Err(Error::param("basis", "columns are linearly dependent"));
        }
        c[i] = s / a[i][i];
    }
    let residual = b[n..].iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((c, residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let data = [1.0, 4.0, -2.5, 3.25, 0.0, 9.0, 7.5];
        let mut w = Welford::new();
        data.iter().for_each(|v| w.push(*v));
        let mean = data.iter().sum::<f64>() / 7.0;
        let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
        assert!((w.mean() - mean).abs() < 1e-14);
        assert!((w.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn welford_merge_equals_single_pass() {
        let data: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let mut whole = Welford::new();
        data.iter().for_each(|v| whole.push(*v));
        let mut a = Welford::new();
        let mut b = Welford::new();
        data[..17].iter().for_each(|v| a.push(*v));
        data[17..].iter().for_each(|v| b.push(*v));
        a.merge(&b);
        assert_eq!(a.count(), 50);
        assert!((a.mean() - whole.mean()).abs() < 1e-14);
        assert!((a.variance() - whole.variance()).abs() < 1e-12);
    }

    #[test]
    fn regression_recovers_exact_line() {
        let mut r = Regression::new();
        for i in 0..10 {
            let x = i as f64 * 0.5;
            r.push(x, 2.0 - 3.0 * x);
        }
        let fit = r.fit().unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-12);
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!(fit.slope_std_error < 1e-6);
    }

    #[test]
    fn regression_merge_equals_single_pass() {
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|i| (i as f64, ((i * 13) % 7) as f64 + 0.1 * i as f64))
            .collect();
        let mut whole = Regression::new();
        let mut a = Regression::new();
        let mut b = Regression::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            whole.push(*x, *y);
            if i < 11 { a.push(*x, *y) } else { b.push(*x, *y) }
        }
        a.merge(&b);
        let (fa, fw) = (a.fit().unwrap(), whole.fit().unwrap());
        assert!((fa.slope - fw.slope).abs() < 1e-12);
        assert!((fa.slope_std_error - fw.slope_std_error).abs() < 1e-12);
    }

    #[test]
    fn least_squares_solves_consistent_system() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let t = i as f64 * 0.3;
                vec![1.0, t, t * t]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.5 - r[1] + 2.0 * r[2]).collect();
        let (c, res) = least_squares(&rows, &y).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-12 && (c[1] + 1.0).abs() < 1e-12);
        assert!((c[2] - 2.0).abs() < 1e-12 && res < 1e-12);
    }

    #[test]
    fn least_squares_reports_residual() {
        let rows = vec![vec![1.0], vec![1.0], vec![1.0]];
        let (c, res) = least_squares(&rows, &[0.0, 1.0, 2.0]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-14);
        assert!((res - 2f64.sqrt()).abs() < 1e-14);
    }
}
