//! Two-dimensional Chebyshev interpolation of symmetric level
//! normalizations over a working box.
//!
//! A symmetric function `F(a, b)` on `[z1, z2]²` is stored on the triangle
//! `lo = a ∧ b`, `D = |a - b|` through the coordinates
//!
//! ```text
//! D ∈ [0, W],  t = (lo - z1) / (W - D) ∈ [0, 1],   W = z2 - z1
//! ```
//!
//! The fitted quantity is `q = log F + p·log D`, where `p` removes the
//! power-law behaviour of `F` on the diagonal so that `q` is smooth.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ChebCache {
    z1: f64,
    z2: f64,
    exponent: f64,
    nd: usize,
    nt: usize,
    /// Row-major, `coeffs[j * nt + k]` multiplies `T_j(ξ) T_k(η)`.
    coeffs: Vec<f64>,
}

fn nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos())
        .collect()
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

/// Chebyshev coefficients of samples taken at first-kind nodes.
fn dct(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|j| {
            let s: f64 = values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v * (std::f64::consts::PI * j as f64 * (i as f64 + 0.5) / n as f64).cos()
                })
                .sum();
            let scale = if j == 0 { 1.0 } else { 2.0 };
            scale * s / n as f64
        })
        .collect()
}

impl ChebCache {
    /// Fits `log F` on the box. `sample(lo, hi, dist)` returns `log F(lo, hi)`
    /// with `dist = hi - lo` given exactly; it is called at `(degree + 1)²`
    /// nodes in parallel. Trailing coefficients below `chop_tol` (absolute,
    /// in log units) are dropped.
    pub fn fit<F>(
        z1: f64,
        z2: f64,
        degree: usize,
        exponent: f64,
        chop_tol: f64,
        sample: F,
    ) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> Result<f64> + Sync,
    {
        if !(z2 > z1) || !z1.is_finite() || !z2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "working box must satisfy z1 < z2, got [{z1}, {z2}]"
            )));
        }
        let n = degree + 1;
        let w = z2 - z1;
        let xs = nodes(n);
        let samples: Vec<Result<f64>> = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, l) = (idx / n, idx % n);
                let d = 0.5 * w * (1.0 + xs[i]);
                let t = 0.5 * (1.0 + xs[l]);
                let lo = z1 + t * (w - d);
                let v = sample(lo, lo + d, d)?;
                if !v.is_finite() {
                    return Err(Error::InvalidFactor(format!(
                        "normalization is not finite at ({lo}, {})",
                        lo + d
                    )));
                }
                Ok(v + exponent * d.ln())
            })
            .collect();
        let mut q = Vec::with_capacity(n * n);
        for s in samples {
            q.push(s?);
        }

        // Transform along t for each D row, then along D.
        let mut tmp = vec![0.0; n * n];
        for i in 0..n {
            let row = dct(&q[i * n..(i + 1) * n]);
            tmp[i * n..(i + 1) * n].copy_from_slice(&row);
        }
        let mut coeffs = vec![0.0; n * n];
        for k in 0..n {
            let col: Vec<f64> = (0..n).map(|i| tmp[i * n + k]).collect();
            for (j, c) in dct(&col).into_iter().enumerate() {
                coeffs[j * n + k] = c;
            }
        }

        let row_max = |j: usize| (0..n).map(|k| coeffs[j * n + k].abs()).fold(0.0, f64::max);
        let col_max = |k: usize| (0..n).map(|j| coeffs[j * n + k].abs()).fold(0.0, f64::max);
        let nd = (0..n)
            .rev()
            .find(|&j| row_max(j) > chop_tol)
            .map_or(1, |j| j + 1);
        let nt = (0..n)
            .rev()
            .find(|&k| col_max(k) > chop_tol)
            .map_or(1, |k| k + 1);
        let mut kept = Vec::with_capacity(nd * nt);
        for j in 0..nd {
            kept.extend_from_slice(&coeffs[j * n..j * n + nt]);
        }
        Ok(Self {
            z1,
            z2,
            exponent,
            nd,
            nt,
            coeffs: kept,
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.z1, self.z2)
    }

    /// Retained degrees `(in D, in t)` after chopping.
    pub fn degrees(&self) -> (usize, usize) {
        (self.nd - 1, self.nt - 1)
    }

    /// `log F(lo, lo + dist)`.
    pub fn log_value(&self, lo: f64, dist: f64) -> Result<f64> {
        let w = self.z2 - self.z1;
        let slack = 1e-12 * w;
        let hi = lo + dist;
        if lo < self.z1 - slack || hi > self.z2 + slack || dist < 0.0 || dist > w + slack {
            return Err(Error::BoxExceeded {
                lo,
                hi,
                z1: self.z1,
                z2: self.z2,
            });
        }
        let d = dist.min(w);
        let room = w - d;
        let t = if room > 0.0 {
            ((lo - self.z1) / room).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let xi = (2.0 * d / w - 1.0).clamp(-1.0, 1.0);
        let eta = 2.0 * t - 1.0;
        let rows: Vec<f64> = (0..self.nd)
            .map(|j| clenshaw(&self.coeffs[j * self.nt..(j + 1) * self.nt], eta))
            .collect();
        let q = clenshaw(&rows, xi);
        Ok(q - crate::family::xlogy(self.exponent, d))
    }
}
