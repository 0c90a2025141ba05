//! Density families `Λⁿ_{a,b}` and their factor triples.
//!
//! A family is determined by its first marginals
//! `Λ^{n,1}_{a,b}(x) = f_n(a,b) g_n(b,x) h_n(x,a)`; the joint law of a whole
//! tuple is the telescoping product of first marginals over successively
//! shrinking blocks.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryPair, SitePoint};
use crate::error::{Error, Result};

/// `c · ln(d)` with the convention `0 · ln(0) = 0`.
pub(crate) fn xlogy(c: f64, d: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * d.ln()
    }
}

/// Any law of ordered tuples defined through its first marginals.
pub trait DensityFamily: Send + Sync {
    /// Largest supported level `n`.
    fn max_level(&self) -> usize;

    /// `log Λ^{n,1}_{a,b}` at a point given with its distances to `a` and `b`.
    /// Returns `-∞` off the open interval.
    fn log_first_marginal_at(
        &self,
        n: usize,
        boundary: &BoundaryPair,
        at: SitePoint,
    ) -> Result<f64>;

    /// Region of boundary and parameter values the family is valid on, if
    /// it is restricted.
    fn working_box(&self) -> Option<(f64, f64)> {
        None
    }

    fn label(&self) -> String;

    fn check_level(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidParameter("level must be at least 1".into()));
        }
        if n > self.max_level() {
            return Err(Error::LevelExceeded {
                requested: n,
                max: self.max_level(),
            });
        }
        Ok(())
    }

    fn log_first_marginal(&self, n: usize, boundary: &BoundaryPair, x: f64) -> Result<f64> {
        self.log_first_marginal_at(n, boundary, SitePoint::new(x, boundary))
    }

    /// `log Λ^{n,n}_{a,b}`, the first marginal with the boundaries swapped.
    fn log_last_marginal_at(
        &self,
        n: usize,
        boundary: &BoundaryPair,
        at: SitePoint,
    ) -> Result<f64> {
        let sw = boundary.swapped();
        let at = SitePoint {
            x: at.x,
            to_left: at.to_right,
            to_right: at.to_left,
        };
        self.log_first_marginal_at(n, &sw, at)
    }

    fn log_last_marginal(&self, n: usize, boundary: &BoundaryPair, x: f64) -> Result<f64> {
        self.log_last_marginal_at(n, boundary, SitePoint::new(x, boundary))
    }

    /// `log Λⁿ_{a,b}(θ)` through the left expansion
    /// `∏ᵢ Λ^{n-i,1}_{θᵢ,b}(θᵢ₊₁)`, with `θ₀ = a`.
    ///
    /// The empty tuple has density one. Tuples outside the ordered support
    /// give `-∞`.
    fn log_joint(&self, boundary: &BoundaryPair, values: &[f64]) -> Result<f64> {
        let n = values.len();
        if n == 0 {
            return Ok(0.0);
        }
        self.check_level(n)?;
        if !boundary.in_ordered_support(values) {
            return Ok(f64::NEG_INFINITY);
        }
        let b = boundary.right();
        let mut prev = boundary.left();
        let mut total = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let block = BoundaryPair::inner(prev, b)?;
            total += self.log_first_marginal_at(n - i, &block, SitePoint::new(x, &block))?;
            prev = x;
        }
        Ok(total)
    }

    /// `log Λⁿ_{a,b}(θ)` through the right expansion
    /// `∏ᵢ Λ^{n-i,n-i}_{a,θ_{n-i+1}}(θ_{n-i})`, with `θ_{n+1} = b`.
    fn log_joint_right(&self, boundary: &BoundaryPair, values: &[f64]) -> Result<f64> {
        let n = values.len();
        if n == 0 {
            return Ok(0.0);
        }
        self.check_level(n)?;
        if !boundary.in_ordered_support(values) {
            return Ok(f64::NEG_INFINITY);
        }
        let a = boundary.left();
        let mut next = boundary.right();
        let mut total = 0.0;
        for m in (1..=n).rev() {
            let x = values[m - 1];
            let block = BoundaryPair::inner(a, next)?;
            total += self.log_last_marginal_at(m, &block, SitePoint::new(x, &block))?;
            next = x;
        }
        Ok(total)
    }

    /// `log [Λ^{j-1}_{a,θⱼ}(θ₁..θⱼ₋₁) · Λ^{n-j}_{θⱼ,b}(θⱼ₊₁..θₙ)]`, the
    /// conditional law of the rest of the tuple given `θⱼ` (`1 ≤ j ≤ n`).
    fn log_conditional_split(
        &self,
        boundary: &BoundaryPair,
        values: &[f64],
        j: usize,
    ) -> Result<f64> {
        let n = values.len();
        if j == 0 || j > n {
            return Err(Error::IndexOutOfRange { index: j, n });
        }
        self.check_level(n)?;
        if !boundary.in_ordered_support(values) {
            return Ok(f64::NEG_INFINITY);
        }
        let pivot = values[j - 1];
        let left = if j > 1 {
            self.log_joint(
                &BoundaryPair::inner(boundary.left(), pivot)?,
                &values[..j - 1],
            )?
        } else {
            0.0
        };
        let right = if j < n {
            self.log_joint(&BoundaryPair::inner(pivot, boundary.right())?, &values[j..])?
        } else {
            0.0
        };
        Ok(left + right)
    }
}

impl<T: DensityFamily + ?Sized> DensityFamily for Arc<T> {
    fn max_level(&self) -> usize {
        (**self).max_level()
    }

    fn log_first_marginal_at(
        &self,
        n: usize,
        boundary: &BoundaryPair,
        at: SitePoint,
    ) -> Result<f64> {
        (**self).log_first_marginal_at(n, boundary, at)
    }

    fn working_box(&self) -> Option<(f64, f64)> {
        (**self).working_box()
    }

    fn label(&self) -> String {
        (**self).label()
    }
}

/// Backing store of a factor triple: the level normalizations `f_n` and the
/// generating factor `g`. The remaining factors follow from these:
/// `g₁ = h = g` and `g_{n+1}(b, x) = 1 / f_n(b, x)`.
pub trait FactorSource: Send + Sync + fmt::Debug {
    fn max_level(&self) -> usize;

    /// `log f_n(a, b)`, with `dist = |a - b|` supplied by the caller.
    fn log_f(&self, n: usize, a: f64, b: f64, dist: f64) -> Result<f64>;

    /// `log g(x, y)`, with `dist = |x - y|`.
    fn log_g(&self, x: f64, y: f64, dist: f64) -> Result<f64>;

    fn working_box(&self) -> Option<(f64, f64)> {
        None
    }

    fn label(&self) -> String;
}

/// The triple `(f_n, g_n, h_n)` of a family.
#[derive(Debug, Clone)]
pub struct FamilyFactors {
    source: Arc<dyn FactorSource>,
}

impl FamilyFactors {
    pub fn new(source: Arc<dyn FactorSource>) -> Self {
        Self { source }
    }

    pub fn source(&self) -> &Arc<dyn FactorSource> {
        &self.source
    }

    pub fn log_f(&self, n: usize, a: f64, b: f64) -> Result<f64> {
        self.source.log_f(n, a, b, (a - b).abs())
    }

    /// `log g_n(b, x)`.
    pub fn log_g_n(&self, n: usize, b: f64, x: f64) -> Result<f64> {
        self.log_g_n_dist(n, b, x, (b - x).abs())
    }

    pub fn log_g_n_dist(&self, n: usize, b: f64, x: f64, dist: f64) -> Result<f64> {
        if n == 1 {
            self.source.log_g(b, x, dist)
        } else {
            Ok(-self.source.log_f(n - 1, b, x, dist)?)
        }
    }

    /// `log h(x, a)`; the same at every level.
    pub fn log_h(&self, x: f64, a: f64) -> Result<f64> {
        self.source.log_g(x, a, (x - a).abs())
    }
}

impl DensityFamily for FamilyFactors {
    fn max_level(&self) -> usize {
        self.source.max_level()
    }

    fn log_first_marginal_at(
        &self,
        n: usize,
        boundary: &BoundaryPair,
        at: SitePoint,
    ) -> Result<f64> {
        self.check_level(n)?;
        if !at.inside(boundary) {
            return Ok(f64::NEG_INFINITY);
        }
        let (a, b) = (boundary.left(), boundary.right());
        let f = self.source.log_f(n, a, b, boundary.width())?;
        let g = self.log_g_n_dist(n, b, at.x, at.to_right)?;
        let h = self.source.log_g(at.x, a, at.to_left)?;
        Ok(f + g + h)
    }

    fn working_box(&self) -> Option<(f64, f64)> {
        self.source.working_box()
    }

    fn label(&self) -> String {
        self.source.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    OrderStats,
    Gapped { s: u32 },
    Dirichlet { s: f64 },
    Recursion { label: String },
}

/// A family together with how it was obtained.
#[derive(Debug, Clone)]
pub struct FactorFamily {
    pub kind: FamilyKind,
    pub factors: FamilyFactors,
}

impl FactorFamily {
    pub fn new(kind: FamilyKind, factors: FamilyFactors) -> Self {
        Self { kind, factors }
    }
}

impl DensityFamily for FactorFamily {
    fn max_level(&self) -> usize {
        self.factors.max_level()
    }

    fn log_first_marginal_at(
        &self,
        n: usize,
        boundary: &BoundaryPair,
        at: SitePoint,
    ) -> Result<f64> {
        self.factors.log_first_marginal_at(n, boundary, at)
    }

    fn working_box(&self) -> Option<(f64, f64)> {
        self.factors.working_box()
    }

    fn label(&self) -> String {
        match &self.kind {
            FamilyKind::OrderStats => "order-stats".into(),
            FamilyKind::Gapped { s } => format!("gapped(s={s})"),
            FamilyKind::Dirichlet { s } => format!("dirichlet(s={s})"),
            FamilyKind::Recursion { label } => label.clone(),
        }
    }
}

pub fn log_joint_from_factors(
    factors: &FamilyFactors,
    boundary: &BoundaryPair,
    values: &[f64],
) -> Result<f64> {
    factors.log_joint(boundary, values)
}

pub fn log_first_marginal(
    factors: &FamilyFactors,
    n: usize,
    boundary: &BoundaryPair,
    x: f64,
) -> Result<f64> {
    factors.log_first_marginal(n, boundary, x)
}

pub fn log_last_marginal(
    factors: &FamilyFactors,
    n: usize,
    boundary: &BoundaryPair,
    x: f64,
) -> Result<f64> {
    factors.log_last_marginal(n, boundary, x)
}

pub fn log_conditional_split(
    family: &dyn DensityFamily,
    boundary: &BoundaryPair,
    values: &[f64],
    j: usize,
) -> Result<f64> {
    family.log_conditional_split(boundary, values, j)
}
