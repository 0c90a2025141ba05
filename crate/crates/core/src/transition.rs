//! Raising and lowering operators between one-site marginals,
//!
//! ```text
//! P_{n,i+1} f(x) = ∫_{I_{a,x}} f(y) Λ^{n-i,1}_{y,b}(x) dy
//! Q_{n,i-1} f(x) = ∫_{I_{x,b}} f(y) Λ^{i-1,i-1}_{a,y}(x) dy
//! ```
//!
//! and numerical support estimation. Operators act lazily: the returned
//! marginal evaluates its integral at each query point.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::domain::{BoundaryPair, Interval, SitePoint};
use crate::error::{Error, Result};
use crate::family::DensityFamily;
use crate::quadrature::{log_integrate, LogSum, QuadratureSpec};

type LogEval<'a> = Arc<dyn Fn(SitePoint) -> Result<f64> + Send + Sync + 'a>;

/// A one-dimensional log-density on the interval of `boundary`, tagged as
/// the `i`-th marginal of an `n`-site law.
#[derive(Clone)]
pub struct MarginalFunction<'a> {
    n: usize,
    i: usize,
    boundary: BoundaryPair,
    eval: LogEval<'a>,
}

impl fmt::Debug for MarginalFunction<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarginalFunction")
            .field("n", &self.n)
            .field("i", &self.i)
            .field("boundary", &self.boundary)
            .finish_non_exhaustive()
    }
}

impl<'a> MarginalFunction<'a> {
    pub fn new<F>(n: usize, i: usize, boundary: BoundaryPair, log_density: F) -> Self
    where
        F: Fn(SitePoint) -> Result<f64> + Send + Sync + 'a,
    {
        Self {
            n,
            i,
            boundary,
            eval: Arc::new(log_density),
        }
    }

    /// `Λ^{n,1}_{a,b}` of `family`.
    pub fn first(family: &'a dyn DensityFamily, n: usize, boundary: BoundaryPair) -> Result<Self> {
        family.check_level(n)?;
        Ok(Self::new(n, 1, boundary, move |at| {
            family.log_first_marginal_at(n, &boundary, at)
        }))
    }

    /// `Λ^{n,n}_{a,b}` of `family`.
    pub fn last(family: &'a dyn DensityFamily, n: usize, boundary: BoundaryPair) -> Result<Self> {
        family.check_level(n)?;
        Ok(Self::new(n, n, boundary, move |at| {
            family.log_last_marginal_at(n, &boundary, at)
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn boundary(&self) -> &BoundaryPair {
        &self.boundary
    }

    /// Log-density at a point carrying its boundary distances; `-∞` outside.
    pub fn log_density_at(&self, at: SitePoint) -> Result<f64> {
        if !at.inside(&self.boundary) {
            return Ok(f64::NEG_INFINITY);
        }
        (self.eval)(at)
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        self.log_density_at(SitePoint::new(x, &self.boundary))
    }

    /// `log ∫ exp(f)` over the interval.
    pub fn log_mass(&self, quad: &QuadratureSpec) -> Result<f64> {
        let b = self.boundary;
        let sign = if b.right() > b.left() { 1.0 } else { -1.0 };
        log_integrate(0.0, b.width(), quad, |p| {
            self.log_density_at(SitePoint {
                x: b.left() + sign * p.from_lo,
                to_left: p.from_lo,
                to_right: p.from_hi,
            })
        })
    }
}

fn direction(b: &BoundaryPair) -> f64 {
    if b.right() > b.left() {
        1.0
    } else {
        -1.0
    }
}

/// `P_{n,i+1} f` for `1 ≤ i ≤ n - 1`.
pub fn raise<'a>(
    family: &'a dyn DensityFamily,
    n: usize,
    i: usize,
    f: &MarginalFunction<'a>,
    quad: &QuadratureSpec,
) -> Result<MarginalFunction<'a>> {
    if i == 0 || i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    family.check_level(n)?;
    let boundary = f.boundary;
    let (a, b) = (boundary.left(), boundary.right());
    let sign = direction(&boundary);
    let inner = f.clone();
    let quad = *quad;
    Ok(MarginalFunction::new(
        n,
        i + 1,
        boundary,
        move |at: SitePoint| {
            log_integrate(0.0, at.to_left, &quad, |p| {
                let y = a + sign * p.from_lo;
                let fy = inner.log_density_at(SitePoint {
                    x: y,
                    to_left: p.from_lo,
                    to_right: at.to_right + p.from_hi,
                })?;
                if fy == f64::NEG_INFINITY {
                    return Ok(fy);
                }
                let block = BoundaryPair::inner_exact(y, b, p.from_hi + at.to_right, sign > 0.0)?;
                let k = family.log_first_marginal_at(
                    n - i,
                    &block,
                    SitePoint {
                        x: at.x,
                        to_left: p.from_hi,
                        to_right: at.to_right,
                    },
                )?;
                Ok(fy + k)
            })
        },
    ))
}

/// `Q_{n,i-1} f` for `2 ≤ i ≤ n`.
pub fn lower<'a>(
    family: &'a dyn DensityFamily,
    n: usize,
    i: usize,
    f: &MarginalFunction<'a>,
    quad: &QuadratureSpec,
) -> Result<MarginalFunction<'a>> {
    if i < 2 || i > n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    family.check_level(n)?;
    let boundary = f.boundary;
    let a = boundary.left();
    let sign = direction(&boundary);
    let inner = f.clone();
    let quad = *quad;
    Ok(MarginalFunction::new(
        n,
        i - 1,
        boundary,
        move |at: SitePoint| {
            log_integrate(0.0, at.to_right, &quad, |p| {
                let y = at.x + sign * p.from_lo;
                let fy = inner.log_density_at(SitePoint {
                    x: y,
                    to_left: at.to_left + p.from_lo,
                    to_right: p.from_hi,
                })?;
                if fy == f64::NEG_INFINITY {
                    return Ok(fy);
                }
                let block = BoundaryPair::inner_exact(a, y, at.to_left + p.from_lo, sign > 0.0)?;
                let k = family.log_last_marginal_at(
                    i - 1,
                    &block,
                    SitePoint {
                        x: at.x,
                        to_left: at.to_left,
                        to_right: p.from_lo,
                    },
                )?;
                Ok(fy + k)
            })
        },
    ))
}

/// `Λ^{n,i}` as `i - 1` raises of the first marginal.
pub fn marginal_by_propagation<'a>(
    family: &'a dyn DensityFamily,
    n: usize,
    i: usize,
    boundary: BoundaryPair,
    quad: &QuadratureSpec,
) -> Result<MarginalFunction<'a>> {
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    let mut m = MarginalFunction::first(family, n, boundary)?;
    for k in 1..i {
        m = raise(family, n, k, &m, quad)?;
    }
    Ok(m)
}

/// `Λ^{n,i}` reached from whichever end needs fewer operator applications.
pub fn marginal<'a>(
    family: &'a dyn DensityFamily,
    n: usize,
    i: usize,
    boundary: BoundaryPair,
    quad: &QuadratureSpec,
) -> Result<MarginalFunction<'a>> {
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    if i - 1 <= n - i {
        return marginal_by_propagation(family, n, i, boundary, quad);
    }
    let mut m = MarginalFunction::last(family, n, boundary)?;
    for k in (i + 1..=n).rev() {
        m = lower(family, n, k, &m, quad)?;
    }
    Ok(m)
}

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-12;

/// Smallest and largest grid points at which `f` exceeds `threshold` times
/// its grid maximum. The grid has `grid_size` points including both
/// endpoints of the interval.
pub fn numeric_support(f: &MarginalFunction, threshold: f64, grid_size: usize) -> Result<Interval> {
    if grid_size < 16 {
        return Err(Error::InvalidParameter(format!(
            "support grid needs at least 16 points, got {grid_size}"
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "support threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let iv = f.boundary.interval();
    let step = iv.width() / (grid_size - 1) as f64;
    let xs: Vec<f64> = (0..grid_size).map(|k| iv.lo + k as f64 * step).collect();
    let values: Vec<f64> = xs
        .par_iter()
        .map(|&x| f.log_density(x))
        .collect::<Result<_>>()?;
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::EmptySupport);
    }
    let cut = peak + threshold.ln();
    let first = values
        .iter()
        .position(|&v| v > cut)
        .ok_or(Error::EmptySupport)?;
    let last = values
        .iter()
        .rposition(|&v| v > cut)
        .ok_or(Error::EmptySupport)?;
    Ok(Interval {
        lo: xs[first],
        hi: xs[last],
        orientation: iv.orientation,
    })
}

/// Number of cells of the fixed grid used by [`DiscreteMarginal`].
pub const DISCRETE_GRID: usize = 512;

/// A marginal tabulated at the cell midpoints of a uniform grid, for cheap
/// repeated operator sweeps. Integrals use the midpoint rule.
#[derive(Debug, Clone)]
pub struct DiscreteMarginal {
    pub boundary: BoundaryPair,
    /// Midpoints, ordered from `a` towards `b`.
    pub points: Vec<f64>,
    pub log_values: Vec<f64>,
}

impl DiscreteMarginal {
    pub fn tabulate(f: &MarginalFunction) -> Result<Self> {
        let b = f.boundary;
        let h = 1.0 / DISCRETE_GRID as f64;
        let points: Vec<f64> = (0..DISCRETE_GRID)
            .map(|k| b.at_fraction((k as f64 + 0.5) * h))
            .collect();
        let log_values = points
            .par_iter()
            .map(|&x| f.log_density(x))
            .collect::<Result<_>>()?;
        Ok(Self {
            boundary: b,
            points,
            log_values,
        })
    }

    fn cell(&self) -> f64 {
        self.boundary.width() / DISCRETE_GRID as f64
    }

    /// Discrete `P_{n,i+1}`.
    pub fn raise(&self, family: &dyn DensityFamily, n: usize, i: usize) -> Result<Self> {
        if i == 0 || i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        let b = self.boundary.right();
        let sign = direction(&self.boundary);
        let h = self.cell();
        let log_values = (0..self.points.len())
            .into_par_iter()
            .map(|k| {
                let x = self.points[k];
                let mut sum = LogSum::new();
                for m in 0..k {
                    let block = BoundaryPair::inner(self.points[m], b)?;
                    let kern = family.log_first_marginal(n - i, &block, x)?;
                    sum.add(self.log_values[m] + kern);
                }
                // Half cell between the last node and x, with f frozen at x.
                let y = x - sign * 0.25 * h;
                let block = BoundaryPair::inner(y, b)?;
                let kern = family.log_first_marginal(n - i, &block, x)?;
                sum.add(self.log_values[k] + kern - 2f64.ln());
                Ok(sum.value() + h.ln())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            log_values,
            ..self.clone()
        })
    }

    /// Discrete `Q_{n,i-1}`.
    pub fn lower(&self, family: &dyn DensityFamily, n: usize, i: usize) -> Result<Self> {
        if i < 2 || i > n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        let a = self.boundary.left();
        let sign = direction(&self.boundary);
        let h = self.cell();
        let len = self.points.len();
        let log_values = (0..len)
            .into_par_iter()
            .map(|k| {
                let x = self.points[k];
                let mut sum = LogSum::new();
                for m in k + 1..len {
                    let block = BoundaryPair::inner(a, self.points[m])?;
                    let kern = family.log_last_marginal(i - 1, &block, x)?;
                    sum.add(self.log_values[m] + kern);
                }
                let y = x + sign * 0.25 * h;
                let block = BoundaryPair::inner(a, y)?;
                let kern = family.log_last_marginal(i - 1, &block, x)?;
                sum.add(self.log_values[k] + kern - 2f64.ln());
                Ok(sum.value() + h.ln())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            log_values,
            ..self.clone()
        })
    }
}
