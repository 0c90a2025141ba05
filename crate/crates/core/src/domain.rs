//! Boundary parameters, their open interval, and ordered tuples of hidden
//! parameters living inside it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Increasing,
    Decreasing,
}

/// The open interval `(a ∧ b, a ∨ b)` together with the orientation of the
/// boundary pair that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub orientation: Orientation,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Strict membership in the open interval.
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Reservoir parameters `(a, b)`.
///
/// The public constructor enforces `a, b > 0`; [`BoundaryPair::limiting`]
/// also admits zero so that unit-interval fixtures such as `(0, 1)` can be
/// used. Every density formula is continuous as a boundary tends to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPair {
    left: f64,
    right: f64,
    #[serde(skip)]
    width: f64,
    #[serde(skip)]
    increasing: bool,
}

impl BoundaryPair {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite()) || left <= 0.0 || right <= 0.0 {
            return Err(Error::NonPositiveBoundary { left, right });
        }
        if left == right {
            return Err(Error::DegenerateInterval(left));
        }
        Ok(Self::raw(left, right))
    }

    fn raw(left: f64, right: f64) -> Self {
        Self {
            left,
            right,
            width: (right - left).abs(),
            increasing: left < right,
        }
    }

    /// Limiting-fixture constructor: boundaries may be zero (but not negative
    /// and not equal).
    pub fn limiting(left: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite()) || left < 0.0 || right < 0.0 {
            return Err(Error::NonPositiveBoundary { left, right });
        }
        if left == right {
            return Err(Error::DegenerateInterval(left));
        }
        Ok(Self::raw(left, right))
    }

    /// Internal constructor for sub-blocks whose validity follows from an
    /// already validated outer pair.
    pub(crate) fn inner(left: f64, right: f64) -> Result<Self> {
        if left == right || !(left.is_finite() && right.is_finite()) {
            return Err(Error::DegenerateInterval(left));
        }
        Ok(Self::raw(left, right))
    }

    /// Sub-block whose width is known more precisely than the difference
    /// of its rounded endpoints; the endpoints may even coincide.
    pub(crate) fn inner_exact(left: f64, right: f64, width: f64, increasing: bool) -> Result<Self> {
        if !(width > 0.0) || !(left.is_finite() && right.is_finite()) {
            return Err(Error::DegenerateInterval(left));
        }
        Ok(Self {
            left,
            right,
            width,
            increasing,
        })
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn swapped(&self) -> Self {
        Self {
            left: self.right,
            right: self.left,
            width: self.width,
            increasing: !self.increasing,
        }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn orientation(&self) -> Orientation {
        if self.increasing {
            Orientation::Increasing
        } else {
            Orientation::Decreasing
        }
    }

    pub fn interval(&self) -> Interval {
        Interval {
            lo: self.left.min(self.right),
            hi: self.left.max(self.right),
            orientation: self.orientation(),
        }
    }

    /// Maps an interval-relative coordinate `u ∈ [0, 1]` measured from the
    /// left boundary `a` towards `b`.
    pub fn at_fraction(&self, u: f64) -> f64 {
        self.left + u * (self.right - self.left)
    }

    /// Checks that `values` is a strictly monotone tuple, in the pair's
    /// orientation, inside the open interval.
    pub fn in_ordered_support(&self, values: &[f64]) -> bool {
        if values.is_empty() {
            return false;
        }
        let sign = match self.orientation() {
            Orientation::Increasing => 1.0,
            Orientation::Decreasing => -1.0,
        };
        let mut prev = self.left;
        for &v in values.iter().chain(std::iter::once(&self.right)) {
            if !v.is_finite() || (v - prev) * sign <= 0.0 {
                return false;
            }
            prev = v;
        }
        true
    }
}

/// A point `x` together with its distances to the boundaries `a` and `b` of
/// some pair. Quadrature nodes close to an endpoint carry the distance
/// exactly, which the rounded coordinate alone cannot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SitePoint {
    pub x: f64,
    pub to_left: f64,
    pub to_right: f64,
}

impl SitePoint {
    pub fn new(x: f64, boundary: &BoundaryPair) -> Self {
        Self {
            x,
            to_left: (x - boundary.left()).abs(),
            to_right: (boundary.right() - x).abs(),
        }
    }

    /// Membership in the open interval of `boundary`, decided from the
    /// carried distances: both positive and summing to the width up to
    /// rounding of the boundary coordinates.
    pub fn inside(&self, boundary: &BoundaryPair) -> bool {
        let width = boundary.width();
        let scale = boundary.left().abs().max(boundary.right().abs()).max(width);
        self.x.is_finite()
            && self.to_left > 0.0
            && self.to_right > 0.0
            && self.to_left + self.to_right <= width + 8.0 * f64::EPSILON * scale
    }
}

/// An ordered tuple `(θ₁, …, θₙ)` validated against a boundary pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedTuple {
    values: Vec<f64>,
}

impl OrderedTuple {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    /// Wraps values that are ordered by construction (samplers).
    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        Self { values }
    }
}

pub fn make_boundary(a: f64, b: f64) -> Result<BoundaryPair> {
    BoundaryPair::new(a, b)
}

pub fn validate_ordered(boundary: &BoundaryPair, values: &[f64]) -> Result<OrderedTuple> {
    if values.is_empty() {
        return Err(Error::OutOfSupport("empty tuple".into()));
    }
    if !boundary.in_ordered_support(values) {
        return Err(Error::OutOfSupport(format!(
            "{values:?} is not strictly ordered inside ({}, {})",
            boundary.left(),
            boundary.right()
        )));
    }
    Ok(OrderedTuple {
        values: values.to_vec(),
    })
}
