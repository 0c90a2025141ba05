//! Tanh-sinh (double-exponential) quadrature of log-valued integrands.
//!
//! Integrands are supplied as `log f` and the result is `log ∫ f`. Terms are
//! accumulated with a running maximum so neither very large normalizations
//! nor endpoint power singularities `(x - lo)^p`, `p > -1`, overflow.
//! Each node carries its exact distance to both endpoints; integrands that
//! are singular at an endpoint should use those instead of recomputing them
//! from the rounded abscissa.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::domain::Interval;
use crate::error::{Error, Result};

/// Environment variable that overrides the default relative tolerance.
pub const QUAD_TOL_ENV: &str = "NESSMIX_QUAD_TOL";

/// Half-width of the truncated `t` range. At `t = 6` the node sits about
/// `1e-275` (relative) from the endpoint.
const T_MAX: f64 = 6.0;

/// Spacing of the nodes probed beyond `T_MAX`. Node distances reach the
/// smallest normal number near `t = 6.11`.
const T_PROBE_STEP: f64 = 0.005;

/// A probed tail counts as decayed once its terms fall this far (in log
/// units) below `max_term * rel_tol`.
const PROBE_MARGIN_LOG: f64 = 10.0;

/// Terms below `max_term * TAIL_CUT` are treated as numerically zero when
/// choosing how far out later levels need to go.
const TAIL_CUT_LOG: f64 = -46.0;

const MIN_LEVELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub max_levels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            max_levels: 12,
        }
    }
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, max_levels: usize) -> Result<Self> {
        let spec = Self {
            rel_tol,
            max_levels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "quadrature rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_levels < MIN_LEVELS + 1 {
            return Err(Error::InvalidParameter(format!(
                "quadrature max_levels must be at least {}",
                MIN_LEVELS + 1
            )));
        }
        Ok(())
    }

    /// Applies `NESSMIX_QUAD_TOL` when it is set to a positive number.
    pub fn with_env_override(mut self) -> Self {
        if let Some(tol) = std::env::var(QUAD_TOL_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|t| *t > 0.0 && t.is_finite())
        {
            self.rel_tol = tol;
        }
        self
    }
}

/// A quadrature node: the abscissa and its exact offsets from both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abscissa {
    pub x: f64,
    pub from_lo: f64,
    pub from_hi: f64,
}

/// Running `log Σ exp(lᵢ)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    acc: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }

    pub(crate) fn add(&mut self, l: f64) {
        if l == f64::NEG_INFINITY {
            return;
        }
        if l > self.max {
            self.acc = self.acc * (self.max - l).exp() + 1.0;
            self.max = l;
        } else {
            self.acc += (l - self.max).exp();
        }
    }

    pub(crate) fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

struct Node {
    at: Abscissa,
    log_weight: f64,
}

fn node(t: f64, lo: f64, hi: f64) -> Node {
    let half = 0.5 * (hi - lo);
    let u = FRAC_PI_2 * t.abs().sinh();
    let e = (-2.0 * u).exp();
    let near = half * 2.0 * e / (1.0 + e);
    let far = half * 2.0 / (1.0 + e);
    let at = if t > 0.0 {
        Abscissa {
            x: hi - near,
            from_lo: far,
            from_hi: near,
        }
    } else if t < 0.0 {
        Abscissa {
            x: lo + near,
            from_lo: near,
            from_hi: far,
        }
    } else {
        Abscissa {
            x: lo + half,
            from_lo: half,
            from_hi: half,
        }
    };
    let log_weight =
        half.ln() + FRAC_PI_2.ln() + t.cosh().ln() + 4f64.ln() - 2.0 * u - 2.0 * e.ln_1p();
    Node { at, log_weight }
}

/// `log ∫_lo^hi exp(log_f(x)) dx` by tanh-sinh quadrature.
///
/// Returns `-∞` when the integrand vanishes at every node.
pub fn log_integrate<F>(lo: f64, hi: f64, spec: &QuadratureSpec, mut log_f: F) -> Result<f64>
where
    F: FnMut(Abscissa) -> Result<f64>,
{
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "integration bounds must satisfy lo < hi, got ({lo}, {hi})"
        )));
    }

    let mut eval = |t: f64| -> Result<f64> {
        let n = node(t, lo, hi);
        if n.at.from_lo <= 0.0 || n.at.from_hi <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let v = log_f(n.at)?;
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::DivergentIntegral(format!(
                "integrand is {v} at x = {}",
                n.at.x
            )));
        }
        Ok(n.log_weight + v)
    };

    // Level 0: h = 1 over the full range, used to locate the tails.
    let steps = T_MAX as i64;
    let mut terms0 = Vec::with_capacity(2 * steps as usize + 1);
    for k in -steps..=steps {
        terms0.push(eval(k as f64)?);
    }
    let mut sum = LogSum::new();
    for &l in &terms0 {
        sum.add(l);
    }
    let peak = terms0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }

    // Tail diagnostics: a non-negligible, growing term at the outermost
    // node means the mass either does not decay towards that endpoint or
    // only decays on a scale finer than the level-0 grid (a singularity
    // just outside the range). Probing past `T_MAX` tells the two apart.
    let total0 = sum.value();
    let last = terms0.len() - 1;
    let mut extended = [None, None];
    for (side, (edge, inner)) in [(0usize, 1usize), (last, last - 1)].into_iter().enumerate() {
        let edge_term = terms0[edge];
        if edge_term > total0 + spec.rel_tol.ln() && edge_term >= terms0[inner] {
            let sign = if side == 0 { -1.0 } else { 1.0 };
            let cut = peak + spec.rel_tol.ln() - PROBE_MARGIN_LOG;
            match probe_tail(&mut eval, sign, cut, lo, hi)? {
                Some(t) => extended[side] = Some(t),
                None => {
                    return Err(Error::DivergentIntegral(format!(
                        "integrand mass does not decay towards {}",
                        if side == 0 { lo } else { hi }
                    )))
                }
            }
        }
    }

    let reach = |side: &mut dyn Iterator<Item = (f64, f64)>| -> f64 {
        let mut limit = 0.0;
        for (t, l) in side {
            if l > peak + TAIL_CUT_LOG {
                limit = t.abs();
            }
        }
        (limit + 1.0).min(T_MAX)
    };
    let t_right = extended[1].unwrap_or_else(|| {
        reach(&mut (0..=steps).map(|k| (k as f64, terms0[(k + steps) as usize])))
    });
    let t_left = extended[0].unwrap_or_else(|| {
        reach(&mut (0..=steps).map(|k| (k as f64, terms0[(steps - k) as usize])))
    });
    // An extension only enters the sum once h is finer than its width, so
    // convergence is not judged before then.
    let min_levels = extended
        .iter()
        .flatten()
        .map(|t| (1.0 / (t - T_MAX)).log2().ceil() as usize + 1)
        .fold(MIN_LEVELS, usize::max);
    if min_levels >= spec.max_levels {
        return Err(Error::QuadratureFailure {
            rel_tol: spec.rel_tol,
            levels: spec.max_levels,
            last_change: f64::INFINITY,
        });
    }

    let mut h: f64 = 1.0;
    let mut estimate = total0 + h.ln();
    let mut last_change = f64::INFINITY;
    for level in 1..spec.max_levels {
        h *= 0.5;
        let mut t = h;
        while t <= t_right {
            sum.add(eval(t)?);
            t += 2.0 * h;
        }
        let mut t = h;
        while t <= t_left {
            sum.add(eval(-t)?);
            t += 2.0 * h;
        }
        let next = sum.value() + h.ln();
        last_change = (next - estimate).abs();
        estimate = next;
        if level >= min_levels && last_change <= spec.rel_tol {
            return Ok(estimate);
        }
    }
    Err(Error::QuadratureFailure {
        rel_tol: spec.rel_tol,
        levels: spec.max_levels,
        last_change,
    })
}

/// Walks past `T_MAX` on one side until the terms drop below `cut`,
/// returning the `|t|` to integrate out to, or `None` if node distances
/// underflow first.
fn probe_tail<E>(eval: &mut E, sign: f64, cut: f64, lo: f64, hi: f64) -> Result<Option<f64>>
where
    E: FnMut(f64) -> Result<f64>,
{
    let mut t = T_MAX;
    let mut prev = f64::INFINITY;
    loop {
        t += T_PROBE_STEP;
        let at = node(sign * t, lo, hi).at;
        if at.from_lo.min(at.from_hi) < f64::MIN_POSITIVE {
            return Ok(None);
        }
        let l = eval(sign * t)?;
        if l < cut && l < prev {
            return Ok(Some(t + T_PROBE_STEP));
        }
        prev = l;
    }
}

/// Log-integral of a log-integrand over an interval.
pub fn quadrature<F>(integrand: F, interval: &Interval, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    log_integrate(interval.lo, interval.hi, spec, |p| {
        // A node that rounds onto an endpoint carries no usable coordinate.
        if p.x <= interval.lo || p.x >= interval.hi {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(integrand(p.x))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoundaryPair;
    use approx::assert_abs_diff_eq;

    fn unit() -> Interval {
        BoundaryPair::limiting(0.0, 1.0).unwrap().interval()
    }

    #[test]
    fn beta22_normalization() {
        let v = quadrature(
            |x| (6.0 * x * (1.0 - x)).ln(),
            &unit(),
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_sqrt_endpoint_singularity() {
        let v = quadrature(|x| -0.5 * x.ln(), &unit(), &QuadratureSpec::default()).unwrap();
        assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn constant_on_shifted_interval() {
        let iv = BoundaryPair::new(1.0, 3.0).unwrap().interval();
        let v = quadrature(|_| 0.0, &iv, &QuadratureSpec::default()).unwrap();
        assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-13);
    }

    #[test]
    fn singularity_away_from_origin_uses_offsets() {
        // (x - 0.5)^(-1/2) (1.5 - x)^(-1/2) on (0.5, 1.5) integrates to π.
        let spec = QuadratureSpec::default();
        let v = log_integrate(0.5, 1.5, &spec, |p| {
            Ok(-0.5 * p.from_lo.ln() - 0.5 * p.from_hi.ln())
        })
        .unwrap();
        assert_abs_diff_eq!(v, std::f64::consts::PI.ln(), epsilon = 1e-11);
    }

    #[test]
    fn large_log_values_do_not_overflow() {
        let v = quadrature(|_| 1000.0, &unit(), &QuadratureSpec::default()).unwrap();
        assert_abs_diff_eq!(v, 1000.0, epsilon = 1e-12);
    }

    #[test]
    fn singularity_just_past_the_endpoint() {
        // ∫_0^1 dx / (1 - x + d) = ln((1 + d) / d), with d below the
        // resolution of the level-0 grid.
        let spec = QuadratureSpec::default();
        for d in [1e-200, 1e-250, 1e-280] {
            let v = log_integrate(0.0, 1.0, &spec, |p| Ok(-(p.from_hi + d).ln())).unwrap();
            let exact = (-d.ln()).ln();
            assert!((v - exact).abs() < 1e-9, "d = {d:e}: {v} vs {exact}");
        }
    }

    #[test]
    fn divergent_integrand_is_reported() {
        let r = log_integrate(0.0, 1.0, &QuadratureSpec::default(), |p| {
            Ok(-p.from_lo.ln())
        });
        assert!(matches!(r, Err(Error::DivergentIntegral(_))), "{r:?}");
    }

    #[test]
    fn zero_integrand_gives_neg_infinity() {
        let v = quadrature(|_| f64::NEG_INFINITY, &unit(), &QuadratureSpec::default()).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn tight_level_budget_fails() {
        // A sharply peaked integrand cannot converge in three levels.
        let spec = QuadratureSpec::new(1e-14, 3).unwrap();
        let r = quadrature(|x| -1e4 * (x - 0.3).powi(2), &unit(), &spec);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })), "{r:?}");
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::new(0.0, 12).is_err());
        assert!(QuadratureSpec::new(1e-9, 1).is_err());
    }

    #[test]
    fn log_sum_matches_direct() {
        let mut s = LogSum::new();
        for l in [-3.0, 2.0, 0.5, f64::NEG_INFINITY] {
            s.add(l);
        }
        let direct = ((-3f64).exp() + 2f64.exp() + 0.5f64.exp()).ln();
        assert_abs_diff_eq!(s.value(), direct, epsilon = 1e-14);
    }
}
