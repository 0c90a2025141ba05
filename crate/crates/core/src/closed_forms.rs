//! Families with explicit factors: uniform order statistics, gapped order
//! statistics and ordered Dirichlet laws.
//!
//! All three are the Dirichlet family with exponent `s` (order statistics
//! are `s = 1`, gapped order statistics are integer `s`):
//!
//! ```text
//! f_n(a,b)  = Γ(s(n+1)) / |b-a|^{s(n+1)-1}
//! g_n(b,θ)  = |b-θ|^{sn-1} / Γ(sn)
//! h(θ,a)    = |θ-a|^{s-1} / Γ(s)
//! ```

use std::sync::Arc;

use statrs::function::gamma::ln_gamma;

use crate::domain::{BoundaryPair, SitePoint};
use crate::error::{Error, Result};
use crate::family::{xlogy, FactorFamily, FactorSource, FamilyFactors, FamilyKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletParams {
    s: f64,
    max_level: usize,
}

impl DirichletParams {
    pub fn new(s: f64, max_level: usize) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Dirichlet exponent must be positive, got {s}"
            )));
        }
        if max_level == 0 {
            return Err(Error::InvalidParameter(
                "max level must be at least 1".into(),
            ));
        }
        Ok(Self { s, max_level })
    }

    pub fn s(&self) -> f64 {
        self.s
    }
}

impl FactorSource for DirichletParams {
    fn max_level(&self) -> usize {
        self.max_level
    }

    fn log_f(&self, n: usize, _a: f64, _b: f64, dist: f64) -> Result<f64> {
        let k = self.s * (n + 1) as f64;
        Ok(ln_gamma(k) - xlogy(k - 1.0, dist))
    }

    fn log_g(&self, _x: f64, _y: f64, dist: f64) -> Result<f64> {
        Ok(xlogy(self.s - 1.0, dist) - ln_gamma(self.s))
    }

    fn label(&self) -> String {
        format!("dirichlet(s={})", self.s)
    }
}

pub fn dirichlet_factors(s: f64, max_level: usize) -> Result<FamilyFactors> {
    Ok(FamilyFactors::new(Arc::new(DirichletParams::new(
        s, max_level,
    )?)))
}

pub fn orderstats_factors(max_level: usize) -> Result<FamilyFactors> {
    dirichlet_factors(1.0, max_level)
}

pub fn gapped_factors(s: u32, max_level: usize) -> Result<FamilyFactors> {
    if s == 0 {
        return Err(Error::InvalidParameter(
            "gap parameter must be at least 1".into(),
        ));
    }
    dirichlet_factors(s as f64, max_level)
}

impl FactorFamily {
    pub fn order_stats(max_level: usize) -> Result<Self> {
        Ok(Self::new(
            FamilyKind::OrderStats,
            orderstats_factors(max_level)?,
        ))
    }

    pub fn gapped(s: u32, max_level: usize) -> Result<Self> {
        Ok(Self::new(
            FamilyKind::Gapped { s },
            gapped_factors(s, max_level)?,
        ))
    }

    pub fn dirichlet(s: f64, max_level: usize) -> Result<Self> {
        Ok(Self::new(
            FamilyKind::Dirichlet { s },
            dirichlet_factors(s, max_level)?,
        ))
    }

    /// Exponent `s` when the family is of Dirichlet type.
    pub fn dirichlet_exponent(&self) -> Option<f64> {
        match self.kind {
            FamilyKind::OrderStats => Some(1.0),
            FamilyKind::Gapped { s } => Some(s as f64),
            FamilyKind::Dirichlet { s } => Some(s),
            FamilyKind::Recursion { .. } => None,
        }
    }
}

/// Joint log-density of gapped order statistics, through the factor product.
pub fn gapped_joint_log(s: u32, boundary: &BoundaryPair, values: &[f64]) -> Result<f64> {
    use crate::family::DensityFamily;
    gapped_factors(s, values.len().max(1))?.log_joint(boundary, values)
}

/// Joint log-density of the ordered Dirichlet law written out directly:
/// `Γ(s(n+1))/Γ(s)^{n+1} · |b-a|^{-(s(n+1)-1)} · ∏ |θᵢ₊₁-θᵢ|^{s-1}`.
pub fn dirichlet_joint_log(s: f64, boundary: &BoundaryPair, values: &[f64]) -> Result<f64> {
    DirichletParams::new(s, values.len().max(1))?;
    let n = values.len();
    if n == 0 {
        return Ok(0.0);
    }
    if !boundary.in_ordered_support(values) {
        return Ok(f64::NEG_INFINITY);
    }
    let k = s * (n + 1) as f64;
    let mut total = ln_gamma(k) - (n + 1) as f64 * ln_gamma(s) - xlogy(k - 1.0, boundary.width());
    let mut prev = boundary.left();
    for &x in values.iter().chain(std::iter::once(&boundary.right())) {
        total += xlogy(s - 1.0, (x - prev).abs());
        prev = x;
    }
    Ok(total)
}

/// Log-density of the `i`-th coordinate of the ordered Dirichlet law:
/// `θᵢ = a + (b-a)·B` with `B ~ Beta(s i, s(n+1-i))`.
pub fn dirichlet_marginal_log(
    s: f64,
    n: usize,
    i: usize,
    boundary: &BoundaryPair,
    x: f64,
) -> Result<f64> {
    DirichletParams::new(s, n)?;
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    let at = SitePoint::new(x, boundary);
    if !at.inside(boundary) {
        return Ok(f64::NEG_INFINITY);
    }
    let (p, q) = (s * i as f64, s * (n + 1 - i) as f64);
    let log_beta = ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q);
    Ok(xlogy(p - 1.0, at.to_left) + xlogy(q - 1.0, at.to_right)
        - xlogy(p + q - 1.0, boundary.width())
        - log_beta)
}

/// Log-density of the `i`-th uniform order statistic out of `n` on the
/// interval of `boundary`, counted from `a`.
pub fn orderstats_marginal_log(n: usize, i: usize, boundary: &BoundaryPair, x: f64) -> Result<f64> {
    dirichlet_marginal_log(1.0, n, i, boundary, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_boundary;
    use crate::family::DensityFamily;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn order_stats_examples() {
        let b = make_boundary(1.0, 3.0).unwrap();
        let f = orderstats_factors(3).unwrap();
        let v = f.log_joint(&b, &[1.5, 2.5]).unwrap();
        assert_abs_diff_eq!(v.exp(), 0.5, epsilon = 1e-14);

        let rev = make_boundary(3.0, 1.0).unwrap();
        let v = f.log_joint(&rev, &[2.5, 1.5]).unwrap();
        assert_abs_diff_eq!(v.exp(), 0.5, epsilon = 1e-14);

        assert_eq!(f.log_joint(&b, &[2.5, 1.5]).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(
            f.log_joint(&b, &[1.2, 1.5, 2.0, 2.5]),
            Err(Error::LevelExceeded {
                requested: 4,
                max: 3
            })
        ));
    }

    #[test]
    fn first_marginal_examples() {
        let b = BoundaryPair::limiting(0.0, 1.0).unwrap();
        let f = orderstats_factors(3).unwrap();
        // n (1-x)^{n-1} at n = 3, x = 0.5
        assert_abs_diff_eq!(
            f.log_first_marginal(3, &b, 0.5).unwrap().exp(),
            0.75,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            f.log_last_marginal(3, &b, 0.5).unwrap().exp(),
            0.75,
            epsilon = 1e-14
        );
        assert_eq!(f.log_first_marginal(3, &b, 1.5).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn dirichlet_examples() {
        let b = BoundaryPair::limiting(0.0, 1.0).unwrap();
        let f = dirichlet_factors(2.0, 2).unwrap();
        // Γ(6)/Γ(2)³ · 0.2 · 0.3 · 0.5 = 3.6
        let v = f.log_joint(&b, &[0.2, 0.5]).unwrap();
        assert_abs_diff_eq!(v.exp(), 3.6, epsilon = 1e-12);
        assert_abs_diff_eq!(
            dirichlet_joint_log(2.0, &b, &[0.2, 0.5]).unwrap(),
            v,
            epsilon = 1e-13
        );
        assert!(dirichlet_factors(0.0, 2).is_err());
        assert!(dirichlet_factors(-1.0, 2).is_err());
    }

    #[test]
    fn gapped_uses_the_same_path_as_dirichlet() {
        let b = make_boundary(1.0, 2.0).unwrap();
        let t = [1.2, 1.5, 1.9];
        let g = gapped_joint_log(3, &b, &t).unwrap();
        let d = dirichlet_factors(3.0, 3)
            .unwrap()
            .log_joint(&b, &t)
            .unwrap();
        assert_eq!(g, d);
    }

    #[test]
    fn empty_tuple_has_unit_density() {
        let b = make_boundary(1.0, 2.0).unwrap();
        assert_eq!(
            orderstats_factors(2).unwrap().log_joint(&b, &[]).unwrap(),
            0.0
        );
    }

    #[test]
    fn conditional_split_index_range() {
        let b = make_boundary(1.0, 2.0).unwrap();
        let f = orderstats_factors(3).unwrap();
        assert!(matches!(
            f.log_conditional_split(&b, &[1.2, 1.5], 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            f.log_conditional_split(&b, &[1.2, 1.5], 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    /// Stick-breaking tuple inside (a, b).
    fn tuple_in(b: &BoundaryPair, us: &[f64]) -> Vec<f64> {
        let mut prev = b.left();
        us.iter()
            .map(|u| {
                prev += u * (b.right() - prev);
                prev
            })
            .collect()
    }

    proptest! {
        #[test]
        fn left_right_and_direct_forms_agree(
            s in 0.3f64..4.0,
            a in 0.2f64..5.0,
            w in 0.1f64..3.0,
            flip in any::<bool>(),
            us in prop::collection::vec(0.02f64..0.98, 1..6),
        ) {
            let b = if flip { make_boundary(a + w, a).unwrap() } else { make_boundary(a, a + w).unwrap() };
            let t = tuple_in(&b, &us);
            prop_assume!(b.in_ordered_support(&t));
            let f = dirichlet_factors(s, 6).unwrap();
            let left = f.log_joint(&b, &t).unwrap();
            let right = f.log_joint_right(&b, &t).unwrap();
            let direct = dirichlet_joint_log(s, &b, &t).unwrap();
            let tol = 1e-9 * (1.0 + direct.abs());
            prop_assert!((left - direct).abs() < tol, "{left} vs {direct}");
            prop_assert!((right - direct).abs() < tol, "{right} vs {direct}");
        }

        #[test]
        fn symmetry_scale_and_shift(
            s in 0.3f64..4.0,
            a in 0.2f64..5.0,
            w in 0.1f64..3.0,
            gamma in 0.3f64..4.0,
            us in prop::collection::vec(0.02f64..0.98, 1..5),
        ) {
            let b = make_boundary(a, a + w).unwrap();
            let t = tuple_in(&b, &us);
            prop_assume!(b.in_ordered_support(&t));
            let f = dirichlet_factors(s, 5).unwrap();
            let base = f.log_joint(&b, &t).unwrap();
            let tol = 1e-9 * (1.0 + base.abs());

            let rev: Vec<f64> = t.iter().rev().cloned().collect();
            let sym = f.log_joint(&b.swapped(), &rev).unwrap();
            prop_assert!((sym - base).abs() < tol);

            let n = t.len() as f64;
            let sb = make_boundary(gamma * a, gamma * (a + w)).unwrap();
            let st: Vec<f64> = t.iter().map(|x| gamma * x).collect();
            prop_assume!(sb.in_ordered_support(&st));
            let scaled = f.log_joint(&sb, &st).unwrap();
            prop_assert!((base - n * gamma.ln() - scaled).abs() < tol);

            let hb = make_boundary(a + gamma, a + w + gamma).unwrap();
            let ht: Vec<f64> = t.iter().map(|x| x + gamma).collect();
            prop_assume!(hb.in_ordered_support(&ht));
            let shifted = f.log_joint(&hb, &ht).unwrap();
            prop_assert!((base - shifted).abs() < 1e-7 * (1.0 + base.abs()));
        }

        #[test]
        fn marginals_match_beta_laws(
            s in 0.3f64..4.0,
            n in 1usize..6,
            u in 0.01f64..0.99,
        ) {
            let b = make_boundary(1.0, 2.5).unwrap();
            let f = dirichlet_factors(s, 6).unwrap();
            let x = b.at_fraction(u);
            let first = f.log_first_marginal(n, &b, x).unwrap();
            let oracle = dirichlet_marginal_log(s, n, 1, &b, x).unwrap();
            prop_assert!((first - oracle).abs() < 1e-9 * (1.0 + oracle.abs()));
            let last = f.log_last_marginal(n, &b, x).unwrap();
            let oracle = dirichlet_marginal_log(s, n, n, &b, x).unwrap();
            prop_assert!((last - oracle).abs() < 1e-9 * (1.0 + oracle.abs()));
        }
    }
}
