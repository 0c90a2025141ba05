//! Numerical residual checks of the structural identities of density
//! families, plus Kolmogorov–Smirnov tests for samplers.
//!
//! Every check compares log-densities on a deterministic grid and reports
//! the largest absolute residual together with where it occurred.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::BoundaryPair;
use crate::error::{Error, Result};
use crate::family::DensityFamily;
use crate::quadrature::QuadratureSpec;
use crate::recursion::{f_first, GeneratingFactor};
use crate::transition::{marginal, numeric_support, MarginalFunction};

/// Largest number of grid tuples a single check will visit.
pub const MAX_GRID_TUPLES: usize = 1 << 20;

/// Interval-relative probe coordinates: `points_per_axis` fractions spaced
/// uniformly in logit between `u_min` and `u_max`. Tuples are built by
/// stick breaking, `θᵢ = θᵢ₋₁ + uᵢ (b - θᵢ₋₁)`, so they are always ordered
/// and never touch an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_axis: 8,
            u_min: 0.01,
            u_max: 0.99,
        }
    }
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

impl GridSpec {
    pub fn new(points_per_axis: usize) -> Self {
        Self {
            points_per_axis,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_axis < 2 {
            return Err(Error::InvalidParameter(
                "grid needs at least 2 points per axis".into(),
            ));
        }
        if !(self.u_min > 0.0 && self.u_min < self.u_max && self.u_max < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid fractions must satisfy 0 < u_min < u_max < 1, got ({}, {})",
                self.u_min, self.u_max
            )));
        }
        Ok(())
    }

    pub fn fractions(&self) -> Vec<f64> {
        let (l0, l1) = (logit(self.u_min), logit(self.u_max));
        let m = self.points_per_axis;
        (0..m)
            .map(|k| {
                let l = l0 + (l1 - l0) * k as f64 / (m - 1) as f64;
                1.0 / (1.0 + (-l).exp())
            })
            .collect()
    }

    /// All stick-broken `n`-tuples in `boundary`, `points_per_axis^n` of them.
    pub fn tuples(&self, boundary: &BoundaryPair, n: usize) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let m = self.points_per_axis;
        let count = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(m));
        let count = match count {
            Some(c) if c <= MAX_GRID_TUPLES => c,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "{m}^{n} grid tuples exceed the limit of {MAX_GRID_TUPLES}"
                )))
            }
        };
        let us = self.fractions();
        let b = boundary.right();
        Ok((0..count)
            .map(|mut idx| {
                let mut prev = boundary.left();
                (0..n)
                    .map(|_| {
                        let u = us[idx % m];
                        idx /= m;
                        prev += u * (b - prev);
                        prev
                    })
                    .collect()
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub max_abs_residual: f64,
    /// Probe at which the largest residual occurred.
    pub argmax: Vec<f64>,
    pub grid: GridSpec,
    pub tolerance: f64,
    pub evaluated: usize,
    pub pass: bool,
}

impl ResidualReport {
    fn from_residuals(
        name: String,
        grid: GridSpec,
        tolerance: f64,
        residuals: Vec<(f64, Vec<f64>)>,
    ) -> Self {
        let evaluated = residuals.len();
        let mut worst = 0.0;
        let mut argmax = Vec::new();
        for (r, at) in residuals {
            if r > worst || argmax.is_empty() {
                worst = r;
                argmax = at;
            }
        }
        Self {
            name,
            max_abs_residual: worst,
            argmax,
            grid,
            tolerance,
            evaluated,
            pass: worst < tolerance,
        }
    }
}

/// `|x - y|` for log-values, with two vanishing densities agreeing and NaN
/// counting as an infinite discrepancy.
pub fn log_residual(x: f64, y: f64) -> f64 {
    if x == y {
        return 0.0;
    }
    let d = (x - y).abs();
    if d.is_nan() {
        f64::INFINITY
    } else {
        d
    }
}

fn check_tolerance(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )))
    }
}

fn collect_residuals<T, F>(probes: &[T], eval: F) -> Result<Vec<(f64, Vec<f64>)>>
where
    T: Sync,
    F: Fn(&T) -> Result<(f64, Vec<f64>)> + Sync,
{
    probes.par_iter().map(&eval).collect()
}

/// Evaluates `m` at every distinct value once.
fn tabulate_marginal(
    m: &MarginalFunction,
    xs: impl Iterator<Item = f64>,
) -> Result<HashMap<u64, f64>> {
    let mut distinct: Vec<f64> = xs.collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let values: Vec<f64> = distinct
        .par_iter()
        .map(|&x| m.log_density(x))
        .collect::<Result<_>>()?;
    Ok(distinct.into_iter().map(f64::to_bits).zip(values).collect())
}

/// `log Λⁿ(θ) - log Λ^{n,j}(θⱼ) - log [Λ^{j-1}_{a,θⱼ} Λ^{n-j}_{θⱼ,b}]`
/// over the grid and all `j`.
pub fn check_two_sided_markov(
    family: &dyn DensityFamily,
    boundary: &BoundaryPair,
    n: usize,
    grid: &GridSpec,
    tol: f64,
    quad: &QuadratureSpec,
) -> Result<ResidualReport> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "two-sided Markov check needs n ≥ 2".into(),
        ));
    }
    check_tolerance(tol)?;
    family.check_level(n)?;
    let tuples = grid.tuples(boundary, n)?;
    let mut tables = Vec::with_capacity(n);
    for j in 1..=n {
        let m = marginal(family, n, j, *boundary, quad)?;
        tables.push(tabulate_marginal(&m, tuples.iter().map(|t| t[j - 1]))?);
    }
    let residuals = collect_residuals(&tuples, |t| {
        let joint = family.log_joint(boundary, t)?;
        let mut worst: f64 = 0.0;
        for j in 1..=n {
            let mj = tables[j - 1][&t[j - 1].to_bits()];
            let split = family.log_conditional_split(boundary, t, j)?;
            worst = worst.max(log_residual(joint, mj + split));
        }
        Ok((worst, t.clone()))
    })?;
    Ok(ResidualReport::from_residuals(
        format!("two-sided-markov n={n} {}", family.label()),
        *grid,
        tol,
        residuals,
    ))
}

/// `log Λⁿ_{a,b}(θ₁..θₙ) - log Λⁿ_{b,a}(θₙ..θ₁)` over the grid.
pub fn check_symmetry(
    family: &dyn DensityFamily,
    boundary: &BoundaryPair,
    n: usize,
    grid: &GridSpec,
    tol: f64,
) -> Result<ResidualReport> {
    check_tolerance(tol)?;
    family.check_level(n)?;
    let tuples = grid.tuples(boundary, n)?;
    let swapped = boundary.swapped();
    let residuals = collect_residuals(&tuples, |t| {
        let rev: Vec<f64> = t.iter().rev().copied().collect();
        let r = log_residual(
            family.log_joint(boundary, t)?,
            family.log_joint(&swapped, &rev)?,
        );
        Ok((r, t.clone()))
    })?;
    Ok(ResidualReport::from_residuals(
        format!("symmetry n={n} {}", family.label()),
        *grid,
        tol,
        residuals,
    ))
}

/// Compares `Λ^{n,1}_{a,b}(θ₁) / Λ^{n,n}_{a,b}(θₙ)` with
/// `Λ^{n-1,1}_{a,θₙ}(θ₁) / Λ^{n-1,n-1}_{θ₁,b}(θₙ)` over grid pairs.
pub fn check_separability(
    family: &dyn DensityFamily,
    boundary: &BoundaryPair,
    n: usize,
    grid: &GridSpec,
    tol: f64,
) -> Result<ResidualReport> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "separability check needs n ≥ 2".into(),
        ));
    }
    check_tolerance(tol)?;
    family.check_level(n)?;
    let pairs = grid.tuples(boundary, 2)?;
    let (a, b) = (boundary.left(), boundary.right());
    let residuals = collect_residuals(&pairs, |p| {
        let (t1, tn) = (p[0], p[1]);
        let lhs = family.log_first_marginal(n, boundary, t1)?
            - family.log_last_marginal(n, boundary, tn)?;
        let rhs = family.log_first_marginal(n - 1, &BoundaryPair::new(a, tn)?, t1)?
            - family.log_last_marginal(n - 1, &BoundaryPair::new(t1, b)?, tn)?;
        Ok((log_residual(lhs, rhs), p.clone()))
    })?;
    Ok(ResidualReport::from_residuals(
        format!("separability n={n} {}", family.label()),
        *grid,
        tol,
        residuals,
    ))
}

fn check_in_box(family: &dyn DensityFamily, lo: f64, hi: f64) -> Result<()> {
    if let Some((z1, z2)) = family.working_box() {
        let slack = 1e-12 * (z2 - z1);
        if lo < z1 - slack || hi > z2 + slack {
            return Err(Error::BoxExceeded { lo, hi, z1, z2 });
        }
    }
    Ok(())
}

/// `log Λⁿ_{a,b}(θ) - n log γ - log Λⁿ_{γa,γb}(γθ)` over the grid.
pub fn check_scale_invariance(
    family: &dyn DensityFamily,
    boundary: &BoundaryPair,
    n: usize,
    gamma: f64,
    grid: &GridSpec,
    tol: f64,
) -> Result<ResidualReport> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scale factor must be positive, got {gamma}"
        )));
    }
    check_tolerance(tol)?;
    family.check_level(n)?;
    let iv = boundary.interval();
    check_in_box(family, iv.lo, iv.hi)?;
    check_in_box(family, gamma * iv.lo, gamma * iv.hi)?;
    let scaled = BoundaryPair::limiting(gamma * boundary.left(), gamma * boundary.right())?;
    let tuples = grid.tuples(boundary, n)?;
    let residuals = collect_residuals(&tuples, |t| {
        let st: Vec<f64> = t.iter().map(|x| gamma * x).collect();
        let lhs = family.log_joint(boundary, t)?;
        let rhs = n as f64 * gamma.ln() + family.log_joint(&scaled, &st)?;
        Ok((log_residual(lhs, rhs), t.clone()))
    })?;
    Ok(ResidualReport::from_residuals(
        format!("scale-invariance n={n} gamma={gamma} {}", family.label()),
        *grid,
        tol,
        residuals,
    ))
}

/// `log Λⁿ_{a,b}(θ) - log Λⁿ_{a+γ,b+γ}(θ+γ)` over the grid.
pub fn check_shift_invariance(
    family: &dyn DensityFamily,
    boundary: &BoundaryPair,
    n: usize,
    gamma: f64,
    grid: &GridSpec,
    tol: f64,
) -> Result<ResidualReport> {
    let iv = boundary.interval();
    if !(gamma.is_finite() && gamma > -iv.lo) {
        return Err(Error::InvalidParameter(format!(
            "shift must exceed -{} to keep the boundaries positive, got {gamma}",
            iv.lo
        )));
    }
    check_tolerance(tol)?;
    family.check_level(n)?;
    check_in_box(family, iv.lo, iv.hi)?;
    check_in_box(family, iv.lo + gamma, iv.hi + gamma)?;
    let shifted = BoundaryPair::new(boundary.left() + gamma, boundary.right() + gamma)?;
    let tuples = grid.tuples(boundary, n)?;
    let residuals = collect_residuals(&tuples, |t| {
        let st: Vec<f64> = t.iter().map(|x| x + gamma).collect();
        let r = log_residual(
            family.log_joint(boundary, t)?,
            family.log_joint(&shifted, &st)?,
        );
        Ok((r, t.clone()))
    })?;
    Ok(ResidualReport::from_residuals(
        format!("shift-invariance n={n} gamma={gamma} {}", family.label()),
        *grid,
        tol,
        residuals,
    ))
}

/// `log Λ¹_{a,b}(x) - [log g(b,x) + log g(x,a) - log ∫ g(b,y) g(y,a) dy]`
/// for boundary pairs drawn from `points_per_axis` nodes spread over
/// `(z1, z2)`, in both orientations, and grid fractions `x`.
pub fn check_factorization(
    family: &dyn DensityFamily,
    g: &GeneratingFactor,
    z1: f64,
    z2: f64,
    grid: &GridSpec,
    tol: f64,
    quad: &QuadratureSpec,
) -> Result<ResidualReport> {
    check_tolerance(tol)?;
    grid.validate()?;
    family.check_level(1)?;
    if !(z1 >= 0.0 && z2 > z1 && z2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "invalid probe range ({z1}, {z2})"
        )));
    }
    let m = grid.points_per_axis;
    let nodes: Vec<f64> = (0..m)
        .map(|k| z1 + (z2 - z1) * (k as f64 + 0.5) / m as f64)
        .collect();
    let mut pairs = Vec::new();
    for &a in &nodes {
        for &b in &nodes {
            if a != b {
                pairs.push(BoundaryPair::new(a, b)?);
            }
        }
    }
    let norms: Vec<f64> = pairs
        .par_iter()
        .map(|bp| f_first(g, bp, quad))
        .collect::<Result<_>>()?;
    let us = grid.fractions();
    let probes: Vec<(usize, f64)> = (0..pairs.len())
        .flat_map(|i| us.iter().map(move |&u| (i, u)))
        .collect();
    let residuals = collect_residuals(&probes, |&(i, u)| {
        let bp = &pairs[i];
        let (a, b) = (bp.left(), bp.right());
        let x = bp.at_fraction(u);
        let lhs = family.log_first_marginal(1, bp, x)?;
        let rhs = norms[i] + g.log_eval(b, x)? + g.log_eval(x, a)?;
        Ok((log_residual(lhs, rhs), vec![a, b, x]))
    })?;
    Ok(ResidualReport::from_residuals(
        format!("factorization {} vs g={}", family.label(), g.label()),
        *grid,
        tol,
        residuals,
    ))
}

/// `log Λ^{n,j}_{a,b}(x) - log Λ^{n,n+1-j}_{b,a}(x)` for all `j` at the grid
/// fractions.
pub fn check_marginal_reversal(
    family: &dyn DensityFamily,
    boundary: &BoundaryPair,
    n: usize,
    grid: &GridSpec,
    tol: f64,
    quad: &QuadratureSpec,
) -> Result<ResidualReport> {
    check_tolerance(tol)?;
    grid.validate()?;
    family.check_level(n)?;
    let swapped = boundary.swapped();
    let xs: Vec<f64> = grid
        .fractions()
        .into_iter()
        .map(|u| boundary.at_fraction(u))
        .collect();
    let mut residuals = Vec::new();
    for j in 1..=n {
        let fwd = marginal(family, n, j, *boundary, quad)?;
        let rev = marginal(family, n, n + 1 - j, swapped, quad)?;
        let mut rs = collect_residuals(&xs, |&x| {
            Ok((
                log_residual(fwd.log_density(x)?, rev.log_density(x)?),
                vec![j as f64, x],
            ))
        })?;
        residuals.append(&mut rs);
    }
    Ok(ResidualReport::from_residuals(
        format!("marginal-reversal n={n} {}", family.label()),
        *grid,
        tol,
        residuals,
    ))
}

/// Distance between the numeric support of `Λ^{n,1}` on a `grid_size`
/// point grid and the closed interval between the boundaries. Passes when
/// both ends are within `max_cells` grid cells.
pub fn check_support(
    family: &dyn DensityFamily,
    boundary: &BoundaryPair,
    n: usize,
    grid_size: usize,
    threshold: f64,
    max_cells: usize,
) -> Result<ResidualReport> {
    family.check_level(n)?;
    let f = MarginalFunction::first(family, n, *boundary)?;
    let support = numeric_support(&f, threshold, grid_size)?;
    let iv = boundary.interval();
    let cell = iv.width() / (grid_size - 1) as f64;
    let tolerance = (max_cells as f64 + 0.5) * cell;
    let residuals = vec![
        ((support.lo - iv.lo).abs(), vec![support.lo]),
        ((iv.hi - support.hi).abs(), vec![support.hi]),
    ];
    let grid = GridSpec {
        points_per_axis: grid_size,
        ..GridSpec::default()
    };
    Ok(ResidualReport::from_residuals(
        format!("support n={n} {}", family.label()),
        grid,
        tolerance,
        residuals,
    ))
}

/// One-sample or two-sample Kolmogorov–Smirnov outcome at the 1% level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

/// Asymptotic 1% critical value of `√N · D`.
pub const KS_CRITICAL_1PCT: f64 = 1.63;

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("samples contain NaN".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup |F_N - cdf|` against `1.63 / √N`.
pub fn ks_test<F>(samples: &[f64], cdf: F) -> Result<KsResult>
where
    F: Fn(f64) -> f64,
{
    if samples.len() < 100 {
        return Err(Error::InvalidParameter(format!(
            "KS test needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    let xs = sorted(samples)?;
    let n = xs.len() as f64;
    let statistic = xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let c = cdf(x);
        d.max(c - i as f64 / n).max((i + 1) as f64 / n - c)
    });
    let critical = KS_CRITICAL_1PCT / n.sqrt();
    Ok(KsResult {
        statistic,
        critical,
        pass: statistic < critical,
    })
}

/// Two-sample statistic against `1.63 √((N+M)/(NM))`.
pub fn ks_two_sample(first: &[f64], second: &[f64]) -> Result<KsResult> {
    if first.len() < 100 || second.len() < 100 {
        return Err(Error::InvalidParameter(
            "two-sample KS test needs at least 100 samples on each side".into(),
        ));
    }
    let (x, y) = (sorted(first)?, sorted(second)?);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut statistic: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        statistic = statistic.max((i as f64 / n - j as f64 / m).abs());
    }
    let critical = KS_CRITICAL_1PCT * ((n + m) / (n * m)).sqrt();
    Ok(KsResult {
        statistic,
        critical,
        pass: statistic < critical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SitePoint;
    use crate::family::FactorFamily;
    use crate::recursion::RecursionConfig;
    use crate::sampling::{sample_family, RngHandle};

    fn unit() -> BoundaryPair {
        BoundaryPair::limiting(0.0, 1.0).unwrap()
    }

    #[test]
    fn grid_is_ordered_and_interior() {
        let g = GridSpec::default();
        let us = g.fractions();
        assert!((us[0] - 0.01).abs() < 1e-15 && (us[7] - 0.99).abs() < 1e-15);
        let b = BoundaryPair::new(3.0, 1.0).unwrap();
        let ts = g.tuples(&b, 3).unwrap();
        assert_eq!(ts.len(), 512);
        assert!(ts.iter().all(|t| b.in_ordered_support(t)));
        assert!(GridSpec::new(32).tuples(&b, 4).is_ok());
        assert!(GridSpec::new(32).tuples(&b, 5).is_err());
    }

    #[test]
    fn markov_closed_forms() {
        let q = QuadratureSpec::default();
        let os = FactorFamily::order_stats(3).unwrap();
        let r = check_two_sided_markov(&os, &unit(), 3, &GridSpec::default(), 1e-10, &q).unwrap();
        assert!(r.pass, "{r:?}");
        let d = FactorFamily::dirichlet(2.5, 3).unwrap();
        let b = BoundaryPair::new(1.0, 3.0).unwrap();
        let r = check_two_sided_markov(&d, &b, 3, &GridSpec::default(), 1e-8, &q).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(check_two_sided_markov(&d, &b, 1, &GridSpec::default(), 1e-8, &q).is_err());
    }

    #[test]
    fn markov_recursion_built() {
        let q = QuadratureSpec::default();
        let fam = FactorFamily::from_generating_factor(
            GeneratingFactor::exp_kernel(1.0).unwrap(),
            3,
            &q,
            RecursionConfig::new(0.5, 4.0).unwrap(),
        )
        .unwrap();
        let b = BoundaryPair::new(1.0, 3.0).unwrap();
        let r = check_two_sided_markov(&fam, &b, 3, &GridSpec::default(), 1e-5, &q).unwrap();
        assert!(r.pass, "{r:?}");
    }

    /// First marginal that depends on orientation: Beta(1, n) rescaled when
    /// `a < b`, Beta(2, n) rescaled when `a > b`.
    struct Lopsided;

    impl DensityFamily for Lopsided {
        fn max_level(&self) -> usize {
            4
        }

        fn log_first_marginal_at(&self, n: usize, b: &BoundaryPair, at: SitePoint) -> Result<f64> {
            if !at.inside(b) {
                return Ok(f64::NEG_INFINITY);
            }
            let w = b.width();
            let (u, v) = (at.to_left / w, at.to_right / w);
            let nf = n as f64;
            Ok(if b.left() < b.right() {
                nf.ln() + (nf - 1.0) * v.ln() - w.ln()
            } else {
                (nf * (nf + 1.0)).ln() + u.ln() + (nf - 1.0) * v.ln() - w.ln()
            })
        }

        fn label(&self) -> String {
            "lopsided".into()
        }
    }

    #[test]
    fn symmetry_examples() {
        let os = FactorFamily::order_stats(2).unwrap();
        let r = check_symmetry(&os, &unit(), 2, &GridSpec::default(), 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
        let r = check_symmetry(&Lopsided, &unit(), 2, &GridSpec::default(), 1e-5).unwrap();
        assert!(!r.pass && r.max_abs_residual > 0.1, "{r:?}");
    }

    #[test]
    fn separability_examples() {
        let d = FactorFamily::dirichlet(2.0, 2).unwrap();
        let b = BoundaryPair::new(1.0, 2.0).unwrap();
        assert!(
            check_separability(&d, &b, 2, &GridSpec::default(), 1e-8)
                .unwrap()
                .pass
        );
        let os = FactorFamily::order_stats(4).unwrap();
        assert!(
            check_separability(&os, &b, 4, &GridSpec::default(), 1e-10)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn invariance_examples() {
        let grid = GridSpec::default();
        let b = BoundaryPair::new(1.0, 2.0).unwrap();
        let d3 = FactorFamily::dirichlet(3.0, 2).unwrap();
        assert!(
            check_scale_invariance(&d3, &b, 2, 2.0, &grid, 1e-10)
                .unwrap()
                .pass
        );
        let d15 = FactorFamily::dirichlet(1.5, 2).unwrap();
        assert!(
            check_shift_invariance(&d15, &b, 2, 0.7, &grid, 1e-10)
                .unwrap()
                .pass
        );

        let q = QuadratureSpec::default();
        let cfg = RecursionConfig::new(0.5, 4.0).unwrap();
        let shift_only = FactorFamily::from_generating_factor(
            GeneratingFactor::shift_only(1.0, 0.0, "1").unwrap(),
            2,
            &q,
            cfg,
        )
        .unwrap();
        let r = check_scale_invariance(&shift_only, &b, 2, 2.0, &grid, 1e-5).unwrap();
        assert!(!r.pass && r.max_abs_residual > 1e-2, "{r:?}");
        let r = check_shift_invariance(&shift_only, &b, 2, 0.7, &grid, 1e-5).unwrap();
        assert!(r.pass, "{r:?}");

        let scale_only = FactorFamily::from_generating_factor(
            GeneratingFactor::scale_only(1.0, 1.0, "1").unwrap(),
            2,
            &q,
            cfg,
        )
        .unwrap();
        let r = check_shift_invariance(&scale_only, &b, 2, 0.7, &grid, 1e-5).unwrap();
        assert!(!r.pass && r.max_abs_residual > 1e-2, "{r:?}");
        let r = check_scale_invariance(&scale_only, &b, 2, 2.0, &grid, 1e-5).unwrap();
        assert!(r.pass, "{r:?}");

        assert!(matches!(
            check_scale_invariance(&scale_only, &b, 2, 3.0, &grid, 1e-5),
            Err(Error::BoxExceeded { .. })
        ));
    }

    #[test]
    fn distance_kernel_is_shift_invariant() {
        let q = QuadratureSpec::default();
        let fam = FactorFamily::from_generating_factor(
            GeneratingFactor::distance("exp(-r)").unwrap(),
            2,
            &q,
            RecursionConfig::new(0.5, 4.0).unwrap(),
        )
        .unwrap();
        let b = BoundaryPair::new(1.0, 2.0).unwrap();
        let r = check_shift_invariance(&fam, &b, 2, 0.7, &GridSpec::default(), 1e-5).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn factorization_examples() {
        let q = QuadratureSpec::default();
        let grid = GridSpec::new(6);
        let os = FactorFamily::order_stats(1).unwrap();
        let one = GeneratingFactor::expression("1").unwrap();
        assert!(
            check_factorization(&os, &one, 0.5, 4.0, &grid, 1e-10, &q)
                .unwrap()
                .pass
        );
        let d2 = FactorFamily::dirichlet(2.0, 1).unwrap();
        let r = check_factorization(
            &d2,
            &GeneratingFactor::power(2.0).unwrap(),
            0.5,
            4.0,
            &grid,
            1e-9,
            &q,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
        assert!(
            !check_factorization(&d2, &one, 0.5, 4.0, &grid, 1e-9, &q)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn marginal_reversal_closed_form() {
        let q = QuadratureSpec::default();
        let d = FactorFamily::dirichlet(0.7, 4).unwrap();
        let b = BoundaryPair::new(1.0, 3.0).unwrap();
        let r = check_marginal_reversal(&d, &b, 4, &GridSpec::default(), 1e-8, &q).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn support_matches_interval() {
        let d = FactorFamily::dirichlet(0.5, 3).unwrap();
        let b = BoundaryPair::new(1.0, 3.0).unwrap();
        let r = check_support(&d, &b, 3, 1024, 1e-300, 2).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn ks_examples() {
        let mut rng = RngHandle::seed(11);
        let u: Vec<f64> = (0..100_000).map(|_| rng.uniform()).collect();
        assert!(ks_test(&u, |x| x.clamp(0.0, 1.0)).unwrap().pass);
        let beta: Vec<f64> = (0..100_000)
            .map(|_| {
                let mut v = [rng.uniform(), rng.uniform(), rng.uniform()];
                v.sort_by(f64::total_cmp);
                v[1]
            })
            .collect();
        assert!(!ks_test(&beta, |x| x.clamp(0.0, 1.0)).unwrap().pass);
        assert!(ks_test(&u[..50], |x| x).is_err());

        let os = FactorFamily::order_stats(3).unwrap();
        let q = QuadratureSpec::default();
        let mut draws = Vec::new();
        for _ in 0..20_000 {
            draws.push(
                sample_family(&os, 3, &unit(), &mut rng, &q)
                    .unwrap()
                    .values()[0],
            );
        }
        assert!(ks_test(&draws, |x| 1.0 - (1.0 - x).powi(3)).unwrap().pass);
    }

    #[test]
    fn two_sample_ks() {
        let mut rng = RngHandle::seed(12);
        let a: Vec<f64> = (0..5000).map(|_| rng.uniform()).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.uniform()).collect();
        let c: Vec<f64> = (0..5000).map(|_| rng.uniform().sqrt()).collect();
        assert!(ks_two_sample(&a, &b).unwrap().pass);
        assert!(!ks_two_sample(&a, &c).unwrap().pass);
    }
}
