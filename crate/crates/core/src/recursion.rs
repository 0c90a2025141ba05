//! Families built from a symmetric generating factor `g` through the
//! normalization recursion
//!
//! ```text
//! f_1(a,b)     = (∫ g(b,x) g(x,a) dx)^{-1}
//! f_{n+1}(a,b) = (∫ f_n(b,x)^{-1} g(x,a) dx)^{-1}
//! ```
//!
//! over `I_{a,b}`. Each `f_n` is tabulated as a Chebyshev interpolant over a
//! declared working box `[z1, z2]²`, so building level `n + 1` costs one
//! quadrature per interpolation node instead of nested integrals.

use std::sync::Arc;

use statrs::function::gamma::ln_gamma;

use crate::chebyshev::ChebCache;
use crate::domain::BoundaryPair;
use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::family::{xlogy, FactorFamily, FactorSource, FamilyFactors, FamilyKind};
use crate::quadrature::{log_integrate, QuadratureSpec};

pub const DEFAULT_CHEB_DEGREE: usize = 64;

const SYMMETRY_PROBES: usize = 20;

#[derive(Debug, Clone)]
pub enum FactorKind {
    /// `|x - y|^{s-1} / Γ(s)`
    Power { s: f64 },
    /// `exp(-λ |x - y|)`
    Exp { rate: f64 },
    /// `Φ(|x - y|)` with `Φ` an expression in `r`.
    Distance { phi: Expr },
    /// `M^s · exp(u (M - 1)(1 - m/M)) · φ(m/M)` with `m`, `M` the smaller
    /// and larger argument and `φ` an expression in `r ∈ (0, 1]`.
    ScaleOnly { s: f64, u: f64, phi: Expr },
    /// `exp(v m) · exp(w m |x - y|) · φ(|x - y|)` with `m` the smaller
    /// argument and `φ` an expression in `r`.
    ShiftOnly { v: f64, w: f64, phi: Expr },
    /// Arbitrary symmetric expression in `x` and `y`.
    Expression { expr: Expr },
    /// Bilinear interpolation of `log g` on a grid.
    Tabulated {
        grid: Vec<f64>,
        log_values: Vec<f64>,
    },
}

/// A symmetric, positive generating factor `g(x, y)`.
#[derive(Debug, Clone)]
pub struct GeneratingFactor {
    kind: FactorKind,
}

fn finite_param(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite, got {v}"
        )))
    }
}

fn log_positive(v: f64, what: &str) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::InvalidFactor(format!("{what} is negative ({v})")));
    }
    Ok(v.ln())
}

impl GeneratingFactor {
    pub fn power(s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "power exponent s must be positive, got {s}"
            )));
        }
        Ok(Self {
            kind: FactorKind::Power { s },
        })
    }

    pub fn exp_kernel(rate: f64) -> Result<Self> {
        finite_param("rate", rate)?;
        Ok(Self {
            kind: FactorKind::Exp { rate },
        })
    }

    pub fn distance(phi: &str) -> Result<Self> {
        let phi = expr::parse_with_vars(phi, &[Var::R])?;
        Ok(Self {
            kind: FactorKind::Distance { phi },
        })
    }

    pub fn scale_only(s: f64, u: f64, phi: &str) -> Result<Self> {
        finite_param("s", s)?;
        finite_param("u", u)?;
        let phi = expr::parse_with_vars(phi, &[Var::R])?;
        Ok(Self {
            kind: FactorKind::ScaleOnly { s, u, phi },
        })
    }

    pub fn shift_only(v: f64, w: f64, phi: &str) -> Result<Self> {
        finite_param("v", v)?;
        finite_param("w", w)?;
        let phi = expr::parse_with_vars(phi, &[Var::R])?;
        Ok(Self {
            kind: FactorKind::ShiftOnly { v, w, phi },
        })
    }

    /// Parses `g(x, y)`; rejects expressions that fail the probe-grid
    /// symmetry test.
    pub fn expression(src: &str) -> Result<Self> {
        let expr = expr::parse_with_vars(src, &[Var::X, Var::Y])?;
        if !expr::check_symmetry(&expr, SYMMETRY_PROBES) {
            return Err(Error::InvalidFactor(format!(
                "`{src}` is not symmetric in x and y"
            )));
        }
        Ok(Self {
            kind: FactorKind::Expression { expr },
        })
    }

    /// Tabulated factor: `values[i][j] = g(grid[i], grid[j])`, strictly
    /// positive off the diagonal, symmetric.
    pub fn tabulated(grid: Vec<f64>, values: &[Vec<f64>]) -> Result<Self> {
        let m = grid.len();
        if m < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidFactor(
                "tabulation grid must be strictly increasing with at least two nodes".into(),
            ));
        }
        if values.len() != m || values.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidFactor(
                "tabulated values must be a square grid".into(),
            ));
        }
        let mut log_values = Vec::with_capacity(m * m);
        for (i, row) in values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let t = values[j][i];
                if (v - t).abs() > 1e-12 * v.abs().max(t.abs()) {
                    return Err(Error::InvalidFactor(format!(
                        "tabulated values are not symmetric at ({i}, {j})"
                    )));
                }
                log_values.push(log_positive(v, "tabulated value")?);
            }
        }
        Ok(Self {
            kind: FactorKind::Tabulated { grid, log_values },
        })
    }

    pub fn kind(&self) -> &FactorKind {
        &self.kind
    }

    pub fn label(&self) -> String {
        match &self.kind {
            FactorKind::Power { s } => format!("power(s={s})"),
            FactorKind::Exp { rate } => format!("exp-kernel(rate={rate})"),
            FactorKind::Distance { phi } => format!("distance({phi})"),
            FactorKind::ScaleOnly { s, u, phi } => format!("scale-only(s={s}, u={u}, {phi})"),
            FactorKind::ShiftOnly { v, w, phi } => format!("shift-only(v={v}, w={w}, {phi})"),
            FactorKind::Expression { expr } => format!("custom-g({expr})"),
            FactorKind::Tabulated { grid, .. } => format!("tabulated({} nodes)", grid.len()),
        }
    }

    pub fn log_eval(&self, x: f64, y: f64) -> Result<f64> {
        self.log_eval_dist(x, y, (x - y).abs())
    }

    /// `log g(x, y)` with `dist = |x - y|` supplied exactly by the caller.
    pub fn log_eval_dist(&self, x: f64, y: f64, dist: f64) -> Result<f64> {
        match &self.kind {
            FactorKind::Power { s } => Ok(xlogy(s - 1.0, dist) - ln_gamma(*s)),
            FactorKind::Exp { rate } => Ok(-rate * dist),
            FactorKind::Distance { phi } => log_positive(phi.eval_r(dist)?, "Φ"),
            FactorKind::ScaleOnly { s, u, phi } => {
                let big = x.max(y);
                if !(big > 0.0) {
                    return Err(Error::InvalidFactor(format!(
                        "scale-only factor needs a positive argument, got ({x}, {y})"
                    )));
                }
                let gap = dist / big;
                let ratio = if gap < 0.5 { 1.0 - gap } else { x.min(y) / big };
                Ok(s * big.ln() + u * (big - 1.0) * gap + log_positive(phi.eval_r(ratio)?, "φ")?)
            }
            FactorKind::ShiftOnly { v, w, phi } => {
                let small = x.min(y);
                Ok(v * small + w * small * dist + log_positive(phi.eval_r(dist)?, "φ")?)
            }
            FactorKind::Expression { expr } => log_positive(expr.eval_xy(x, y)?, "g"),
            FactorKind::Tabulated { grid, log_values } => {
                let m = grid.len();
                let cell = |z: f64| -> Result<(usize, f64)> {
                    if !(z >= grid[0] && z <= grid[m - 1]) {
                        return Err(Error::BoxExceeded {
                            lo: x.min(y),
                            hi: x.max(y),
                            z1: grid[0],
                            z2: grid[m - 1],
                        });
                    }
                    let i = grid.partition_point(|&g| g <= z).clamp(1, m - 1) - 1;
                    Ok((i, (z - grid[i]) / (grid[i + 1] - grid[i])))
                };
                let (i, p) = cell(x)?;
                let (j, q) = cell(y)?;
                let at = |r: usize, c: usize| log_values[r * m + c];
                Ok((1.0 - p) * ((1.0 - q) * at(i, j) + q * at(i, j + 1))
                    + p * ((1.0 - q) * at(i + 1, j) + q * at(i + 1, j + 1)))
            }
        }
    }

    /// Exponent `σ` of the diagonal behaviour `g(x, y) ~ |x - y|^σ`.
    ///
    /// Known exactly for power and exponential kernels; otherwise estimated
    /// from two small offsets at the centre of the box and snapped to a
    /// nearby multiple of 1/24.
    pub fn diagonal_exponent(&self, z1: f64, z2: f64) -> Result<f64> {
        match &self.kind {
            FactorKind::Power { s } => return Ok(s - 1.0),
            FactorKind::Exp { .. } => return Ok(0.0),
            _ => {}
        }
        let w = z2 - z1;
        let x0 = z1 + 0.5 * w;
        let (d1, d2) = (1e-8 * w, 1e-6 * w);
        let l1 = self.log_eval_dist(x0, x0 + d1, d1)?;
        let l2 = self.log_eval_dist(x0, x0 + d2, d2)?;
        let sigma = (l1 - l2) / (d1.ln() - d2.ln());
        if !sigma.is_finite() {
            return Err(Error::InvalidFactor(format!(
                "cannot determine the diagonal behaviour of {}",
                self.label()
            )));
        }
        let snapped = (sigma * 24.0).round() / 24.0;
        Ok(if (sigma - snapped).abs() < 1e-4 {
            snapped
        } else {
            sigma
        })
    }

    /// Symmetry and strict positivity on a probe grid inside the box, and
    /// a finite level-one normalization.
    pub fn validate(&self, z1: f64, z2: f64, quad: &QuadratureSpec) -> Result<()> {
        let pts: Vec<f64> = (0..SYMMETRY_PROBES)
            .map(|i| z1 + (z2 - z1) * (i as f64 + 0.5) / SYMMETRY_PROBES as f64)
            .collect();
        for (i, &x) in pts.iter().enumerate() {
            for &y in &pts[i + 1..] {
                let gxy = self.log_eval(x, y)?;
                let gyx = self.log_eval(y, x)?;
                if gxy == f64::NEG_INFINITY || gyx == f64::NEG_INFINITY {
                    return Err(Error::InvalidFactor(format!(
                        "{} vanishes at ({x}, {y}); full support is required",
                        self.label()
                    )));
                }
                if !((gxy - gyx).abs() < 1e-12 * (1.0 + gxy.abs())) {
                    return Err(Error::InvalidFactor(format!(
                        "{} is not symmetric at ({x}, {y})",
                        self.label()
                    )));
                }
            }
        }
        let mid = z1 + 0.5 * (z2 - z1);
        for (a, b) in [(z1, z2), (z1, mid), (mid, z2)] {
            let v = log_norm(a, b, b - a, quad, |x, ta, tb| {
                Ok(self.log_eval_dist(b, x, tb)? + self.log_eval_dist(x, a, ta)?)
            })
            .map_err(|e| match e {
                Error::DivergentIntegral(_) => {
                    Error::InvalidFactor(format!("g(b,·)g(·,a) not integrable: {e}"))
                }
                other => other,
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidFactor(format!(
                    "level-one normalization is not finite on ({a}, {b})"
                )));
            }
        }
        Ok(())
    }
}

/// `-log ∫_{I_{a,b}} exp(integrand(x, |x-a|, |b-x|)) dx`, with `dist = |a-b|`.
fn log_norm<F>(a: f64, b: f64, dist: f64, quad: &QuadratureSpec, mut integrand: F) -> Result<f64>
where
    F: FnMut(f64, f64, f64) -> Result<f64>,
{
    if !(dist > 0.0) {
        return Err(Error::DegenerateInterval(a));
    }
    let sign = if b > a { 1.0 } else { -1.0 };
    // Integrate over the offset from `a` so that tiny blocks keep their width.
    let v = log_integrate(0.0, dist, quad, |p| {
        integrand(a + sign * p.from_lo, p.from_lo, p.from_hi)
    })?;
    if v == f64::NEG_INFINITY {
        return Err(Error::InvalidFactor(format!(
            "normalization integral vanishes on ({a}, {b})"
        )));
    }
    Ok(-v)
}

/// One recursion step: `log f_{n+1}(a, b)` from evaluators of `log f_n` and
/// `log h₁`, each called as `(first, second, |first - second|)`.
pub fn f_next<F, H>(
    log_f_n: F,
    log_h1: H,
    boundary: &BoundaryPair,
    quad: &QuadratureSpec,
) -> Result<f64>
where
    F: Fn(f64, f64, f64) -> Result<f64>,
    H: Fn(f64, f64, f64) -> Result<f64>,
{
    let (a, b) = (boundary.left(), boundary.right());
    log_norm(a, b, boundary.width(), quad, |x, ta, tb| {
        Ok(-log_f_n(b, x, tb)? + log_h1(x, a, ta)?)
    })
}

/// Level-one normalization `log f_1(a, b)` of `g`.
pub fn f_first(
    g: &GeneratingFactor,
    boundary: &BoundaryPair,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let (a, b) = (boundary.left(), boundary.right());
    log_norm(a, b, boundary.width(), quad, |x, ta, tb| {
        Ok(g.log_eval_dist(b, x, tb)? + g.log_eval_dist(x, a, ta)?)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionConfig {
    pub z1: f64,
    pub z2: f64,
    pub degree: usize,
    /// When false, every `f_n` is recomputed by nested quadrature.
    pub cached: bool,
}

impl RecursionConfig {
    pub fn new(z1: f64, z2: f64) -> Result<Self> {
        if !(z1 >= 0.0 && z2 > z1 && z2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "working box must satisfy 0 <= z1 < z2, got [{z1}, {z2}]"
            )));
        }
        Ok(Self {
            z1,
            z2,
            degree: DEFAULT_CHEB_DEGREE,
            cached: true,
        })
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree.max(1);
        self
    }

    pub fn uncached(mut self) -> Self {
        self.cached = false;
        self
    }
}

/// Factors produced by the recursion.
#[derive(Debug)]
pub struct RecursionFactors {
    g: GeneratingFactor,
    config: RecursionConfig,
    quad: QuadratureSpec,
    max_level: usize,
    sigma: f64,
    levels: Vec<ChebCache>,
}

impl RecursionFactors {
    pub fn generating_factor(&self) -> &GeneratingFactor {
        &self.g
    }

    pub fn config(&self) -> &RecursionConfig {
        &self.config
    }

    pub fn diagonal_exponent(&self) -> f64 {
        self.sigma
    }

    pub fn caches(&self) -> &[ChebCache] {
        &self.levels
    }

    fn check_box(&self, a: f64, b: f64) -> Result<()> {
        let (z1, z2) = (self.config.z1, self.config.z2);
        let slack = 1e-12 * (z2 - z1);
        let (lo, hi) = (a.min(b), a.max(b));
        if lo < z1 - slack || hi > z2 + slack {
            return Err(Error::BoxExceeded { lo, hi, z1, z2 });
        }
        Ok(())
    }

    fn log_f_direct(&self, n: usize, a: f64, b: f64, dist: f64) -> Result<f64> {
        if n == 1 {
            return log_norm(a, b, dist, &self.quad, |x, ta, tb| {
                Ok(self.g.log_eval_dist(b, x, tb)? + self.g.log_eval_dist(x, a, ta)?)
            });
        }
        log_norm(a, b, dist, &self.quad, |x, ta, tb| {
            Ok(-self.log_f_direct(n - 1, b, x, tb)? + self.g.log_eval_dist(x, a, ta)?)
        })
    }
}

impl FactorSource for RecursionFactors {
    fn max_level(&self) -> usize {
        self.max_level
    }

    fn log_f(&self, n: usize, a: f64, b: f64, dist: f64) -> Result<f64> {
        if n == 0 || n > self.max_level {
            return Err(Error::LevelExceeded {
                requested: n,
                max: self.max_level,
            });
        }
        self.check_box(a, b)?;
        if self.config.cached {
            self.levels[n - 1].log_value(a.min(b), dist)
        } else {
            self.log_f_direct(n, a, b, dist)
        }
    }

    fn log_g(&self, x: f64, y: f64, dist: f64) -> Result<f64> {
        self.g.log_eval_dist(x, y, dist)
    }

    fn working_box(&self) -> Option<(f64, f64)> {
        Some((self.config.z1, self.config.z2))
    }

    fn label(&self) -> String {
        self.g.label()
    }
}

/// Runs the recursion up to level `max_level` over the configured box.
pub fn build_recursion(
    g: GeneratingFactor,
    max_level: usize,
    quad: &QuadratureSpec,
    config: RecursionConfig,
) -> Result<RecursionFactors> {
    quad.validate()?;
    if max_level == 0 {
        return Err(Error::InvalidParameter(
            "max level must be at least 1".into(),
        ));
    }
    let (z1, z2) = (config.z1, config.z2);
    g.validate(z1, z2, quad)?;
    let sigma = g.diagonal_exponent(z1, z2)?;
    let mut built = RecursionFactors {
        g,
        config,
        quad: *quad,
        max_level,
        sigma,
        levels: Vec::new(),
    };
    if !config.cached {
        return Ok(built);
    }
    let chop = 0.05 * quad.rel_tol;
    for n in 1..=max_level {
        let p = n as f64 + sigma * (n + 1) as f64;
        let cache = {
            let b = &built;
            let prev = b.levels.last();
            ChebCache::fit(z1, z2, config.degree, p, chop, |lo, hi, d| match prev {
                None => log_norm(lo, hi, d, &b.quad, |x, ta, tb| {
                    Ok(b.g.log_eval_dist(hi, x, tb)? + b.g.log_eval_dist(x, lo, ta)?)
                }),
                Some(c) => log_norm(lo, hi, d, &b.quad, |x, ta, tb| {
                    Ok(-c.log_value(x.min(hi), tb)? + b.g.log_eval_dist(x, lo, ta)?)
                }),
            })
        }
        .map_err(|e| Error::AtLevel {
            level: n,
            source: Box::new(e),
        })?;
        built.levels.push(cache);
    }
    Ok(built)
}

/// Recursion-built factors of `g`, as a [`FamilyFactors`].
pub fn build_factors(
    g: GeneratingFactor,
    max_level: usize,
    quad: &QuadratureSpec,
    config: RecursionConfig,
) -> Result<FamilyFactors> {
    Ok(FamilyFactors::new(Arc::new(build_recursion(
        g, max_level, quad, config,
    )?)))
}

impl FactorFamily {
    pub fn from_generating_factor(
        g: GeneratingFactor,
        max_level: usize,
        quad: &QuadratureSpec,
        config: RecursionConfig,
    ) -> Result<Self> {
        let label = g.label();
        Ok(Self::new(
            FamilyKind::Recursion { label },
            build_factors(g, max_level, quad, config)?,
        ))
    }
}
