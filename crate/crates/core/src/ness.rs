//! Steady states written as mixtures of product measures:
//! draw a hidden tuple `θ ~ Λⁿ_{θ_L,θ_R}`, then independent `Xᵢ ~ ν_{θᵢ}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::BoundaryPair;
use crate::error::{Error, Result};
use crate::family::{DensityFamily, FactorFamily};
use crate::quadrature::QuadratureSpec;
use crate::sampling::{par_samples, sample_family, RngHandle};

/// Quantile functions of a one-parameter law tabulated on a grid of
/// parameter values. Row `k` holds quantiles at equally spaced
/// probabilities `0, 1/(m-1), …, 1` for parameter `thetas[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantileTable")]
pub struct QuantileTable {
    thetas: Vec<f64>,
    quantiles: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawQuantileTable {
    thetas: Vec<f64>,
    quantiles: Vec<Vec<f64>>,
}

impl TryFrom<RawQuantileTable> for QuantileTable {
    type Error = Error;

    fn try_from(raw: RawQuantileTable) -> Result<Self> {
        Self::new(raw.thetas, raw.quantiles)
    }
}

impl QuantileTable {
    pub fn new(thetas: Vec<f64>, quantiles: Vec<Vec<f64>>) -> Result<Self> {
        if thetas.is_empty() || thetas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "quantile table needs strictly increasing parameter nodes".into(),
            ));
        }
        if quantiles.len() != thetas.len() {
            return Err(Error::InvalidParameter(
                "one quantile row per parameter node".into(),
            ));
        }
        let m = quantiles[0].len();
        if m < 2
            || quantiles
                .iter()
                .any(|row| row.len() != m || row.windows(2).any(|w| !(w[1] >= w[0])))
        {
            return Err(Error::InvalidParameter(
                "quantile rows must share a length of at least 2 and be non-decreasing".into(),
            ));
        }
        Ok(Self { thetas, quantiles })
    }

    fn row_quantile(row: &[f64], u: f64) -> f64 {
        let pos = u * (row.len() - 1) as f64;
        let j = (pos.floor() as usize).min(row.len() - 2);
        let t = pos - j as f64;
        row[j] + t * (row[j + 1] - row[j])
    }

    pub fn quantile(&self, theta: f64, u: f64) -> Result<f64> {
        let (first, last) = (self.thetas[0], self.thetas[self.thetas.len() - 1]);
        if !(theta >= first && theta <= last) {
            return Err(Error::OutOfSupport(format!(
                "parameter {theta} outside the table range [{first}, {last}]"
            )));
        }
        if self.thetas.len() == 1 {
            return Ok(Self::row_quantile(&self.quantiles[0], u));
        }
        let k = self
            .thetas
            .partition_point(|&t| t <= theta)
            .clamp(1, self.thetas.len() - 1)
            - 1;
        let t = (theta - self.thetas[k]) / (self.thetas[k + 1] - self.thetas[k]);
        let lo = Self::row_quantile(&self.quantiles[k], u);
        let hi = Self::row_quantile(&self.quantiles[k + 1], u);
        Ok(lo + t * (hi - lo))
    }
}

/// Per-site law `ν_θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumMarginal {
    /// Exponential with mean `θ`.
    Exponential,
    /// Point mass at `θ`.
    Dirac,
    InverseCdfTable(QuantileTable),
}

impl EquilibriumMarginal {
    pub fn sample(&self, theta: f64, rng: &mut RngHandle) -> Result<f64> {
        match self {
            EquilibriumMarginal::Exponential => Ok(-theta * rng.uniform().ln()),
            EquilibriumMarginal::Dirac => Ok(theta),
            EquilibriumMarginal::InverseCdfTable(t) => t.quantile(theta, rng.uniform()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixtureSpec {
    family: Arc<FactorFamily>,
    left: f64,
    right: f64,
    marginal: EquilibriumMarginal,
    n: usize,
    quad: QuadratureSpec,
}

impl MixtureSpec {
    /// Equal boundaries are allowed and give the equilibrium product of
    /// `ν_θ`; otherwise the boundaries must form a valid (possibly limiting)
    /// pair.
    pub fn new(
        family: Arc<FactorFamily>,
        left: f64,
        right: f64,
        marginal: EquilibriumMarginal,
        n: usize,
        quad: QuadratureSpec,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "site count must be at least 1".into(),
            ));
        }
        family.check_level(n)?;
        if left == right {
            if !(left > 0.0 && left.is_finite()) {
                return Err(Error::NonPositiveBoundary { left, right });
            }
        } else {
            BoundaryPair::limiting(left, right)?;
        }
        Ok(Self {
            family,
            left,
            right,
            marginal,
            n,
            quad,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_equilibrium(&self) -> bool {
        self.left == self.right
    }

    /// Hidden parameters of one configuration.
    pub fn sample_hidden(&self, rng: &mut RngHandle) -> Result<Vec<f64>> {
        if self.is_equilibrium() {
            return Ok(vec![self.left; self.n]);
        }
        let b = BoundaryPair::limiting(self.left, self.right)?;
        Ok(sample_family(&self.family, self.n, &b, rng, &self.quad)?.into_inner())
    }
}

/// One configuration `(X₁, …, Xₙ)` of the mixture.
pub fn sample_ness(spec: &MixtureSpec, rng: &mut RngHandle) -> Result<Vec<f64>> {
    let hidden = spec.sample_hidden(rng)?;
    hidden
        .into_iter()
        .map(|theta| spec.marginal.sample(theta, rng))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub means: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    pub samples: usize,
}

fn draw_configs(spec: &MixtureSpec, count: usize, rng: &mut RngHandle) -> Result<Vec<Vec<f64>>> {
    par_samples(rng, count, |r| sample_ness(spec, r))
}

fn column_means(configs: &[Vec<f64>], n: usize) -> Vec<f64> {
    let count = configs.len() as f64;
    (0..n)
        .map(|i| configs.iter().map(|c| c[i]).sum::<f64>() / count)
        .collect()
}

/// Per-site Monte Carlo means with standard errors.
pub fn estimate_profile(
    spec: &MixtureSpec,
    n_samples: usize,
    rng: &mut RngHandle,
) -> Result<Profile> {
    if n_samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "profile estimation needs at least 100 samples, got {n_samples}"
        )));
    }
    let configs = draw_configs(spec, n_samples, rng)?;
    let means = column_means(&configs, spec.n);
    let count = n_samples as f64;
    let std_errors = (0..spec.n)
        .map(|i| {
            let var = configs
                .iter()
                .map(|c| (c[i] - means[i]).powi(2))
                .sum::<f64>()
                / (count - 1.0);
            (var / count).sqrt()
        })
        .collect();
    Ok(Profile {
        means,
        std_errors,
        samples: n_samples,
    })
}

/// Sample covariance matrix. The standard error of entry `(i, j)` is that
/// of the mean of the centred products.
pub fn estimate_covariance(
    spec: &MixtureSpec,
    n_samples: usize,
    rng: &mut RngHandle,
) -> Result<CovarianceEstimate> {
    if n_samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "covariance estimation needs at least 1000 samples, got {n_samples}"
        )));
    }
    let configs = draw_configs(spec, n_samples, rng)?;
    let n = spec.n;
    let means = column_means(&configs, n);
    let count = n_samples as f64;
    let mut covariance = vec![vec![0.0; n]; n];
    let mut std_errors = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let prods: Vec<f64> = configs
                .iter()
                .map(|c| (c[i] - means[i]) * (c[j] - means[j]))
                .collect();
            let c = prods.iter().sum::<f64>() / (count - 1.0);
            let m = prods.iter().sum::<f64>() / count;
            let var = prods.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (count - 1.0);
            let se = (var / count).sqrt();
            covariance[i][j] = c;
            covariance[j][i] = c;
            std_errors[i][j] = se;
            std_errors[j][i] = se;
        }
    }
    Ok(CovarianceEstimate {
        means,
        covariance,
        std_errors,
        samples: n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: FactorFamily, l: f64, r: f64, m: EquilibriumMarginal, n: usize) -> MixtureSpec {
        MixtureSpec::new(Arc::new(family), l, r, m, n, QuadratureSpec::default()).unwrap()
    }

    #[test]
    fn exponential_profile_is_linear() {
        let s = spec(
            FactorFamily::order_stats(3).unwrap(),
            1.0,
            3.0,
            EquilibriumMarginal::Exponential,
            3,
        );
        let p = estimate_profile(&s, 200_000, &mut RngHandle::seed(1)).unwrap();
        for (i, expect) in [1.5, 2.0, 2.5].iter().enumerate() {
            assert!((p.means[i] - expect).abs() < 3.0 * p.std_errors[i], "{p:?}");
        }
    }

    #[test]
    fn single_site_mean() {
        let s = spec(
            FactorFamily::order_stats(1).unwrap(),
            1.0,
            3.0,
            EquilibriumMarginal::Exponential,
            1,
        );
        let p = estimate_profile(&s, 100_000, &mut RngHandle::seed(2)).unwrap();
        assert!((p.means[0] - 2.0).abs() < 3.0 * p.std_errors[0]);
    }

    #[test]
    fn dirac_marginals_return_hidden_tuple() {
        let s = spec(
            FactorFamily::dirichlet(2.0, 2).unwrap(),
            1.0,
            2.0,
            EquilibriumMarginal::Dirac,
            2,
        );
        let mut a = RngHandle::seed(3);
        let mut b = RngHandle::seed(3);
        for _ in 0..100 {
            assert_eq!(
                sample_ness(&s, &mut a).unwrap(),
                s.sample_hidden(&mut b).unwrap()
            );
        }
        let s = spec(
            FactorFamily::dirichlet(2.0, 2).unwrap(),
            0.0,
            1.0,
            EquilibriumMarginal::Dirac,
            2,
        );
        let p = estimate_profile(&s, 100_000, &mut RngHandle::seed(4)).unwrap();
        for (i, expect) in [1.0 / 3.0, 2.0 / 3.0].iter().enumerate() {
            assert!((p.means[i] - expect).abs() < 3.0 * p.std_errors[i]);
        }
    }

    #[test]
    fn equilibrium_shortcut() {
        let s = spec(
            FactorFamily::order_stats(3).unwrap(),
            2.0,
            2.0,
            EquilibriumMarginal::Exponential,
            3,
        );
        assert!(s.is_equilibrium());
        let c = estimate_covariance(&s, 100_000, &mut RngHandle::seed(5)).unwrap();
        for i in 0..3 {
            assert!((c.means[i] - 2.0).abs() < 3.0 * (c.covariance[i][i] / 1e5).sqrt());
            for j in 0..3 {
                if i != j {
                    assert!(c.covariance[i][j].abs() < 3.0 * c.std_errors[i][j]);
                }
            }
        }
    }

    #[test]
    fn order_statistics_covariance() {
        let s = spec(
            FactorFamily::order_stats(3).unwrap(),
            0.0,
            1.0,
            EquilibriumMarginal::Dirac,
            3,
        );
        let c = estimate_covariance(&s, 200_000, &mut RngHandle::seed(6)).unwrap();
        assert!(
            (c.covariance[0][2] - 0.0125).abs() < 3.0 * c.std_errors[0][2],
            "{c:?}"
        );
        for i in 0..3 {
            for j in 0..3 {
                assert!(c.covariance[i][j] >= -3.0 * c.std_errors[i][j]);
            }
        }
    }

    #[test]
    fn total_variance_with_exponential_marginals() {
        // θ₁ ~ Beta(1, 2): E θ₁ = 1/3, E θ₁² = 1/6; Var X₁ = 2 E θ₁² - (E θ₁)².
        let s = spec(
            FactorFamily::order_stats(2).unwrap(),
            0.0,
            1.0,
            EquilibriumMarginal::Exponential,
            2,
        );
        let c = estimate_covariance(&s, 200_000, &mut RngHandle::seed(7)).unwrap();
        let expect = 2.0 / 6.0 - 1.0 / 9.0;
        assert!((c.covariance[0][0] - expect).abs() < 3.0 * c.std_errors[0][0]);
    }

    #[test]
    fn quantile_table_interpolates() {
        // Uniform(0, θ) laws at θ = 1 and θ = 3.
        let t = QuantileTable::new(vec![1.0, 3.0], vec![vec![0.0, 1.0], vec![0.0, 3.0]]).unwrap();
        assert!((t.quantile(2.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(t.quantile(4.0, 0.5).is_err());
        assert!(QuantileTable::new(vec![1.0], vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn spec_validation() {
        let fam = Arc::new(FactorFamily::order_stats(2).unwrap());
        let q = QuadratureSpec::default();
        assert!(MixtureSpec::new(fam.clone(), 1.0, 2.0, EquilibriumMarginal::Dirac, 3, q).is_err());
        assert!(MixtureSpec::new(fam.clone(), 0.0, 0.0, EquilibriumMarginal::Dirac, 2, q).is_err());
        assert!(MixtureSpec::new(fam, -1.0, 2.0, EquilibriumMarginal::Dirac, 2, q).is_err());
    }
}
