//! Ordered mixture densities `Λⁿ_{a,b}` of hidden parameters and the
//! steady states they generate.
//!
//! Families come either in closed form (ordered Dirichlet, order
//! statistics) or from a symmetric generating factor `g` through the
//! normalization recursion. All densities are handled in log form.

pub mod chebyshev;
pub mod closed_forms;
pub mod domain;
pub mod error;
pub mod expr;
pub mod family;
pub mod ness;
pub mod quadrature;
pub mod recursion;
pub mod sampling;
pub mod transition;
pub mod verification;

pub use domain::{BoundaryPair, Interval, OrderedTuple, Orientation, SitePoint};
pub use error::{Error, Result};
pub use family::{DensityFamily, FactorFamily, FactorSource, FamilyFactors, FamilyKind};
pub use ness::{EquilibriumMarginal, MixtureSpec, QuantileTable};
pub use quadrature::QuadratureSpec;
pub use recursion::{GeneratingFactor, RecursionConfig};
pub use sampling::RngHandle;
pub use verification::{GridSpec, KsResult, ResidualReport};
