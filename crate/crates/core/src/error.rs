use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("boundary parameters must be strictly positive and finite, got ({left}, {right})")]
    NonPositiveBoundary { left: f64, right: f64 },

    #[error("boundary parameters coincide ({0}); the open interval is empty")]
    DegenerateInterval(f64),

    #[error("point outside the ordered support: {0}")]
    OutOfSupport(String),

    #[error("level {requested} exceeds the family's maximum level {max}")]
    LevelExceeded { requested: usize, max: usize },

    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("quadrature did not reach tolerance {rel_tol:e} within {levels} levels (last estimate change {last_change:e})")]
    QuadratureFailure {
        rel_tol: f64,
        levels: usize,
        last_change: f64,
    },

    #[error("integral diverges: {0}")]
    DivergentIntegral(String),

    #[error("inverse CDF failed: {0}")]
    InversionFailure(String),

    #[error("density is below the threshold everywhere on the grid")]
    EmptySupport,

    #[error("point ({lo}, {hi}) leaves the working box [{z1}, {z2}]")]
    BoxExceeded { lo: f64, hi: f64, z1: f64, z2: f64 },

    #[error("generating factor rejected: {0}")]
    InvalidFactor(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::QuadratureFailure { .. }
            | Error::DivergentIntegral(_)
            | Error::InversionFailure(_)
            | Error::EmptySupport => true,
            Error::AtLevel { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
