use alloc::string::String;

/// Errors raised while validating models or running the solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("Q is not a generator: {0}")]
    NotAGenerator(String),
    #[error("the phase process is not irreducible")]
    NotIrreducible,
    #[error("phase {0} has a non-positive variance")]
    ZeroVariance(usize),
    #[error("mean drift {0:e} is numerically zero")]
    ZeroMeanDrift(f64),
    #[error("buffer height must be positive and finite, got {0}")]
    BadBuffer(f64),
    #[error("eps = {eps} is not below the admissible bound {bound}")]
    EpsTooLarge { eps: f64, bound: f64 },
    #[error("invalid fluid rates: {0}")]
    BadRates(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("Riccati iteration stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invariant subspace basis is numerically singular")]
    SubspaceIllConditioned,
    #[error("row sums are neither all zero nor all one")]
    NotBalanced,
    #[error("singular linear system: {0}")]
    SingularSystem(&'static str),
    #[error("the matrix N is singular")]
    SingularN,
    #[error("I - exp(L+ b) exp(L- b) is singular")]
    SingularBlock,
    #[error("x = {x} is outside ({lo}, {hi})")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("{cells} cells give a negative birth-death rate; increase the cell count")]
    NegativeRate { cells: usize },
    #[error("empirical law holds no samples")]
    EmptySample,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotAGenerator(_) => "NotAGenerator",
            Error::NotIrreducible => "NotIrreducible",
            Error::ZeroVariance(_) => "ZeroVariance",
            Error::ZeroMeanDrift(_) => "ZeroMeanDrift",
            Error::BadBuffer(_) => "BadBuffer",
            Error::EpsTooLarge { .. } => "EpsTooLarge",
            Error::BadRates(_) => "BadRates",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SubspaceIllConditioned => "SubspaceIllConditioned",
            Error::NotBalanced => "NotBalanced",
            Error::SingularSystem(_) => "SingularSystem",
            Error::SingularN => "SingularN",
            Error::SingularBlock => "SingularBlock",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::NegativeRate { .. } => "NegativeRate",
            Error::EmptySample => "EmptySample",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// True for errors caused by the caller's input rather than by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NotAGenerator(_)
                | Error::NotIrreducible
                | Error::ZeroVariance(_)
                | Error::ZeroMeanDrift(_)
                | Error::BadBuffer(_)
                | Error::EpsTooLarge { .. }
                | Error::BadRates(_)
                | Error::DimensionMismatch(_)
                | Error::NonFinite(_)
                | Error::OutOfRange { .. }
                | Error::NegativeRate { .. }
                | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
