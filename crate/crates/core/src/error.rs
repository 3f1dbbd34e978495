use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The CLI maps these onto exit codes through [`Error::exit_code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval [{a}, {b}]: need finite a < b")]
    InvalidInterval { a: f64, b: f64 },

    #[error("invalid quadrature order {0}: need n >= 1")]
    InvalidOrder(usize),

    #[error("integrand is not finite at node {node}")]
    NonFiniteEvaluation { node: f64 },

    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),

    #[error("degenerate marginal: recurrence beta {beta:e} at degree {degree}")]
    DegenerateMarginal { degree: usize, beta: f64 },

    #[error("degree {degree} out of range (max {max})")]
    DegreeOutOfRange { degree: usize, max: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("coefficient bound violated: sum |rho_n| c_n d_n = {bound_value}")]
    BoundViolated { bound_value: f64 },

    #[error("lambda {lambda} outside (0, {max_lambda}]")]
    LambdaTooLarge { lambda: f64, max_lambda: f64 },

    #[error("conditioning point {point} has zero marginal density")]
    UnsupportedConditioningPoint { point: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("total mass {mass:e} too small to discretize")]
    ZeroMass { mass: f64 },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("spectral failure: leading singular value {sigma1} differs from 1")]
    SpectralFailure { sigma1: f64 },

    #[error("no convergence after {iterations} iterations (last {last}, step {gap:e})")]
    NoConvergence {
        iterations: usize,
        last: f64,
        gap: f64,
    },

    #[error("degenerate start: initial function has zero variance")]
    DegenerateStart,

    #[error("degenerate pmf: {0}")]
    DegeneratePmf(String),

    #[error("ill-conditioned fit: condition number {condition:e}")]
    IllConditionedFit { condition: f64 },

    #[error("verification failed: {0}")]
    CheckFailed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInterval { .. } => "invalid-interval",
            Error::InvalidOrder(_) => "invalid-order",
            Error::NonFiniteEvaluation { .. } => "non-finite-evaluation",
            Error::InvalidMarginal(_) => "invalid-marginal",
            Error::DegenerateMarginal { .. } => "degenerate-marginal",
            Error::DegreeOutOfRange { .. } => "degree-out-of-range",
            Error::LengthMismatch(_) => "length-mismatch",
            Error::BoundViolated { .. } => "bound-violated",
            Error::LambdaTooLarge { .. } => "lambda-too-large",
            Error::UnsupportedConditioningPoint { .. } => "unsupported-conditioning-point",
            Error::InvalidModel(_) => "invalid-model",
            Error::ZeroMass { .. } => "zero-mass",
            Error::DegenerateVariance(_) => "degenerate-variance",
            Error::SpectralFailure { .. } => "spectral-failure",
            Error::NoConvergence { .. } => "no-convergence",
            Error::DegenerateStart => "degenerate-start",
            Error::DegeneratePmf(_) => "degenerate-pmf",
            Error::IllConditionedFit { .. } => "ill-conditioned-fit",
            Error::CheckFailed(_) => "check-failed",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 1 config, 2 validation failure, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BoundViolated { .. } | Error::LambdaTooLarge { .. } => 2,
            Error::NonFiniteEvaluation { .. }
            | Error::DegenerateMarginal { .. }
            | Error::ZeroMass { .. }
            | Error::DegenerateVariance(_)
            | Error::SpectralFailure { .. }
            | Error::NoConvergence { .. }
            | Error::DegenerateStart
            | Error::DegeneratePmf(_)
            | Error::IllConditionedFit { .. }
            | Error::CheckFailed(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
