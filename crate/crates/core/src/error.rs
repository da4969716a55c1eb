use thiserror::Error;

/// Errors raised anywhere in the identification pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("polynomial of degree zero has no roots")]
    NoRoots,
    #[error("transfer function evaluated at a pole")]
    PoleEvaluation,
    #[error("numerator is identically zero")]
    ZeroNumerator,
    #[error("denominator constant term is zero; constant-term-1 normalization impossible")]
    DegenerateNormalization,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("DT model has a pole on the closed negative real axis")]
    NegativeRealPole,
    #[error("CT pole imaginary part violates the pi/h > 2|Im| sampling bound")]
    FrequencyBound,
    #[error("leading denominator coefficient is zero")]
    SingularDenominator,
    #[error("Jacobian of the adapted inverse map is singular (condition {0:e})")]
    JacobianSingular(f64),
    #[error("filter numerator degree exceeds denominator degree")]
    ImproperFilter,
    #[error("modified normal matrix is singular (condition {0:e})")]
    SingularNormalMatrix(f64),
    #[error("ARMA prediction-error fit diverged")]
    PemDiverged,
    #[error("estimator did not converge")]
    NotConverged,
    #[error("noise filter is unstable or non-invertible")]
    UnstableNoiseFilter,
    #[error("not enough samples: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{failed} of {runs} Monte Carlo runs failed for method {method}")]
    TooManyFailures {
        method: String,
        failed: usize,
        runs: usize,
    },
}

impl Error {
    /// Stable machine-readable token used by the command-line front end.
    pub fn token(&self) -> &'static str {
        match self {
            Error::NoRoots => "NO_ROOTS",
            Error::PoleEvaluation => "POLE_EVALUATION",
            Error::ZeroNumerator => "ZERO_NUMERATOR",
            Error::DegenerateNormalization => "DEGENERATE_NORMALIZATION",
            Error::InvalidModel(_) => "INVALID_MODEL",
            Error::NegativeRealPole => "NEGATIVE_REAL_POLE",
            Error::FrequencyBound => "FREQUENCY_BOUND",
            Error::SingularDenominator => "SINGULAR_DENOMINATOR",
            Error::JacobianSingular(_) => "JACOBIAN_SINGULAR",
            Error::ImproperFilter => "IMPROPER_FILTER",
            Error::SingularNormalMatrix(_) => "SINGULAR_NORMAL_MATRIX",
            Error::PemDiverged => "PEM_DIVERGED",
            Error::NotConverged => "NOT_CONVERGED",
            Error::UnstableNoiseFilter => "UNSTABLE_NOISE_FILTER",
            Error::InsufficientData(_) => "INSUFFICIENT_DATA",
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::TooManyFailures { .. } => "TOO_MANY_FAILURES",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
