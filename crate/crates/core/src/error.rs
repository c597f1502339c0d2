use thiserror::Error;

/// Errors raised by the numeric modules and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: Re(ω) = {re} lies outside the analyticity strip ({lo}, {hi})")]
    Domain {
        what: &'static str,
        re: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("quadrature budget exhausted after {evals} evaluations (error estimate {err_estimate:.3e})")]
    BudgetExceeded { evals: usize, err_estimate: f64 },

    #[error("kernel has Re f = {re:.3e} < 0 at s = {s}, x = {x}")]
    NegativeKernel { s: f64, x: f64, re: f64 },

    #[error("|b + K(s)| = {modulus:.3e} falls below the pole tolerance at s = {s}")]
    PoleProximity { s: f64, modulus: f64 },

    #[error("conditional variance τ* is zero; the conditional law is a point mass")]
    DegenerateVariance,

    #[error("truncation radius {radius} leaves a tail estimate {tail:.3e} above tolerance {tol:.3e}")]
    TruncationInsufficient { radius: f64, tail: f64, tol: f64 },

    #[error("volatility mass is zero; returns are a point mass at μΔ and have no density")]
    Degenerate,

    #[error("likelihood integral is not positive ({value:.3e}); quadrature error dominates")]
    NonPositiveDensity { value: f64 },

    #[error("dimension {n} exceeds the exact-integral cap of {cap}")]
    DimensionCap { n: usize, cap: usize },

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },

    #[error("{0}")]
    Unsupported(String),

    #[error("information matrix is singular or not positive definite")]
    SingularInformation,

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::NegativeKernel { .. } => "negative_kernel",
            Error::PoleProximity { .. } => "pole_proximity",
            Error::DegenerateVariance => "degenerate_variance",
            Error::TruncationInsufficient { .. } => "truncation_insufficient",
            Error::Degenerate => "degenerate",
            Error::NonPositiveDensity { .. } => "non_positive_density",
            Error::DimensionCap { .. } => "dimension_cap",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::Unsupported(_) => "unsupported",
            Error::SingularInformation => "singular_information",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
