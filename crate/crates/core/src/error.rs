use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate perturbation parameters: {0}")]
    Degenerate(String),

    #[error("domain too large for exact enumeration: d' = {d_prime} exceeds {limit}")]
    DomainTooLarge { d_prime: usize, limit: usize },

    #[error("unknown strategy `{0}` (expected optimized, naive, non-optimized or manual)")]
    UnknownStrategy(String),

    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),

    #[error("reports of different kinds cannot be aggregated together")]
    MixedReports,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: value {value} outside rating range [{min}, {max}]")]
    Range {
        line: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error object.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Degenerate(_) => "degenerate",
            Error::DomainTooLarge { .. } => "domain_too_large",
            Error::UnknownStrategy(_) => "unknown_strategy",
            Error::UnknownMechanism(_) => "unknown_mechanism",
            Error::MixedReports => "mixed_reports",
            Error::Parse { .. } => "parse",
            Error::Range { .. } => "range",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
