use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the inference stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("EM fit failed in component {component}: {reason}")]
    FitFailure { component: usize, reason: String },

    #[error(
        "covariance inversion failed in component {component}: {matrix} is not positive definite"
    )]
    Inversion {
        component: usize,
        matrix: &'static str,
    },

    #[error("degenerate conditioning: every mixture weight underflows at the supplied point")]
    DegenerateConditioning,

    #[error("simulator failure rate {rate:.3} exceeds the abort threshold")]
    Simulator { rate: f64 },

    #[error("individual {individual}: surrogate posterior draws rejected by prior support ({accepted} of {attempts} accepted)")]
    Rejection {
        individual: usize,
        accepted: usize,
        attempts: usize,
    },

    #[error("all candidate component counts failed to fit")]
    AllFitsFailed,

    #[error("config schema error: {0}")]
    Schema(String),

    #[error("ingestion error at row {row}: {reason}")]
    Ingestion { row: usize, reason: String },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used for CLI exit reporting and FFI codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::FitFailure { .. } => "fit_failure",
            Error::Inversion { .. } => "inversion",
            Error::DegenerateConditioning => "degenerate_conditioning",
            Error::Simulator { .. } => "simulator",
            Error::Rejection { .. } => "rejection",
            Error::AllFitsFailed => "all_fits_failed",
            Error::Schema(_) => "schema",
            Error::Ingestion { .. } => "ingestion",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) => 2,
            Error::Schema(_) => 3,
            Error::Ingestion { .. } => 4,
            Error::Io(_) | Error::Json(_) | Error::Format(_) => 5,
            Error::FitFailure { .. } | Error::Inversion { .. } | Error::AllFitsFailed => 6,
            Error::DegenerateConditioning | Error::Rejection { .. } | Error::Simulator { .. } => 7,
        }
    }
}

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
