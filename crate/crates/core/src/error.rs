use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("disjointness violated: {0}")]
    Disjointness(String),

    #[error("normalization required: {0}")]
    NormalizationRequired(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("singular kernel: {0}")]
    SingularKernel(String),

    #[error("axis {axis} out of range for dimension {dim}")]
    InvalidAxis { axis: usize, dim: usize },

    #[error("evaluation point too close to source support: {0}")]
    TooCloseToSupport(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("not converged after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        /// Last iterate, converted to `f64`.
        last_iterate: Vec<f64>,
    },

    /// An error raised while processing one row of a sweep.
    #[error("row {index}: {source}")]
    Row {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by invalid input (as opposed to solver or I/O failures).
    pub fn is_validation(&self) -> bool {
        if let Error::Row { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            Error::InvalidResolution(_)
                | Error::InvalidDomain(_)
                | Error::Disjointness(_)
                | Error::NormalizationRequired(_)
                | Error::GridMismatch(_)
                | Error::SingularKernel(_)
                | Error::InvalidAxis { .. }
                | Error::TooCloseToSupport(_)
                | Error::InvalidParameter(_)
                | Error::Ellipticity(_)
                | Error::InsufficientData(_)
        )
    }
}

impl Error {
    /// The innermost error, looking through row context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Row { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
