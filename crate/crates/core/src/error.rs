use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter or configuration value is out of its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data cannot be used as given (constant columns, too few rows, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A pivot or denominator that must be strictly positive was not.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("solver diverged at sweep {sweep} (lambda_w={lambda_w}, lambda_b={lambda_b}, c={c})")]
    Divergence {
        sweep: usize,
        lambda_w: f64,
        lambda_b: f64,
        c: f64,
    },

    /// A matrix that must be positive definite is not.
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("ground-truth generation failed: {0}")]
    Generation(String),

    /// Malformed text input, with a locator.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),

    /// Wraps an error raised while evaluating one grid point.
    #[error("at {context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, with all context layers stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerical routines rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NumericalDegeneracy(_)
                | Error::Divergence { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::Generation(_)
        )
    }
}

pub(crate) fn io_error(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}
