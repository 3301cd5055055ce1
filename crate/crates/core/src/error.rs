use thiserror::Error;

/// Errors produced anywhere in the certification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("angle {0} rad is outside the allowed range {1}")]
    Domain(f64, &'static str),

    #[error("setting (x={x}, y={y}) has zero total count")]
    EmptySetting { x: usize, y: usize },

    #[error("tomography basis {0} has zero total count")]
    EmptyBasis(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("dual certificate invalid: {0}")]
    CertificateInvalid(String),

    #[error("moment schema error: {0}")]
    Schema(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Prefixes the message with `ctx`, keeping the variant (and so the exit code).
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
            Error::Dimension(m) => Error::Dimension(format!("{ctx}: {m}")),
            Error::Solver(m) => Error::Solver(format!("{ctx}: {m}")),
            Error::CertificateInvalid(m) => Error::CertificateInvalid(format!("{ctx}: {m}")),
            Error::Schema(m) => Error::Schema(format!("{ctx}: {m}")),
            Error::Parse(m) => Error::Parse(format!("{ctx}: {m}")),
            Error::EmptySetting { x, y } => {
                Error::Validation(format!("{ctx}: setting (x={x}, y={y}) has zero total count"))
            }
            Error::EmptyBasis(b) => Error::Validation(format!("{ctx}: tomography basis {b} has zero total count")),
            Error::Io { path, source } => Error::Io {
                path: format!("{path} ({ctx})"),
                source,
            },
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Solver(_) | Error::CertificateInvalid(_) => 3,
            _ => 2,
        }
    }
}
