use thiserror::Error;

/// Errors produced by the shaping library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The input carries no usable information (e.g. an all-zero constellation).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Both the ASE and NLIN noise terms vanish, so the SNR is unbounded.
    #[error("effective SNR is infinite: link has neither ASE nor nonlinear noise")]
    InfiniteSnr,

    /// The NLIN coefficient is not positive, so SNR grows without bound in launch power.
    #[error("launch power optimum is unbounded (nonlinear coefficient eta = {0})")]
    UnboundedOptimum(f64),

    /// The requested computation is outside what the routine supports.
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// A non-finite value appeared during a numerical computation.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A bit stream does not divide into whole symbols.
    #[error("framing error: {0}")]
    Framing(String),

    /// A file could not be parsed.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A sweep grid point failed.
    #[error("{scheme} at {n_spans} spans: {source}")]
    AtGridPoint {
        scheme: String,
        n_spans: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
