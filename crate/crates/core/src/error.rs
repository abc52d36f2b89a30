use thiserror::Error;

/// Errors produced by the recovery pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A least-squares or projection problem asked for more atoms than measurements.
    #[error("over-complete support: {atoms} atoms for {measurements} measurements")]
    OverComplete { atoms: usize, measurements: usize },

    /// The leading singular values of the Hankel matrix do not separate.
    #[error("degenerate singular value gap (s1 = {s1:e}, s2 = {s2:e})")]
    DegenerateGap { s1: f64, s2: f64 },

    /// The matrix pencil kept no eigenvalue after denoising and band filtering.
    #[error("empty frequency estimate")]
    EmptyEstimate,

    /// A dense factorization did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
