use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("evaluation outside the chart domain at {point:?}: {reason}")]
    Domain { point: Vec<f64>, reason: String },

    #[error("singular metric (det = {det:e})")]
    SingularMetric { det: f64 },

    #[error("vertical metric is not regular (det = {det:e})")]
    Regularity { det: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("signature mismatch: {0}")]
    Signature(String),

    #[error("tangent is not unit length (g(X,X) = {norm})")]
    Normalization { norm: f64 },

    #[error("metric degenerated during the flow at chi = {chi} (node {node})")]
    FlowSingularity { chi: f64, node: usize },

    #[error("Einstein constraint violated: residual {residual:e} exceeds {tol:e}")]
    ConstraintViolation { residual: f64, tol: f64 },

    #[error("snapshot {index} needs two neighbours for a central difference")]
    NeedsNeighbors { index: usize },

    #[error("hyperbolicity violated at node {node}: |v_tau| = {value}")]
    Hyperbolicity { node: usize, value: f64 },

    #[error("numerical blow-up at tau = {tau}")]
    BlowUp { tau: f64 },

    #[error("unsupported hierarchy order {0}")]
    UnsupportedOrder(i32),

    #[error("invalid value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },

    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("sub-run {index} failed: {source}")]
    SubRun { index: usize, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config { key: key.to_string(), reason: reason.into() }
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), msg: err.to_string() }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::UnknownFixture(_)
            | Error::Dimension { .. } => 2,
            Error::BlowUp { .. } | Error::FlowSingularity { .. } => 3,
            Error::SubRun { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
