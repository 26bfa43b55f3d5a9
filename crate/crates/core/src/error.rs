use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A cycle among instantaneous-feedthrough ports. Holds the block names
    /// along the cycle, first name repeated at the end.
    #[error("algebraic loop through feedthrough ports: {}", .0.join(" -> "))]
    AlgebraicLoop(Vec<String>),

    #[error("wiring error: {0}")]
    Wiring(String),

    #[error("non-finite value produced by block `{block}` at t = {t} s")]
    NumericalDivergence { t: f64, block: String },

    /// Semantic violations found while validating a configuration.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),

    #[error("degenerate demonstration: {0}")]
    DegenerateDemo(String),

    #[error("trace length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),

    #[error("quadratic fit needs at least 3 distinct durations, got {0}")]
    DegenerateFit(usize),

    #[error("sweep cell (duration {duration} s, seed {seed}): {source}")]
    Cell {
        duration: f64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed data: {0}")]
    Malformed(String),
}

impl Error {
    /// Strips `File`/`Cell` context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Cell { source, .. } | Error::File { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn with_path(self, path: impl Into<String>) -> Error {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
