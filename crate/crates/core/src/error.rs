use thiserror::Error;

/// Unified error type for the workbench.
///
/// Numeric kernels, the generator, estimators and the harness all surface
/// failures through this enum so callers (CLI, tests) can match on the
/// condition instead of parsing strings.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty context")]
    EmptyContext,

    #[error("rank-deficient design")]
    RankDeficientDesign,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient rank: requested {requested} components but rank is {rank}")]
    InsufficientRank { requested: usize, rank: usize },

    #[error("proxy requires aux channel")]
    ProxyRequiresAux,

    #[error("EXP budget too small for holdout")]
    ExpBudgetTooSmall,

    #[error("empty candidate grid")]
    EmptyCandidateGrid,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("negative variance")]
    NegativeVariance,

    #[error("{0} must be a probability weight vector (nonnegative, summing to one)")]
    BadWeights(&'static str),

    #[error("missing grid entries: {0}")]
    MissingGridEntries(String),

    #[error("inconsistent method sets across cells")]
    InconsistentMethods,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the cell it occurred in (used by the sweep runner).
    pub fn in_cell(self, cell: impl Into<String>) -> Self {
        Error::Cell {
            cell: cell.into(),
            source: Box::new(self),
        }
    }
}
