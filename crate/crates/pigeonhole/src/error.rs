//! Error type shared across the crate.

/// Errors produced by model evaluation, sampling, and data handling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimensions disagree (vector lengths, batch sizes, table shapes).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A variance component underflowed the 1e-300 guard.
    #[error("degenerate variance: {name} = {value:e} is below 1e-300")]
    DegenerateVariance { name: &'static str, value: f64 },

    /// Two cells share the same (row, col) pair.
    #[error("duplicate cell at ({row}, {col})")]
    DuplicateCell { row: usize, col: usize },

    /// Pruning removed every cell.
    #[error("table is empty after pruning")]
    EmptyTable,

    /// Subset sampling could not produce a batch with every row and column
    /// observed within the redraw budget.
    #[error("subset sampling failed: no valid batch after {rounds} redraw rounds")]
    SamplingFailure { rounds: usize },

    /// Sieve-truncated proposals were rejected `attempts` times in a row.
    #[error("sieve rejected {attempts} consecutive proposals")]
    SieveExhausted { attempts: usize },

    /// A numeric operation produced a non-finite or singular result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A sampler step failed; carries the iteration for context.
    #[error("sampler failed at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// Text input could not be parsed.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the iteration index at which it occurred.
    pub fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
