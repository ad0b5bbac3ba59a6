use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or estimator parameter lies outside its admissible range.
    #[error("{field} must lie in {range}, got {value}")]
    Domain {
        field: &'static str,
        range: &'static str,
        value: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{0}")]
    InvalidArgument(String),

    /// The Toeplitz covariance stopped being positive definite.
    #[error("{model} covariance is numerically degenerate at n = {n}")]
    Degenerate { model: String, n: usize },

    #[error("partial correlation beta_{n} = {beta} has modulus >= 1")]
    PartialCorrelation { n: usize, beta: f64 },

    #[error(
        "circulant embedding of size {m} has eigenvalue {eigenvalue:.3e} below tolerance; \
         a larger embedding is required"
    )]
    Embedding { m: usize, eigenvalue: f64 },

    /// Reconstructed sample had an imaginary part; signals a broken Hermitian symmetry.
    #[error("reconstructed path has imaginary residue {residue:.3e} at coordinate {index}")]
    ImaginaryResidue { index: usize, residue: f64 },

    #[error("horizon {requested} exceeds the dense kernel limit of {limit}")]
    HorizonTooLarge { requested: usize, limit: usize },

    #[error("drift is not identifiable: observed information is zero")]
    NonIdentifiable,

    #[error("input energy {energy} exceeds the unit budget")]
    EnergyExceeded { energy: f64 },

    #[error("Laplace argument {mu} is not admissible at step {step}")]
    LaplaceInadmissible { mu: f64, step: usize },

    #[error("chain parameter a = {a} is outside the admissible range (theta = {theta}, n = {n})")]
    ChainInadmissible { theta: f64, a: f64, n: usize },

    #[error("{failed} of {total} replications failed (first failure: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
