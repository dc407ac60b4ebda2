use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Messages carry the name of the
/// stage that raised them so pipeline errors read well on the command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("core: dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("core: non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("core: sample-count mismatch: view 1 has {n1} samples, view 2 has {n2}")]
    SampleCountMismatch { n1: usize, n2: usize },

    #[error("core: at least 2 samples are required, got {0}")]
    TooFewSamples(usize),

    #[error("core: view must have at least one variable")]
    NoVariables,

    #[error("core: invalid ranks: {0}")]
    InvalidRanks(String),

    #[error("core: SVD failed to converge")]
    SvdFailed,

    #[error(
        "denoise: rank {rank} too large for a {p} x {n} view: need n*p - n*r - p*r > 0 (got {denominator})"
    )]
    RankBound {
        rank: usize,
        p: usize,
        n: usize,
        denominator: i64,
    },

    #[error("cca: view {view} has rank 0, the decomposition is empty")]
    EmptyDecomposition { view: usize },

    #[error("decompose: canonical correlation {0} lies outside [0, 1]")]
    InvalidCorrelation(f64),

    #[error("decompose: auxiliary factor row {row} is degenerate after projection (n = {n} is too small)")]
    DegenerateAuxiliary { row: usize, n: usize },

    #[error("simulate: invalid factor model: {0}")]
    InvalidSpec(String),

    #[error("population: invalid model: {0}")]
    InvalidModel(String),

    #[error("ranks: eigengap undefined for view {view} (flat spectrum); pass explicit ranks")]
    EigengapUndefined { view: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(String),

    #[error("input: {path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("input: {path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidSpec(_) => 2,
            Error::Csv { .. }
            | Error::Input { .. }
            | Error::Io { .. }
            | Error::NonFinite { .. }
            | Error::SampleCountMismatch { .. }
            | Error::TooFewSamples(_)
            | Error::NoVariables
            | Error::DimensionMismatch(_)
            | Error::InvalidModel(_) => 3,
            Error::InvalidRanks(_)
            | Error::SvdFailed
            | Error::RankBound { .. }
            | Error::EmptyDecomposition { .. }
            | Error::InvalidCorrelation(_)
            | Error::DegenerateAuxiliary { .. }
            | Error::EigengapUndefined { .. }
            | Error::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
