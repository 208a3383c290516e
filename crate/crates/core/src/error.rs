use std::path::PathBuf;

use crate::data::InstrumentCode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("instrument cell {code} has {count} rows, need at least {required}")]
    EmptyCell {
        code: InstrumentCode,
        count: usize,
        required: usize,
    },

    #[error("instrument cell {code} has {count} rows, fewer than the {folds} folds requested")]
    TooFewRowsPerCell {
        code: InstrumentCode,
        count: usize,
        folds: usize,
    },

    #[error("matrix not factorizable after jitter escalation up to {max_jitter:e}")]
    NotFactorizable { max_jitter: f64 },

    #[error("design matrix is rank deficient and ridge is zero")]
    RankDeficient,

    #[error("nuisance fit failed (fold {fold}, code {code}): {source}")]
    NuisanceFit {
        fold: usize,
        code: InstrumentCode,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate denominator {value:e} in {context}")]
    DegenerateDenominator { context: &'static str, value: f64 },

    #[error("projection Gram matrix is singular (min eigenvalue {min_eigen:e})")]
    SingularGram { min_eigen: f64 },

    #[error("estimated covariance of the projection coefficients is singular")]
    DegenerateCovariance,

    #[error("KS grid is empty after excluding degenerate rows")]
    GridEmpty,

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by degenerate data at estimation time, as
    /// opposed to malformed input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDenominator { .. }
                | Error::SingularGram { .. }
                | Error::DegenerateCovariance
                | Error::GridEmpty
                | Error::NotFactorizable { .. }
                | Error::RankDeficient
                | Error::NuisanceFit { .. }
        )
    }
}
