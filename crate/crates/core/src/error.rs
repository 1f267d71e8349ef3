use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Unit-strength skywave in exact antiphase with the groundwave: the
    /// composite vanishes and its phase is undefined.
    #[error("degenerate cancellation: alpha = 1 and carrier phase delay = pi (mod 2 pi)")]
    DegenerateCancellation,

    #[error("unsupported latitude {lat} deg: polar day/night is not handled (|lat| must be < 66)")]
    UnsupportedLatitude { lat: f64 },

    #[error("degenerate daytime window on {date}: {reason}")]
    DegenerateWindow { date: NaiveDate, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: no phase unit declared and no override given")]
    UnitAmbiguity { path: PathBuf },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
