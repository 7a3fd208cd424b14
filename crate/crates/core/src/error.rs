use std::path::PathBuf;

use crate::mdt::Pci;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty point set")]
    EmptyPointSet,

    #[error("coordinate out of bounds: lat {lat}, lon {lon}")]
    OutOfBounds { lat: f64, lon: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, col {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("range error at row {row}, col {col}: RSRP {value} dBm outside [-160, -30]")]
    Range { row: usize, col: usize, value: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset too small to split: {0} records, need at least 10")]
    TooSmallToSplit(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned kernel for PCI {pci}")]
    IllConditioned { pci: Pci },

    #[error("unlocatable query: no PCI shared with the database universe")]
    Unlocatable,

    #[error("no overlapping PCIs between predictions and test records")]
    NoOverlap,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("every generated user is below the detection threshold")]
    AllUndetected,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("config error in {}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep failed at rate {rate}, run {run}: {source}")]
    Run {
        rate: u32,
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::UnknownPreset(_) | Error::Config { .. } => 1,
            Error::IllConditioned { .. } => 3,
            Error::Stage { source, .. } | Error::Run { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
