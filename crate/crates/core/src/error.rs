use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: dimension mismatch, expected {expected:?} (h, w) but found {found:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("class tables differ between inputs: {0}")]
    ClassTableMismatch(String),

    #[error("{0}: mask is empty")]
    EmptyMask(&'static str),

    #[error("{0}: input is empty")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bank manifest is corrupt: {0}")]
    CorruptManifest(String),

    #[error("bank version mismatch: found {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("segment {id}: missing asset {path}")]
    MissingAsset { id: u32, path: PathBuf },

    #[error("segment {id}: checksum mismatch for {file}")]
    ChecksumMismatch { id: u32, file: String },

    #[error("no depth observations and no fallback order; supply a back-to-front class list")]
    MissingFallback,

    #[error("finisher needs at least one content pixel to extend")]
    NoContent,

    #[error("coarse layout ({unlabeled_fraction:.3} unlabeled, limit {limit:.3}); a dense pixelwise layout is required")]
    CoarseLayout { unlabeled_fraction: f64, limit: f64 },

    #[error("finisher backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },

    #[error("finisher backend `{backend}` returned {found:?} (h, w), expected {expected:?}")]
    BackendDimension {
        backend: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

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

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

/// Process exit codes, one per error category.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const MISSING_INPUT: i32 = 3;
    pub const BANK: i32 = 4;
    pub const INVALID_DATA: i32 = 5;
    pub const BACKEND: i32 = 6;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::MissingFallback => exit::USAGE,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => exit::MISSING_INPUT,
            Error::MissingAsset { .. } => exit::MISSING_INPUT,
            Error::CorruptManifest(_) | Error::VersionMismatch { .. } | Error::ChecksumMismatch { .. } => exit::BANK,
            Error::DimensionMismatch { .. }
            | Error::InvalidLayout(_)
            | Error::ClassTableMismatch(_)
            | Error::EmptyMask(_)
            | Error::EmptyInput(_)
            | Error::NoContent
            | Error::CoarseLayout { .. }
            | Error::Format { .. }
            | Error::Json(_) => exit::INVALID_DATA,
            Error::Backend { .. } | Error::BackendDimension { .. } => exit::BACKEND,
            Error::Io { .. } => exit::FAILURE,
        }
    }

    /// Short category label used in command-line diagnostics.
    pub fn category(&self) -> &'static str {
        match self.exit_code() {
            exit::USAGE => "config",
            exit::MISSING_INPUT => "missing input",
            exit::BANK => "bank",
            exit::INVALID_DATA => "invalid data",
            exit::BACKEND => "finisher",
            _ => "i/o",
        }
    }
}
