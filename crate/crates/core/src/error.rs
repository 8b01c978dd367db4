use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("undefined variance: {0}")]
    UndefinedVariance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic in {what}: expected {expected:02x?}, found {found:02x?}")]
    BadMagic {
        what: &'static str,
        expected: Vec<u8>,
        found: Vec<u8>,
    },

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("truncated {what} at byte offset {offset}: needed {needed} more bytes")]
    Truncated {
        what: &'static str,
        offset: u64,
        needed: u64,
    },

    #[error("malformed {what} at byte offset {offset}: {reason}")]
    Malformed {
        what: &'static str,
        offset: u64,
        reason: String,
    },

    #[error("missing data file {}", .0.display())]
    MissingData(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, shared by the CLI exit line and the C API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "E_DIM",
            Error::Singular(_) => "E_SINGULAR",
            Error::UndefinedVariance(_) => "E_VARIANCE",
            Error::InvalidArgument(_) => "E_ARG",
            Error::BadMagic { .. } => "E_MAGIC",
            Error::Version { .. } => "E_VERSION",
            Error::Truncated { .. } => "E_TRUNCATED",
            Error::Malformed { .. } => "E_MALFORMED",
            Error::MissingData(_) => "E_MISSING_DATA",
            Error::Config(_) => "E_CONFIG",
            Error::CheckFailed(_) => "E_CHECK",
            Error::Io(_) => "E_IO",
            Error::Csv(_) => "E_CSV",
        }
    }

    /// Process exit status for the CLI; distinct per error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) => 10,
            Error::Singular(_) => 11,
            Error::UndefinedVariance(_) => 12,
            Error::InvalidArgument(_) => 2,
            Error::BadMagic { .. }
            | Error::Version { .. }
            | Error::Truncated { .. }
            | Error::Malformed { .. } => 20,
            Error::MissingData(_) => 21,
            Error::Config(_) => 3,
            Error::CheckFailed(_) => 30,
            Error::Io(_) | Error::Csv(_) => 40,
        }
    }
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
