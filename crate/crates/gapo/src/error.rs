//! One error enum for the whole crate. Variants are grouped by how the CLI
//! reports them: usage, invalid config, bad data, numeric failure.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed {what}: {detail}")]
    Format {
        path: String,
        what: &'static str,
        detail: String,
    },

    #[error("{path}: bad magic (expected {expected:?})")]
    BadMagic { path: String, expected: &'static str },

    #[error("{path}: unsupported version {found} (expected {expected})")]
    BadVersion {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated (expected {expected} bytes of payload, found {found})")]
    Truncated {
        path: String,
        expected: u64,
        found: u64,
    },

    #[error("{path}: checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    ChecksumMismatch {
        path: String,
        stored: u64,
        computed: u64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::Config(_) => 3,
            Error::Shape(_)
            | Error::Io { .. }
            | Error::Format { .. }
            | Error::BadMagic { .. }
            | Error::BadVersion { .. }
            | Error::Truncated { .. }
            | Error::ChecksumMismatch { .. } => 4,
            Error::NonFinite(_) | Error::Diverged { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
