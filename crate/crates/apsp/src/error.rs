use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum ApspError {
    /// A requested matrix or vector dimension is unusable (zero, odd where an
    /// even count is required, guard longer than the symbol, ...).
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// Two arguments that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar argument lies outside the mathematical domain of the
    /// operation (non-finite input, angle outside [-pi/2, pi/2], ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally valid argument combination that the library refuses to
    /// operate on (non-unitary mixing matrix, non-coprime root, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An index or phase shift lies outside its admissible range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// The configuration is self-inconsistent.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfig(String),

    /// The overlap metric is undefined because an operand has no energy.
    #[error("undefined overlap: {0}")]
    UndefinedOverlap(String),

    /// A deliberately small-scale routine was asked to build something big.
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    /// A configuration or schedule file could not be interpreted.
    #[error("config error: {0}")]
    Config(String),

    /// File system failure, annotated with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ApspError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ApspError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ApspError>;
