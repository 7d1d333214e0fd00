use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant. `path` is the dotted key.
    #[error("invalid config at `{path}`: {message}")]
    InvalidConfig { path: String, message: String },

    #[error("unknown memory technology `{tag}`; supported: {supported}")]
    UnknownMemTech { tag: String, supported: String },

    #[error("unknown workload `{0}`")]
    UnknownWorkload(String),

    #[error("invalid workload `{name}`: {message}")]
    InvalidWorkload { name: String, message: String },

    #[error("illegal architecture: {0}")]
    IllegalArch(String),

    #[error("trace line {line}: {message}")]
    TraceParse { line: usize, message: String },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: &str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            path: path.to_string(),
            message: message.into(),
        }
    }
}
