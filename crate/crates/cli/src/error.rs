use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown preset `{0}` (run `rydcorr presets` for the list)")]
    UnknownPreset(String),
    #[error("unknown key `{0}`")]
    InvalidKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("no preset given: set `preset` in the config or pass --preset")]
    MissingPreset,
    #[error("cannot read config `{path}`: {message}")]
    ConfigRead { path: String, message: String },
    #[error("cannot write `{path}`: {message}")]
    Unwritable { path: String, message: String },
    #[error("computation failed: {0}")]
    Computation(#[from] rydcorr_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::UnknownPreset(_) => 3,
            CliError::InvalidKey(_) => 4,
            CliError::InvalidValue { .. } => 5,
            CliError::MissingPreset => 6,
            CliError::Unwritable { .. } => 7,
            CliError::Computation(_) => 8,
            CliError::ConfigRead { .. } => 9,
        }
    }

    pub(crate) fn value(key: &str, message: impl Into<String>) -> Self {
        CliError::InvalidValue { key: key.to_string(), message: message.into() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
