use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// A config entry that parses but cannot be run; `entry` is its dotted path.
    #[error("config entry `{entry}`: {reason}")]
    Config { entry: String, reason: String },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("output directory {}: {reason}", path.display())]
    Output { path: PathBuf, reason: String },
    #[error("job {job}")]
    Job { job: String, source: Box<LabError> },
    #[error(transparent)]
    Core(#[from] onsagerlab_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub(crate) fn config(entry: impl Into<String>, reason: impl ToString) -> Self {
        LabError::Config {
            entry: entry.into(),
            reason: reason.to_string(),
        }
    }
}
