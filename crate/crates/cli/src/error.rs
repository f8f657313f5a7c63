use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config file or manifest; exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// A stage of the pipeline failed; exit code 1.
    #[error("{stage} failed: {source}")]
    Pipeline {
        stage: &'static str,
        #[source]
        source: attrib_core::Error,
    },
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Pipeline { .. } | CliError::Stage { .. } => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Tags core errors with the stage they came from.
pub(crate) trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> Stage<T> for attrib_core::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Pipeline { stage, source })
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError::Pipeline { stage, source: e.into() })
    }
}
