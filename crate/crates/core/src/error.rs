use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus `{0}` has no usable documents")]
    EmptyCorpus(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("text yields no tokens")]
    EmptyText,
    #[error("{kind} input requires a {missing} response")]
    MissingResponse { kind: &'static str, missing: &'static str },
    #[error("knowledge level {level} forbids {what}")]
    KnowledgeLevel { level: &'static str, what: String },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("missing responses for {} (model, prompt) pairs, first: {:?}", .0.len(), .0.first())]
    MissingResponses(Vec<(String, String)>),
    #[error("training data must contain both classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("generation failed for `{model}`: {message}")]
    Generation { model: String, message: String, retryable: bool },
    #[error("non-finite loss at episode {episode} (lr {lr})")]
    NonFiniteLoss { episode: usize, lr: f64 },
    #[error("generation config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
