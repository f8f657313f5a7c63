//! Seeded add-k character n-gram models standing in for base, fine-tuned and
//! auxiliary language models.

mod corpus;
mod model;
mod serial;

pub use corpus::Corpus;
pub use model::{finetune, perplexity, train_ngram, GenerationConfig, Lineage, NGramModel, Role, GREEDY_TEMPERATURE};
pub use serial::MODEL_FORMAT_VERSION;
