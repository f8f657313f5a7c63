//! Tokenization, the hashed character n-gram embedder, and classifier input
//! construction.

mod embed;
mod input;
mod tokenizer;

pub use embed::{cosine, embed, EmbedConfig, Embedder, FeatureVector, HashedNgramEmbedder};
pub use input::{build_input, prediction_input, InputRepr, SEP};
pub use tokenizer::{Tokenizer, BOS_ID, BOS_TOKEN, STOP_ID, STOP_TOKEN, UNK_ID, UNK_TOKEN};
