//! Model registry, knowledge-level access guard and black-box response
//! collection.

mod access;
mod collect;
mod registry;

pub use access::{KnowledgeLevel, TrainingView};
pub use collect::{collect_responses, CollectFailure, Provenance, ResponseCache, ResponseRecord, ResponseTable};
pub use registry::{Generation, Generator, ModelInfo, ModelRegistry, RegistryBuilder};
