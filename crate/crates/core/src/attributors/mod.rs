//! Attribution methods: one-vs-rest heads with voting, triplet nearest
//! neighbours, perplexity, exact match and behavioural profiles.

mod dataset;
mod exact;
mod heuristic;
mod logistic;
mod perplexity;
mod result;
mod serial;
mod triplet;
mod voting;

pub use dataset::{labelled_inputs, make_training_set, Example, TrainingSet};
pub use exact::attribute_exact_match;
pub use heuristic::{attribute_heuristic, repetition_rate, HeuristicProfile, HeuristicWeights, TagVocabulary};
pub use logistic::{
    pretrain_then_finetune, sigmoid, train_binary, weighted_loss_and_grad, BinaryAttributor, HeadConfig, StageMeta,
    TrainingMeta,
};
pub use perplexity::attribute_perplexity;
pub use result::{AttributionResult, Direction, PromptScore};
pub use serial::{decode_f64s, encode_f64s, ATTRIBUTOR_FORMAT_VERSION};
pub use triplet::{
    attribute_triplet, train_triplet, triplet_loss, triplet_loss_and_grad, Projection, TripletAttributor,
    TripletConfig, DEFAULT_MARGIN,
};
pub use voting::{attribute_classifier, vote, Voting, DECISION_THRESHOLD};
