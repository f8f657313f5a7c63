//! Attribution of black-box fine-tuned text generators to the base models
//! they were derived from.

pub mod attributors;
mod error;
pub mod eval;
pub mod features;
pub mod modelhub;
pub mod pipeline;
pub mod promptsel;
pub mod seed;
pub mod simlm;
pub mod suite;
pub mod text;

pub use error::{Error, Result};
