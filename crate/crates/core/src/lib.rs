//! Membership-inference auditing for text-to-video generators from frame
//! embeddings: signal extraction, attacks, metrics and a synthetic world.

pub mod attacks;
pub mod error;
pub mod eval;
pub mod mlp;
pub mod pipeline;
pub mod signals;
pub mod simulator;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
