//! Cached, deterministic pipeline around the `acnn` core: precompute
//! operators and patch operators, train, infer, refine and evaluate.

pub mod cache;
pub mod commands;
pub mod config;
pub mod descriptors;
pub mod error;
pub mod manifest;
pub mod shapes;

pub use config::PipelineConfig;
pub use error::{exit_code, user, UserError};
