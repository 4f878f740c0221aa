//! File formats, synthetic cohorts, checkpoints and the cross-validation
//! pipeline around `starformer-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use error::{Error, Result};
