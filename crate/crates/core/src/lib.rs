//! Numeric core of a spatio-temporal transformer pipeline for ROI time series.
//!
//! Everything here is pure computation over in-memory data and builds
//! without `std`: Granger-causality effective connectivity, eigenvector
//! centrality and network-grouped ROI ordering, the variable-window
//! cross-window-attention temporal branch, the ROI-token spatial branch,
//! the fused classifier, and the training, evaluation and attention-scoring
//! routines. File formats and the command line live in the `starformer`
//! crate.
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod error;
pub mod kernel;
mod math;

pub use error::{Error, ErrorKind, Result};
pub mod block;
pub mod centrality;
pub mod connectivity;
pub mod model;
pub mod series;
pub mod spatial;
pub mod stats;
pub mod temporal;
pub mod train;

pub use series::TimeSeriesMatrix;
