//! Sparse graph estimation feeding a graph-convolutional recurrent forecaster.
//!
//! The pipeline has two phases trained independently:
//!
//! 1. [`glasso`] / [`tvgl`] estimate one sparse precision matrix, or one per
//!    time interval, from z-scored training data.
//! 2. [`graph`] turns precision matrices into edge probabilities and samples
//!    binary adjacencies, which [`gcrn`] consumes as the graph operator of a
//!    GRU whose linear maps are graph convolutions.
//!
//! [`data`] handles ingestion, transforms, windowing and synthetic data;
//! [`baselines`] provides historical-average and VAR reference forecasters.

pub mod baselines;
pub mod data;
mod error;
pub mod gcrn;
pub mod glasso;
pub mod graph;
pub mod numerics;
pub mod persist;
pub mod tvgl;

pub use error::{Error, Result};
pub use numerics::Matrix;
