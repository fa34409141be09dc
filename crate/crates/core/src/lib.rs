//! Recursive-estimation diagnostics for outliers in linear regression.
//!
//! Observations are added one at a time under many orderings of the sample;
//! the resulting coefficient, variance and CUSUM trajectories expose points
//! that a single full-sample fit hides.

pub mod cusum;
pub mod diagnostics;
pub mod engine;
pub mod export;
pub mod io;
pub mod linalg;
pub mod permute;
pub mod pipeline;
pub mod plot;
pub mod simgen;
