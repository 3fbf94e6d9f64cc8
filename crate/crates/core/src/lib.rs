//! Multi-task estimation of means and kernel mean embeddings.
//!
//! Each task observes a bag of samples. The naive estimate of a task's mean
//! (or kernel mean embedding) is improved by pooling it with the estimates
//! of tasks that a pairwise two-sample test cannot tell apart. The crate
//! provides the kernel statistics, the tests, the weighting schemes, the
//! companion risk bounds and a reproducible benchmark harness.

pub mod bounds;
pub mod concentration;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod rng;
pub mod similarity;

pub use error::{Error, Result};
pub use kernel::{Bag, KernelSpec};
