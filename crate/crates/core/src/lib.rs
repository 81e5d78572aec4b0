//! Deep Nearest Class Mean (DNCM) classification for class-incremental
//! learning on electronic-nose style sensor data.
//!
//! A small dense ReLU network maps raw sensor vectors into a feature space
//! where each class is represented by its mean. The network is trained once
//! with a distance-softmax loss; afterwards it is frozen and new classes are
//! absorbed by streaming updates of per-class running means.
//!
//! ## Layout
//!
//! - [`feature_net`]: dense feature extractor: forward, backprop, SGD with momentum
//! - [`ncm_head`]: class-mean registry, distances, softmax, prediction, loss
//! - [`trainer`]: initial training, updating phase, evaluation, model artifacts
//! - [`baselines`]: brute-force KNN and raw-space NCM
//! - [`datakit`]: synthetic data, CSV I/O, standardization, splits, PCA
//! - [`benchkit`]: sweep harness, latency measurement, per-class tables

pub mod baselines;
pub mod benchkit;
pub mod datakit;
pub mod error;
pub mod feature_net;
pub mod ncm_head;
pub mod seeding;
pub mod trainer;

pub use error::{DncmError, Result};

/// Class label. Labels are arbitrary nonnegative integers and need not be contiguous.
pub type Label = u32;

/// Anything that maps one raw sensor vector to a class label.
pub trait Classifier {
    fn predict(&self, x: &[f64]) -> Result<Label>;
}

/// Format real values with 17 significant digits so text files round-trip exactly.
pub(crate) fn fmt_real(x: f64) -> String {
    format!("{:.16e}", x)
}
