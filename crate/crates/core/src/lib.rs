//! Multi-task spatio-temporal regression for per-region, per-type crime counts.
//!
//! Each region, slot and crime type gets a weight vector `P + Q(k)` over the
//! region's features: `P` is shared by all types and `Q(k)` is type specific.
//! Training couples types through a learned task covariance and smooths the
//! weights across neighbouring slots and nearby regions with fused-lasso
//! penalties, solved by ADMM. Future weights are forecast as a decay-weighted
//! average of recent ones.

pub mod analytics;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod forecaster;
pub mod solver;
pub mod tensors;

pub use dataset::{Dataset, LoadReport};
pub use error::{Error, Result};
pub use solver::{fit, Checkpoint, Hyperparams, ModelState};
pub use tensors::{CrimeTensor, FeatureTensor, RegionGrid};
