//! Neural surrogate for analog circuit performance prediction and a
//! model-based batch-RL device sizing loop built on top of it.
//!
//! The crate is organized around the experiment pipeline:
//!
//! - [`numerics`]: dense float64 tensors, manual reverse-mode layers,
//!   Adam with cosine annealing, and a finite-difference gradient checker.
//! - [`circuits`]: behavioral circuit models that stand in for SPICE,
//!   technology profiles, and the figure-of-merit scalarization.
//! - [`data`]: Gaussian design sampling, oracle labeling, normalization,
//!   and dataset files.
//! - [`model`]: the autoregressive decoder transformer surrogate, the
//!   FC-ensemble baseline, and checkpoint serialization.
//! - [`train`]: training loops, R²/MSE evaluation, metric ordering, and
//!   cross-technology transfer.
//! - [`sizing`]: PPO trained inside the surrogate, validated against the
//!   real oracle under a strict simulation budget.

pub mod circuits;
pub mod data;
pub mod model;
pub mod numerics;
pub mod sizing;
pub mod train;

pub use numerics::NumericsError;
