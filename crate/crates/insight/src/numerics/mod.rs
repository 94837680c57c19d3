//! Minimal dense-tensor math with manual reverse-mode differentiation.
//!
//! Everything is float64 and row-major. Backward passes are written
//! per-layer as explicit adjoints rather than through a general autodiff
//! tape, so every gradient path can be checked against central finite
//! differences (see [`gradcheck`]).
//!
//! Two matmul routes exist on purpose: [`ops::matmul`] is the plain
//! reference kernel, [`kernels::matmul_fast`] is the register-blocked one
//! used by training and batched inference. Both accumulate over the inner
//! dimension in the same order, so their outputs are bit-identical and the
//! fast route can be property-tested against the reference.

pub mod adam;
pub mod gradcheck;
pub mod kernels;
pub mod layers;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use adam::{Adam, AdamConfig, CosineSchedule};
pub use gradcheck::{grad_check, BlockReport, DiffModel, GradCheckConfig, GradCheckReport};
pub use layers::{
    CausalSelfAttention, DecoderBlock, FeedForward, KvCache, LayerNorm, Linear, Parameter, Route,
};
pub use rng::{derive_seed, Rng};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("model dimension {dim} not divisible by head count {heads}")]
    HeadDivision { dim: usize, heads: usize },
}
