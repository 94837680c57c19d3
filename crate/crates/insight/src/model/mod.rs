//! The surrogate models: a decoder-only transformer that predicts
//! performance metrics autoregressively, and a fully-connected
//! ensemble baseline that predicts them jointly.
//!
//! One checkpoint binds one (topology, technology) pair: weights plus
//! the normalization statistics they were trained under, so a loaded
//! file reproduces training-time behavior bit for bit.

pub mod checkpoint;
pub mod fc;
pub mod surrogate;

use crate::numerics::NumericsError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_any, CheckpointKind, RunMetadata};
pub use fc::{FcEnsemble, FcEnsembleConfig, FcMember, FcProbe};
pub use surrogate::{
    masked_mse, BatchRollout, GradProbe, RolloutReport, Surrogate, SurrogateCheckpoint,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("metric prefix of {got} exceeds the {max} metrics in the layout")]
    PrefixTooLong { got: usize, max: usize },
    #[error("design has {got} values, layout expects {expected}")]
    DesignLength { expected: usize, got: usize },
    #[error("uncertainty requires at least 2 output heads, config has {0}")]
    TooFewHeads(usize),
    #[error("checkpoint: {0}")]
    Format(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture of the autoregressive surrogate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InsightConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_hidden: usize,
    /// Output heads used for the uncertainty estimate.
    pub uncertainty_heads: usize,
    pub ln_eps: f64,
    pub init_std: f64,
}

impl Default for InsightConfig {
    fn default() -> Self {
        Self {
            d_model: 76,
            heads: 4,
            layers: 3,
            ff_hidden: 4 * 76,
            uncertainty_heads: 5,
            ln_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

/// Fixed token layout for one topology: N parameter positions followed
/// by M−1 teacher-forced metric positions. The hidden state at
/// position N−1+i yields the prediction for metric i.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SequenceLayout {
    pub n_params: usize,
    pub n_metrics: usize,
    /// Metric decode order, a snapshot of the schema at training time.
    pub metric_names: Vec<String>,
}

impl SequenceLayout {
    pub fn from_topology(topo: &crate::circuits::CircuitTopology) -> Self {
        Self {
            n_params: topo.n_params(),
            n_metrics: topo.n_metrics(),
            metric_names: topo.schema.names().iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Token count of a full teacher-forced sequence. The last metric
    /// is never consumed as input, so this is N + M − 1.
    pub fn seq_len(&self) -> usize {
        self.n_params + self.n_metrics - 1
    }

    /// Token value at `position` given a design row and however many
    /// metrics are known; caller guarantees the position is covered.
    pub fn token(&self, position: usize, design: &[f64], metrics: &[f64]) -> f64 {
        if position < self.n_params {
            design[position]
        } else {
            metrics[position - self.n_params]
        }
    }

    /// Position whose hidden state predicts metric `i`.
    pub fn prediction_position(&self, i: usize) -> usize {
        self.n_params - 1 + i
    }
}
