//! Dataset generation, splitting, normalization, and file I/O.
//!
//! A dataset is a labeled table: Gaussian-sampled design points plus
//! the oracle's metric vectors, carrying a full schema snapshot and
//! the generation seed so the bytes are reproducible from the tuple
//! (topology, technology, n, seed).

pub mod io;
pub mod normalize;

use crate::circuits::{
    evaluate_oracle, CircuitError, CircuitTopology, DesignPoint, TechnologyProfile,
};
use crate::numerics::Rng;
use thiserror::Error;

pub use io::{load_dataset, parse_dataset, render_dataset, save_dataset};
pub use normalize::NormStats;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("{kind} column {index} is constant; cannot normalize")]
    ConstantColumn { kind: &'static str, index: usize },
    #[error("metric column {index} is log-flagged but has value {value}")]
    NonPositiveLog { index: usize, value: f64 },
    #[error("requested {want} rows but dataset has {have}")]
    Oversubscribed { want: usize, have: usize },
    #[error("dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labeled design/performance table with its generating context.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub topology: CircuitTopology,
    pub technology: String,
    pub seed: u64,
    /// Row-per-design parameter values, length n_params each.
    pub designs: Vec<Vec<f64>>,
    /// Row-per-design metric values, length n_metrics each.
    pub metrics: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }
}

const SAMPLE_SALT: u64 = 0x7361_6d70;

/// Draws in-bounds design points: per dimension, Gaussian centered at
/// the range midpoint with σ = range/4, redrawn until inside the
/// bounds. Deterministic in (topology, seed).
pub fn sample_designs(topology: &CircuitTopology, n: usize, seed: u64) -> Vec<DesignPoint> {
    let mut rng = Rng::child(seed, SAMPLE_SALT);
    (0..n)
        .map(|_| {
            let values = topology
                .params
                .iter()
                .map(|p| {
                    let mid = 0.5 * (p.lower + p.upper);
                    let sigma = 0.25 * (p.upper - p.lower);
                    loop {
                        let v = mid + sigma * rng.gaussian();
                        if v >= p.lower && v <= p.upper {
                            return v;
                        }
                    }
                })
                .collect();
            DesignPoint { values }
        })
        .collect()
}

/// Samples `n` designs and labels them with the oracle.
pub fn build_dataset(
    topology: &CircuitTopology,
    tech: &TechnologyProfile,
    n: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    let designs = sample_designs(topology, n, seed);
    let mut metrics = Vec::with_capacity(n);
    for d in &designs {
        metrics.push(evaluate_oracle(topology, tech, d)?.values);
    }
    Ok(Dataset {
        topology: topology.clone(),
        technology: tech.name.clone(),
        seed,
        designs: designs.into_iter().map(|d| d.values).collect(),
        metrics,
    })
}

const SPLIT_SALT: u64 = 0x7370_6c69;

/// Disjoint train/test split by seeded shuffle. Both splits keep the
/// parent's schema and generation seed.
pub fn split(
    dataset: &Dataset,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if train + test > dataset.len() {
        return Err(DataError::Oversubscribed {
            want: train + test,
            have: dataset.len(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = Rng::child(seed, SPLIT_SALT);
    rng.shuffle(&mut order);

    let take = |idx: &[usize]| Dataset {
        topology: dataset.topology.clone(),
        technology: dataset.technology.clone(),
        seed: dataset.seed,
        designs: idx.iter().map(|&i| dataset.designs[i].clone()).collect(),
        metrics: idx.iter().map(|&i| dataset.metrics[i].clone()).collect(),
    };
    Ok((take(&order[..train]), take(&order[train..train + test])))
}
