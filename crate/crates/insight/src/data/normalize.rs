//! Column normalization: optional log10, then z-score.
//!
//! Statistics are fit on the training split only. Metrics marked
//! log-scale in the schema are transformed to log10 before the mean
//! and standard deviation are taken, so decade-spanning columns come
//! out with comparable error scales.

use super::{DataError, Dataset};
use serde::{Deserialize, Serialize};

/// Per-column statistics for design parameters and metrics, with the
/// metric log flags copied from the schema they were fit against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub param_mean: Vec<f64>,
    pub param_std: Vec<f64>,
    pub metric_mean: Vec<f64>,
    pub metric_std: Vec<f64>,
    pub metric_log: Vec<bool>,
}

fn column_stats(
    rows: &[Vec<f64>],
    col: usize,
    kind: &'static str,
) -> Result<(f64, f64), DataError> {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[col]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[col] - mean) * (r[col] - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    // Relative to the column's own magnitude: raw values may sit at
    // physical scales like 1e-12 farads where any absolute floor lies.
    if std <= 1e-12 * mean.abs() || !std.is_finite() {
        return Err(DataError::ConstantColumn { kind, index: col });
    }
    Ok((mean, std))
}

impl NormStats {
    /// Fits statistics on (what should be) the training split.
    pub fn fit(train: &Dataset) -> Result<Self, DataError> {
        let n_params = train.topology.n_params();
        let n_metrics = train.topology.n_metrics();
        let metric_log: Vec<bool> = train
            .topology
            .schema
            .metrics
            .iter()
            .map(|m| m.log_scale)
            .collect();

        let mut param_mean = Vec::with_capacity(n_params);
        let mut param_std = Vec::with_capacity(n_params);
        for c in 0..n_params {
            let (m, s) = column_stats(&train.designs, c, "parameter")?;
            param_mean.push(m);
            param_std.push(s);
        }

        // Log-flagged metric columns are transformed up front; a
        // non-positive value there is a modeling bug, not data noise.
        let mut transformed: Vec<Vec<f64>> = Vec::with_capacity(train.metrics.len());
        for row in &train.metrics {
            let mut t = row.clone();
            for (c, v) in t.iter_mut().enumerate() {
                if metric_log[c] {
                    if *v <= 0.0 {
                        return Err(DataError::NonPositiveLog { index: c, value: *v });
                    }
                    *v = v.log10();
                }
            }
            transformed.push(t);
        }
        let mut metric_mean = Vec::with_capacity(n_metrics);
        let mut metric_std = Vec::with_capacity(n_metrics);
        for c in 0..n_metrics {
            let (m, s) = column_stats(&transformed, c, "metric")?;
            metric_mean.push(m);
            metric_std.push(s);
        }

        Ok(Self {
            param_mean,
            param_std,
            metric_mean,
            metric_std,
            metric_log,
        })
    }

    pub fn normalize_param(&self, col: usize, v: f64) -> f64 {
        (v - self.param_mean[col]) / self.param_std[col]
    }

    pub fn denormalize_param(&self, col: usize, z: f64) -> f64 {
        z * self.param_std[col] + self.param_mean[col]
    }

    pub fn normalize_metric(&self, col: usize, v: f64) -> f64 {
        let t = if self.metric_log[col] { v.log10() } else { v };
        (t - self.metric_mean[col]) / self.metric_std[col]
    }

    pub fn denormalize_metric(&self, col: usize, z: f64) -> f64 {
        let t = z * self.metric_std[col] + self.metric_mean[col];
        if self.metric_log[col] {
            10f64.powf(t)
        } else {
            t
        }
    }

    pub fn normalize_param_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(c, &v)| self.normalize_param(c, v))
            .collect()
    }

    pub fn normalize_metric_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(c, &v)| self.normalize_metric(c, v))
            .collect()
    }

    pub fn denormalize_metric_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(c, &z)| self.denormalize_metric(c, z))
            .collect()
    }
}
