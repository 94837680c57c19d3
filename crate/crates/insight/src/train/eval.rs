//! Held-out evaluation in normalized space.
//!
//! All errors are computed on normalized values so metrics with very
//! different physical scales weigh equally, and so the numbers line
//! up with the training loss. R-squared uses the test set's own mean
//! as the baseline.

use std::time::Instant;

use crate::data::Dataset;
use crate::model::{FcEnsemble, SequenceLayout, SurrogateCheckpoint};
use crate::numerics::{Route, Tensor};

use super::TrainError;

const EVAL_CHUNK: usize = 256;

/// How predictions are produced during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Every metric is predicted with the true values of all earlier
    /// metrics in the input sequence.
    TeacherForced,
    /// Metrics are decoded autoregressively; the first `known_prefix`
    /// metrics are taken from ground truth, the rest feed back the
    /// model's own predictions.
    Rollout { known_prefix: usize },
}

/// Per-metric and aggregate test-set scores.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metric_names: Vec<String>,
    /// R-squared per metric, normalized space. NaN when the metric
    /// was excluded.
    pub per_metric_r2: Vec<f64>,
    /// Mean squared error per metric, normalized space.
    pub per_metric_mse: Vec<f64>,
    /// Whether each metric counts toward the aggregates. Zero-variance
    /// test columns and echoed rollout prefixes do not.
    pub included: Vec<bool>,
    /// Uniform mean of R-squared over included metrics.
    pub aggregate_r2: f64,
    /// Uniform mean of MSE over included metrics.
    pub aggregate_mse: f64,
    pub n_samples: usize,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
}

/// R-squared and MSE of one prediction column against its truth.
/// The baseline for R-squared is the mean of `truth`.
pub fn r2_mse(pred: &[f64], truth: &[f64]) -> (f64, f64) {
    assert_eq!(pred.len(), truth.len(), "column lengths differ");
    let n = truth.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = truth.iter().sum::<f64>() / n as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        ss_res += (p - t) * (p - t);
        ss_tot += (t - mean) * (t - mean);
    }
    let mse = ss_res / n as f64;
    let r2 = if ss_tot == 0.0 {
        f64::NAN
    } else {
        1.0 - ss_res / ss_tot
    };
    (r2, mse)
}

fn check_layout(layout: &SequenceLayout, test: &Dataset) -> Result<(), TrainError> {
    let expect = SequenceLayout::from_topology(&test.topology);
    if *layout != expect {
        return Err(TrainError::LayoutMismatch(format!(
            "model expects {} params / {:?}, test set has {} params / {:?}",
            layout.n_params, layout.metric_names, expect.n_params, expect.metric_names
        )));
    }
    Ok(())
}

/// Assembles the report from normalized prediction and truth columns.
/// `echoed[i]` marks metrics that were inputs rather than predictions.
fn build_report(
    metric_names: &[String],
    preds: &[Vec<f64>],
    truths: &[Vec<f64>],
    echoed: &[bool],
    n_samples: usize,
    started: Instant,
) -> EvalReport {
    let m = metric_names.len();
    let mut per_metric_r2 = Vec::with_capacity(m);
    let mut per_metric_mse = Vec::with_capacity(m);
    let mut included = Vec::with_capacity(m);
    let mut warnings = Vec::new();
    for i in 0..m {
        let (r2, mse) = r2_mse(&preds[i], &truths[i]);
        if echoed[i] {
            per_metric_r2.push(f64::NAN);
            per_metric_mse.push(mse);
            included.push(false);
            continue;
        }
        if r2.is_nan() {
            warnings.push(format!(
                "metric {} has zero variance in the test set; excluded from aggregates",
                metric_names[i]
            ));
            included.push(false);
        } else {
            included.push(true);
        }
        per_metric_r2.push(r2);
        per_metric_mse.push(mse);
    }
    let count = included.iter().filter(|&&b| b).count().max(1) as f64;
    let aggregate_r2 = per_metric_r2
        .iter()
        .zip(&included)
        .filter(|(_, &inc)| inc)
        .map(|(&v, _)| v)
        .sum::<f64>()
        / count;
    let aggregate_mse = per_metric_mse
        .iter()
        .zip(&included)
        .filter(|(_, &inc)| inc)
        .map(|(&v, _)| v)
        .sum::<f64>()
        / count;
    EvalReport {
        metric_names: metric_names.to_vec(),
        per_metric_r2,
        per_metric_mse,
        included,
        aggregate_r2,
        aggregate_mse,
        n_samples,
        wall_seconds: started.elapsed().as_secs_f64(),
        warnings,
    }
}

/// Scores a surrogate checkpoint on a held-out set.
pub fn evaluate_surrogate(
    ckpt: &SurrogateCheckpoint,
    test: &Dataset,
    mode: EvalMode,
) -> Result<EvalReport, TrainError> {
    let started = Instant::now();
    check_layout(&ckpt.model.layout, test)?;
    if test.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let m = ckpt.model.layout.n_metrics;
    let k = ckpt.model.config.uncertainty_heads;
    let prefix = match mode {
        EvalMode::TeacherForced => 0,
        EvalMode::Rollout { known_prefix } => {
            if known_prefix > m {
                return Err(TrainError::BadConfig(format!(
                    "known prefix {known_prefix} exceeds {m} metrics"
                )));
            }
            known_prefix
        }
    };
    let mut preds = vec![Vec::with_capacity(test.len()); m];
    let mut truths = vec![Vec::with_capacity(test.len()); m];
    for row in &test.metrics {
        for (i, &v) in row.iter().enumerate() {
            truths[i].push(ckpt.stats.normalize_metric(i, v));
        }
    }

    match mode {
        EvalMode::TeacherForced => {
            for lo in (0..test.len()).step_by(EVAL_CHUNK) {
                let hi = (lo + EVAL_CHUNK).min(test.len());
                let batch = hi - lo;
                let mut values = Vec::with_capacity(batch * ckpt.model.layout.seq_len());
                for s in lo..hi {
                    let x = ckpt.stats.normalize_param_row(&test.designs[s]);
                    let y = ckpt.stats.normalize_metric_row(&test.metrics[s]);
                    values.extend_from_slice(&ckpt.model.tokens(&[x], &[y]));
                }
                let (outs, _) = ckpt.model.forward_batch(&values, batch, Route::Fast);
                for s in 0..batch {
                    for (i, col) in preds.iter_mut().enumerate() {
                        let mean =
                            outs.iter().map(|o| o.at(s, i)).sum::<f64>() / k as f64;
                        col.push(mean);
                    }
                }
            }
        }
        EvalMode::Rollout { .. } => {
            for lo in (0..test.len()).step_by(EVAL_CHUNK) {
                let hi = (lo + EVAL_CHUNK).min(test.len());
                let designs = &test.designs[lo..hi];
                let known: Vec<Vec<f64>> = test.metrics[lo..hi]
                    .iter()
                    .map(|row| row[..prefix].to_vec())
                    .collect();
                let batch = ckpt.rollout_batch(designs, &known, Route::Fast)?;
                for report in batch.reports {
                    for (i, col) in preds.iter_mut().enumerate() {
                        col.push(report.means_norm[i]);
                    }
                }
            }
        }
    }
    let echoed: Vec<bool> = (0..m).map(|i| i < prefix).collect();
    Ok(build_report(
        &ckpt.model.layout.metric_names,
        &preds,
        &truths,
        &echoed,
        test.len(),
        started,
    ))
}

/// Scores the FC ensemble baseline on a held-out set. The ensemble
/// predicts every metric jointly from the design alone, so there is
/// no decode mode.
pub fn evaluate_ensemble(
    ensemble: &FcEnsemble,
    test: &Dataset,
) -> Result<EvalReport, TrainError> {
    let started = Instant::now();
    check_layout(&ensemble.layout, test)?;
    if test.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let n = ensemble.layout.n_params;
    let m = ensemble.layout.n_metrics;
    let mut preds = vec![Vec::with_capacity(test.len()); m];
    let mut truths = vec![Vec::with_capacity(test.len()); m];
    for row in &test.metrics {
        for (i, &v) in row.iter().enumerate() {
            truths[i].push(ensemble.stats.normalize_metric(i, v));
        }
    }
    for lo in (0..test.len()).step_by(EVAL_CHUNK) {
        let hi = (lo + EVAL_CHUNK).min(test.len());
        let batch = hi - lo;
        let x = Tensor::from_vec(
            &[batch, n],
            test.designs[lo..hi]
                .iter()
                .flat_map(|row| ensemble.stats.normalize_param_row(row))
                .collect(),
        )
        .expect("design block");
        let out = ensemble.ensemble_forward(&x, Route::Fast);
        for s in 0..batch {
            for (i, col) in preds.iter_mut().enumerate() {
                col.push(out.at(s, i));
            }
        }
    }
    let echoed = vec![false; m];
    Ok(build_report(
        &ensemble.layout.metric_names,
        &preds,
        &truths,
        &echoed,
        test.len(),
        started,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{technology, topology};
    use crate::data::{build_dataset, split};
    use crate::model::InsightConfig;
    use crate::train::{train_insight, TrainRunConfig};

    #[test]
    fn hand_worked_column_scores() {
        let truth = [1.0, 2.0, 3.0];
        let pred = [1.1, 1.9, 3.2];
        let (r2, mse) = r2_mse(&pred, &truth);
        assert!((r2 - 0.97).abs() < 1e-12, "r2 = {r2}");
        assert!((mse - 0.02).abs() < 1e-12, "mse = {mse}");
    }

    #[test]
    fn perfect_predictions_score_one() {
        let truth = [0.3, -1.0, 2.5, 0.0];
        let (r2, mse) = r2_mse(&truth, &truth);
        assert_eq!(r2, 1.0);
        assert_eq!(mse, 0.0);
    }

    #[test]
    fn predicting_the_mean_scores_zero() {
        let truth = [1.0, 2.0, 3.0, 6.0];
        let mean = 3.0;
        let pred = [mean; 4];
        let (r2, _) = r2_mse(&pred, &truth);
        assert!(r2.abs() < 1e-12, "r2 = {r2}");
    }

    #[test]
    fn constant_truth_column_is_flagged_not_scored() {
        let truth = [2.0, 2.0, 2.0];
        let pred = [2.0, 2.1, 1.9];
        let (r2, mse) = r2_mse(&pred, &truth);
        assert!(r2.is_nan());
        assert!(mse > 0.0);
    }

    fn trained_ota() -> (crate::model::SurrogateCheckpoint, crate::data::Dataset) {
        let topo = topology("ota2_nmos").unwrap();
        let tech = technology("synth45").unwrap();
        let data = build_dataset(&topo, &tech, 80, 60).unwrap();
        let (train, test) = split(&data, 60, 20, 61).unwrap();
        let config = InsightConfig {
            d_model: 16,
            heads: 2,
            layers: 2,
            ff_hidden: 32,
            uncertainty_heads: 3,
            ..InsightConfig::default()
        };
        let run = TrainRunConfig {
            epochs: 30,
            batch_size: 16,
            seed: 62,
            ..TrainRunConfig::default()
        };
        let (ckpt, _) = train_insight(&train, &config, &run).unwrap();
        (ckpt, test)
    }

    #[test]
    fn teacher_forced_report_is_consistent() {
        let (ckpt, test) = trained_ota();
        let report = evaluate_surrogate(&ckpt, &test, EvalMode::TeacherForced).unwrap();
        assert_eq!(report.n_samples, test.len());
        assert_eq!(report.metric_names.len(), 4);
        assert!(report.included.iter().all(|&b| b), "{:?}", report.warnings);
        let mean_r2 = report.per_metric_r2.iter().sum::<f64>() / 4.0;
        assert!((report.aggregate_r2 - mean_r2).abs() < 1e-12);
        assert!(report.per_metric_mse.iter().all(|&v| v.is_finite() && v >= 0.0));
        assert!(report.wall_seconds >= 0.0);
    }

    #[test]
    fn rollout_prefix_metrics_are_not_counted() {
        let (ckpt, test) = trained_ota();
        let report = evaluate_surrogate(
            &ckpt,
            &test,
            EvalMode::Rollout { known_prefix: 2 },
        )
        .unwrap();
        assert!(!report.included[0] && !report.included[1]);
        assert!(report.included[2] && report.included[3]);
        assert!(report.per_metric_r2[0].is_nan());
        // Echoed inputs reproduce the truth exactly.
        assert_eq!(report.per_metric_mse[0], 0.0);
        let mean_r2 = (report.per_metric_r2[2] + report.per_metric_r2[3]) / 2.0;
        assert!((report.aggregate_r2 - mean_r2).abs() < 1e-12);
    }

    #[test]
    fn full_prefix_rollout_reproduces_the_test_set() {
        let (ckpt, test) = trained_ota();
        let report = evaluate_surrogate(
            &ckpt,
            &test,
            EvalMode::Rollout { known_prefix: 4 },
        )
        .unwrap();
        assert!(report.per_metric_mse.iter().all(|&v| v == 0.0));
        assert!(report.included.iter().all(|&b| !b));
    }

    #[test]
    fn oversized_prefix_is_rejected() {
        let (ckpt, test) = trained_ota();
        assert!(matches!(
            evaluate_surrogate(&ckpt, &test, EvalMode::Rollout { known_prefix: 5 }),
            Err(TrainError::BadConfig(_))
        ));
    }

    #[test]
    fn wrong_topology_is_rejected() {
        let (ckpt, _) = trained_ota();
        let tia = topology("tia2").unwrap();
        let tech = technology("synth45").unwrap();
        let other = build_dataset(&tia, &tech, 10, 63).unwrap();
        assert!(matches!(
            evaluate_surrogate(&ckpt, &other, EvalMode::TeacherForced),
            Err(TrainError::LayoutMismatch(_))
        ));
    }
}
