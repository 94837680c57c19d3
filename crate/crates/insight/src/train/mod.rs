//! Training loops for both model families, evaluation, metric-order
//! selection, and cross-technology transfer.
//!
//! Everything here is deterministic under the run seed: the
//! validation carve-out, bootstrap head masks, weight init, and every
//! epoch's shuffle derive from it. Normalization statistics are fit
//! on the rows actually trained on, never on the validation carve-out
//! or the test split.

pub mod eval;
pub mod order;

use crate::circuits::CircuitError;
use crate::data::{DataError, Dataset, NormStats};
use crate::model::{
    masked_mse, FcEnsemble, FcEnsembleConfig, InsightConfig, ModelError, RunMetadata,
    SequenceLayout, Surrogate, SurrogateCheckpoint,
};
use crate::numerics::{Adam, CosineSchedule, Rng, Route, Tensor};
use thiserror::Error;

pub use eval::{evaluate_ensemble, evaluate_surrogate, r2_mse, EvalMode, EvalReport};
pub use order::order_metrics;

const VAL_SALT: u64 = 0x7661_6c73;
const MASK_SALT: u64 = 0x6d61_736b;
const INIT_SALT: u64 = 0x696e_6974;
const SHUFFLE_SALT: u64 = 0x7368_7566;
const MEMBER_SALT: u64 = 0x6d62_7273;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("bad run config: {0}")]
    BadConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint layout does not match dataset: {0}")]
    LayoutMismatch(String),
    #[error("metric order: {0}")]
    Order(String),
}

/// Knobs for one training run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainRunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate; also the constant rate when no annealing.
    pub lr: f64,
    /// Floor the cosine schedule decays to.
    pub lr_min: f64,
    /// Epochs over which the rate anneals to `lr_min`; 0 keeps the
    /// rate constant at `lr`.
    pub cosine_horizon_epochs: usize,
    /// Fraction of the given dataset carved off for validation.
    pub val_fraction: f64,
    /// Stop after this many epochs without a validation improvement;
    /// 0 disables early stopping.
    pub patience: usize,
    /// Probability a (sample, head) pair is kept in the bootstrap
    /// mask; samples always keep at least one head.
    pub mask_keep: f64,
    pub seed: u64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            batch_size: 64,
            lr: 1e-3,
            lr_min: 1e-5,
            cosine_horizon_epochs: 120,
            val_fraction: 0.1,
            patience: 0,
            mask_keep: 0.8,
            seed: 0,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch size must be >= 1".into()));
        }
        if !(0.0..=0.5).contains(&self.val_fraction) {
            return Err(TrainError::BadConfig(format!(
                "validation fraction {} outside [0, 0.5]",
                self.val_fraction
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::BadConfig("learning rate must be positive".into()));
        }
        if !(0.0 < self.mask_keep && self.mask_keep <= 1.0) {
            return Err(TrainError::BadConfig(format!(
                "mask keep probability {} outside (0, 1]",
                self.mask_keep
            )));
        }
        Ok(())
    }
}

/// One line of loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Normalized rows plus precomputed token streams for one split.
struct PreparedSplit {
    tokens: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

fn prepare_split(
    model: &Surrogate,
    stats: &NormStats,
    designs: &[Vec<f64>],
    metrics: &[Vec<f64>],
) -> PreparedSplit {
    let tokens = designs
        .iter()
        .zip(metrics)
        .map(|(x, y)| {
            let xn = stats.normalize_param_row(x);
            let yn = stats.normalize_metric_row(y);
            model.tokens(&[xn], &[yn])
        })
        .collect();
    let targets = metrics
        .iter()
        .map(|y| stats.normalize_metric_row(y))
        .collect();
    PreparedSplit { tokens, targets }
}

/// Teacher-forced loss over a whole split with all heads active,
/// evaluated in chunks.
fn teacher_loss(model: &Surrogate, split: &PreparedSplit, chunk: usize) -> f64 {
    let m = model.layout.n_metrics;
    let k = model.config.uncertainty_heads;
    let mut total = 0.0;
    let mut rows = 0usize;
    for block in split.tokens.chunks(chunk) {
        let lo = rows;
        let values: Vec<f64> = block.concat();
        let batch = block.len();
        let (outs, _) = model.forward_batch(&values, batch, Route::Fast);
        let targets = Tensor::from_vec(
            &[batch, m],
            split.targets[lo..lo + batch].concat(),
        )
        .expect("target block");
        let masks = vec![1.0; batch * k];
        let (loss, _) = masked_mse(&outs, &targets, &masks);
        total += loss * batch as f64;
        rows += batch;
    }
    total / rows.max(1) as f64
}

/// Deterministic bootstrap masks: one 0/1 weight per (sample, head),
/// with at least one active head per sample.
fn bootstrap_masks(n: usize, heads: usize, keep: f64, seed: u64) -> Vec<f64> {
    let mut rng = Rng::child(seed, MASK_SALT);
    let mut masks = vec![0.0; n * heads];
    for s in 0..n {
        loop {
            let row = &mut masks[s * heads..(s + 1) * heads];
            for v in row.iter_mut() {
                *v = if rng.uniform() < keep { 1.0 } else { 0.0 };
            }
            if row.iter().any(|&v| v == 1.0) {
                break;
            }
        }
    }
    masks
}

/// Carves a validation split off the dataset, deterministically.
fn carve(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let n = dataset.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = Rng::child(seed, VAL_SALT);
    rng.shuffle(&mut idx);
    let val = ((n as f64) * fraction).round() as usize;
    let val_idx = idx[..val].to_vec();
    let train_idx = idx[val..].to_vec();
    (train_idx, val_idx)
}

fn gather_rows(rows: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

/// Shared inner loop: minibatch teacher-forced training of an
/// already-initialized (or warm-started) model. Returns the
/// best-validation checkpoint and the per-epoch history. When no
/// statistics are passed in, they are fit on the training carve-out.
fn fit_surrogate(
    mut model: Surrogate,
    stats_override: Option<NormStats>,
    dataset: &Dataset,
    run: &TrainRunConfig,
) -> Result<(SurrogateCheckpoint, Vec<EpochStats>), TrainError> {
    run.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let (train_idx, val_idx) = carve(dataset, run.val_fraction, run.seed);
    let train_designs = gather_rows(&dataset.designs, &train_idx);
    let train_metrics = gather_rows(&dataset.metrics, &train_idx);
    let stats = match stats_override {
        Some(stats) => stats,
        None => {
            let fit_view = Dataset {
                topology: dataset.topology.clone(),
                technology: dataset.technology.clone(),
                seed: dataset.seed,
                designs: train_designs.clone(),
                metrics: train_metrics.clone(),
            };
            NormStats::fit(&fit_view)?
        }
    };
    let train = prepare_split(&model, &stats, &train_designs, &train_metrics);
    let val = prepare_split(
        &model,
        &stats,
        &gather_rows(&dataset.designs, &val_idx),
        &gather_rows(&dataset.metrics, &val_idx),
    );

    let n_train = train.tokens.len();
    let m = model.layout.n_metrics;
    let k = model.config.uncertainty_heads;
    let masks = bootstrap_masks(n_train, k, run.mask_keep, run.seed);
    let steps_per_epoch = n_train.div_ceil(run.batch_size);
    let schedule = if run.cosine_horizon_epochs > 0 {
        Some(CosineSchedule {
            lr_max: run.lr,
            lr_min: run.lr_min,
            total_steps: run.cosine_horizon_epochs * steps_per_epoch,
        })
    } else {
        None
    };
    let mut adam = Adam::new(Default::default());
    let mut history = Vec::with_capacity(run.epochs);
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_train = f64::NAN;
    let mut since_best = 0usize;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..n_train).collect();

    for epoch in 0..run.epochs {
        let mut rng = Rng::child(run.seed, SHUFFLE_SALT ^ epoch as u64);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_lr = run.lr;
        for batch_idx in order.chunks(run.batch_size) {
            let batch = batch_idx.len();
            let mut values = Vec::with_capacity(batch * model.layout.seq_len());
            let mut targets = Vec::with_capacity(batch * m);
            let mut batch_masks = Vec::with_capacity(batch * k);
            for &i in batch_idx {
                values.extend_from_slice(&train.tokens[i]);
                targets.extend_from_slice(&train.targets[i]);
                batch_masks.extend_from_slice(&masks[i * k..(i + 1) * k]);
            }
            let targets = Tensor::from_vec(&[batch, m], targets).expect("batch targets");
            model.zero_grads();
            let (outs, caches) = model.forward_batch(&values, batch, Route::Fast);
            let (loss, grads) = masked_mse(&outs, &targets, &batch_masks);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, loss });
            }
            model.backward_batch(&caches, &grads);
            let lr = schedule.as_ref().map_or(run.lr, |s| s.lr(step));
            epoch_lr = lr;
            let mut params: Vec<&mut crate::numerics::Parameter> = model
                .param_slots()
                .into_iter()
                .map(|(_, p)| p)
                .collect();
            adam.step(lr, &mut params);
            epoch_loss += loss * batch as f64;
            step += 1;
        }
        let train_loss = epoch_loss / n_train as f64;
        let val_loss = if val.tokens.is_empty() {
            train_loss
        } else {
            teacher_loss(&model, &val, 256)
        };
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: val_loss,
            });
        }
        history.push(EpochStats {
            epoch,
            lr: epoch_lr,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_train = train_loss;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if run.patience > 0 && since_best >= run.patience {
                break;
            }
        }
    }

    if history.is_empty() {
        // Zero-epoch run: keep the (possibly warm-started) weights.
        best = model;
        best_val = if val.tokens.is_empty() {
            f64::NAN
        } else {
            teacher_loss(&best, &val, 256)
        };
    }
    let metadata = RunMetadata {
        topology: dataset.topology.name.clone(),
        technology: dataset.technology.clone(),
        seed: run.seed,
        epochs: history.len(),
        final_train_loss: best_train,
        final_val_loss: best_val,
        ..RunMetadata::default()
    };
    Ok((
        SurrogateCheckpoint {
            model: best,
            stats,
            metadata,
        },
        history,
    ))
}

/// Trains the autoregressive surrogate from scratch.
pub fn train_insight(
    dataset: &Dataset,
    config: &InsightConfig,
    run: &TrainRunConfig,
) -> Result<(SurrogateCheckpoint, Vec<EpochStats>), TrainError> {
    let layout = SequenceLayout::from_topology(&dataset.topology);
    let model = Surrogate::new(
        config.clone(),
        layout,
        crate::numerics::rng::derive_seed(run.seed, INIT_SALT),
    )?;
    fit_surrogate(model, None, dataset, run)
}

/// Warm-starts from an existing checkpoint and fine-tunes on a
/// dataset from another technology. Normalization statistics are
/// refit on the new data; with zero epochs the weights pass through
/// untouched.
pub fn transfer_finetune(
    source: &SurrogateCheckpoint,
    target: &Dataset,
    run: &TrainRunConfig,
) -> Result<(SurrogateCheckpoint, Vec<EpochStats>), TrainError> {
    check_transfer_layout(source, target)?;
    fit_surrogate(source.model.clone(), None, target, run)
}

/// Fine-tunes on new same-technology rows while keeping the source
/// checkpoint's normalization statistics. Used when the new data is
/// far too small to re-estimate column statistics from.
pub fn finetune_keep_stats(
    source: &SurrogateCheckpoint,
    target: &Dataset,
    run: &TrainRunConfig,
) -> Result<(SurrogateCheckpoint, Vec<EpochStats>), TrainError> {
    check_transfer_layout(source, target)?;
    fit_surrogate(
        source.model.clone(),
        Some(source.stats.clone()),
        target,
        run,
    )
}

fn check_transfer_layout(
    source: &SurrogateCheckpoint,
    target: &Dataset,
) -> Result<(), TrainError> {
    let layout = SequenceLayout::from_topology(&target.topology);
    if layout != source.model.layout {
        return Err(TrainError::LayoutMismatch(format!(
            "source trained for {} params / {:?}, target is {} params / {:?}",
            source.model.layout.n_params,
            source.model.layout.metric_names,
            layout.n_params,
            layout.metric_names
        )));
    }
    Ok(())
}

/// Per-member and ensemble validation summary.
#[derive(Debug, Clone)]
pub struct EnsembleReport {
    pub member_val_mse: Vec<f64>,
    pub ensemble_val_mse: f64,
    pub history: Vec<EpochStats>,
}

fn mse_of(pred: &Tensor, truth: &Tensor) -> f64 {
    let mut total = 0.0;
    for (p, t) in pred.data().iter().zip(truth.data()) {
        let e = p - t;
        total += e * e;
    }
    total / pred.len().max(1) as f64
}

/// Trains the FC-ensemble baseline: every member sees the same rows
/// in its own order, from its own initialization.
pub fn train_fc_ensemble(
    dataset: &Dataset,
    config: &FcEnsembleConfig,
    run: &TrainRunConfig,
) -> Result<(FcEnsemble, EnsembleReport), TrainError> {
    run.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if config.members == 0 {
        return Err(TrainError::BadConfig("ensemble needs >= 1 member".into()));
    }
    let layout = SequenceLayout::from_topology(&dataset.topology);
    let (train_idx, val_idx) = carve(dataset, run.val_fraction, run.seed);
    let train_designs = gather_rows(&dataset.designs, &train_idx);
    let train_metrics = gather_rows(&dataset.metrics, &train_idx);
    let fit_view = Dataset {
        topology: dataset.topology.clone(),
        technology: dataset.technology.clone(),
        seed: dataset.seed,
        designs: train_designs.clone(),
        metrics: train_metrics.clone(),
    };
    let stats = NormStats::fit(&fit_view)?;
    let n = layout.n_params;
    let m = layout.n_metrics;
    let to_rows = |designs: &[Vec<f64>], metrics: &[Vec<f64>]| {
        let x = Tensor::from_vec(
            &[designs.len(), n],
            designs
                .iter()
                .flat_map(|r| stats.normalize_param_row(r))
                .collect(),
        )
        .expect("design rows");
        let y = Tensor::from_vec(
            &[metrics.len(), m],
            metrics
                .iter()
                .flat_map(|r| stats.normalize_metric_row(r))
                .collect(),
        )
        .expect("metric rows");
        (x, y)
    };
    let (train_x, train_y) = to_rows(&train_designs, &train_metrics);
    let (val_x, val_y) = to_rows(
        &gather_rows(&dataset.designs, &val_idx),
        &gather_rows(&dataset.metrics, &val_idx),
    );

    let mut members = FcEnsemble::init_members(
        config,
        &layout,
        crate::numerics::rng::derive_seed(run.seed, MEMBER_SALT),
    );
    let n_train = train_x.rows();
    let steps_per_epoch = n_train.div_ceil(run.batch_size);
    let schedule = if run.cosine_horizon_epochs > 0 {
        Some(CosineSchedule {
            lr_max: run.lr,
            lr_min: run.lr_min,
            total_steps: run.cosine_horizon_epochs * steps_per_epoch,
        })
    } else {
        None
    };
    let mut history = Vec::with_capacity(run.epochs);
    let mut optimizers: Vec<Adam> = (0..config.members)
        .map(|_| Adam::new(Default::default()))
        .collect();
    let mut steps = vec![0usize; config.members];
    for epoch in 0..run.epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_lr = run.lr;
        for (j, member) in members.iter_mut().enumerate() {
            let mut order: Vec<usize> = (0..n_train).collect();
            let mut rng = Rng::child(
                run.seed,
                SHUFFLE_SALT ^ ((j as u64) << 32) ^ epoch as u64,
            );
            rng.shuffle(&mut order);
            for batch_idx in order.chunks(run.batch_size) {
                let batch = batch_idx.len();
                let mut xb = Vec::with_capacity(batch * n);
                let mut yb = Vec::with_capacity(batch * m);
                for &i in batch_idx {
                    xb.extend_from_slice(train_x.row(i));
                    yb.extend_from_slice(train_y.row(i));
                }
                let xb = Tensor::from_vec(&[batch, n], xb).expect("x batch");
                let yb = Tensor::from_vec(&[batch, m], yb).expect("y batch");
                for (_, p) in member.param_slots(j) {
                    p.zero_grad();
                }
                let (out, cache) = member.forward_cached(&xb, Route::Fast);
                let count = out.len() as f64;
                let mut d = Tensor::zeros(&[batch, m]);
                let mut loss = 0.0;
                for r in 0..batch {
                    for c in 0..m {
                        let e = out.at(r, c) - yb.at(r, c);
                        loss += e * e;
                        d.set(r, c, 2.0 * e / count);
                    }
                }
                loss /= count;
                if !loss.is_finite() {
                    return Err(TrainError::Diverged { epoch, loss });
                }
                member.backward(&cache, &d);
                let lr = schedule.as_ref().map_or(run.lr, |s| s.lr(steps[j]));
                epoch_lr = lr;
                let mut params: Vec<&mut crate::numerics::Parameter> = member
                    .param_slots(j)
                    .into_iter()
                    .map(|(_, p)| p)
                    .collect();
                optimizers[j].step(lr, &mut params);
                epoch_loss += loss * batch as f64;
                steps[j] += 1;
            }
        }
        let train_loss = epoch_loss / (n_train * config.members) as f64;
        let val_loss = if val_x.rows() == 0 {
            train_loss
        } else {
            let mut sum = Tensor::zeros(&[val_x.rows(), m]);
            for member in &members {
                sum.add_assign(&member.forward(&val_x, Route::Fast));
            }
            sum.scale(1.0 / config.members as f64);
            mse_of(&sum, &val_y)
        };
        history.push(EpochStats {
            epoch,
            lr: epoch_lr,
            train_loss,
            val_loss,
        });
    }

    let ensemble = FcEnsemble {
        config: config.clone(),
        layout,
        stats,
        metadata: RunMetadata {
            topology: dataset.topology.name.clone(),
            technology: dataset.technology.clone(),
            seed: run.seed,
            epochs: history.len(),
            final_train_loss: history.last().map_or(f64::NAN, |h| h.train_loss),
            final_val_loss: history.last().map_or(f64::NAN, |h| h.val_loss),
            ..RunMetadata::default()
        },
        members,
    };
    let (member_val_mse, ensemble_val_mse) = if val_x.rows() == 0 {
        (vec![f64::NAN; config.members], f64::NAN)
    } else {
        let per: Vec<f64> = ensemble
            .members
            .iter()
            .map(|member| mse_of(&member.forward(&val_x, Route::Fast), &val_y))
            .collect();
        let mean = ensemble.ensemble_forward(&val_x, Route::Fast);
        (per, mse_of(&mean, &val_y))
    };
    Ok((
        ensemble,
        EnsembleReport {
            member_val_mse,
            ensemble_val_mse,
            history,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{technology, topology};
    use crate::data::build_dataset;

    fn tiny_config() -> InsightConfig {
        InsightConfig {
            d_model: 16,
            heads: 2,
            layers: 2,
            ff_hidden: 32,
            uncertainty_heads: 3,
            ..InsightConfig::default()
        }
    }

    #[test]
    fn overfits_ten_samples() {
        let topo = topology("ota2_nmos").unwrap();
        let tech = technology("synth45").unwrap();
        let data = build_dataset(&topo, &tech, 10, 40).unwrap();
        let run = TrainRunConfig {
            epochs: 400,
            batch_size: 10,
            lr: 3e-3,
            lr_min: 1e-4,
            cosine_horizon_epochs: 400,
            val_fraction: 0.0,
            mask_keep: 1.0,
            seed: 1,
            ..TrainRunConfig::default()
        };
        let (_, history) = train_insight(&data, &tiny_config(), &run).unwrap();
        let last = history.last().unwrap();
        assert!(
            last.train_loss < 1e-3,
            "memorization stalled at {}",
            last.train_loss
        );
    }

    #[test]
    fn histories_are_deterministic() {
        let topo = topology("comparator").unwrap();
        let tech = technology("synth45").unwrap();
        let data = build_dataset(&topo, &tech, 40, 41).unwrap();
        let run = TrainRunConfig {
            epochs: 3,
            batch_size: 8,
            seed: 7,
            ..TrainRunConfig::default()
        };
        let (_, h1) = train_insight(&data, &tiny_config(), &run).unwrap();
        let (_, h2) = train_insight(&data, &tiny_config(), &run).unwrap();
        assert_eq!(h1.len(), h2.len());
        for (a, b) in h1.iter().zip(&h2) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.val_loss.to_bits(), b.val_loss.to_bits());
        }
        let run3 = TrainRunConfig { seed: 8, ..run };
        let (_, h3) = train_insight(&data, &tiny_config(), &run3).unwrap();
        assert_ne!(
            h1[0].train_loss.to_bits(),
            h3[0].train_loss.to_bits(),
            "different seeds should shuffle differently"
        );
    }

    #[test]
    fn returned_checkpoint_has_minimum_validation_loss() {
        let topo = topology("level_shifter").unwrap();
        let tech = technology("synth180").unwrap();
        let data = build_dataset(&topo, &tech, 60, 43).unwrap();
        let run = TrainRunConfig {
            epochs: 12,
            batch_size: 16,
            val_fraction: 0.2,
            seed: 3,
            ..TrainRunConfig::default()
        };
        let (ckpt, history) = train_insight(&data, &tiny_config(), &run).unwrap();
        let min_val = history
            .iter()
            .map(|h| h.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(ckpt.metadata.final_val_loss, min_val);
    }

    #[test]
    fn divergence_is_reported_not_propagated_as_nan() {
        let topo = topology("ota2_nmos").unwrap();
        let tech = technology("synth45").unwrap();
        let data = build_dataset(&topo, &tech, 24, 44).unwrap();
        // A step this size throws the weights past 1e150, so the next
        // forward pass overflows f64 and the loss stops being finite.
        let run = TrainRunConfig {
            epochs: 5,
            batch_size: 8,
            lr: 1e160,
            cosine_horizon_epochs: 0,
            val_fraction: 0.0,
            seed: 2,
            ..TrainRunConfig::default()
        };
        match train_insight(&data, &tiny_config(), &run) {
            Err(TrainError::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn bootstrap_masks_leave_every_sample_covered() {
        let masks = bootstrap_masks(500, 5, 0.5, 99);
        for s in 0..500 {
            let row = &masks[s * 5..(s + 1) * 5];
            assert!(row.iter().any(|&v| v == 1.0), "sample {s} fully masked");
        }
        let again = bootstrap_masks(500, 5, 0.5, 99);
        assert_eq!(masks, again);
        assert!(masks.iter().any(|&v| v == 0.0), "keep=0.5 never dropped");
    }

    #[test]
    fn fc_members_differ_and_ensemble_beats_worst_member() {
        let topo = topology("comparator").unwrap();
        let tech = technology("synth130").unwrap();
        let data = build_dataset(&topo, &tech, 120, 45).unwrap();
        let config = FcEnsembleConfig {
            members: 3,
            hidden_layers: 2,
            hidden_dim: 24,
        };
        let run = TrainRunConfig {
            epochs: 30,
            batch_size: 16,
            cosine_horizon_epochs: 0,
            val_fraction: 0.2,
            seed: 11,
            ..TrainRunConfig::default()
        };
        let (ensemble, report) = train_fc_ensemble(&data, &config, &run).unwrap();
        let a = ensemble.members[0].layers[0].weight.value.data();
        let b = ensemble.members[1].layers[0].weight.value.data();
        assert_ne!(a, b, "members converged to identical weights");
        let worst = report
            .member_val_mse
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        assert!(
            report.ensemble_val_mse <= worst + 1e-15,
            "ensemble {} vs worst member {}",
            report.ensemble_val_mse,
            worst
        );
    }

    #[test]
    fn fc_training_is_deterministic() {
        let topo = topology("tia2").unwrap();
        let tech = technology("synth130").unwrap();
        let data = build_dataset(&topo, &tech, 40, 46).unwrap();
        let config = FcEnsembleConfig {
            members: 2,
            hidden_layers: 1,
            hidden_dim: 8,
        };
        let run = TrainRunConfig {
            epochs: 4,
            batch_size: 8,
            cosine_horizon_epochs: 0,
            seed: 21,
            ..TrainRunConfig::default()
        };
        let (_, r1) = train_fc_ensemble(&data, &config, &run).unwrap();
        let (_, r2) = train_fc_ensemble(&data, &config, &run).unwrap();
        for (a, b) in r1.history.iter().zip(&r2.history) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        }
    }

    #[test]
    fn transfer_with_zero_epochs_keeps_weights_and_refits_stats() {
        let topo = topology("ota2_nmos").unwrap();
        let t45 = technology("synth45").unwrap();
        let t130 = technology("synth130").unwrap();
        let source_data = build_dataset(&topo, &t45, 50, 47).unwrap();
        let target_data = build_dataset(&topo, &t130, 50, 48).unwrap();
        let run = TrainRunConfig {
            epochs: 2,
            batch_size: 16,
            seed: 31,
            ..TrainRunConfig::default()
        };
        let (source, _) = train_insight(&source_data, &tiny_config(), &run).unwrap();
        let frozen = TrainRunConfig {
            epochs: 0,
            ..run.clone()
        };
        let (mut moved, history) = transfer_finetune(&source, &target_data, &frozen).unwrap();
        assert!(history.is_empty());
        let mut src = source.model.clone();
        for ((an, ap), (bn, bp)) in src.param_slots().into_iter().zip(moved.model.param_slots()) {
            assert_eq!(an, bn);
            for (x, y) in ap.value.data().iter().zip(bp.value.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "weights moved in {an}");
            }
        }
        assert_ne!(
            source.stats.metric_mean, moved.stats.metric_mean,
            "stats should come from the target technology"
        );
        assert_eq!(moved.metadata.technology, "synth130");
    }

    #[test]
    fn transfer_rejects_layout_mismatch() {
        let ota = topology("ota2_nmos").unwrap();
        let tia = topology("tia2").unwrap();
        let t45 = technology("synth45").unwrap();
        let run = TrainRunConfig {
            epochs: 1,
            batch_size: 8,
            seed: 5,
            ..TrainRunConfig::default()
        };
        let (source, _) = train_insight(
            &build_dataset(&ota, &t45, 30, 49).unwrap(),
            &tiny_config(),
            &run,
        )
        .unwrap();
        let target = build_dataset(&tia, &t45, 30, 50).unwrap();
        assert!(matches!(
            transfer_finetune(&source, &target, &run).unwrap_err(),
            TrainError::LayoutMismatch(_)
        ));
    }

    #[test]
    fn early_stopping_respects_patience() {
        let topo = topology("comparator").unwrap();
        let tech = technology("synth45").unwrap();
        let data = build_dataset(&topo, &tech, 40, 51).unwrap();
        let run = TrainRunConfig {
            epochs: 200,
            batch_size: 8,
            lr: 1e-2,
            cosine_horizon_epochs: 0,
            val_fraction: 0.25,
            patience: 3,
            seed: 13,
            ..TrainRunConfig::default()
        };
        let (_, history) = train_insight(&data, &tiny_config(), &run).unwrap();
        assert!(
            history.len() < 200,
            "patience never triggered over {} epochs",
            history.len()
        );
    }

    #[test]
    fn bad_configs_are_rejected() {
        let bad_batch = TrainRunConfig {
            batch_size: 0,
            ..TrainRunConfig::default()
        };
        assert!(bad_batch.validate().is_err());
        let bad_val = TrainRunConfig {
            val_fraction: 0.7,
            ..TrainRunConfig::default()
        };
        assert!(bad_val.validate().is_err());
    }
}
