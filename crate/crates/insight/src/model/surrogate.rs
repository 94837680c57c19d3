//! The autoregressive surrogate: token embedding, decoder stack,
//! final norm, and a bank of scalar output heads whose spread doubles
//! as an uncertainty estimate.
//!
//! Sequences follow one fixed layout per topology: design parameters
//! first, then the metrics in schema order, each token a single
//! normalized scalar lifted into model space by a shared linear map
//! plus a learned per-position embedding. The hidden state one
//! position before metric i carries its prediction.
//!
//! Two inference paths produce identical bits: a full re-forward per
//! decode step on the reference route (single designs), and a
//! KV-cached incremental decode on the fast route (batches). Keeping
//! them interchangeable is what the bit-identity tests downstream
//! lean on.

use crate::data::NormStats;
use crate::model::{InsightConfig, ModelError, RunMetadata, SequenceLayout};
use crate::numerics::layers::BlockCache;
use crate::numerics::{
    grad_check, DecoderBlock, DiffModel, GradCheckConfig, GradCheckReport, KvCache, LayerNorm,
    Linear, Parameter, Rng, Route, Tensor,
};

/// Decoder-only network with K scalar output heads.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub config: InsightConfig,
    pub layout: SequenceLayout,
    /// Shared lift of a scalar token into model space: v * w + b.
    pub lift_w: Parameter,
    pub lift_b: Parameter,
    /// Learned embedding per sequence position, [seq_len, d].
    pub pos_emb: Parameter,
    pub blocks: Vec<DecoderBlock>,
    pub ln_f: LayerNorm,
    /// K independent read-outs of the final hidden state, each d -> 1.
    pub heads: Vec<Linear>,
}

/// Everything `backward_batch` needs from the matching forward pass.
#[derive(Debug)]
pub struct ForwardCaches {
    batch: usize,
    t: usize,
    values: Vec<f64>,
    block_caches: Vec<BlockCache>,
    ln_in: Tensor,
    gathered: Tensor,
    positions: Vec<usize>,
}

/// Mean-path rollout with the per-head spread retained.
#[derive(Debug, Clone)]
pub struct RolloutReport {
    /// Head-averaged metrics in original units; known prefix echoed.
    pub means: Vec<f64>,
    /// The same head means in normalized space, exactly as they were
    /// fed back into the decoder. Evaluation uses these directly to
    /// avoid a denormalize/renormalize round trip.
    pub means_norm: Vec<f64>,
    /// Per-metric standard deviation across heads, original units.
    /// Zero over the known prefix.
    pub stds: Vec<f64>,
    /// Per-head denormalized predictions, [heads][metrics]. Prefix
    /// positions hold the known value in every head.
    pub per_head: Vec<Vec<f64>>,
}

/// Batched rollout over many designs sharing one prefix length.
#[derive(Debug, Clone)]
pub struct BatchRollout {
    pub reports: Vec<RolloutReport>,
}

impl Surrogate {
    pub fn new(
        config: InsightConfig,
        layout: SequenceLayout,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if config.uncertainty_heads < 2 {
            return Err(ModelError::TooFewHeads(config.uncertainty_heads));
        }
        let mut rng = Rng::seed_from(seed);
        let d = config.d_model;
        let t_max = layout.seq_len();
        let mut blocks = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            blocks.push(DecoderBlock::new(
                d,
                config.heads,
                config.ff_hidden,
                config.ln_eps,
                config.init_std,
                &mut rng,
            )?);
        }
        let heads = (0..config.uncertainty_heads)
            .map(|_| Linear::new(d, 1, config.init_std, &mut rng))
            .collect();
        Ok(Self {
            lift_w: Parameter::gaussian(&[1, d], config.init_std, &mut rng),
            lift_b: Parameter::zeros(&[1, d]),
            pos_emb: Parameter::gaussian(&[t_max, d], config.init_std, &mut rng),
            blocks,
            ln_f: LayerNorm::new(d, config.ln_eps),
            heads,
            config,
            layout,
        })
    }

    /// Named parameter blocks in a fixed order shared by the
    /// optimizer, the checkpoint manifest, and gradient checking.
    pub fn param_slots(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut slots: Vec<(String, &mut Parameter)> = vec![
            ("lift_w".into(), &mut self.lift_w),
            ("lift_b".into(), &mut self.lift_b),
            ("pos_emb".into(), &mut self.pos_emb),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            slots.push((format!("block{i}.ln1.gain"), &mut b.ln1.gain));
            slots.push((format!("block{i}.ln1.bias"), &mut b.ln1.bias));
            slots.push((format!("block{i}.attn.qkv.weight"), &mut b.attn.qkv.weight));
            slots.push((format!("block{i}.attn.qkv.bias"), &mut b.attn.qkv.bias));
            slots.push((
                format!("block{i}.attn.proj.weight"),
                &mut b.attn.proj.weight,
            ));
            slots.push((format!("block{i}.attn.proj.bias"), &mut b.attn.proj.bias));
            slots.push((format!("block{i}.ln2.gain"), &mut b.ln2.gain));
            slots.push((format!("block{i}.ln2.bias"), &mut b.ln2.bias));
            slots.push((format!("block{i}.ff.lin1.weight"), &mut b.ff.lin1.weight));
            slots.push((format!("block{i}.ff.lin1.bias"), &mut b.ff.lin1.bias));
            slots.push((format!("block{i}.ff.lin2.weight"), &mut b.ff.lin2.weight));
            slots.push((format!("block{i}.ff.lin2.bias"), &mut b.ff.lin2.bias));
        }
        slots.push(("ln_f.gain".into(), &mut self.ln_f.gain));
        slots.push(("ln_f.bias".into(), &mut self.ln_f.bias));
        for (k, h) in self.heads.iter_mut().enumerate() {
            slots.push((format!("head{k}.weight"), &mut h.weight));
            slots.push((format!("head{k}.bias"), &mut h.bias));
        }
        slots
    }

    /// The names from [`Self::param_slots`] without borrowing the
    /// parameters themselves; the two orders are pinned by a test.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["lift_w".to_string(), "lift_b".into(), "pos_emb".into()];
        for i in 0..self.blocks.len() {
            for leaf in [
                "ln1.gain",
                "ln1.bias",
                "attn.qkv.weight",
                "attn.qkv.bias",
                "attn.proj.weight",
                "attn.proj.bias",
                "ln2.gain",
                "ln2.bias",
                "ff.lin1.weight",
                "ff.lin1.bias",
                "ff.lin2.weight",
                "ff.lin2.bias",
            ] {
                names.push(format!("block{i}.{leaf}"));
            }
        }
        names.push("ln_f.gain".into());
        names.push("ln_f.bias".into());
        for k in 0..self.heads.len() {
            names.push(format!("head{k}.weight"));
            names.push(format!("head{k}.bias"));
        }
        names
    }

    pub fn param_count(&mut self) -> usize {
        self.param_slots().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.param_slots() {
            p.zero_grad();
        }
    }

    /// Embedding of one flat batch of token values, [batch * t, d].
    fn embed(&self, values: &[f64], batch: usize, t: usize) -> Tensor {
        let d = self.config.d_model;
        debug_assert_eq!(values.len(), batch * t);
        debug_assert!(t <= self.layout.seq_len());
        let w = self.lift_w.value.data();
        let b = self.lift_b.value.data();
        let pos = self.pos_emb.value.data();
        let mut out = Tensor::zeros(&[batch * t, d]);
        let data = out.data_mut();
        for (r, &v) in values.iter().enumerate() {
            let p = r % t;
            let row = &mut data[r * d..(r + 1) * d];
            for c in 0..d {
                row[c] = v * w[c] + b[c] + pos[p * d + c];
            }
        }
        out
    }

    /// Teacher-forced forward over full sequences. Returns one
    /// [batch, n_metrics] tensor per head, plus the caches the
    /// backward pass consumes.
    pub fn forward_batch(
        &self,
        values: &[f64],
        batch: usize,
        route: Route,
    ) -> (Vec<Tensor>, ForwardCaches) {
        let t = self.layout.seq_len();
        let m = self.layout.n_metrics;
        let d = self.config.d_model;
        let mut x = self.embed(values, batch, t);
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(x, batch, t, route);
            x = next;
            block_caches.push(cache);
        }
        let normed = self.ln_f.forward(&x);
        let positions: Vec<usize> = (0..m).map(|i| self.layout.prediction_position(i)).collect();
        let mut gathered = Tensor::zeros(&[batch * m, d]);
        for s in 0..batch {
            for (i, &p) in positions.iter().enumerate() {
                gathered
                    .row_mut(s * m + i)
                    .copy_from_slice(normed.row(s * t + p));
            }
        }
        let outs = self
            .heads
            .iter()
            .map(|h| {
                let flat = h.forward(&gathered, route);
                Tensor::from_vec(&[batch, m], flat.data().to_vec()).expect("head output shape")
            })
            .collect();
        let caches = ForwardCaches {
            batch,
            t,
            values: values.to_vec(),
            block_caches,
            ln_in: x,
            gathered,
            positions,
        };
        (outs, caches)
    }

    /// Accumulates gradients for a loss whose derivative w.r.t. each
    /// head output is given in `d_outs` ([batch, n_metrics] per head).
    pub fn backward_batch(&mut self, caches: &ForwardCaches, d_outs: &[Tensor]) {
        let batch = caches.batch;
        let t = caches.t;
        let m = self.layout.n_metrics;
        let d = self.config.d_model;
        let mut d_gathered = Tensor::zeros(&[batch * m, d]);
        for (h, d_out) in self.heads.iter_mut().zip(d_outs) {
            let dy = Tensor::from_vec(&[batch * m, 1], d_out.data().to_vec())
                .expect("head grad shape");
            d_gathered.add_assign(&h.backward(&caches.gathered, &dy));
        }
        let mut d_normed = Tensor::zeros(&[batch * t, d]);
        for s in 0..batch {
            for (i, &p) in caches.positions.iter().enumerate() {
                d_normed
                    .row_mut(s * t + p)
                    .copy_from_slice(d_gathered.row(s * m + i));
            }
        }
        let mut dx = self.ln_f.backward(&caches.ln_in, &d_normed);
        for (block, cache) in self.blocks.iter_mut().zip(&caches.block_caches).rev() {
            dx = block.backward(cache, &dx);
        }
        let dw = self.lift_w.grad.data_mut();
        let db = self.lift_b.grad.data_mut();
        let dpos = self.pos_emb.grad.data_mut();
        for (r, &v) in caches.values.iter().enumerate() {
            let p = r % t;
            let g = dx.row(r);
            for c in 0..d {
                dw[c] += v * g[c];
                db[c] += g[c];
                dpos[p * d + c] += g[c];
            }
        }
    }

    /// Builds the flat token values for a batch of normalized rows.
    /// The last metric is a target only, never an input token.
    pub fn tokens(&self, designs: &[Vec<f64>], metrics: &[Vec<f64>]) -> Vec<f64> {
        let t = self.layout.seq_len();
        let consumed = self.layout.n_metrics - 1;
        let mut out = Vec::with_capacity(designs.len() * t);
        for (x, y) in designs.iter().zip(metrics) {
            out.extend_from_slice(x);
            out.extend_from_slice(&y[..consumed]);
        }
        out
    }

    /// One full-sequence forward for a single sample of `t` tokens on
    /// the reference route, returning the per-head outputs at the
    /// final position.
    fn forward_last(&self, values: &[f64]) -> Vec<f64> {
        let t = values.len();
        let mut x = self.embed(values, 1, t);
        for block in &self.blocks {
            let (next, _) = block.forward(x, 1, t, Route::Reference);
            x = next;
        }
        let last = Tensor::from_vec(&[1, self.config.d_model], x.row(t - 1).to_vec())
            .expect("last row");
        let normed = self.ln_f.forward(&last);
        self.heads
            .iter()
            .map(|h| h.forward(&normed, Route::Reference).at(0, 0))
            .collect()
    }
}

/// Masked squared-error objective over the head outputs.
///
/// `masks` holds one 0/1 weight per (sample, head); inactive heads
/// contribute nothing, so distinct bootstrap masks de-correlate the
/// heads. The loss averages over metrics and every active
/// (sample, head) pair, which reduces to the plain per-metric mean
/// squared error when all heads are active.
pub fn masked_mse(
    head_outs: &[Tensor],
    targets: &Tensor,
    masks: &[f64],
) -> (f64, Vec<Tensor>) {
    let batch = targets.rows();
    let m = targets.cols();
    let k = head_outs.len();
    debug_assert_eq!(masks.len(), batch * k);
    let active: f64 = masks.iter().sum();
    let denom = active.max(1.0) * m as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(k);
    for (h, out) in head_outs.iter().enumerate() {
        let mut grad = Tensor::zeros(&[batch, m]);
        for s in 0..batch {
            let w = masks[s * k + h];
            if w == 0.0 {
                continue;
            }
            for i in 0..m {
                let e = out.at(s, i) - targets.at(s, i);
                loss += w * e * e;
                grad.set(s, i, 2.0 * w * e / denom);
            }
        }
        grads.push(grad);
    }
    (loss / denom, grads)
}

/// A trained surrogate: weights plus the normalization it assumes,
/// and a record of the run that produced it.
#[derive(Debug, Clone)]
pub struct SurrogateCheckpoint {
    pub model: Surrogate,
    pub stats: NormStats,
    pub metadata: RunMetadata,
}

impl SurrogateCheckpoint {
    fn check_design(&self, design: &[f64]) -> Result<(), ModelError> {
        let n = self.model.layout.n_params;
        if design.len() != n {
            return Err(ModelError::DesignLength {
                expected: n,
                got: design.len(),
            });
        }
        Ok(())
    }

    /// Teacher-forced predictions for one raw design with its true
    /// metrics. Returns the head-averaged predictions in original
    /// units and the normalized-space loss over all heads.
    pub fn forward_teacher_forced(
        &self,
        design: &[f64],
        target: &[f64],
    ) -> Result<(Vec<f64>, f64), ModelError> {
        self.check_design(design)?;
        let m = self.model.layout.n_metrics;
        if target.len() != m {
            return Err(ModelError::LayoutMismatch(format!(
                "target has {} metrics, layout expects {m}",
                target.len()
            )));
        }
        let x = self.stats.normalize_param_row(design);
        let y = self.stats.normalize_metric_row(target);
        let values = self.model.tokens(&[x], &[y.clone()]);
        let (outs, _) = self.model.forward_batch(&values, 1, Route::Reference);
        let targets = Tensor::from_vec(&[1, m], y).expect("target shape");
        let masks = vec![1.0; outs.len()];
        let (loss, _) = masked_mse(&outs, &targets, &masks);
        let k = outs.len() as f64;
        let preds = (0..m)
            .map(|i| {
                let mean = outs.iter().map(|o| o.at(0, i)).sum::<f64>() / k;
                self.stats.denormalize_metric(i, mean)
            })
            .collect();
        Ok((preds, loss))
    }

    /// Greedy mean-path decode for one design. The first
    /// `known.len()` metrics are taken as ground truth: they are fed
    /// back in place of the model's own predictions and echoed in the
    /// output. Runs full re-forwards on the reference route.
    pub fn rollout(&self, design: &[f64], known: &[f64]) -> Result<RolloutReport, ModelError> {
        self.check_design(design)?;
        let m = self.model.layout.n_metrics;
        if known.len() > m {
            return Err(ModelError::PrefixTooLong {
                got: known.len(),
                max: m,
            });
        }
        let k = self.model.config.uncertainty_heads;
        let mut values = self.stats.normalize_param_row(design);
        let mut means = Vec::with_capacity(m);
        let mut means_norm = Vec::with_capacity(m);
        let mut stds = Vec::with_capacity(m);
        let mut per_head = vec![Vec::with_capacity(m); k];
        for i in 0..m {
            if i < known.len() {
                let z = self.stats.normalize_metric(i, known[i]);
                if i + 1 < m {
                    values.push(z);
                }
                means.push(known[i]);
                means_norm.push(z);
                stds.push(0.0);
                for hv in per_head.iter_mut() {
                    hv.push(known[i]);
                }
                continue;
            }
            let head_norm = self.model.forward_last(&values);
            let mean_norm = head_norm.iter().sum::<f64>() / k as f64;
            means_norm.push(mean_norm);
            if i + 1 < m {
                values.push(mean_norm);
            }
            let raw: Vec<f64> = head_norm
                .iter()
                .map(|&z| self.stats.denormalize_metric(i, z))
                .collect();
            let mean_raw = raw.iter().sum::<f64>() / k as f64;
            let var = raw.iter().map(|v| (v - mean_raw) * (v - mean_raw)).sum::<f64>()
                / k as f64;
            means.push(mean_raw);
            stds.push(var.sqrt());
            for (hv, &v) in per_head.iter_mut().zip(&raw) {
                hv.push(v);
            }
        }
        Ok(RolloutReport {
            means,
            means_norm,
            stds,
            per_head,
        })
    }

    /// KV-cached decode over a batch of designs sharing one known
    /// prefix length, on the caller's route. Produces bit-identical
    /// results to calling [`Self::rollout`] per design.
    pub fn rollout_batch(
        &self,
        designs: &[Vec<f64>],
        known: &[Vec<f64>],
        route: Route,
    ) -> Result<BatchRollout, ModelError> {
        let model = &self.model;
        let n = model.layout.n_params;
        let m = model.layout.n_metrics;
        let d = model.config.d_model;
        let k = model.config.uncertainty_heads;
        let batch = designs.len();
        if batch == 0 {
            return Ok(BatchRollout { reports: vec![] });
        }
        let prefix = if known.is_empty() { 0 } else { known[0].len() };
        if prefix > m {
            return Err(ModelError::PrefixTooLong { got: prefix, max: m });
        }
        if !known.is_empty() && known.len() != batch {
            return Err(ModelError::LayoutMismatch(format!(
                "{} known-prefix rows for {batch} designs",
                known.len()
            )));
        }
        for row in known {
            if row.len() != prefix {
                return Err(ModelError::LayoutMismatch(
                    "known-prefix rows must share one length".into(),
                ));
            }
        }
        let designs_norm: Vec<Vec<f64>> = designs
            .iter()
            .map(|row| {
                self.check_design(row)?;
                Ok(self.stats.normalize_param_row(row))
            })
            .collect::<Result<_, ModelError>>()?;
        let total = model.layout.seq_len();
        let mut kv: Vec<KvCache> = model
            .blocks
            .iter()
            .map(|_| KvCache::new(batch, total, d))
            .collect();
        // Normalized feedback token per sample, filled step by step.
        let mut feedback = vec![vec![0.0f64; m]; batch];
        let mut raw = vec![vec![vec![0.0f64; m]; k]; batch];
        for p in 0..total {
            let step_values: Vec<f64> = (0..batch)
                .map(|s| {
                    if p < n {
                        designs_norm[s][p]
                    } else {
                        feedback[s][p - n]
                    }
                })
                .collect();
            let mut x = model.embed_at(&step_values, p);
            for (block, cache) in model.blocks.iter().zip(kv.iter_mut()) {
                x = block.forward_step(x, cache, route);
            }
            if p + 1 < n {
                continue;
            }
            let i = p + 1 - n;
            let normed = model.ln_f.forward(&x);
            let head_outs: Vec<Tensor> =
                model.heads.iter().map(|h| h.forward(&normed, route)).collect();
            for s in 0..batch {
                let mean_norm = if i < prefix {
                    self.stats.normalize_metric(i, known[s][i])
                } else {
                    head_outs.iter().map(|o| o.at(s, 0)).sum::<f64>() / k as f64
                };
                feedback[s][i] = mean_norm;
                for (h, out) in head_outs.iter().enumerate() {
                    raw[s][h][i] = if i < prefix {
                        known[s][i]
                    } else {
                        self.stats.denormalize_metric(i, out.at(s, 0))
                    };
                }
            }
        }
        let reports = (0..batch)
            .map(|s| {
                let per_head = raw[s].clone();
                let means: Vec<f64> = (0..m)
                    .map(|i| {
                        if i < prefix {
                            known[s][i]
                        } else {
                            per_head.iter().map(|h| h[i]).sum::<f64>() / k as f64
                        }
                    })
                    .collect();
                let stds: Vec<f64> = (0..m)
                    .map(|i| {
                        if i < prefix {
                            return 0.0;
                        }
                        let mean = means[i];
                        (per_head.iter().map(|h| (h[i] - mean) * (h[i] - mean)).sum::<f64>()
                            / k as f64)
                            .sqrt()
                    })
                    .collect();
                RolloutReport {
                    means,
                    means_norm: feedback[s].clone(),
                    stds,
                    per_head,
                }
            })
            .collect();
        Ok(BatchRollout { reports })
    }
}

impl Surrogate {
    /// Embedding of one token per sequence at a fixed position.
    fn embed_at(&self, values: &[f64], position: usize) -> Tensor {
        let d = self.config.d_model;
        let w = self.lift_w.value.data();
        let b = self.lift_b.value.data();
        let pos = &self.pos_emb.value.data()[position * d..(position + 1) * d];
        let mut out = Tensor::zeros(&[values.len(), d]);
        let data = out.data_mut();
        for (r, &v) in values.iter().enumerate() {
            for c in 0..d {
                data[r * d + c] = v * w[c] + b[c] + pos[c];
            }
        }
        out
    }
}

/// Adapter that exposes a surrogate with one fixed batch as a
/// differentiable model for finite-difference checking.
pub struct GradProbe {
    pub model: Surrogate,
    values: Vec<f64>,
    batch: usize,
    targets: Tensor,
    masks: Vec<f64>,
}

impl GradProbe {
    /// Builds a probe over `batch` random in-distribution samples.
    pub fn new(model: Surrogate, batch: usize, seed: u64) -> Self {
        let t = model.layout.seq_len();
        let m = model.layout.n_metrics;
        let k = model.config.uncertainty_heads;
        let mut rng = Rng::seed_from(seed);
        let values: Vec<f64> = (0..batch * t).map(|_| rng.gaussian()).collect();
        let targets = Tensor::from_vec(
            &[batch, m],
            (0..batch * m).map(|_| rng.gaussian()).collect(),
        )
        .expect("target shape");
        // Every (sample, head) active except one per sample, so the
        // mask path itself is exercised.
        let mut masks = vec![1.0; batch * k];
        for s in 0..batch {
            masks[s * k + rng.below(k)] = 0.0;
        }
        Self {
            model,
            values,
            batch,
            targets,
            masks,
        }
    }

    pub fn run_check(&mut self, config: GradCheckConfig) -> GradCheckReport {
        grad_check(self, &config)
    }
}

impl DiffModel for GradProbe {
    fn block_names(&self) -> Vec<String> {
        self.model.param_names()
    }

    fn block(&mut self, idx: usize) -> &mut Parameter {
        self.model.param_slots().swap_remove(idx).1
    }

    fn loss(&mut self) -> f64 {
        let (outs, _) = self
            .model
            .forward_batch(&self.values, self.batch, Route::Reference);
        masked_mse(&outs, &self.targets, &self.masks).0
    }

    fn loss_and_grads(&mut self) -> f64 {
        self.model.zero_grads();
        let (outs, caches) = self
            .model
            .forward_batch(&self.values, self.batch, Route::Reference);
        let (loss, grads) = masked_mse(&outs, &self.targets, &self.masks);
        self.model.backward_batch(&caches, &grads);
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{evaluate_oracle, technology, topology, DesignPoint};
    use crate::data::{build_dataset, split, NormStats};
    use crate::model::InsightConfig;

    fn toy_config() -> InsightConfig {
        InsightConfig {
            d_model: 12,
            heads: 3,
            layers: 2,
            ff_hidden: 24,
            uncertainty_heads: 3,
            ..InsightConfig::default()
        }
    }

    fn toy_layout() -> SequenceLayout {
        SequenceLayout {
            n_params: 4,
            n_metrics: 3,
            metric_names: vec!["a".into(), "b".into(), "c".into()],
        }
    }

    fn ota_checkpoint(seed: u64) -> SurrogateCheckpoint {
        let topo = topology("ota2_nmos").unwrap();
        let tech = technology("synth45").unwrap();
        let data = build_dataset(&topo, &tech, 64, seed).unwrap();
        let (train, _) = split(&data, 64, 0, seed).unwrap();
        let stats = NormStats::fit(&train).unwrap();
        let layout = SequenceLayout::from_topology(&topo);
        let model = Surrogate::new(InsightConfig::default(), layout, seed).unwrap();
        SurrogateCheckpoint {
            model,
            stats,
            metadata: RunMetadata::default(),
        }
    }

    #[test]
    fn parameter_count_is_stable() {
        let mut model =
            Surrogate::new(InsightConfig::default(), toy_layout(), 7).unwrap();
        let d = 76;
        let per_block = 4 * d + (d * 3 * d + 3 * d) + (d * d + d) + (d * 304 + 304) + (304 * d + d);
        let expected = 2 * d + 6 * d + 3 * per_block + 2 * d + 5 * (d + 1);
        assert_eq!(model.param_count(), expected);
    }

    #[test]
    fn param_names_track_param_slots() {
        let mut model = Surrogate::new(toy_config(), toy_layout(), 7).unwrap();
        let names = model.param_names();
        let slots: Vec<String> = model.param_slots().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, slots);
    }

    #[test]
    fn zeroed_heads_predict_zero_and_loss_is_mean_square_target() {
        let mut ckpt = ota_checkpoint(3);
        for h in ckpt.model.heads.iter_mut() {
            h.weight.value.fill(0.0);
            h.bias.value.fill(0.0);
        }
        let topo = topology("ota2_nmos").unwrap();
        let tech = technology("synth45").unwrap();
        let design = topo.midpoint();
        let target = evaluate_oracle(&topo, &tech, &design).unwrap();
        let (preds, loss) = ckpt
            .forward_teacher_forced(&design.values, &target.values)
            .unwrap();
        let y = ckpt.stats.normalize_metric_row(&target.values);
        let want = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        assert!((loss - want).abs() < 1e-12, "loss {loss} want {want}");
        // Zero in normalized space denormalizes to the training mean.
        for (i, p) in preds.iter().enumerate() {
            let mean = ckpt.stats.denormalize_metric(i, 0.0);
            assert!((p - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        }
    }

    #[test]
    fn teacher_forcing_is_causal() {
        let ckpt = ota_checkpoint(11);
        let topo = topology("ota2_nmos").unwrap();
        let tech = technology("synth45").unwrap();
        let design = topo.midpoint();
        let target = evaluate_oracle(&topo, &tech, &design).unwrap().values;
        let x = ckpt.stats.normalize_param_row(&design.values);
        let y = ckpt.stats.normalize_metric_row(&target);
        let values = ckpt.model.tokens(&[x.clone()], &[y.clone()]);
        let (base, _) = ckpt.model.forward_batch(&values, 1, Route::Reference);
        let m = y.len();
        for j in 0..m {
            let mut bent = y.clone();
            bent[j] += 3.0;
            let values = ckpt.model.tokens(&[x.clone()], &[bent]);
            let (out, _) = ckpt.model.forward_batch(&values, 1, Route::Reference);
            for k in 0..out.len() {
                for i in 0..m {
                    let same = out[k].at(0, i).to_bits() == base[k].at(0, i).to_bits();
                    if i <= j {
                        // Prediction i may see only y_0..y_{i-1}, so
                        // bending y_j with j >= i must not move it.
                        assert!(same, "head {k} metric {i} moved when y_{j} changed");
                    } else if k == 0 && i == j + 1 {
                        // Sanity: the very next metric does see y_j.
                        assert!(!same, "metric {i} ignored its input y_{j}");
                    }
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_on_toy_layout() {
        let model = Surrogate::new(toy_config(), toy_layout(), 19).unwrap();
        let mut probe = GradProbe::new(model, 3, 23);
        let report = probe.run_check(GradCheckConfig {
            max_coords_per_block: 6,
            seed: 29,
            ..GradCheckConfig::default()
        });
        assert!(
            report.passed(),
            "max relative error {:.3e} at {:?}",
            report.max_rel_error,
            report
                .blocks
                .iter()
                .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
                .map(|b| &b.name)
        );
    }

    #[test]
    fn rollout_echoes_known_prefix_and_matches_batch_path() {
        let ckpt = ota_checkpoint(5);
        let topo = topology("ota2_nmos").unwrap();
        let tech = technology("synth45").unwrap();
        let mut rng = Rng::seed_from(77);
        let designs: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                topo.params
                    .iter()
                    .map(|p| p.lower + (p.upper - p.lower) * rng.uniform())
                    .collect()
            })
            .collect();
        for prefix in [0usize, 2] {
            let known: Vec<Vec<f64>> = designs
                .iter()
                .map(|d| {
                    let point = DesignPoint { values: d.clone() };
                    let truth = evaluate_oracle(&topo, &tech, &point).unwrap().values;
                    truth[..prefix].to_vec()
                })
                .collect();
            let batched = ckpt
                .rollout_batch(&designs, &known, Route::Fast)
                .unwrap();
            for (s, design) in designs.iter().enumerate() {
                let single = ckpt.rollout(design, &known[s]).unwrap();
                for i in 0..prefix {
                    assert_eq!(single.means[i].to_bits(), known[s][i].to_bits());
                    assert_eq!(single.stds[i], 0.0);
                }
                for i in 0..single.means.len() {
                    assert_eq!(
                        single.means[i].to_bits(),
                        batched.reports[s].means[i].to_bits(),
                        "sample {s} metric {i} diverged between decode paths"
                    );
                    assert_eq!(
                        single.means_norm[i].to_bits(),
                        batched.reports[s].means_norm[i].to_bits()
                    );
                    assert_eq!(
                        single.stds[i].to_bits(),
                        batched.reports[s].stds[i].to_bits()
                    );
                }
            }
        }
    }

    #[test]
    fn identical_heads_report_zero_spread() {
        let mut ckpt = ota_checkpoint(9);
        let template_w = ckpt.model.heads[0].weight.value.data().to_vec();
        let template_b = ckpt.model.heads[0].bias.value.data().to_vec();
        for h in ckpt.model.heads.iter_mut() {
            h.weight.value.data_mut().copy_from_slice(&template_w);
            h.bias.value.data_mut().copy_from_slice(&template_b);
        }
        let topo = topology("ota2_nmos").unwrap();
        let report = ckpt.rollout(&topo.midpoint().values, &[]).unwrap();
        // Averaging k identical f64s can land an ulp off the value
        // itself, so the spread collapses to rounding noise, not 0.
        for (s, m) in report.stds.iter().zip(&report.means) {
            assert!(s.abs() <= 1e-12 * m.abs().max(1.0), "std {s} for mean {m}");
        }
    }

    #[test]
    fn head_order_does_not_change_the_mean_path() {
        let mut ckpt = ota_checkpoint(13);
        let topo = topology("ota2_nmos").unwrap();
        let design = topo.midpoint().values;
        let before = ckpt.rollout(&design, &[]).unwrap();
        ckpt.model.heads.reverse();
        let after = ckpt.rollout(&design, &[]).unwrap();
        for (a, b) in before.means.iter().zip(&after.means) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        for (a, b) in before.stds.iter().zip(&after.stds) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn prefix_too_long_is_rejected() {
        let ckpt = ota_checkpoint(15);
        let topo = topology("ota2_nmos").unwrap();
        let err = ckpt
            .rollout(&topo.midpoint().values, &[0.0; 5])
            .unwrap_err();
        assert!(matches!(
            err,
            ModelError::PrefixTooLong { got: 5, max: 4 }
        ));
    }

    #[test]
    fn masked_out_sample_head_pairs_do_not_contribute() {
        let outs = vec![
            Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Tensor::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap(),
        ];
        let targets = Tensor::zeros(&[2, 2]);
        // Sample 0 trains head 0 only, sample 1 trains head 1 only.
        let masks = vec![1.0, 0.0, 0.0, 1.0];
        let (loss, grads) = masked_mse(&outs, &targets, &masks);
        let want = (1.0 + 4.0 + 49.0 + 64.0) / (2.0 * 2.0);
        assert!((loss - want).abs() < 1e-12);
        assert_eq!(grads[0].at(1, 0), 0.0);
        assert_eq!(grads[1].at(0, 0), 0.0);
        assert!((grads[0].at(0, 0) - 2.0 * 1.0 / 4.0).abs() < 1e-12);
    }
}
