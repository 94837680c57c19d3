//! Fully-connected baseline: an ensemble of independent ReLU
//! multilayer perceptrons mapping normalized design parameters to all
//! metrics jointly, in one shot. Member disagreement gives the
//! uncertainty estimate, mirroring the head spread of the
//! autoregressive model.

use crate::data::NormStats;
use crate::model::{ModelError, RunMetadata, SequenceLayout};
use crate::numerics::{
    grad_check, DiffModel, GradCheckConfig, GradCheckReport, Linear, Parameter, Rng, Route,
    Tensor,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FcEnsembleConfig {
    pub members: usize,
    pub hidden_layers: usize,
    pub hidden_dim: usize,
}

impl Default for FcEnsembleConfig {
    fn default() -> Self {
        Self {
            members: 7,
            hidden_layers: 5,
            hidden_dim: 200,
        }
    }
}

/// One MLP: n_params -> hidden^L -> n_metrics with ReLU between.
#[derive(Debug, Clone)]
pub struct FcMember {
    pub layers: Vec<Linear>,
}

/// Pre-activation inputs to every linear, for the backward pass.
#[derive(Debug)]
pub struct FcCache {
    inputs: Vec<Tensor>,
}

impl FcMember {
    pub fn new(
        config: &FcEnsembleConfig,
        n_params: usize,
        n_metrics: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut dims = vec![n_params];
        dims.extend(std::iter::repeat(config.hidden_dim).take(config.hidden_layers));
        dims.push(n_metrics);
        let layers = dims
            .windows(2)
            .map(|w| {
                // He scaling keeps ReLU activations at unit variance.
                let std = (2.0 / w[0] as f64).sqrt();
                Linear::new(w[0], w[1], std, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, x: &Tensor, route: Route) -> Tensor {
        self.forward_cached(x, route).0
    }

    pub fn forward_cached(&self, x: &Tensor, route: Route) -> (Tensor, FcCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            inputs.push(cur.clone());
            cur = layer.forward(&cur, route);
            if l + 1 < self.layers.len() {
                for v in cur.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        (cur, FcCache { inputs })
    }

    /// Accumulates gradients; the loss gradient w.r.t. the output is
    /// `dy`. ReLU masks are recovered from the cached inputs of the
    /// following layer (zero there means the unit was cut).
    pub fn backward(&mut self, cache: &FcCache, dy: &Tensor) {
        let mut grad = dy.clone();
        for l in (0..self.layers.len()).rev() {
            let mut dx = self.layers[l].backward(&cache.inputs[l], &grad);
            if l > 0 {
                let acted = cache.inputs[l].data();
                for (g, &a) in dx.data_mut().iter_mut().zip(acted) {
                    if a == 0.0 {
                        *g = 0.0;
                    }
                }
            }
            grad = dx;
        }
    }

    pub fn param_slots(&mut self, member: usize) -> Vec<(String, &mut Parameter)> {
        let mut slots = Vec::with_capacity(self.layers.len() * 2);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            slots.push((format!("member{member}.layer{l}.weight"), &mut layer.weight));
            slots.push((format!("member{member}.layer{l}.bias"), &mut layer.bias));
        }
        slots
    }
}

/// The trained ensemble with its normalization.
#[derive(Debug)]
pub struct FcEnsemble {
    pub config: FcEnsembleConfig,
    pub layout: SequenceLayout,
    pub stats: NormStats,
    pub metadata: RunMetadata,
    pub members: Vec<FcMember>,
}

impl FcEnsemble {
    /// Fresh members with distinct weights per member, all derived
    /// from one seed.
    pub fn init_members(
        config: &FcEnsembleConfig,
        layout: &SequenceLayout,
        seed: u64,
    ) -> Vec<FcMember> {
        let mut rng = Rng::seed_from(seed);
        (0..config.members)
            .map(|_| FcMember::new(config, layout.n_params, layout.n_metrics, &mut rng))
            .collect()
    }

    pub fn param_slots(&mut self) -> Vec<(String, &mut Parameter)> {
        self.members
            .iter_mut()
            .enumerate()
            .flat_map(|(j, m)| m.param_slots(j))
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (j, m) in self.members.iter().enumerate() {
            for l in 0..m.layers.len() {
                names.push(format!("member{j}.layer{l}.weight"));
                names.push(format!("member{j}.layer{l}.bias"));
            }
        }
        names
    }

    /// Ensemble output in normalized space: the member mean, [B, M].
    pub fn ensemble_forward(&self, x_norm: &Tensor, route: Route) -> Tensor {
        let mut sum = Tensor::zeros(&[x_norm.rows(), self.layout.n_metrics]);
        for m in &self.members {
            sum.add_assign(&m.forward(x_norm, route));
        }
        sum.scale(1.0 / self.members.len() as f64);
        sum
    }

    /// Mean prediction and per-metric member spread for one raw
    /// design, both in original units.
    pub fn predict(&self, design: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let n = self.layout.n_params;
        if design.len() != n {
            return Err(ModelError::DesignLength {
                expected: n,
                got: design.len(),
            });
        }
        let x = Tensor::from_vec(&[1, n], self.stats.normalize_param_row(design))
            .expect("design row");
        let m = self.layout.n_metrics;
        let k = self.members.len();
        let raw: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|member| {
                let out = member.forward(&x, Route::Fast);
                (0..m)
                    .map(|i| self.stats.denormalize_metric(i, out.at(0, i)))
                    .collect()
            })
            .collect();
        let means: Vec<f64> = (0..m)
            .map(|i| raw.iter().map(|r| r[i]).sum::<f64>() / k as f64)
            .collect();
        let stds: Vec<f64> = (0..m)
            .map(|i| {
                (raw.iter().map(|r| (r[i] - means[i]) * (r[i] - means[i])).sum::<f64>()
                    / k as f64)
                    .sqrt()
            })
            .collect();
        Ok((means, stds))
    }
}

/// Finite-difference probe for one member under squared error.
pub struct FcProbe {
    pub member: FcMember,
    x: Tensor,
    y: Tensor,
}

impl FcProbe {
    pub fn new(member: FcMember, batch: usize, n: usize, m: usize, seed: u64) -> Self {
        let mut rng = Rng::seed_from(seed);
        let x = Tensor::from_vec(&[batch, n], (0..batch * n).map(|_| rng.gaussian()).collect())
            .expect("probe x");
        let y = Tensor::from_vec(&[batch, m], (0..batch * m).map(|_| rng.gaussian()).collect())
            .expect("probe y");
        Self { member, x, y }
    }

    fn loss_and_grad(&self) -> (f64, Tensor) {
        let out = self.member.forward(&self.x, Route::Reference);
        let count = out.len() as f64;
        let mut d = Tensor::zeros(&[out.rows(), out.cols()]);
        let mut loss = 0.0;
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let e = out.at(r, c) - self.y.at(r, c);
                loss += e * e;
                d.set(r, c, 2.0 * e / count);
            }
        }
        (loss / count, d)
    }

    pub fn run_check(&mut self, config: GradCheckConfig) -> GradCheckReport {
        grad_check(self, &config)
    }
}

impl DiffModel for FcProbe {
    fn block_names(&self) -> Vec<String> {
        (0..self.member.layers.len())
            .flat_map(|l| [format!("layer{l}.weight"), format!("layer{l}.bias")])
            .collect()
    }

    fn block(&mut self, idx: usize) -> &mut Parameter {
        let layer = &mut self.member.layers[idx / 2];
        if idx % 2 == 0 {
            &mut layer.weight
        } else {
            &mut layer.bias
        }
    }

    fn loss(&mut self) -> f64 {
        self.loss_and_grad().0
    }

    fn loss_and_grads(&mut self) -> f64 {
        for (_, p) in self.member.param_slots(0) {
            p.zero_grad();
        }
        let (loss, d) = self.loss_and_grad();
        let (_, cache) = self.member.forward_cached(&self.x, Route::Reference);
        self.member.backward(&cache, &d);
        loss
    }
}
