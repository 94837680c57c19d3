//! Central finite-difference validation of analytic gradients.
//!
//! The backward passes in this crate are written by hand, so every
//! parameter block gets checked against (L(θ+ε) − L(θ−ε)) / 2ε on a
//! fixed probe batch. Large blocks are subsampled with a seeded RNG;
//! the per-coordinate relative error must stay under the tolerance.

use super::layers::Parameter;
use super::rng::Rng;

/// Anything whose loss and gradients can be probed coordinate by
/// coordinate. `loss` must be a pure function of the current parameter
/// values (fixed data, no RNG consumption).
pub trait DiffModel {
    /// Parameter block names, fixed order.
    fn block_names(&self) -> Vec<String>;
    /// Mutable access to one block by its index in `block_names`.
    fn block(&mut self, idx: usize) -> &mut Parameter;
    /// Forward pass only.
    fn loss(&mut self) -> f64;
    /// Zeroes gradients, runs forward and backward, returns the loss.
    fn loss_and_grads(&mut self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub epsilon: f64,
    /// Maximum allowed relative error.
    pub tolerance: f64,
    /// Coordinates sampled per block; blocks at most this large are
    /// checked exhaustively.
    pub max_coords_per_block: usize,
    /// Seed for coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
            max_coords_per_block: 24,
            seed: 0,
        }
    }
}

/// Worst observed coordinate of one parameter block.
#[derive(Debug, Clone)]
pub struct BlockReport {
    pub name: String,
    pub len: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Outcome of a full gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub loss: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

// Relative error with a floor so a coordinate whose true gradient is
// zero is judged by absolute finite-difference noise instead of
// dividing by it.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn grad_check(model: &mut dyn DiffModel, config: &GradCheckConfig) -> GradCheckReport {
    let names = model.block_names();
    let loss = model.loss_and_grads();
    let analytic: Vec<Vec<f64>> = (0..names.len())
        .map(|b| model.block(b).grad.data().to_vec())
        .collect();

    let mut rng = Rng::child(config.seed, 0x6772_6164);
    let mut blocks = Vec::with_capacity(names.len());
    let mut max_rel = 0.0f64;

    for (b, name) in names.iter().enumerate() {
        let len = analytic[b].len();
        let coords: Vec<usize> = if len <= config.max_coords_per_block {
            (0..len).collect()
        } else {
            // Distinct draws; the block is far larger than the sample
            // in practice, so rejection terminates quickly.
            let mut picked = Vec::with_capacity(config.max_coords_per_block);
            while picked.len() < config.max_coords_per_block {
                let c = rng.below(len);
                if !picked.contains(&c) {
                    picked.push(c);
                }
            }
            picked
        };

        let mut report = BlockReport {
            name: name.clone(),
            len,
            checked: coords.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &c in &coords {
            let original = model.block(b).value.data()[c];
            model.block(b).value.data_mut()[c] = original + config.epsilon;
            let plus = model.loss();
            model.block(b).value.data_mut()[c] = original - config.epsilon;
            let minus = model.loss();
            model.block(b).value.data_mut()[c] = original;
            let numeric = (plus - minus) / (2.0 * config.epsilon);
            let rel = relative_error(analytic[b][c], numeric);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_index = c;
                report.analytic = analytic[b][c];
                report.numeric = numeric;
            }
        }
        max_rel = max_rel.max(report.max_rel_error);
        blocks.push(report);
    }

    GradCheckReport {
        blocks,
        max_rel_error: max_rel,
        tolerance: config.tolerance,
        loss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::layers::Linear;
    use crate::numerics::layers::Route;
    use crate::numerics::tensor::Tensor;

    /// Least-squares regression, the smallest model with both a matrix
    /// and a vector block.
    struct ToyRegression {
        lin: Linear,
        x: Tensor,
        y: Tensor,
        corrupt: bool,
    }

    impl ToyRegression {
        fn new(corrupt: bool) -> Self {
            let mut rng = Rng::seed_from(77);
            let lin = Linear::new(3, 2, 0.5, &mut rng);
            let x = Tensor::from_vec(&[4, 3], (0..12).map(|_| rng.gaussian()).collect()).unwrap();
            let y = Tensor::from_vec(&[4, 2], (0..8).map(|_| rng.gaussian()).collect()).unwrap();
            Self { lin, x, y, corrupt }
        }

        fn forward_loss(&self) -> (f64, Tensor) {
            let pred = self.lin.forward(&self.x, Route::Reference);
            let n = pred.len() as f64;
            let mut d_pred = Tensor::zeros(pred.shape());
            let mut loss = 0.0;
            for i in 0..pred.len() {
                let diff = pred.data()[i] - self.y.data()[i];
                loss += diff * diff / n;
                d_pred.data_mut()[i] = 2.0 * diff / n;
            }
            (loss, d_pred)
        }
    }

    impl DiffModel for ToyRegression {
        fn block_names(&self) -> Vec<String> {
            vec!["weight".into(), "bias".into()]
        }

        fn block(&mut self, idx: usize) -> &mut Parameter {
            match idx {
                0 => &mut self.lin.weight,
                _ => &mut self.lin.bias,
            }
        }

        fn loss(&mut self) -> f64 {
            self.forward_loss().0
        }

        fn loss_and_grads(&mut self) -> f64 {
            self.lin.weight.zero_grad();
            self.lin.bias.zero_grad();
            let (loss, d_pred) = self.forward_loss();
            let x = self.x.clone();
            self.lin.backward(&x, &d_pred);
            if self.corrupt {
                self.lin.weight.grad.data_mut()[2] *= 1.5;
            }
            loss
        }
    }

    #[test]
    fn exact_gradients_pass() {
        let mut model = ToyRegression::new(false);
        let report = grad_check(&mut model, &GradCheckConfig::default());
        assert!(report.passed(), "max rel {}", report.max_rel_error);
        assert!(report.max_rel_error < 1e-6);
        assert_eq!(report.blocks.len(), 2);
        assert_eq!(report.blocks[0].checked, 6);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let mut model = ToyRegression::new(true);
        let report = grad_check(&mut model, &GradCheckConfig::default());
        assert!(!report.passed());
        assert!(report.max_rel_error > 1e-1);
        assert_eq!(report.blocks[0].worst_index, 2);
    }

    #[test]
    fn subsampling_respects_the_cap() {
        let mut model = ToyRegression::new(false);
        let config = GradCheckConfig {
            max_coords_per_block: 2,
            ..GradCheckConfig::default()
        };
        let report = grad_check(&mut model, &config);
        assert_eq!(report.blocks[0].checked, 2);
        assert!(report.passed());
    }
}
