//! Transformer building blocks with explicit caches and hand-written
//! backward passes.
//!
//! Every layer follows the same shape: `forward` produces the output
//! plus whatever the backward pass will need, `backward` consumes that
//! cache, accumulates parameter gradients, and returns the gradient
//! with respect to the layer input. There is no tape; the model owns
//! the call order.
//!
//! Activations are row-major `[batch * seq_len, dim]` tensors. Rows of
//! one sequence are contiguous; attention is the only layer that cares.

use super::kernels;
use super::ops;
use super::rng::Rng;
use super::tensor::Tensor;
use super::NumericsError;

/// Which matmul implementation a forward pass runs on.
///
/// `Reference` is the plain auditable route, `Fast` the blocked one.
/// They are bit identical by construction; the enum exists so callers
/// can pick per call site and tests can pin the equivalence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Reference,
    Fast,
}

/// A learnable tensor paired with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn gaussian(shape: &[usize], std: f64, rng: &mut Rng) -> Self {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.gaussian() * std).collect();
        Self::new(Tensor::from_vec(shape, data).expect("shape/len agree"))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::new(Tensor::filled(shape, 1.0))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.len() == 0
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Affine map `y = x·W + b` with `W` stored `[input × output]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    pub fn new(input: usize, output: usize, std: f64, rng: &mut Rng) -> Self {
        Self {
            weight: Parameter::gaussian(&[input, output], std, rng),
            bias: Parameter::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Tensor, route: Route) -> Tensor {
        let mut y = match route {
            Route::Reference => ops::matmul(x, &self.weight.value),
            Route::Fast => kernels::matmul_fast(x, &self.weight.value),
        }
        .expect("linear input width matches weight");
        let bias = self.bias.value.data();
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
        y
    }

    /// Accumulates weight and bias gradients, returns `dx`.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Tensor {
        let dw = kernels::matmul_at_fast(x, dy).expect("cached input matches dy rows");
        self.weight.grad.add_assign(&dw);
        for r in 0..dy.rows() {
            for (g, v) in self.bias.grad.data_mut().iter_mut().zip(dy.row(r)) {
                *g += v;
            }
        }
        kernels::matmul_bt_fast(dy, &self.weight.value).expect("dy width matches weight")
    }
}

/// Layer normalization over the last dimension.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Parameter,
    pub bias: Parameter,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(dim: usize, eps: f64) -> Self {
        Self {
            gain: Parameter::ones(&[dim]),
            bias: Parameter::zeros(&[dim]),
            eps,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        ops::layer_norm(x, &self.gain.value, &self.bias.value, self.eps)
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Tensor {
        ops::layer_norm_backward(
            x,
            &self.gain.value,
            self.eps,
            dy,
            &mut self.gain.grad,
            &mut self.bias.grad,
        )
    }
}

/// Position-wise GeLU MLP.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

/// Activations the feed-forward backward pass reuses.
#[derive(Debug)]
pub struct FeedForwardCache {
    input: Tensor,
    pre_act: Tensor,
    act: Tensor,
}

impl FeedForward {
    pub fn new(dim: usize, hidden: usize, std: f64, rng: &mut Rng) -> Self {
        Self {
            lin1: Linear::new(dim, hidden, std, rng),
            lin2: Linear::new(hidden, dim, std, rng),
        }
    }

    pub fn forward(&self, x: Tensor, route: Route) -> (Tensor, FeedForwardCache) {
        let pre_act = self.lin1.forward(&x, route);
        let act = ops::gelu(&pre_act);
        let y = self.lin2.forward(&act, route);
        (
            y,
            FeedForwardCache {
                input: x,
                pre_act,
                act,
            },
        )
    }

    pub fn backward(&mut self, cache: &FeedForwardCache, dy: &Tensor) -> Tensor {
        let d_act = self.lin2.backward(&cache.act, dy);
        let d_pre = ops::gelu_backward(&cache.pre_act, &d_act);
        self.lin1.backward(&cache.input, &d_pre)
    }
}

/// Multi-head self-attention with a causal mask.
#[derive(Debug, Clone)]
pub struct CausalSelfAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub heads: usize,
    head_dim: usize,
}

/// Activations the attention backward pass reuses. `attn` holds the
/// softmaxed weights laid out `[seq][head][query][key]`, zero past the
/// causal boundary.
#[derive(Debug)]
pub struct AttentionCache {
    input: Tensor,
    qkv: Tensor,
    attn: Vec<f64>,
    concat: Tensor,
    batch: usize,
    t: usize,
}

impl CausalSelfAttention {
    pub fn new(dim: usize, heads: usize, std: f64, rng: &mut Rng) -> Result<Self, NumericsError> {
        if dim % heads != 0 {
            return Err(NumericsError::HeadDivision { dim, heads });
        }
        Ok(Self {
            qkv: Linear::new(dim, 3 * dim, std, rng),
            proj: Linear::new(dim, dim, std, rng),
            heads,
            head_dim: dim / heads,
        })
    }

    /// Full-sequence forward over `batch` sequences of length `t`.
    pub fn forward(&self, x: Tensor, batch: usize, t: usize, route: Route) -> (Tensor, AttentionCache) {
        let d = self.qkv.input_dim();
        debug_assert_eq!(x.rows(), batch * t);
        let qkv = self.qkv.forward(&x, route);
        let hd = self.head_dim;
        let inv_sqrt = 1.0 / (hd as f64).sqrt();

        let mut attn = vec![0.0; batch * self.heads * t * t];
        let mut concat = Tensor::zeros(&[batch * t, d]);
        let qd = qkv.data();
        let stride = 3 * d;
        for s in 0..batch {
            let base = s * t;
            for h in 0..self.heads {
                let q_off = h * hd;
                let k_off = d + h * hd;
                let v_off = 2 * d + h * hd;
                let attn_base = ((s * self.heads) + h) * t * t;
                for i in 0..t {
                    let q = &qd[(base + i) * stride + q_off..(base + i) * stride + q_off + hd];
                    let arow = &mut attn[attn_base + i * t..attn_base + i * t + t];
                    for j in 0..=i {
                        let k = &qd[(base + j) * stride + k_off..(base + j) * stride + k_off + hd];
                        let mut dot = 0.0;
                        for m in 0..hd {
                            dot += q[m] * k[m];
                        }
                        arow[j] = dot * inv_sqrt;
                    }
                    ops::softmax_row(&mut arow[..=i]);
                    let orow = &mut concat.row_mut(base + i)[h * hd..(h + 1) * hd];
                    for j in 0..=i {
                        let w = arow[j];
                        let v = &qd[(base + j) * stride + v_off..(base + j) * stride + v_off + hd];
                        for (o, &vv) in orow.iter_mut().zip(v) {
                            *o += w * vv;
                        }
                    }
                }
            }
        }
        let y = self.proj.forward(&concat, route);
        (
            y,
            AttentionCache {
                input: x,
                qkv,
                attn,
                concat,
                batch,
                t,
            },
        )
    }

    pub fn backward(&mut self, cache: &AttentionCache, dy: &Tensor) -> Tensor {
        let d = self.qkv.input_dim();
        let hd = self.head_dim;
        let inv_sqrt = 1.0 / (hd as f64).sqrt();
        let (batch, t) = (cache.batch, cache.t);
        let stride = 3 * d;

        let d_concat = self.proj.backward(&cache.concat, dy);
        let mut d_qkv = Tensor::zeros(&[batch * t, stride]);
        let qd = cache.qkv.data();
        let dqd = d_qkv.data_mut();
        let mut d_attn_row = vec![0.0; t];
        for s in 0..batch {
            let base = s * t;
            for h in 0..self.heads {
                let q_off = h * hd;
                let k_off = d + h * hd;
                let v_off = 2 * d + h * hd;
                let attn_base = ((s * self.heads) + h) * t * t;
                for i in 0..t {
                    let d_out = &d_concat.row(base + i)[h * hd..(h + 1) * hd];
                    let arow = &cache.attn[attn_base + i * t..attn_base + i * t + t];
                    // Through the value mix: d_attn and d_v.
                    for j in 0..=i {
                        let v = &qd[(base + j) * stride + v_off..(base + j) * stride + v_off + hd];
                        let mut dot = 0.0;
                        for m in 0..hd {
                            dot += d_out[m] * v[m];
                        }
                        d_attn_row[j] = dot;
                        let dv = &mut dqd[(base + j) * stride + v_off..(base + j) * stride + v_off + hd];
                        for (g, &o) in dv.iter_mut().zip(d_out) {
                            *g += arow[j] * o;
                        }
                    }
                    // Softmax backward, then the score scale.
                    let mut mix = 0.0;
                    for j in 0..=i {
                        mix += arow[j] * d_attn_row[j];
                    }
                    for j in 0..=i {
                        let d_score = arow[j] * (d_attn_row[j] - mix) * inv_sqrt;
                        let k = &qd[(base + j) * stride + k_off..(base + j) * stride + k_off + hd];
                        let q = &qd[(base + i) * stride + q_off..(base + i) * stride + q_off + hd];
                        for m in 0..hd {
                            dqd[(base + i) * stride + q_off + m] += d_score * k[m];
                            dqd[(base + j) * stride + k_off + m] += d_score * q[m];
                        }
                    }
                }
            }
        }
        self.qkv.backward(&cache.input, &d_qkv)
    }

    /// Incremental forward for one new token per sequence against
    /// cached keys and values. Bit identical to the matching rows of
    /// the full-sequence forward.
    pub fn forward_step(&self, x_new: &Tensor, kv: &mut KvCache, route: Route) -> Tensor {
        let d = self.qkv.input_dim();
        let hd = self.head_dim;
        let inv_sqrt = 1.0 / (hd as f64).sqrt();
        let batch = kv.batch;
        debug_assert_eq!(x_new.rows(), batch);

        let qkv = self.qkv.forward(x_new, route);
        let pos = kv.len;
        debug_assert!(pos < kv.capacity);
        let qd = qkv.data();
        let stride = 3 * d;
        for b in 0..batch {
            let dst = (b * kv.capacity + pos) * d;
            kv.k[dst..dst + d].copy_from_slice(&qd[b * stride + d..b * stride + 2 * d]);
            kv.v[dst..dst + d].copy_from_slice(&qd[b * stride + 2 * d..b * stride + 3 * d]);
        }
        kv.len += 1;

        let mut concat = Tensor::zeros(&[batch, d]);
        let mut scores = vec![0.0; kv.len];
        for b in 0..batch {
            for h in 0..self.heads {
                let q = &qd[b * stride + h * hd..b * stride + (h + 1) * hd];
                for (j, score) in scores.iter_mut().enumerate() {
                    let k = &kv.k[(b * kv.capacity + j) * d + h * hd..(b * kv.capacity + j) * d + (h + 1) * hd];
                    let mut dot = 0.0;
                    for m in 0..hd {
                        dot += q[m] * k[m];
                    }
                    *score = dot * inv_sqrt;
                }
                ops::softmax_row(&mut scores);
                let orow = &mut concat.row_mut(b)[h * hd..(h + 1) * hd];
                for (j, &w) in scores.iter().enumerate() {
                    let v = &kv.v[(b * kv.capacity + j) * d + h * hd..(b * kv.capacity + j) * d + (h + 1) * hd];
                    for (o, &vv) in orow.iter_mut().zip(v) {
                        *o += w * vv;
                    }
                }
            }
        }
        self.proj.forward(&concat, route)
    }
}

/// Per-layer key/value store for incremental decoding, laid out
/// `[batch, capacity, dim]`.
#[derive(Debug)]
pub struct KvCache {
    k: Vec<f64>,
    v: Vec<f64>,
    batch: usize,
    capacity: usize,
    len: usize,
}

impl KvCache {
    pub fn new(batch: usize, capacity: usize, dim: usize) -> Self {
        Self {
            k: vec![0.0; batch * capacity * dim],
            v: vec![0.0; batch * capacity * dim],
            batch,
            capacity,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Rewinds to empty without touching capacity, for reuse across rollouts.
    pub fn reset(&mut self) {
        self.len = 0;
    }
}

/// Pre-norm residual decoder block: attention then MLP.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub ln1: LayerNorm,
    pub attn: CausalSelfAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

/// Everything the block backward pass needs, in forward order.
#[derive(Debug)]
pub struct BlockCache {
    x: Tensor,
    attn: AttentionCache,
    x1: Tensor,
    ff: FeedForwardCache,
}

impl DecoderBlock {
    pub fn new(
        dim: usize,
        heads: usize,
        ff_hidden: usize,
        ln_eps: f64,
        init_std: f64,
        rng: &mut Rng,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            ln1: LayerNorm::new(dim, ln_eps),
            attn: CausalSelfAttention::new(dim, heads, init_std, rng)?,
            ln2: LayerNorm::new(dim, ln_eps),
            ff: FeedForward::new(dim, ff_hidden, init_std, rng),
        })
    }

    pub fn forward(&self, x: Tensor, batch: usize, t: usize, route: Route) -> (Tensor, BlockCache) {
        let normed = self.ln1.forward(&x);
        let (a, attn_cache) = self.attn.forward(normed, batch, t, route);
        let mut x1 = x.clone();
        x1.add_assign(&a);
        let normed2 = self.ln2.forward(&x1);
        let (f, ff_cache) = self.ff.forward(normed2, route);
        let mut x2 = x1.clone();
        x2.add_assign(&f);
        (
            x2,
            BlockCache {
                x,
                attn: attn_cache,
                x1,
                ff: ff_cache,
            },
        )
    }

    pub fn backward(&mut self, cache: &BlockCache, dy: &Tensor) -> Tensor {
        let d_ff_in = self.ff.backward(&cache.ff, dy);
        let mut d_x1 = dy.clone();
        d_x1.add_assign(&self.ln2.backward(&cache.x1, &d_ff_in));
        let d_attn_in = self.attn.backward(&cache.attn, &d_x1);
        let mut dx = d_x1;
        dx.add_assign(&self.ln1.backward(&cache.x, &d_attn_in));
        dx
    }

    /// Incremental forward for one new token per sequence.
    pub fn forward_step(&self, x: Tensor, kv: &mut KvCache, route: Route) -> Tensor {
        let normed = self.ln1.forward(&x);
        let a = self.attn.forward_step(&normed, kv, route);
        let mut x1 = x;
        x1.add_assign(&a);
        let normed2 = self.ln2.forward(&x1);
        let (f, _) = self.ff.forward(normed2, route);
        let mut x2 = x1;
        x2.add_assign(&f);
        x2
    }
}
