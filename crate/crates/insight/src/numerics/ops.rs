//! Reference tensor operations.
//!
//! These are the plain, auditable kernels. Training and batched inference
//! go through [`super::kernels`]; the two must stay bit-identical, which
//! pins the accumulation order here: every output element sums its inner
//! dimension sequentially from index 0.

use super::tensor::Tensor;
use super::NumericsError;

/// Standard matrix product `a[m×k] · b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, ka) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    if ka != kb {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul",
            detail: format!("{:?} x {:?}", a.shape(), b.shape()),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    let (ad, bd, od) = (a.data(), b.data(), out.data_mut());
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..ka {
                acc += ad[i * ka + k] * bd[k * n + j];
            }
            od[i * n + j] = acc;
        }
    }
    Ok(out)
}

/// `a[m×k] · bᵀ` where `b` is `[n×k]`.
pub fn matmul_bt(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, ka) = (a.rows(), a.cols());
    let (n, kb) = (b.rows(), b.cols());
    if ka != kb {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul_bt",
            detail: format!("{:?} x {:?}^T", a.shape(), b.shape()),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    let (ad, bd, od) = (a.data(), b.data(), out.data_mut());
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..ka {
                acc += ad[i * ka + k] * bd[j * ka + k];
            }
            od[i * n + j] = acc;
        }
    }
    Ok(out)
}

/// `aᵀ · b` where `a` is `[r×m]` and `b` is `[r×n]`.
pub fn matmul_at(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (ra, m) = (a.rows(), a.cols());
    let (rb, n) = (b.rows(), b.cols());
    if ra != rb {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul_at",
            detail: format!("{:?}^T x {:?}", a.shape(), b.shape()),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    let (ad, bd, od) = (a.data(), b.data(), out.data_mut());
    for r in 0..ra {
        for i in 0..m {
            let av = ad[r * m + i];
            for j in 0..n {
                od[i * n + j] += av * bd[r * n + j];
            }
        }
    }
    Ok(out)
}

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_CUBIC: f64 = 0.044_715;

/// GeLU, tanh approximation.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_SCALE * (x + GELU_CUBIC * x * x * x)).tanh())
}

/// Analytic derivative of the tanh-approximation GeLU.
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let inner = GELU_SCALE * (x + GELU_CUBIC * x * x * x);
    let t = inner.tanh();
    let d_inner = GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

/// Elementwise GeLU.
pub fn gelu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = gelu_scalar(*v));
    out
}

/// `dx` for `y = gelu(x)` given upstream `dy`.
pub fn gelu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    debug_assert_eq!(x.shape(), dy.shape());
    let mut dx = Tensor::zeros(x.shape());
    for ((g, &xv), &dv) in dx.data_mut().iter_mut().zip(x.data()).zip(dy.data()) {
        *g = gelu_grad_scalar(xv) * dv;
    }
    dx
}

/// Numerically stable in-place softmax over one row.
pub fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    row.iter_mut().for_each(|v| *v *= inv);
}

/// Per-row layer norm statistics: (mean, 1/sqrt(var + eps)).
pub fn layer_norm_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Normalizes `row` into `out` with affine gain/bias.
pub fn layer_norm_row(row: &[f64], gain: &[f64], bias: &[f64], eps: f64, out: &mut [f64]) -> (f64, f64) {
    let (mean, rstd) = layer_norm_stats(row, eps);
    for i in 0..row.len() {
        out[i] = (row[i] - mean) * rstd * gain[i] + bias[i];
    }
    (mean, rstd)
}

/// Layer norm over the last dimension with affine parameters.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Tensor {
    let d = x.cols();
    debug_assert_eq!(gain.len(), d);
    debug_assert_eq!(bias.len(), d);
    let mut out = Tensor::zeros(x.shape());
    for r in 0..x.rows() {
        layer_norm_row(x.row(r), gain.data(), bias.data(), eps, out.row_mut(r));
    }
    out
}

/// Backward for layer norm. Returns `dx` and accumulates into `dgain`/`dbias`.
pub fn layer_norm_backward(
    x: &Tensor,
    gain: &Tensor,
    eps: f64,
    dy: &Tensor,
    dgain: &mut Tensor,
    dbias: &mut Tensor,
) -> Tensor {
    let d = x.cols();
    let nd = d as f64;
    let mut dx = Tensor::zeros(x.shape());
    for r in 0..x.rows() {
        let (mean, rstd) = layer_norm_stats(x.row(r), eps);
        let xr = x.row(r);
        let dyr = dy.row(r);
        // dy through the affine, plus the two mean terms of the norm.
        let mut sum_dyg = 0.0;
        let mut sum_dyg_xhat = 0.0;
        for i in 0..d {
            let xhat = (xr[i] - mean) * rstd;
            let dyg = dyr[i] * gain.data()[i];
            sum_dyg += dyg;
            sum_dyg_xhat += dyg * xhat;
            dgain.data_mut()[i] += dyr[i] * xhat;
            dbias.data_mut()[i] += dyr[i];
        }
        let dxr = dx.row_mut(r);
        for i in 0..d {
            let xhat = (xr[i] - mean) * rstd;
            let dyg = dyr[i] * gain.data()[i];
            dxr[i] = rstd * (dyg - sum_dyg / nd - xhat * sum_dyg_xhat / nd);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::Rng;

    fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.gaussian()).collect()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut rng = Rng::seed_from(1);
        let a = random_tensor(&[3, 3], &mut rng);
        let id = Tensor::identity(3);
        let out = matmul(&id, &a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap();
        let out = matmul(&a, &b).unwrap();
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_naive_reference() {
        // Independent triple loop in j-inner order.
        let mut rng = Rng::seed_from(2);
        let a = random_tensor(&[5, 4], &mut rng);
        let b = random_tensor(&[4, 3], &mut rng);
        let out = matmul(&a, &b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a.at(i, k) * b.at(k, j);
                }
                assert!((out.at(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_rejects_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let mut rng = Rng::seed_from(3);
        let a = random_tensor(&[4, 6], &mut rng);
        let b = random_tensor(&[5, 6], &mut rng);
        let bt = {
            let mut t = Tensor::zeros(&[6, 5]);
            for i in 0..5 {
                for j in 0..6 {
                    t.set(j, i, b.at(i, j));
                }
            }
            t
        };
        let direct = matmul(&a, &bt).unwrap();
        let fused = matmul_bt(&a, &b).unwrap();
        for (x, y) in direct.data().iter().zip(fused.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        let c = random_tensor(&[4, 3], &mut rng);
        let at = {
            let mut t = Tensor::zeros(&[6, 4]);
            for i in 0..4 {
                for j in 0..6 {
                    t.set(j, i, a.at(i, j));
                }
            }
            t
        };
        let direct = matmul(&at, &c).unwrap();
        let fused = matmul_at(&a, &c).unwrap();
        for (x, y) in direct.data().iter().zip(fused.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_fixed_points() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(6.0) - 6.0).abs() < 1e-6);
        assert!(gelu_scalar(-6.0).abs() < 1e-6);
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        let x = 0.5;
        let eps = 1e-6;
        let numeric = (gelu_scalar(x + eps) - gelu_scalar(x - eps)) / (2.0 * eps);
        assert!((gelu_grad_scalar(x) - numeric).abs() < 1e-6);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = Rng::seed_from(4);
        for _ in 0..50 {
            let mut row: Vec<f64> = (0..9).map(|_| rng.range(-30.0, 30.0)).collect();
            softmax_row(&mut row);
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zeroed() {
        let x = Tensor::filled(&[1, 8], 3.25);
        let gain = Tensor::filled(&[8], 1.0);
        let bias = Tensor::zeros(&[8]);
        let y = layer_norm(&x, &gain, &bias, 1e-5);
        for v in y.data() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_keeps_normalized_row() {
        // A row that already has zero mean and unit variance moves only by epsilon.
        let x = Tensor::from_vec(&[1, 2], vec![-1.0, 1.0]).unwrap();
        let gain = Tensor::filled(&[2], 1.0);
        let bias = Tensor::zeros(&[2]);
        let y = layer_norm(&x, &gain, &bias, 1e-5);
        assert!((y.at(0, 0) + 1.0).abs() < 1e-4);
        assert!((y.at(0, 1) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_backward_matches_finite_difference() {
        let mut rng = Rng::seed_from(5);
        let x = random_tensor(&[2, 6], &mut rng);
        let gain = random_tensor(&[6], &mut rng);
        let bias = random_tensor(&[6], &mut rng);
        let dy = random_tensor(&[2, 6], &mut rng);
        let eps = 1e-5;

        let loss = |x: &Tensor, gain: &Tensor, bias: &Tensor| -> f64 {
            let y = layer_norm(x, gain, bias, eps);
            y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
        };

        let mut dgain = Tensor::zeros(&[6]);
        let mut dbias = Tensor::zeros(&[6]);
        let dx = layer_norm_backward(&x, &gain, eps, &dy, &mut dgain, &mut dbias);

        let h = 1e-6;
        for idx in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let num = (loss(&xp, &gain, &bias) - loss(&xm, &gain, &bias)) / (2.0 * h);
            let ana = dx.data()[idx];
            assert!(
                (num - ana).abs() / num.abs().max(ana.abs()).max(1.0) < 1e-5,
                "dx[{idx}]: analytic {ana} vs numeric {num}"
            );
        }
        for idx in 0..gain.len() {
            let mut gp = gain.clone();
            gp.data_mut()[idx] += h;
            let mut gm = gain.clone();
            gm.data_mut()[idx] -= h;
            let num = (loss(&x, &gp, &bias) - loss(&x, &gm, &bias)) / (2.0 * h);
            let ana = dgain.data()[idx];
            assert!((num - ana).abs() / num.abs().max(ana.abs()).max(1.0) < 1e-5);
        }
    }
}
