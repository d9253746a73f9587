//! Normalization ops: softmax, layer norm, batch norm.

use crate::error::{Result, TensorError};
use crate::scalar::{cast, Scalar};
use crate::tensor::{strides_of, Op, Tensor};

/// Iterates the lanes of `shape` along `axis`: yields (base flat index,
/// stride, length). Every element of the tensor lies on exactly one lane.
fn lanes(shape: &[usize], axis: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    let strides = strides_of(shape);
    let len = shape[axis];
    let stride = strides[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let outer_stride = if axis == 0 { 0 } else { strides[axis - 1] };
    (0..outer).flat_map(move |o| {
        (0..inner).map(move |i| (o * outer_stride + i, stride, len))
    })
}

impl<T: Scalar> Tensor<T> {
    /// Numerically stabilized softmax along `axis`; sums to 1 on each lane.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(TensorError::invalid(
                "softmax",
                format!("axis {axis} out of range for rank {}", self.rank()),
            ));
        }
        let x = self.data();
        let mut out = vec![T::zero(); x.len()];
        for (base, stride, len) in lanes(self.shape(), axis) {
            let mut max = T::neg_infinity();
            for k in 0..len {
                max = max.max(x[base + k * stride]);
            }
            let mut total = T::zero();
            for k in 0..len {
                let e = (x[base + k * stride] - max).exp();
                out[base + k * stride] = e;
                total = total + e;
            }
            for k in 0..len {
                out[base + k * stride] = out[base + k * stride] / total;
            }
        }
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            Op::Softmax { x: self.clone(), axis },
        ))
    }

    /// Layer normalization over the last axis, followed by the affine map
    /// `gamma * x_hat + beta`.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let rank = self.rank();
        if rank == 0 {
            return Err(TensorError::Rank { op: "layer_norm", expected: 1, got: 0 });
        }
        let c = self.shape()[rank - 1];
        if c == 0 {
            return Err(TensorError::invalid("layer_norm", "normalized axis has length 0"));
        }
        for (name, t) in [("gamma", gamma), ("beta", beta)] {
            if t.shape() != [c] {
                return Err(TensorError::invalid(
                    "layer_norm",
                    format!("{name} must have shape [{c}], got {:?}", t.shape()),
                ));
            }
        }
        let rows = self.numel() / c;
        let x = self.data();
        let g = gamma.data();
        let b = beta.data();
        let inv_c = T::one() / cast::<T>(c as f64);
        let mut out = vec![T::zero(); x.len()];
        let mut means = Vec::with_capacity(rows);
        let mut inv_stds = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &x[r * c..(r + 1) * c];
            let mut mean = T::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean * inv_c;
            let mut var = T::zero();
            for &v in row {
                let d = v - mean;
                var = var + d * d;
            }
            var = var * inv_c;
            let inv_std = T::one() / (var + eps).sqrt();
            for k in 0..c {
                let xhat = (row[k] - mean) * inv_std;
                out[r * c + k] = g[k] * xhat + b[k];
            }
            means.push(mean);
            inv_stds.push(inv_std);
        }
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            Op::LayerNorm {
                input: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                mean: means,
                inv_std: inv_stds,
            },
        ))
    }
}

/// Batch normalization over a `[B, C, H, W]` tensor, normalizing each channel
/// over `(B, H, W)`. In training mode batch statistics are used and the
/// running statistics are updated in place by EMA with `momentum`; in eval
/// mode the running statistics are used.
pub fn batch_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut [T],
    running_var: &mut [T],
    training: bool,
    eps: T,
    momentum: T,
) -> Result<Tensor<T>> {
    if x.rank() != 4 {
        return Err(TensorError::Rank { op: "batch_norm", expected: 4, got: x.rank() });
    }
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    for (name, t) in [("gamma", gamma), ("beta", beta)] {
        if t.shape() != [c] {
            return Err(TensorError::invalid(
                "batch_norm",
                format!("{name} must have shape [{c}], got {:?}", t.shape()),
            ));
        }
    }
    if running_mean.len() != c || running_var.len() != c {
        return Err(TensorError::invalid("batch_norm", "running statistics length mismatch"));
    }
    let n = b * h * w;
    let (mean, inv_std) = if training {
        if n == 1 {
            return Err(TensorError::DegenerateVariance);
        }
        let inv_n = T::one() / cast::<T>(n as f64);
        let data = x.data();
        let hw = h * w;
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * hw;
                let mut acc = T::zero();
                for &v in &data[base..base + hw] {
                    acc = acc + v;
                }
                mean[ci] = mean[ci] + acc;
            }
        }
        for m in &mut mean {
            *m = *m * inv_n;
        }
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * hw;
                let mut acc = T::zero();
                for &v in &data[base..base + hw] {
                    let d = v - mean[ci];
                    acc = acc + d * d;
                }
                var[ci] = var[ci] + acc;
            }
        }
        for v in &mut var {
            *v = *v * inv_n;
        }
        // EMA update; running variance stores the unbiased estimate.
        let unbias = cast::<T>(n as f64 / (n as f64 - 1.0));
        let keep = T::one() - momentum;
        for ci in 0..c {
            running_mean[ci] = keep * running_mean[ci] + momentum * mean[ci];
            running_var[ci] = keep * running_var[ci] + momentum * var[ci] * unbias;
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        (mean, inv_std)
    } else {
        let mean = running_mean.to_vec();
        let inv_std: Vec<T> = running_var
            .iter()
            .map(|&v| T::one() / (v + eps).sqrt())
            .collect();
        (mean, inv_std)
    };

    let data = x.data();
    let g = gamma.data();
    let bt = beta.data();
    let hw = h * w;
    let mut out = vec![T::zero(); data.len()];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * hw;
            let (m, is) = (mean[ci], inv_std[ci]);
            for k in 0..hw {
                out[base + k] = g[ci] * ((data[base + k] - m) * is) + bt[ci];
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        x.shape().to_vec(),
        Op::BatchNorm {
            input: x.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            mean,
            inv_std,
            training,
        },
    ))
}

pub(crate) fn softmax_backward<T: Scalar>(
    grad: &[T],
    y: &[T],
    shape: &[usize],
    axis: usize,
) -> Vec<T> {
    let mut dx = vec![T::zero(); grad.len()];
    for (base, stride, len) in lanes(shape, axis) {
        let mut dot = T::zero();
        for k in 0..len {
            let i = base + k * stride;
            dot = dot + grad[i] * y[i];
        }
        for k in 0..len {
            let i = base + k * stride;
            dx[i] = y[i] * (grad[i] - dot);
        }
    }
    dx
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    grad: &[T],
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let c = *input.shape().last().expect("layer_norm input has rank >= 1");
    let rows = input.numel() / c;
    let x = input.data();
    let g = gamma.data();
    let inv_c = T::one() / cast::<T>(c as f64);
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for r in 0..rows {
        let (m, is) = (mean[r], inv_std[r]);
        let mut sum_gy = T::zero();
        let mut sum_gy_xhat = T::zero();
        for k in 0..c {
            let i = r * c + k;
            let xhat = (x[i] - m) * is;
            let gy = grad[i] * g[k];
            sum_gy = sum_gy + gy;
            sum_gy_xhat = sum_gy_xhat + gy * xhat;
            dgamma[k] = dgamma[k] + grad[i] * xhat;
            dbeta[k] = dbeta[k] + grad[i];
        }
        let mean_gy = sum_gy * inv_c;
        let mean_gy_xhat = sum_gy_xhat * inv_c;
        for k in 0..c {
            let i = r * c + k;
            let xhat = (x[i] - m) * is;
            dx[i] = is * (grad[i] * g[k] - mean_gy - xhat * mean_gy_xhat);
        }
    }
    (dx, dgamma, dbeta)
}

pub(crate) fn batch_norm_backward<T: Scalar>(
    grad: &[T],
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    training: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (b, c, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let hw = h * w;
    let n = b * hw;
    let inv_n = T::one() / cast::<T>(n as f64);
    let x = input.data();
    let g = gamma.data();
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];

    for ci in 0..c {
        let (m, is) = (mean[ci], inv_std[ci]);
        let mut sum_gy = T::zero();
        let mut sum_gy_xhat = T::zero();
        for bi in 0..b {
            let base = (bi * c + ci) * hw;
            for k in 0..hw {
                let i = base + k;
                let xhat = (x[i] - m) * is;
                sum_gy = sum_gy + grad[i];
                sum_gy_xhat = sum_gy_xhat + grad[i] * xhat;
            }
        }
        dbeta[ci] = sum_gy;
        dgamma[ci] = sum_gy_xhat;
        let scale = g[ci] * is;
        if training {
            let mean_gy = sum_gy * inv_n;
            let mean_gy_xhat = sum_gy_xhat * inv_n;
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                for k in 0..hw {
                    let i = base + k;
                    let xhat = (x[i] - m) * is;
                    dx[i] = scale * (grad[i] - mean_gy - xhat * mean_gy_xhat);
                }
            }
        } else {
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                for k in 0..hw {
                    dx[base + k] = scale * grad[base + k];
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::batch_norm;
    use crate::scalar::cast;
    use crate::tensor::Tensor;

    fn bn_affine_identity() -> (Tensor<f64>, Tensor<f64>) {
        (Tensor::ones(&[2]), Tensor::zeros(&[2]))
    }

    #[test]
    fn softmax_uniform_vector() {
        let x = Tensor::<f64>::full(&[4], 3.0);
        let y = x.softmax(0).unwrap();
        for &v in y.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let x = Tensor::<f64>::from_vec(vec![0.3, -1.2, 4.0, 0.0, 2.5, 1.1], &[2, 3]).unwrap();
        let y1 = x.softmax(1).unwrap();
        let y2 = x.add_scalar(17.5).softmax(1).unwrap();
        for (&a, &b) in y1.data().iter().zip(y2.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_positive() {
        let x = Tensor::<f64>::from_vec(vec![100.0, -100.0, 0.0, 55.0, 54.0, 53.0], &[2, 3])
            .unwrap();
        let y = x.softmax(1).unwrap();
        for r in 0..2 {
            let s: f64 = y.data()[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        assert!(y.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn bn_eval_identity_stats_is_identity() {
        let (g, b) = bn_affine_identity();
        let x = Tensor::<f64>::from_vec(vec![0.5, -1.0, 2.0, 3.0, 0.0, 1.0, -2.0, 0.25], &[1, 2, 2, 2])
            .unwrap();
        let mut mean = vec![0.0; 2];
        let mut var = vec![1.0; 2];
        let y = batch_norm(&x, &g, &b, &mut mean, &mut var, false, cast(1e-5), cast(0.1)).unwrap();
        for (&a, &b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn bn_train_constant_input_zero_centered() {
        let (g, b) = bn_affine_identity();
        let x = Tensor::<f64>::full(&[2, 2, 2, 2], 42.0);
        let mut mean = vec![0.0; 2];
        let mut var = vec![1.0; 2];
        let y = batch_norm(&x, &g, &b, &mut mean, &mut var, true, cast(1e-5), cast(0.1)).unwrap();
        assert!(y.data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn bn_train_two_point_channel() {
        let g = Tensor::<f64>::ones(&[1]);
        let b = Tensor::<f64>::zeros(&[1]);
        let x = Tensor::<f64>::from_vec(vec![0.0, 2.0], &[1, 1, 1, 2]).unwrap();
        let mut mean = vec![0.0];
        let mut var = vec![1.0];
        let y = batch_norm(&x, &g, &b, &mut mean, &mut var, true, cast(1e-5), cast(0.1)).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-2);
        assert!((y.data()[1] - 1.0).abs() < 1e-2);
        // EMA moved the running stats: mean toward 1, var toward unbiased 2
        assert!((mean[0] - 0.1).abs() < 1e-12);
        assert!((var[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn bn_degenerate_variance_errors() {
        let g = Tensor::<f64>::ones(&[1]);
        let b = Tensor::<f64>::zeros(&[1]);
        let x = Tensor::<f64>::ones(&[1, 1, 1, 1]);
        let mut mean = vec![0.0];
        let mut var = vec![1.0];
        assert!(batch_norm(&x, &g, &b, &mut mean, &mut var, true, cast(1e-5), cast(0.1)).is_err());
    }

    #[test]
    fn ln_constant_row_is_zero() {
        let g = Tensor::<f64>::ones(&[3]);
        let b = Tensor::<f64>::zeros(&[3]);
        let x = Tensor::<f64>::full(&[2, 3], 5.0);
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn ln_zero_gamma_gives_beta() {
        let g = Tensor::<f64>::zeros(&[2]);
        let b = Tensor::<f64>::full(&[2], 0.75);
        let x = Tensor::<f64>::from_vec(vec![1.0, 9.0, -3.0, 2.0], &[2, 2]).unwrap();
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.75).abs() < 1e-12));
    }

    #[test]
    fn ln_two_point_row() {
        let g = Tensor::<f64>::ones(&[2]);
        let b = Tensor::<f64>::zeros(&[2]);
        let x = Tensor::<f64>::from_vec(vec![1.0, 3.0], &[1, 2]).unwrap();
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-2);
        assert!((y.data()[1] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn ln_empty_axis_errors() {
        let g = Tensor::<f64>::zeros(&[0]);
        let b = Tensor::<f64>::zeros(&[0]);
        let x = Tensor::<f64>::from_vec(vec![], &[2, 0]).unwrap();
        assert!(x.layer_norm(&g, &b, 1e-5).is_err());
    }
}
