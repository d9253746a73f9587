//! Pooling: windowed max and global average.

use crate::error::{Result, TensorError};
use crate::scalar::{cast, Scalar};
use crate::tensor::{Op, Tensor};

impl<T: Scalar> Tensor<T> {
    /// Max pooling over `k x k` windows with the given stride, no padding.
    /// Gradient flows to the first maximal element of each window.
    pub fn max_pool2d(&self, k: usize, stride: usize) -> Result<Tensor<T>> {
        if self.rank() != 4 {
            return Err(TensorError::Rank { op: "max_pool2d", expected: 4, got: self.rank() });
        }
        if k == 0 || stride == 0 {
            return Err(TensorError::invalid("max_pool2d", "window and stride must be >= 1"));
        }
        let (b, c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2], self.shape()[3]);
        if k > h || k > w {
            return Err(TensorError::invalid(
                "max_pool2d",
                format!("window {k} exceeds input {h}x{w} (empty window)"),
            ));
        }
        let oh = (h - k) / stride + 1;
        let ow = (w - k) / stride + 1;
        let x = self.data();
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut argmax = Vec::with_capacity(b * c * oh * ow);
        for bc in 0..b * c {
            let ibase = bc * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_i = usize::MAX;
                    for ky in 0..k {
                        let row = ibase + (oy * stride + ky) * w + ox * stride;
                        for kx in 0..k {
                            let v = x[row + kx];
                            if best_i == usize::MAX || v > best {
                                best = v;
                                best_i = row + kx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            vec![b, c, oh, ow],
            Op::MaxPool2d { input: self.clone(), argmax },
        ))
    }

    /// Spatial mean per channel: `[B, C, H, W] -> [B, C]`.
    pub fn global_avg_pool(&self) -> Result<Tensor<T>> {
        if self.rank() != 4 {
            return Err(TensorError::Rank { op: "global_avg_pool", expected: 4, got: self.rank() });
        }
        let (b, c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2], self.shape()[3]);
        let hw = h * w;
        let inv = T::one() / cast::<T>(hw as f64);
        let x = self.data();
        let mut out = Vec::with_capacity(b * c);
        for bc in 0..b * c {
            let mut acc = T::zero();
            for &v in &x[bc * hw..(bc + 1) * hw] {
                acc = acc + v;
            }
            out.push(acc * inv);
        }
        Ok(Tensor::from_op(out, vec![b, c], Op::GlobalAvgPool { input: self.clone() }))
    }
}

pub(crate) fn global_avg_pool_backward<T: Scalar>(grad: &[T], input_shape: &[usize]) -> Vec<T> {
    let hw = input_shape[2] * input_shape[3];
    let inv = T::one() / cast::<T>(hw as f64);
    let mut dx = Vec::with_capacity(grad.len() * hw);
    for &g in grad {
        let v = g * inv;
        dx.extend(std::iter::repeat(v).take(hw));
    }
    dx
}

#[cfg(test)]
mod tests {
    use crate::tensor::Tensor;

    #[test]
    fn max_pool_window() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let y = x.max_pool2d(2, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn gap_constant_map() {
        let x = Tensor::<f64>::full(&[2, 3, 4, 4], 2.5);
        let y = x.global_avg_pool().unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert!(y.data().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn gap_is_arithmetic_mean() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        assert_eq!(x.global_avg_pool().unwrap().data(), &[2.5]);
    }

    #[test]
    fn empty_window_errors() {
        let x = Tensor::<f64>::zeros(&[1, 1, 2, 2]);
        assert!(x.max_pool2d(3, 1).is_err());
    }
}
