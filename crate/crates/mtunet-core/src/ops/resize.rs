//! Bilinear 2x upsampling (align_corners = false).

use crate::error::{Result, TensorError};
use crate::scalar::{cast, Scalar};
use crate::tensor::{Op, Tensor};

/// Source coordinate and interpolation weight for one output index under the
/// half-pixel (align_corners = false) convention at scale factor 2.
fn source_of(o: usize, len: usize) -> (usize, usize, f64) {
    let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(len - 1);
    (lo, hi, src - lo as f64)
}

impl<T: Scalar> Tensor<T> {
    /// Doubles the spatial size of a `[B, C, H, W]` tensor by bilinear
    /// interpolation. Constant maps stay constant.
    pub fn upsample_bilinear2x(&self) -> Result<Tensor<T>> {
        if self.rank() != 4 {
            return Err(TensorError::Rank {
                op: "upsample_bilinear2x",
                expected: 4,
                got: self.rank(),
            });
        }
        let (b, c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2], self.shape()[3]);
        let (oh, ow) = (2 * h, 2 * w);
        let x = self.data();
        let mut out = Vec::with_capacity(b * c * oh * ow);
        for bc in 0..b * c {
            let base = bc * h * w;
            for oy in 0..oh {
                let (y0, y1, fy) = source_of(oy, h);
                let (wy0, wy1) = (cast::<T>(1.0 - fy), cast::<T>(fy));
                for ox in 0..ow {
                    let (x0, x1, fx) = source_of(ox, w);
                    let (wx0, wx1) = (cast::<T>(1.0 - fx), cast::<T>(fx));
                    let v = wy0 * (wx0 * x[base + y0 * w + x0] + wx1 * x[base + y0 * w + x1])
                        + wy1 * (wx0 * x[base + y1 * w + x0] + wx1 * x[base + y1 * w + x1]);
                    out.push(v);
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            vec![b, c, oh, ow],
            Op::UpsampleBilinear2x { input: self.clone() },
        ))
    }
}

pub(crate) fn upsample_bilinear2x_backward<T: Scalar>(grad: &[T], input_shape: &[usize]) -> Vec<T> {
    let (b, c, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); b * c * h * w];
    for bc in 0..b * c {
        let base = bc * h * w;
        let gbase = bc * oh * ow;
        for oy in 0..oh {
            let (y0, y1, fy) = source_of(oy, h);
            let (wy0, wy1) = (cast::<T>(1.0 - fy), cast::<T>(fy));
            for ox in 0..ow {
                let (x0, x1, fx) = source_of(ox, w);
                let (wx0, wx1) = (cast::<T>(1.0 - fx), cast::<T>(fx));
                let g = grad[gbase + oy * ow + ox];
                dx[base + y0 * w + x0] = dx[base + y0 * w + x0] + g * wy0 * wx0;
                dx[base + y0 * w + x1] = dx[base + y0 * w + x1] + g * wy0 * wx1;
                dx[base + y1 * w + x0] = dx[base + y1 * w + x0] + g * wy1 * wx0;
                dx[base + y1 * w + x1] = dx[base + y1 * w + x1] + g * wy1 * wx1;
            }
        }
    }
    dx
}
