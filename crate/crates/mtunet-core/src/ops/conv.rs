//! 2-D convolution (cross-correlation convention, zero padding).

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{Op, Tensor};

pub(crate) fn conv2d_out_size(
    h: usize,
    k: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
) -> Option<usize> {
    let span = dilation * (k - 1) + 1;
    let padded = h + 2 * padding;
    if padded < span {
        return None;
    }
    Some((padded - span) / stride + 1)
}

impl<T: Scalar> Tensor<T> {
    /// Convolution of `[B, Cin, H, W]` with `weight [Cout, Cin, k, k]` and
    /// optional `bias [Cout]`. No kernel flip (cross-correlation).
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Tensor<T>> {
        if self.rank() != 4 {
            return Err(TensorError::Rank { op: "conv2d", expected: 4, got: self.rank() });
        }
        if weight.rank() != 4 {
            return Err(TensorError::Rank { op: "conv2d", expected: 4, got: weight.rank() });
        }
        if stride == 0 || dilation == 0 {
            return Err(TensorError::invalid("conv2d", "stride and dilation must be >= 1"));
        }
        let (b, cin, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2], self.shape()[3]);
        let (cout, wcin, kh, kw) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        if wcin != cin {
            return Err(TensorError::AxisSize { op: "conv2d", axis: 1, expected: cin, got: wcin });
        }
        if kh != kw {
            return Err(TensorError::invalid("conv2d", "kernel must be square"));
        }
        if let Some(bt) = bias {
            if bt.shape() != [cout] {
                return Err(TensorError::AxisSize {
                    op: "conv2d",
                    axis: 0,
                    expected: cout,
                    got: bt.shape().first().copied().unwrap_or(0),
                });
            }
        }
        let oh = conv2d_out_size(h, kh, stride, padding, dilation).ok_or_else(|| {
            TensorError::invalid("conv2d", format!("kernel span exceeds padded input ({h}x{w})"))
        })?;
        let ow = conv2d_out_size(w, kw, stride, padding, dilation).ok_or_else(|| {
            TensorError::invalid("conv2d", format!("kernel span exceeds padded input ({h}x{w})"))
        })?;

        let x = self.data();
        let wgt = weight.data();
        let mut out = vec![T::zero(); b * cout * oh * ow];
        for bi in 0..b {
            for co in 0..cout {
                let obase = (bi * cout + co) * oh * ow;
                if let Some(bt) = bias {
                    let bv = bt.data()[co];
                    for v in &mut out[obase..obase + oh * ow] {
                        *v = bv;
                    }
                }
                for ci in 0..cin {
                    let ibase = (bi * cin + ci) * h * w;
                    let wbase = (co * cin + ci) * kh * kw;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = wgt[wbase + ky * kw + kx];
                            if wv == T::zero() {
                                continue;
                            }
                            for oy in 0..oh {
                                let iy = (oy * stride + ky * dilation) as isize
                                    - padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let irow = ibase + iy as usize * w;
                                let orow = obase + oy * ow;
                                for ox in 0..ow {
                                    let ix = (ox * stride + kx * dilation) as isize
                                        - padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    out[orow + ox] =
                                        out[orow + ox] + wv * x[irow + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            vec![b, cout, oh, ow],
            Op::Conv2d {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.cloned(),
                stride,
                padding,
                dilation,
            },
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    grad: &[T],
    out_shape: &[usize],
    input: &Tensor<T>,
    weight: &Tensor<T>,
    has_bias: bool,
    stride: usize,
    padding: usize,
    dilation: usize,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
    let (b, cin, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (cout, _, kh, kw) = (
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    );
    let (oh, ow) = (out_shape[2], out_shape[3]);
    let x = input.data();
    let wgt = weight.data();
    let mut dx = vec![T::zero(); input.numel()];
    let mut dw = vec![T::zero(); weight.numel()];
    let mut db = has_bias.then(|| vec![T::zero(); cout]);

    for bi in 0..b {
        for co in 0..cout {
            let obase = (bi * cout + co) * oh * ow;
            if let Some(db) = db.as_mut() {
                let mut acc = T::zero();
                for &g in &grad[obase..obase + oh * ow] {
                    acc = acc + g;
                }
                db[co] = db[co] + acc;
            }
            for ci in 0..cin {
                let ibase = (bi * cin + ci) * h * w;
                let wbase = (co * cin + ci) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wgt[wbase + ky * kw + kx];
                        let mut wacc = T::zero();
                        for oy in 0..oh {
                            let iy =
                                (oy * stride + ky * dilation) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let irow = ibase + iy as usize * w;
                            let orow = obase + oy * ow;
                            for ox in 0..ow {
                                let ix =
                                    (ox * stride + kx * dilation) as isize - padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let g = grad[orow + ox];
                                wacc = wacc + g * x[irow + ix as usize];
                                dx[irow + ix as usize] = dx[irow + ix as usize] + g * wv;
                            }
                        }
                        dw[wbase + ky * kw + kx] = dw[wbase + ky * kw + kx] + wacc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}
