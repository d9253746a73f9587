//! Matrix multiplication (2-D or batched with equal leading dims) and the
//! affine `linear` map along the last axis.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{Op, Tensor};

/// `c[m,n] += a[m,k] * b[k,n]` on raw slices.
fn matmul_slice<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// `c[m,k] += a[m,n] * b[k,n]^T` (i.e. `a @ b^T`).
fn matmul_bt_slice<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc = acc + av * bv;
            }
            c[i * k + j] = c[i * k + j] + acc;
        }
    }
}

/// `c[k,n] += a[m,k]^T * b[m,n]`.
fn matmul_at_slice<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

fn batch_dims(op: &'static str, a: &[usize], b: &[usize]) -> Result<(usize, usize, usize, usize)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(TensorError::Rank { op, expected: 2, got: a.len().min(b.len()) });
    }
    if a.len() != b.len() {
        return Err(TensorError::Rank { op, expected: a.len(), got: b.len() });
    }
    for (axis, (&da, &db)) in a[..a.len() - 2].iter().zip(&b[..b.len() - 2]).enumerate() {
        if da != db {
            return Err(TensorError::AxisSize { op, axis, expected: da, got: db });
        }
    }
    let (m, ka) = (a[a.len() - 2], a[a.len() - 1]);
    let (kb, n) = (b[b.len() - 2], b[b.len() - 1]);
    if ka != kb {
        return Err(TensorError::AxisSize { op, axis: a.len() - 1, expected: ka, got: kb });
    }
    let batch: usize = a[..a.len() - 2].iter().product();
    Ok((batch, m, ka, n))
}

impl<T: Scalar> Tensor<T> {
    /// Matrix product over the last two axes; leading axes must match
    /// exactly and are treated as a batch.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, m, k, n) = batch_dims("matmul", self.shape(), other.shape())?;
        let mut out = vec![T::zero(); batch * m * n];
        for bi in 0..batch {
            matmul_slice(
                &self.data()[bi * m * k..(bi + 1) * m * k],
                &other.data()[bi * k * n..(bi + 1) * k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = self.shape()[..self.rank() - 2].to_vec();
        shape.push(m);
        shape.push(n);
        Ok(Tensor::from_op(
            out,
            shape,
            Op::Matmul { a: self.clone(), b: other.clone() },
        ))
    }

    /// Affine map along the last axis: `x @ weight^T + bias` with `weight`
    /// of shape `[out_features, in_features]`.
    pub fn linear(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        if weight.rank() != 2 {
            return Err(TensorError::Rank { op: "linear", expected: 2, got: weight.rank() });
        }
        let din = *self.shape().last().ok_or(TensorError::Rank {
            op: "linear",
            expected: 1,
            got: 0,
        })?;
        if weight.shape()[1] != din {
            return Err(TensorError::AxisSize {
                op: "linear",
                axis: self.rank() - 1,
                expected: weight.shape()[1],
                got: din,
            });
        }
        let dout = weight.shape()[0];
        let rows = self.numel() / din;
        let flat = self.reshape(&[rows, din])?;
        let wt = weight.permute(&[1, 0])?;
        let mut y = flat.matmul(&wt)?;
        if let Some(b) = bias {
            if b.shape() != [dout] {
                return Err(TensorError::AxisSize {
                    op: "linear",
                    axis: 0,
                    expected: dout,
                    got: b.shape().first().copied().unwrap_or(0),
                });
            }
            y = y.add(b)?;
        }
        let mut out_shape = self.shape().to_vec();
        *out_shape.last_mut().expect("rank >= 1") = dout;
        y.reshape(&out_shape)
    }
}

pub(crate) fn matmul_backward<T: Scalar>(
    grad: &[T],
    a: &Tensor<T>,
    b: &Tensor<T>,
    out_shape: &[usize],
) -> (Vec<T>, Vec<T>) {
    let rank = a.rank();
    let (m, k) = (a.shape()[rank - 2], a.shape()[rank - 1]);
    let n = b.shape()[rank - 1];
    let batch: usize = out_shape[..out_shape.len() - 2].iter().product();
    let mut da = vec![T::zero(); a.numel()];
    let mut db = vec![T::zero(); b.numel()];
    for bi in 0..batch {
        let g = &grad[bi * m * n..(bi + 1) * m * n];
        // dA = dC @ B^T
        matmul_bt_slice(
            g,
            &b.data()[bi * k * n..(bi + 1) * k * n],
            &mut da[bi * m * k..(bi + 1) * m * k],
            m,
            n,
            k,
        );
        // dB = A^T @ dC
        matmul_at_slice(
            &a.data()[bi * m * k..(bi + 1) * m * k],
            g,
            &mut db[bi * k * n..(bi + 1) * k * n],
            m,
            k,
            n,
        );
    }
    (da, db)
}
