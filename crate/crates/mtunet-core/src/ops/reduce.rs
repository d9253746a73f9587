//! Reductions: sum, mean, max along axes.

use crate::error::{Result, TensorError};
use crate::scalar::{cast, Scalar};
use crate::tensor::{strides_of, Op, Tensor};

fn check_axes(op: &'static str, rank: usize, axes: &[usize]) -> Result<Vec<usize>> {
    let mut sorted = axes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != axes.len() {
        return Err(TensorError::invalid(op, "duplicate reduction axes"));
    }
    if let Some(&bad) = sorted.iter().find(|&&a| a >= rank) {
        return Err(TensorError::invalid(op, format!("axis {bad} out of range for rank {rank}")));
    }
    Ok(sorted)
}

/// Output shape after reducing `axes`; reduced axes become 1 (`keepdim`) or
/// are dropped.
fn reduced_shape(shape: &[usize], axes: &[usize], keepdim: bool) -> Vec<usize> {
    let mut out = Vec::with_capacity(shape.len());
    for (i, &d) in shape.iter().enumerate() {
        if axes.contains(&i) {
            if keepdim {
                out.push(1);
            }
        } else {
            out.push(d);
        }
    }
    out
}

/// Flat index into the keepdim-shaped reduction output for each input index.
fn reduction_targets(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let keep: Vec<usize> = shape
        .iter()
        .enumerate()
        .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
        .collect();
    let out_strides = strides_of(&keep);
    let numel: usize = shape.iter().product();
    let mut targets = Vec::with_capacity(numel);
    let mut coords = vec![0usize; shape.len()];
    let mut idx = 0usize;
    for _ in 0..numel {
        targets.push(idx);
        for ax in (0..shape.len()).rev() {
            coords[ax] += 1;
            let stride = if keep[ax] == 1 { 0 } else { out_strides[ax] };
            idx += stride;
            if coords[ax] < shape[ax] {
                break;
            }
            coords[ax] = 0;
            idx -= stride * shape[ax];
        }
    }
    targets
}

/// Broadcasts `grad` (keepdim reduction shape) back over the reduced axes,
/// scaling each element by `scale`.
pub(crate) fn spread_over_axes<T: Scalar>(
    grad: &[T],
    input_shape: &[usize],
    axes: &[usize],
    scale: T,
) -> Vec<T> {
    reduction_targets(input_shape, axes)
        .into_iter()
        .map(|t| grad[t] * scale)
        .collect()
}

impl<T: Scalar> Tensor<T> {
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        let axes = check_axes("sum", self.rank(), axes)?;
        let out_shape = reduced_shape(self.shape(), &axes, keepdim);
        let mut data = vec![T::zero(); out_shape.iter().product()];
        for (v, t) in self.data().iter().zip(reduction_targets(self.shape(), &axes)) {
            data[t] = data[t] + *v;
        }
        Ok(Tensor::from_op(data, out_shape, Op::Sum { input: self.clone(), axes }))
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        let axes = check_axes("mean", self.rank(), axes)?;
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        let inv = T::one() / cast::<T>(count as f64);
        let out_shape = reduced_shape(self.shape(), &axes, keepdim);
        let mut data = vec![T::zero(); out_shape.iter().product()];
        for (v, t) in self.data().iter().zip(reduction_targets(self.shape(), &axes)) {
            data[t] = data[t] + *v;
        }
        for v in &mut data {
            *v = *v * inv;
        }
        Ok(Tensor::from_op(data, out_shape, Op::Mean { input: self.clone(), axes }))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum_all(&self) -> Result<Tensor<T>> {
        let axes: Vec<usize> = (0..self.rank()).collect();
        self.sum_axes(&axes, false)
    }

    /// Mean of all elements as a rank-0 tensor.
    pub fn mean_all(&self) -> Result<Tensor<T>> {
        let axes: Vec<usize> = (0..self.rank()).collect();
        self.mean_axes(&axes, false)
    }

    /// Maximum along one axis. Gradient flows to the first maximal element.
    pub fn max_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<T>> {
        let axes = check_axes("max", self.rank(), &[axis])?;
        let out_shape = reduced_shape(self.shape(), &axes, keepdim);
        let out_numel: usize = out_shape.iter().product();
        let mut data = vec![T::neg_infinity(); out_numel];
        let mut argmax = vec![usize::MAX; out_numel];
        for ((i, v), t) in self
            .data()
            .iter()
            .enumerate()
            .zip(reduction_targets(self.shape(), &axes))
        {
            if *v > data[t] || argmax[t] == usize::MAX {
                data[t] = *v;
                argmax[t] = i;
            }
        }
        Ok(Tensor::from_op(
            data,
            out_shape,
            Op::MaxReduce { input: self.clone(), argmax },
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::Tensor;

    #[test]
    fn sum_and_mean_axes() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
        let s = x.sum_axes(&[1], false).unwrap();
        assert_eq!(s.shape(), &[2]);
        assert_eq!(s.data(), &[6.0, 15.0]);
        let m = x.mean_axes(&[0], true).unwrap();
        assert_eq!(m.shape(), &[1, 3]);
        assert_eq!(m.data(), &[2.5, 3.5, 4.5]);
        assert_eq!(x.sum_all().unwrap().item(), 21.0);
        assert_eq!(x.mean_all().unwrap().item(), 3.5);
    }

    #[test]
    fn max_axis_keepdim() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 5.0, 2.0, 7.0, 0.0, 7.0], &[2, 3]).unwrap();
        let m = x.max_axis(1, true).unwrap();
        assert_eq!(m.shape(), &[2, 1]);
        assert_eq!(m.data(), &[5.0, 7.0]);
    }

    #[test]
    fn scalar_from_full_reduction_has_rank_zero() {
        let x = Tensor::<f64>::ones(&[2, 2]);
        let s = x.sum_all().unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.numel(), 1);
    }
}
