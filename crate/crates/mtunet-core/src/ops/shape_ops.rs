//! Shape manipulation: reshape, permute, pad, slice, concat, roll, gather.

use std::ops::Range;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{strides_of, Op, Tensor};

impl<T: Scalar> Tensor<T> {
    /// Same data, new shape (element count must match).
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<T>> {
        let expected: usize = new_shape.iter().product();
        if expected != self.numel() {
            return Err(TensorError::Numel {
                op: "reshape",
                len: self.numel(),
                shape: new_shape.to_vec(),
                expected,
            });
        }
        Ok(Tensor::from_op(
            self.data().to_vec(),
            new_shape.to_vec(),
            Op::Reshape { input: self.clone() },
        ))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let rank = self.rank();
        if axes.len() != rank {
            return Err(TensorError::Rank { op: "permute", expected: rank, got: axes.len() });
        }
        let mut seen = vec![false; rank];
        for &a in axes {
            if a >= rank || seen[a] {
                return Err(TensorError::invalid("permute", "axes must be a permutation"));
            }
            seen[a] = true;
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        let data = permute_data(self.data(), self.shape(), axes, &out_shape);
        Ok(Tensor::from_op(
            data,
            out_shape,
            Op::Permute { input: self.clone(), axes: axes.to_vec() },
        ))
    }

    /// Zero padding: `pad[i] = (before, after)` for each axis.
    pub fn pad_zeros(&self, pad: &[(usize, usize)]) -> Result<Tensor<T>> {
        if pad.len() != self.rank() {
            return Err(TensorError::Rank { op: "pad", expected: self.rank(), got: pad.len() });
        }
        let out_shape: Vec<usize> = self
            .shape()
            .iter()
            .zip(pad)
            .map(|(&d, &(b, a))| d + b + a)
            .collect();
        let mut out = vec![T::zero(); out_shape.iter().product()];
        let out_strides = strides_of(&out_shape);
        let in_shape = self.shape();
        // Copy input rows (contiguous along the last axis) into place.
        let last = in_shape.len() - 1;
        let row = in_shape[last];
        let rows = self.numel() / row.max(1);
        let mut coords = vec![0usize; in_shape.len()];
        let x = self.data();
        for r in 0..rows {
            let mut base = pad[last].0;
            for (ax, &c) in coords.iter().enumerate().take(last) {
                base += (c + pad[ax].0) * out_strides[ax];
            }
            out[base..base + row].copy_from_slice(&x[r * row..(r + 1) * row]);
            for ax in (0..last).rev() {
                coords[ax] += 1;
                if coords[ax] < in_shape[ax] {
                    break;
                }
                coords[ax] = 0;
            }
        }
        Ok(Tensor::from_op(
            out,
            out_shape,
            Op::Pad { input: self.clone(), pad: pad.to_vec() },
        ))
    }

    /// Contiguous sub-block selection: one half-open range per axis.
    pub fn slice(&self, ranges: &[Range<usize>]) -> Result<Tensor<T>> {
        if ranges.len() != self.rank() {
            return Err(TensorError::Rank { op: "slice", expected: self.rank(), got: ranges.len() });
        }
        for (axis, (r, &d)) in ranges.iter().zip(self.shape()).enumerate() {
            if r.start >= r.end || r.end > d {
                return Err(TensorError::invalid(
                    "slice",
                    format!("range {:?} out of bounds for axis {axis} of length {d}", r),
                ));
            }
        }
        let out_shape: Vec<usize> = ranges.iter().map(|r| r.end - r.start).collect();
        let starts: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        let data = copy_block(self.data(), self.shape(), &starts, &out_shape);
        Ok(Tensor::from_op(
            data,
            out_shape,
            Op::Slice { input: self.clone(), starts },
        ))
    }

    /// Slices one axis, keeping the rest whole.
    pub fn slice_axis(&self, axis: usize, range: Range<usize>) -> Result<Tensor<T>> {
        let mut ranges: Vec<Range<usize>> = self.shape().iter().map(|&d| 0..d).collect();
        if axis >= ranges.len() {
            return Err(TensorError::invalid(
                "slice",
                format!("axis {axis} out of range for rank {}", self.rank()),
            ));
        }
        ranges[axis] = range;
        self.slice(&ranges)
    }

    /// Cyclic roll: elements move `shifts[i]` positions along axis `i`
    /// (toroidal, like `np.roll`).
    pub fn roll(&self, shifts: &[i64]) -> Result<Tensor<T>> {
        if shifts.len() != self.rank() {
            return Err(TensorError::Rank { op: "roll", expected: self.rank(), got: shifts.len() });
        }
        Ok(Tensor::from_op(
            roll_data(self.data(), self.shape(), shifts),
            self.shape().to_vec(),
            Op::Roll { input: self.clone(), shifts: shifts.to_vec() },
        ))
    }

    /// Concatenates tensors along `axis`; all other axes must agree.
    pub fn concat(tensors: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = tensors
            .first()
            .ok_or_else(|| TensorError::invalid("concat", "empty tensor list"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(TensorError::invalid(
                "concat",
                format!("axis {axis} out of range for rank {rank}"),
            ));
        }
        let mut cat_len = 0usize;
        for t in tensors {
            if t.rank() != rank {
                return Err(TensorError::Rank { op: "concat", expected: rank, got: t.rank() });
            }
            for ax in 0..rank {
                if ax != axis && t.shape()[ax] != first.shape()[ax] {
                    return Err(TensorError::AxisSize {
                        op: "concat",
                        axis: ax,
                        expected: first.shape()[ax],
                        got: t.shape()[ax],
                    });
                }
            }
            cat_len += t.shape()[axis];
        }
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = cat_len;
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for t in tensors {
                let d = t.shape()[axis];
                let chunk = d * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        Ok(Tensor::from_op(
            out,
            out_shape,
            Op::Concat { inputs: tensors.to_vec(), axis },
        ))
    }

    /// Gathers rows of a 2-D (or higher) table along axis 0.
    pub fn index_select_rows(&self, indices: &Rc<Vec<usize>>) -> Result<Tensor<T>> {
        if self.rank() == 0 {
            return Err(TensorError::Rank { op: "index_select", expected: 1, got: 0 });
        }
        let rows = self.shape()[0];
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(TensorError::invalid(
                "index_select",
                format!("index {bad} out of range for {rows} rows"),
            ));
        }
        let row: usize = self.shape()[1..].iter().product();
        let mut out = Vec::with_capacity(indices.len() * row);
        for &i in indices.iter() {
            out.extend_from_slice(&self.data()[i * row..(i + 1) * row]);
        }
        let mut out_shape = self.shape().to_vec();
        out_shape[0] = indices.len();
        Ok(Tensor::from_op(
            out,
            out_shape,
            Op::IndexSelect { table: self.clone(), indices: Rc::clone(indices) },
        ))
    }
}

pub(crate) fn permute_data<T: Scalar>(
    data: &[T],
    in_shape: &[usize],
    axes: &[usize],
    out_shape: &[usize],
) -> Vec<T> {
    let in_strides = strides_of(in_shape);
    // Stride to advance in the input when output coordinate i increments.
    let step: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let numel = data.len();
    let mut out = Vec::with_capacity(numel);
    let mut coords = vec![0usize; out_shape.len()];
    let mut idx = 0usize;
    for _ in 0..numel {
        out.push(data[idx]);
        for ax in (0..out_shape.len()).rev() {
            coords[ax] += 1;
            idx += step[ax];
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
            idx -= step[ax] * out_shape[ax];
        }
    }
    out
}

pub(crate) fn permute_backward<T: Scalar>(
    grad: &[T],
    input_shape: &[usize],
    axes: &[usize],
) -> Vec<T> {
    let mut inverse = vec![0usize; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inverse[a] = i;
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| input_shape[a]).collect();
    permute_data(grad, &out_shape, &inverse, input_shape)
}

/// Copies the block starting at `starts` with extent `lens` out of `data`.
fn copy_block<T: Scalar>(
    data: &[T],
    shape: &[usize],
    starts: &[usize],
    lens: &[usize],
) -> Vec<T> {
    let strides = strides_of(shape);
    let last = shape.len() - 1;
    let row = lens[last];
    let out_numel: usize = lens.iter().product();
    let mut out = Vec::with_capacity(out_numel);
    let rows = out_numel / row;
    let mut coords = vec![0usize; shape.len()];
    for _ in 0..rows {
        let mut base = starts[last];
        for (ax, &c) in coords.iter().enumerate().take(last) {
            base += (c + starts[ax]) * strides[ax];
        }
        out.extend_from_slice(&data[base..base + row]);
        for ax in (0..last).rev() {
            coords[ax] += 1;
            if coords[ax] < lens[ax] {
                break;
            }
            coords[ax] = 0;
        }
    }
    out
}

pub(crate) fn slice_backward<T: Scalar>(
    grad: &[T],
    out_shape: &[usize],
    input_shape: &[usize],
    starts: &[usize],
) -> Vec<T> {
    let strides = strides_of(input_shape);
    let mut dx = vec![T::zero(); input_shape.iter().product()];
    let last = input_shape.len() - 1;
    let row = out_shape[last];
    let rows = grad.len() / row;
    let mut coords = vec![0usize; input_shape.len()];
    for r in 0..rows {
        let mut base = starts[last];
        for (ax, &c) in coords.iter().enumerate().take(last) {
            base += (c + starts[ax]) * strides[ax];
        }
        for (d, &g) in dx[base..base + row].iter_mut().zip(&grad[r * row..(r + 1) * row]) {
            *d = *d + g;
        }
        for ax in (0..last).rev() {
            coords[ax] += 1;
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
        }
    }
    dx
}

pub(crate) fn pad_backward<T: Scalar>(
    grad: &[T],
    input_shape: &[usize],
    pad: &[(usize, usize)],
) -> Vec<T> {
    let out_shape: Vec<usize> = input_shape
        .iter()
        .zip(pad)
        .map(|(&d, &(b, a))| d + b + a)
        .collect();
    let starts: Vec<usize> = pad.iter().map(|&(b, _)| b).collect();
    copy_block(grad, &out_shape, &starts, input_shape)
}

pub(crate) fn concat_backward<T: Scalar>(
    grad: &[T],
    out_shape: &[usize],
    inputs: &[Tensor<T>],
    axis: usize,
) -> Vec<Vec<T>> {
    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let total_axis = out_shape[axis];
    let mut parts: Vec<Vec<T>> = inputs
        .iter()
        .map(|t| Vec::with_capacity(t.numel()))
        .collect();
    for o in 0..outer {
        let mut offset = 0usize;
        for (t, part) in inputs.iter().zip(&mut parts) {
            let d = t.shape()[axis];
            let base = o * total_axis * inner + offset * inner;
            part.extend_from_slice(&grad[base..base + d * inner]);
            offset += d;
        }
    }
    parts
}

pub(crate) fn roll_data<T: Scalar>(data: &[T], shape: &[usize], shifts: &[i64]) -> Vec<T> {
    // Normalized non-negative shift per axis.
    let norm: Vec<usize> = shape
        .iter()
        .zip(shifts)
        .map(|(&d, &s)| {
            if d == 0 {
                0
            } else {
                s.rem_euclid(d as i64) as usize
            }
        })
        .collect();
    if norm.iter().all(|&s| s == 0) {
        return data.to_vec();
    }
    let strides = strides_of(shape);
    let numel = data.len();
    let mut out = vec![T::zero(); numel];
    let mut coords = vec![0usize; shape.len()];
    // out[c] = in[(c - shift) mod d] ⇔ out index derived from input coords.
    let mut src = 0usize;
    for _ in 0..numel {
        let mut dst = 0usize;
        for (ax, &c) in coords.iter().enumerate() {
            let d = shape[ax];
            let t = c + norm[ax];
            let t = if t >= d { t - d } else { t };
            dst += t * strides[ax];
        }
        out[dst] = data[src];
        src += 1;
        for ax in (0..shape.len()).rev() {
            coords[ax] += 1;
            if coords[ax] < shape[ax] {
                break;
            }
            coords[ax] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::rc::Rc;

    use crate::tensor::Tensor;

    #[test]
    fn concat_channel_axis() {
        let a = Tensor::<f64>::zeros(&[2, 2, 3, 3]);
        let b = Tensor::<f64>::ones(&[2, 3, 3, 3]);
        let c = Tensor::concat(&[a, b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 5, 3, 3]);
        assert_eq!(c.data()[2 * 9 - 1], 0.0);
        assert_eq!(c.data()[2 * 9], 1.0);
    }

    #[test]
    fn concat_mismatched_axis_errors() {
        let a = Tensor::<f64>::zeros(&[2, 2, 3, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3, 4, 3]);
        let err = Tensor::concat(&[a, b], 1).unwrap_err().to_string();
        assert!(err.contains("axis 2"), "{err}");
    }

    #[test]
    fn roll_two_by_two() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        // roll by (-1, -1): [[a,b],[c,d]] -> [[d,c],[b,a]]
        let y = x.roll(&[-1, -1]).unwrap();
        assert_eq!(y.data(), &[4.0, 3.0, 2.0, 1.0]);
        let back = y.roll(&[1, 1]).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn pad_then_slice_roundtrips() {
        let x = Tensor::<f64>::from_vec((0..24).map(|v| v as f64).collect(), &[2, 3, 4]).unwrap();
        let p = x.pad_zeros(&[(0, 0), (1, 2), (0, 3)]).unwrap();
        assert_eq!(p.shape(), &[2, 6, 7]);
        let s = p.slice(&[0..2, 1..4, 0..4]).unwrap();
        assert_eq!(s.shape(), x.shape());
        assert_eq!(s.data(), x.data());
    }

    #[test]
    fn permute_roundtrip_and_layout() {
        let x = Tensor::<f64>::from_vec((0..6).map(|v| v as f64).collect(), &[2, 3]).unwrap();
        let t = x.permute(&[1, 0]).unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let back = t.permute(&[1, 0]).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn index_select_gathers_rows() {
        let table = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]).unwrap();
        let idx = Rc::new(vec![2usize, 0, 2]);
        let y = table.index_select_rows(&idx).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
    }
}
