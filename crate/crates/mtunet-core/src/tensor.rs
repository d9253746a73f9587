//! Dense row-major tensor with reverse-mode automatic differentiation.
//!
//! Every operation that produces a tensor records its inputs (when gradient
//! tracking is on), forming a DAG. Node ids are allocated monotonically, so
//! walking reachable nodes in decreasing id order is a valid reverse
//! topological order; [`Tensor::backward`] exploits that. Tensors are
//! immutable once produced; leaf variables carry a gradient accumulator that
//! `backward` adds into.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(1) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Runs `f` with gradient recording disabled (e.g. evaluation forward passes).
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|c| c.replace(false)));
    f()
}

pub(crate) struct Inner<T: Scalar> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<T>,
    pub(crate) parent: Option<Op<T>>,
    pub(crate) requires_grad: bool,
    /// Gradient accumulator; populated by `backward` on leaf variables only.
    pub(crate) grad: RefCell<Option<Vec<T>>>,
}

/// N-dimensional real-valued array. Cheap to clone (shared storage).
pub struct Tensor<T: Scalar> {
    pub(crate) inner: Rc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

impl<T: Scalar> Tensor<T> {
    fn new_inner(
        data: Vec<T>,
        shape: Vec<usize>,
        parent: Option<Op<T>>,
        requires_grad: bool,
    ) -> Tensor<T> {
        Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                parent,
                requires_grad,
                grad: RefCell::new(None),
            }),
        }
    }

    /// Constant tensor from row-major data.
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Tensor<T>> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::Numel {
                op: "from_vec",
                len: data.len(),
                shape: shape.to_vec(),
                expected,
            });
        }
        Ok(Self::new_inner(data, shape.to_vec(), None, false))
    }

    /// Leaf variable: participates in gradient accumulation.
    pub fn var_from_vec(data: Vec<T>, shape: &[usize]) -> Result<Tensor<T>> {
        let t = Self::from_vec(data, shape)?;
        Ok(Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape: t.inner.shape.clone(),
                data: t.inner.data.clone(),
                parent: None,
                requires_grad: true,
                grad: RefCell::new(None),
            }),
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor<T> {
        let n = shape.iter().product();
        Self::new_inner(vec![T::zero(); n], shape.to_vec(), None, false)
    }

    pub fn ones(shape: &[usize]) -> Tensor<T> {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Tensor<T> {
        let n = shape.iter().product();
        Self::new_inner(vec![value; n], shape.to_vec(), None, false)
    }

    /// Rank-0 constant.
    pub fn scalar(value: T) -> Tensor<T> {
        Self::new_inner(vec![value], Vec::new(), None, false)
    }

    /// Internal: output of an operation. Gradient tracking is dropped when
    /// disabled or when no input requires it.
    pub(crate) fn from_op(data: Vec<T>, shape: Vec<usize>, op: Op<T>) -> Tensor<T> {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let track = grad_enabled() && op.any_input_requires_grad();
        Self::new_inner(data, shape, track.then_some(op), track)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() requires a single-element tensor");
        self.inner.data[0]
    }

    pub fn is_all_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    /// Copy of the accumulated gradient of a leaf variable, if any.
    pub fn leaf_grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    /// Clears the accumulated gradient of a leaf variable.
    pub fn clear_leaf_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Reverse-mode gradient accumulation from a scalar loss into every leaf
    /// variable reachable through the recorded graph. Calling twice without
    /// clearing accumulates.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                numel: self.numel(),
            });
        }
        if !self.inner.requires_grad {
            return Err(TensorError::invalid(
                "backward",
                "loss has no recorded graph (nothing requires grad)",
            ));
        }

        // Reachable subgraph, keyed by id. Ids increase from inputs to
        // outputs, so reverse id order is a reverse topological order.
        let mut nodes: BTreeMap<u64, Tensor<T>> = BTreeMap::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if nodes.contains_key(&t.id()) {
                continue;
            }
            if let Some(op) = &t.inner.parent {
                op.for_each_input(&mut |input| {
                    if input.inner.requires_grad && !nodes.contains_key(&input.id()) {
                        stack.push(input.clone());
                    }
                });
            }
            nodes.insert(t.id(), t);
        }

        let mut grads: HashMap<u64, Vec<T>> = HashMap::new();
        grads.insert(self.id(), vec![T::one()]);

        for (_, node) in nodes.iter().rev() {
            let Some(grad) = grads.remove(&node.id()) else {
                continue;
            };
            match &node.inner.parent {
                None => {
                    if node.inner.requires_grad {
                        let mut slot = node.inner.grad.borrow_mut();
                        match slot.as_mut() {
                            Some(acc) => {
                                for (a, d) in acc.iter_mut().zip(&grad) {
                                    *a = *a + *d;
                                }
                            }
                            None => *slot = Some(grad),
                        }
                    }
                }
                Some(op) => {
                    op.backward(node, &grad, &mut |input: &Tensor<T>, delta: Vec<T>| {
                        if !input.inner.requires_grad {
                            return;
                        }
                        debug_assert_eq!(delta.len(), input.numel());
                        match grads.entry(input.id()) {
                            std::collections::hash_map::Entry::Occupied(mut e) => {
                                for (a, d) in e.get_mut().iter_mut().zip(&delta) {
                                    *a = *a + *d;
                                }
                            }
                            std::collections::hash_map::Entry::Vacant(v) => {
                                v.insert(delta);
                            }
                        }
                    });
                }
            }
        }
        Ok(())
    }
}

/// Row-major strides for a shape.
pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Recorded operation: inputs plus whatever the backward rule needs.
pub(crate) enum Op<T: Scalar> {
    Add { a: Tensor<T>, b: Tensor<T> },
    Sub { a: Tensor<T>, b: Tensor<T> },
    Mul { a: Tensor<T>, b: Tensor<T> },
    Div { a: Tensor<T>, b: Tensor<T> },
    Neg { x: Tensor<T> },
    AddScalar { x: Tensor<T> },
    MulScalar { x: Tensor<T>, c: T },
    ClampMin { x: Tensor<T>, min: T },
    Log { x: Tensor<T> },
    Relu { x: Tensor<T> },
    Gelu { x: Tensor<T> },
    Sigmoid { x: Tensor<T> },
    Softmax { x: Tensor<T>, axis: usize },
    Matmul { a: Tensor<T>, b: Tensor<T> },
    Conv2d {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Option<Tensor<T>>,
        stride: usize,
        padding: usize,
        dilation: usize,
    },
    BatchNorm {
        input: Tensor<T>,
        gamma: Tensor<T>,
        beta: Tensor<T>,
        mean: Vec<T>,
        inv_std: Vec<T>,
        training: bool,
    },
    LayerNorm {
        input: Tensor<T>,
        gamma: Tensor<T>,
        beta: Tensor<T>,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    MaxPool2d { input: Tensor<T>, argmax: Vec<usize> },
    GlobalAvgPool { input: Tensor<T> },
    UpsampleBilinear2x { input: Tensor<T> },
    Reshape { input: Tensor<T> },
    Permute { input: Tensor<T>, axes: Vec<usize> },
    Pad { input: Tensor<T>, pad: Vec<(usize, usize)> },
    Slice { input: Tensor<T>, starts: Vec<usize> },
    Concat { inputs: Vec<Tensor<T>>, axis: usize },
    Roll { input: Tensor<T>, shifts: Vec<i64> },
    Sum { input: Tensor<T>, axes: Vec<usize> },
    Mean { input: Tensor<T>, axes: Vec<usize> },
    MaxReduce { input: Tensor<T>, argmax: Vec<usize> },
    IndexSelect { table: Tensor<T>, indices: Rc<Vec<usize>> },
}

impl<T: Scalar> Op<T> {
    fn any_input_requires_grad(&self) -> bool {
        let mut any = false;
        self.for_each_input(&mut |t| any |= t.inner.requires_grad);
        any
    }

    pub(crate) fn for_each_input(&self, f: &mut dyn FnMut(&Tensor<T>)) {
        use Op::*;
        match self {
            Add { a, b } | Sub { a, b } | Mul { a, b } | Div { a, b } | Matmul { a, b } => {
                f(a);
                f(b);
            }
            Neg { x }
            | AddScalar { x }
            | MulScalar { x, .. }
            | ClampMin { x, .. }
            | Log { x }
            | Relu { x }
            | Gelu { x }
            | Sigmoid { x }
            | Softmax { x, .. } => f(x),
            Conv2d {
                input,
                weight,
                bias,
                ..
            } => {
                f(input);
                f(weight);
                if let Some(b) = bias {
                    f(b);
                }
            }
            BatchNorm {
                input, gamma, beta, ..
            }
            | LayerNorm {
                input, gamma, beta, ..
            } => {
                f(input);
                f(gamma);
                f(beta);
            }
            MaxPool2d { input, .. }
            | GlobalAvgPool { input }
            | UpsampleBilinear2x { input }
            | Reshape { input }
            | Permute { input, .. }
            | Pad { input, .. }
            | Slice { input, .. }
            | Roll { input, .. }
            | Sum { input, .. }
            | Mean { input, .. }
            | MaxReduce { input, .. } => f(input),
            Concat { inputs, .. } => {
                for t in inputs {
                    f(t);
                }
            }
            IndexSelect { table, .. } => f(table),
        }
    }

    /// Pushes the gradient of `out` through this operation. `sink(input,
    /// delta)` accumulates `delta` (shaped like `input`) onto each input.
    fn backward(&self, out: &Tensor<T>, grad: &[T], sink: &mut dyn FnMut(&Tensor<T>, Vec<T>)) {
        use crate::ops;
        use Op::*;
        match self {
            Add { a, b } => {
                sink(a, ops::elementwise::reduce_to_shape(grad, out.shape(), a.shape()));
                sink(b, ops::elementwise::reduce_to_shape(grad, out.shape(), b.shape()));
            }
            Sub { a, b } => {
                sink(a, ops::elementwise::reduce_to_shape(grad, out.shape(), a.shape()));
                let neg: Vec<T> = grad.iter().map(|&g| -g).collect();
                sink(b, ops::elementwise::reduce_to_shape(&neg, out.shape(), b.shape()));
            }
            Mul { a, b } => {
                let bb = ops::elementwise::expand_to(b.data(), b.shape(), out.shape());
                let da: Vec<T> = grad.iter().zip(&bb).map(|(&g, &x)| g * x).collect();
                sink(a, ops::elementwise::reduce_to_shape(&da, out.shape(), a.shape()));
                let aa = ops::elementwise::expand_to(a.data(), a.shape(), out.shape());
                let db: Vec<T> = grad.iter().zip(&aa).map(|(&g, &x)| g * x).collect();
                sink(b, ops::elementwise::reduce_to_shape(&db, out.shape(), b.shape()));
            }
            Div { a, b } => {
                let bb = ops::elementwise::expand_to(b.data(), b.shape(), out.shape());
                let da: Vec<T> = grad.iter().zip(&bb).map(|(&g, &x)| g / x).collect();
                sink(a, ops::elementwise::reduce_to_shape(&da, out.shape(), a.shape()));
                let aa = ops::elementwise::expand_to(a.data(), a.shape(), out.shape());
                let db: Vec<T> = grad
                    .iter()
                    .zip(aa.iter().zip(&bb))
                    .map(|(&g, (&x, &y))| -g * x / (y * y))
                    .collect();
                sink(b, ops::elementwise::reduce_to_shape(&db, out.shape(), b.shape()));
            }
            Neg { x } => sink(x, grad.iter().map(|&g| -g).collect()),
            AddScalar { x } => sink(x, grad.to_vec()),
            MulScalar { x, c } => sink(x, grad.iter().map(|&g| g * *c).collect()),
            ClampMin { x, min } => {
                let d: Vec<T> = grad
                    .iter()
                    .zip(x.data())
                    .map(|(&g, &v)| if v > *min { g } else { T::zero() })
                    .collect();
                sink(x, d);
            }
            Log { x } => {
                let d: Vec<T> = grad
                    .iter()
                    .zip(x.data())
                    .map(|(&g, &v)| g / v)
                    .collect();
                sink(x, d);
            }
            Relu { x } => {
                let d: Vec<T> = grad
                    .iter()
                    .zip(x.data())
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                sink(x, d);
            }
            Gelu { x } => sink(x, ops::elementwise::gelu_backward(grad, x.data())),
            Sigmoid { x } => {
                let d: Vec<T> = grad
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * y * (T::one() - y))
                    .collect();
                sink(x, d);
            }
            Softmax { x, axis } => {
                sink(x, ops::norm::softmax_backward(grad, out.data(), out.shape(), *axis));
            }
            Matmul { a, b } => {
                let (da, db) = ops::matmul::matmul_backward(grad, a, b, out.shape());
                sink(a, da);
                sink(b, db);
            }
            Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
                dilation,
            } => {
                let (din, dw, db) = ops::conv::conv2d_backward(
                    grad,
                    out.shape(),
                    input,
                    weight,
                    bias.is_some(),
                    *stride,
                    *padding,
                    *dilation,
                );
                sink(input, din);
                sink(weight, dw);
                if let (Some(b), Some(db)) = (bias, db) {
                    sink(b, db);
                }
            }
            BatchNorm {
                input,
                gamma,
                beta,
                mean,
                inv_std,
                training,
            } => {
                let (dx, dgamma, dbeta) =
                    ops::norm::batch_norm_backward(grad, input, gamma, mean, inv_std, *training);
                sink(input, dx);
                sink(gamma, dgamma);
                sink(beta, dbeta);
            }
            LayerNorm {
                input,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let (dx, dgamma, dbeta) =
                    ops::norm::layer_norm_backward(grad, input, gamma, mean, inv_std);
                sink(input, dx);
                sink(gamma, dgamma);
                sink(beta, dbeta);
            }
            MaxPool2d { input, argmax } => {
                let mut dx = vec![T::zero(); input.numel()];
                for (g, &src) in grad.iter().zip(argmax) {
                    dx[src] = dx[src] + *g;
                }
                sink(input, dx);
            }
            GlobalAvgPool { input } => {
                sink(input, ops::pool::global_avg_pool_backward(grad, input.shape()));
            }
            UpsampleBilinear2x { input } => {
                sink(input, ops::resize::upsample_bilinear2x_backward(grad, input.shape()));
            }
            Reshape { input } => sink(input, grad.to_vec()),
            Permute { input, axes } => {
                sink(input, ops::shape_ops::permute_backward(grad, input.shape(), axes));
            }
            Pad { input, pad } => {
                sink(input, ops::shape_ops::pad_backward(grad, input.shape(), pad));
            }
            Slice { input, starts } => {
                sink(
                    input,
                    ops::shape_ops::slice_backward(grad, out.shape(), input.shape(), starts),
                );
            }
            Concat { inputs, axis } => {
                for (idx, part) in
                    ops::shape_ops::concat_backward(grad, out.shape(), inputs, *axis)
                        .into_iter()
                        .enumerate()
                {
                    sink(&inputs[idx], part);
                }
            }
            Roll { input, shifts } => {
                let inverse: Vec<i64> = shifts.iter().map(|&s| -s).collect();
                sink(input, ops::shape_ops::roll_data(grad, input.shape(), &inverse));
            }
            Sum { input, axes } => {
                sink(input, ops::reduce::spread_over_axes(grad, input.shape(), axes, T::one()));
            }
            Mean { input, axes } => {
                let count: usize = axes.iter().map(|&a| input.shape()[a]).product();
                let inv = T::one() / crate::scalar::cast::<T>(count as f64);
                sink(input, ops::reduce::spread_over_axes(grad, input.shape(), axes, inv));
            }
            MaxReduce { input, argmax, .. } => {
                let mut dx = vec![T::zero(); input.numel()];
                for (g, &src) in grad.iter().zip(argmax) {
                    dx[src] = dx[src] + *g;
                }
                sink(input, dx);
            }
            IndexSelect { table, indices } => {
                let row: usize = table.shape()[1..].iter().product();
                let mut dt = vec![T::zero(); table.numel()];
                for (r, &src) in indices.iter().enumerate() {
                    let dst = &mut dt[src * row..(src + 1) * row];
                    for (d, g) in dst.iter_mut().zip(&grad[r * row..(r + 1) * row]) {
                        *d = *d + *g;
                    }
                }
                sink(table, dt);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_of_weighted_sum_is_the_weights() {
        let w = Tensor::<f64>::var_from_vec(vec![0.5, -1.0, 2.0], &[3]).unwrap();
        let x = Tensor::<f64>::from_vec(vec![3.0, 4.0, 5.0], &[3]).unwrap();
        let loss = w.mul(&x).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(w.leaf_grad().unwrap(), vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn relu_subgradient_convention() {
        let w = Tensor::<f64>::var_from_vec(vec![-1.0, 2.0], &[2]).unwrap();
        let loss = w.relu().sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(w.leaf_grad().unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn backward_twice_accumulates() {
        let w = Tensor::<f64>::var_from_vec(vec![1.0], &[1]).unwrap();
        let loss = w.mul_scalar(3.0).sum_all().unwrap();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(w.leaf_grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn non_scalar_loss_errors() {
        let w = Tensor::<f64>::var_from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let y = w.mul_scalar(2.0);
        assert!(matches!(y.backward(), Err(TensorError::NonScalarLoss { numel: 2 })));
    }

    #[test]
    fn no_grad_suppresses_graph() {
        let w = Tensor::<f64>::var_from_vec(vec![1.0], &[1]).unwrap();
        let y = no_grad(|| w.mul_scalar(2.0));
        assert!(!y.requires_grad());
        assert!(y.backward().is_err());
    }

    #[test]
    fn shared_subexpression_gradients_add() {
        // loss = sum(w * w) => dloss/dw = 2w
        let w = Tensor::<f64>::var_from_vec(vec![3.0, -2.0], &[2]).unwrap();
        let loss = w.mul(&w).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(w.leaf_grad().unwrap(), vec![6.0, -4.0]);
    }
}
