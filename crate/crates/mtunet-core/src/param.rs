//! Trainable parameters and non-trainable buffers.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A trainable tensor. The handle is cheap to clone and shared: the model
/// reads it during forward passes, `backward` accumulates its gradient, and
/// the optimizer swaps in updated values between steps.
pub struct Parameter<T: Scalar> {
    value: Rc<RefCell<Tensor<T>>>,
}

impl<T: Scalar> Clone for Parameter<T> {
    fn clone(&self) -> Self {
        Parameter { value: Rc::clone(&self.value) }
    }
}

impl<T: Scalar> Parameter<T> {
    pub fn new(data: Vec<T>, shape: &[usize]) -> Result<Parameter<T>> {
        let t = Tensor::var_from_vec(data, shape)?;
        Ok(Parameter { value: Rc::new(RefCell::new(t)) })
    }

    /// The current value as a graph leaf.
    pub fn value(&self) -> Tensor<T> {
        self.value.borrow().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.value.borrow().numel()
    }

    pub fn data(&self) -> Vec<T> {
        self.value.borrow().data().to_vec()
    }

    /// Accumulated gradient; zeros when `backward` has not touched it.
    pub fn grad(&self) -> Vec<T> {
        let v = self.value.borrow();
        v.leaf_grad().unwrap_or_else(|| vec![T::zero(); v.numel()])
    }

    /// Gradient as a tensor of the same shape as the value.
    pub fn grad_tensor(&self) -> Tensor<T> {
        let shape = self.shape();
        Tensor::from_vec(self.grad(), &shape).expect("gradient matches value shape")
    }

    pub fn zero_grad(&self) {
        self.value.borrow().clear_leaf_grad();
    }

    /// Replaces the value with a fresh leaf (gradient starts cleared).
    pub fn set_data(&self, data: Vec<T>) {
        let shape = self.shape();
        let t = Tensor::var_from_vec(data, &shape).expect("replacement data matches shape");
        *self.value.borrow_mut() = t;
    }

    /// Adds `delta` to one element in place; used by finite differencing.
    pub fn nudge(&self, index: usize, delta: T) {
        let mut data = self.data();
        data[index] = data[index] + delta;
        let grad = self.value.borrow().leaf_grad();
        self.set_data(data);
        if let Some(g) = grad {
            // keep the accumulated gradient visible across the nudge
            *self.value.borrow().inner.grad.borrow_mut() = Some(g);
        }
    }
}

/// Non-trainable state updated during forward passes (running statistics).
pub struct Buffer<T: Scalar> {
    data: Rc<RefCell<Vec<T>>>,
}

impl<T: Scalar> Clone for Buffer<T> {
    fn clone(&self) -> Self {
        Buffer { data: Rc::clone(&self.data) }
    }
}

impl<T: Scalar> Buffer<T> {
    pub fn new(init: Vec<T>) -> Buffer<T> {
        Buffer { data: Rc::new(RefCell::new(init)) }
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.borrow().clone()
    }

    pub fn set(&self, values: Vec<T>) {
        *self.data.borrow_mut() = values;
    }

    pub fn len(&self) -> usize {
        self.data.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.borrow().is_empty()
    }

    pub(crate) fn with_mut<R>(&self, f: impl FnOnce(&mut [T]) -> R) -> R {
        f(&mut self.data.borrow_mut())
    }
}

/// Named handles, in deterministic construction order.
pub type NamedParams<T> = Vec<(String, Parameter<T>)>;
pub type NamedBuffers<T> = Vec<(String, Buffer<T>)>;

/// Total element count across parameters.
pub fn total_numel<T: Scalar>(params: &NamedParams<T>) -> usize {
    params.iter().map(|(_, p)| p.numel()).sum()
}
