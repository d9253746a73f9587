//! Elementwise unary/binary operations with numpy-style broadcasting.

use crate::error::{Result, TensorError};
use crate::scalar::{cast, Scalar};
use crate::tensor::{strides_of, Op, Tensor};

/// Shape of `a op b` under trailing-axis broadcasting; singleton axes stretch.
pub fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(TensorError::AxisSize {
                op,
                axis: i,
                expected: da,
                got: db,
            });
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed at `out_shape`: broadcast axes get stride 0.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let strides = strides_of(shape);
    let offset = out_shape.len() - shape.len();
    let mut out = vec![0usize; out_shape.len()];
    for i in 0..shape.len() {
        out[offset + i] = if shape[i] == 1 { 0 } else { strides[i] };
    }
    out
}

/// Materializes `data` (of `shape`) broadcast to `out_shape`.
pub(crate) fn expand_to<T: Scalar>(data: &[T], shape: &[usize], out_shape: &[usize]) -> Vec<T> {
    if shape == out_shape {
        return data.to_vec();
    }
    let numel: usize = out_shape.iter().product();
    let strides = broadcast_strides(shape, out_shape);
    let mut out = Vec::with_capacity(numel);
    let mut coords = vec![0usize; out_shape.len()];
    let mut idx = 0usize;
    for _ in 0..numel {
        out.push(data[idx]);
        for ax in (0..out_shape.len()).rev() {
            coords[ax] += 1;
            idx += strides[ax];
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
            idx -= strides[ax] * out_shape[ax];
        }
    }
    out
}

/// Sums `grad` (of `from_shape`) down to `to_shape` over broadcast axes.
pub(crate) fn reduce_to_shape<T: Scalar>(
    grad: &[T],
    from_shape: &[usize],
    to_shape: &[usize],
) -> Vec<T> {
    if from_shape == to_shape {
        return grad.to_vec();
    }
    let numel_to: usize = to_shape.iter().product();
    let strides = broadcast_strides(to_shape, from_shape);
    let mut out = vec![T::zero(); numel_to];
    let mut coords = vec![0usize; from_shape.len()];
    let mut idx = 0usize;
    for &g in grad {
        out[idx] = out[idx] + g;
        for ax in (0..from_shape.len()).rev() {
            coords[ax] += 1;
            idx += strides[ax];
            if coords[ax] < from_shape[ax] {
                break;
            }
            coords[ax] = 0;
            idx -= strides[ax] * from_shape[ax];
        }
    }
    out
}

fn binary<T: Scalar>(
    op_name: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
    op: Op<T>,
) -> Result<Tensor<T>> {
    let out_shape = broadcast_shapes(op_name, a.shape(), b.shape())?;
    let data = if a.shape() == b.shape() {
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
    } else {
        let ea = expand_to(a.data(), a.shape(), &out_shape);
        let eb = expand_to(b.data(), b.shape(), &out_shape);
        ea.into_iter().zip(eb).map(|(x, y)| f(x, y)).collect()
    };
    Ok(Tensor::from_op(data, out_shape, op))
}

fn unary<T: Scalar>(x: &Tensor<T>, f: impl Fn(T) -> T, op: Op<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::from_op(data, x.shape().to_vec(), op)
}

pub(crate) fn gelu_forward<T: Scalar>(v: T) -> T {
    let half = cast::<T>(0.5);
    let inv_sqrt2 = cast::<T>(std::f64::consts::FRAC_1_SQRT_2);
    half * v * (T::one() + (v * inv_sqrt2).erf())
}

pub(crate) fn gelu_backward<T: Scalar>(grad: &[T], x: &[T]) -> Vec<T> {
    let half = cast::<T>(0.5);
    let inv_sqrt2 = cast::<T>(std::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = cast::<T>(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    grad.iter()
        .zip(x)
        .map(|(&g, &v)| {
            let cdf = half * (T::one() + (v * inv_sqrt2).erf());
            let pdf = inv_sqrt_2pi * (-half * v * v).exp();
            g * (cdf + v * pdf)
        })
        .collect()
}

fn stable_sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary("add", self, other, |x, y| x + y, Op::Add { a: self.clone(), b: other.clone() })
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary("sub", self, other, |x, y| x - y, Op::Sub { a: self.clone(), b: other.clone() })
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary("mul", self, other, |x, y| x * y, Op::Mul { a: self.clone(), b: other.clone() })
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary("div", self, other, |x, y| x / y, Op::Div { a: self.clone(), b: other.clone() })
    }

    pub fn neg(&self) -> Tensor<T> {
        unary(self, |v| -v, Op::Neg { x: self.clone() })
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        unary(self, |v| v + c, Op::AddScalar { x: self.clone() })
    }

    pub fn mul_scalar(&self, c: T) -> Tensor<T> {
        unary(self, |v| v * c, Op::MulScalar { x: self.clone(), c })
    }

    /// Elementwise `max(v, min)`.
    pub fn clamp_min(&self, min: T) -> Tensor<T> {
        unary(self, |v| if v < min { min } else { v }, Op::ClampMin { x: self.clone(), min })
    }

    /// Natural logarithm. Callers clamp first when the argument can reach 0.
    pub fn log(&self) -> Tensor<T> {
        unary(self, |v| v.ln(), Op::Log { x: self.clone() })
    }

    pub fn relu(&self) -> Tensor<T> {
        unary(
            self,
            |v| if v > T::zero() { v } else { T::zero() },
            Op::Relu { x: self.clone() },
        )
    }

    /// Exact Gaussian-CDF GELU: `0.5 * x * (1 + erf(x / sqrt(2)))`.
    pub fn gelu(&self) -> Tensor<T> {
        unary(self, gelu_forward, Op::Gelu { x: self.clone() })
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        unary(self, stable_sigmoid, Op::Sigmoid { x: self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::Tensor;

    #[test]
    fn relu_basic() {
        let x = Tensor::<f64>::from_vec(vec![-1.0, 0.0, 2.0], &[3]).unwrap();
        assert_eq!(x.relu().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn add_zeros_and_mul_ones_are_identity() {
        let x = Tensor::<f64>::from_vec(vec![1.5, -2.0, 0.25, 7.0], &[2, 2]).unwrap();
        let z = Tensor::<f64>::zeros(&[2, 2]);
        let o = Tensor::<f64>::ones(&[2, 2]);
        assert_eq!(x.add(&z).unwrap().data(), x.data());
        assert_eq!(x.mul(&o).unwrap().data(), x.data());
    }

    #[test]
    fn broadcast_over_singleton_axes() {
        let a = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::<f64>::from_vec(vec![10.0, 20.0], &[1, 2]).unwrap();
        let c = a.add(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[11.0, 22.0, 13.0, 24.0]);
        let col = Tensor::<f64>::from_vec(vec![100.0, 200.0], &[2, 1]).unwrap();
        let d = a.mul(&col).unwrap();
        assert_eq!(d.data(), &[100.0, 200.0, 600.0, 800.0]);
    }

    #[test]
    fn incompatible_broadcast_errors() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 4]);
        let err = a.add(&b).unwrap_err().to_string();
        assert!(err.contains("axis 1"), "{err}");
    }

    #[test]
    fn gelu_matches_gaussian_cdf_form() {
        let x = Tensor::<f64>::from_vec(vec![-1.0, 0.0, 0.5, 3.0], &[4]).unwrap();
        let y = x.gelu();
        for (&xi, &yi) in x.data().iter().zip(y.data()) {
            let expect = 0.5 * xi * (1.0 + libm::erf(xi / std::f64::consts::SQRT_2));
            assert!((yi - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let x = Tensor::<f64>::from_vec(vec![-800.0, 800.0], &[2]).unwrap();
        let y = x.sigmoid();
        assert_eq!(y.data()[0], 0.0);
        assert_eq!(y.data()[1], 1.0);
        assert!(y.is_all_finite());
    }
}
