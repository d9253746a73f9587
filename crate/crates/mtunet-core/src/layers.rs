//! Parameterized layers: convolution, normalization, linear.

use crate::error::Result;
use crate::ops::norm::batch_norm;
use crate::param::{Buffer, NamedBuffers, NamedParams, Parameter};
use crate::rng::RngState;
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

/// Forward-pass mode; batch norm switches between batch and running stats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train)
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

/// Fan-in scaled uniform draw: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
fn fan_in_uniform<T: Scalar>(rng: &mut RngState, fan_in: usize, n: usize) -> Vec<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| cast(rng.uniform_in(-bound, bound))).collect()
}

pub struct Conv2d<T: Scalar> {
    pub weight: Parameter<T>,
    pub bias: Option<Parameter<T>>,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        rng: &mut RngState,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Conv2d<T> {
        let fan_in = cin * k * k;
        let weight = Parameter::new(fan_in_uniform(rng, fan_in, cout * fan_in), &[cout, cin, k, k])
            .expect("conv weight shape");
        let bias = Parameter::new(fan_in_uniform(rng, fan_in, cout), &[cout])
            .expect("conv bias shape");
        Conv2d { weight, bias: Some(bias), stride, padding, dilation }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.conv2d(
            &self.weight.value(),
            self.bias.as_ref().map(|b| b.value()).as_ref(),
            self.stride,
            self.padding,
            self.dilation,
        )
    }

    pub fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}.bias"), b.clone()));
        }
    }
}

pub struct BatchNorm2d<T: Scalar> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    pub eps: T,
    pub momentum: T,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> BatchNorm2d<T> {
        BatchNorm2d {
            gamma: Parameter::new(vec![T::one(); channels], &[channels]).expect("bn gamma"),
            beta: Parameter::new(vec![T::zero(); channels], &[channels]).expect("bn beta"),
            running_mean: Buffer::new(vec![T::zero(); channels]),
            running_var: Buffer::new(vec![T::one(); channels]),
            eps: cast(BN_EPS),
            momentum: cast(BN_MOMENTUM),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.running_mean.with_mut(|mean| {
            self.running_var.with_mut(|var| {
                batch_norm(
                    x,
                    &self.gamma.value(),
                    &self.beta.value(),
                    mean,
                    var,
                    mode.is_train(),
                    self.eps,
                    self.momentum,
                )
            })
        })
    }

    pub fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }

    pub fn collect_buffers(&self, prefix: &str, out: &mut NamedBuffers<T>) {
        out.push((format!("{prefix}.running_mean"), self.running_mean.clone()));
        out.push((format!("{prefix}.running_var"), self.running_var.clone()));
    }
}

pub struct LayerNorm<T: Scalar> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub eps: T,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(features: usize) -> LayerNorm<T> {
        LayerNorm {
            gamma: Parameter::new(vec![T::one(); features], &[features]).expect("ln gamma"),
            beta: Parameter::new(vec![T::zero(); features], &[features]).expect("ln beta"),
            eps: cast(LN_EPS),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.layer_norm(&self.gamma.value(), &self.beta.value(), self.eps)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }
}

pub struct Linear<T: Scalar> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(rng: &mut RngState, din: usize, dout: usize) -> Linear<T> {
        Linear {
            weight: Parameter::new(fan_in_uniform(rng, din, dout * din), &[dout, din])
                .expect("linear weight"),
            bias: Parameter::new(fan_in_uniform(rng, din, dout), &[dout])
                .expect("linear bias"),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.linear(&self.weight.value(), Some(&self.bias.value()))
    }

    pub fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}
