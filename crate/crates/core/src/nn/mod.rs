//! A small reverse-mode network engine with exactly the layers the generator,
//! discriminator and phase network need.
//!
//! Layers cache what they need during `forward` and push gradients back in
//! `backward`, accumulating parameter gradients into their [`Param`]s.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod norm;
pub mod tensor;

pub use activation::{Activation, ActivationKind, Dropout};
pub use adam::{Adam, AdamConfig};
pub use config::LayerConfig;
pub use conv::{Conv2d, ConvTranspose2d, Padding, ZeroPad2d};
pub use dense::Dense;
pub use norm::BatchNorm;
pub use tensor::{concat_channels, split_channels, Real, Tensor};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Named tensor with a gradient slot.
#[derive(Debug, Clone)]
pub struct Param<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    /// Optimised by Adam; non-trainable params (running statistics) are
    /// still checkpointed.
    pub trainable: bool,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self {
            trainable: false,
            ..Self::new(name, value)
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Differentiable layer.
pub trait Layer<T: Real>: Send {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    /// Gradient with respect to the last `forward` input. Parameter gradients
    /// are accumulated only when `param_grads` is set.
    fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    fn name(&self) -> &str;
}

/// Layers applied in order.
pub struct Sequential<T: Real> {
    pub layers: Vec<Box<dyn Layer<T>>>,
    name: String,
}

impl<T: Real> Sequential<T> {
    pub fn new(name: impl Into<String>, layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Self {
            layers,
            name: name.into(),
        }
    }
}

impl<T: Real> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g, param_grads)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Number of trainable scalars.
pub fn count_trainable<T: Real>(params: &[&Param<T>]) -> usize {
    params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
}

pub fn zero_grads<T: Real>(params: &mut [&mut Param<T>]) {
    for p in params.iter_mut() {
        p.zero_grad();
    }
}
