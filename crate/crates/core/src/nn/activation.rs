use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Layer, Mode, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Linear,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl ActivationKind {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Self::Linear => x,
            Self::Relu => x.max(T::zero()),
            Self::LeakyRelu(a) => {
                if x >= T::zero() {
                    x
                } else {
                    T::lit(a) * x
                }
            }
            Self::Tanh => x.tanh(),
            Self::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at pre-activation `x` with output `y`.
    #[inline]
    pub fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Self::Linear => T::one(),
            Self::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Self::LeakyRelu(a) => {
                if x >= T::zero() {
                    T::one()
                } else {
                    T::lit(a)
                }
            }
            Self::Tanh => T::one() - y * y,
            Self::Sigmoid => y * (T::one() - y),
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Elementwise activation layer.
pub struct Activation<T: Real> {
    name: String,
    pub kind: ActivationKind,
    cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> Activation<T> {
    pub fn new(name: impl Into<String>, kind: ActivationKind) -> Self {
        Self {
            name: name.into(),
            kind,
            cache: None,
        }
    }
}

impl<T: Real> Layer<T> for Activation<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let k = self.kind;
        let y = x.map(|v| k.apply(v));
        self.cache = Some((x.clone(), y.clone()));
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, _param_grads: bool) -> Result<Tensor<T>> {
        let (x, y) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Shape(format!("{}: backward before forward", self.name)))?;
        let k = self.kind;
        let mut dx = grad_out.clone();
        for ((d, &xv), &yv) in dx.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
            *d = *d * k.derivative(xv, yv);
        }
        Ok(dx)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Inverted dropout; identity in [`Mode::Eval`].
pub struct Dropout<T: Real> {
    name: String,
    pub rate: f64,
    rng: Rng,
    mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(name: impl Into<String>, rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        let name = name.into();
        let rng = rng::seeded(rng::derive(seed, &name));
        Ok(Self {
            name,
            rate,
            rng,
            mask: None,
        })
    }
}

impl<T: Real> Layer<T> for Dropout<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = T::lit(1.0 / (1.0 - self.rate));
        let rate = self.rate;
        let mask: Vec<T> = (0..x.len())
            .map(|_| if self.rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let mut y = x.clone();
        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
            *v = *v * m;
        }
        self.mask = Some(mask);
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, _param_grads: bool) -> Result<Tensor<T>> {
        let mut dx = grad_out.clone();
        if let Some(mask) = &self.mask {
            for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
                *v = *v * m;
            }
        }
        Ok(dx)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::random_tensor;
    use crate::nn::gradcheck::check_layer;

    #[test]
    fn pointwise_values() {
        assert_eq!(ActivationKind::LeakyRelu(0.3).apply(-2.0f64), -0.6);
        assert_eq!(ActivationKind::Relu.apply(-2.0f64), 0.0);
        assert!((ActivationKind::Sigmoid.apply(0.0f64) - 0.5).abs() < 1e-15);
        assert!(ActivationKind::Sigmoid.apply(-800.0f64).is_finite());
        assert!((ActivationKind::Sigmoid.apply(800.0f64) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn activation_gradients() {
        let mut r = rng::seeded(11);
        for kind in [
            ActivationKind::Linear,
            ActivationKind::LeakyRelu(0.3),
            ActivationKind::Relu,
            ActivationKind::Tanh,
            ActivationKind::Sigmoid,
        ] {
            let mut act = Activation::<f64>::new("a", kind);
            // Keep away from the kink of the piecewise-linear activations.
            let x = random_tensor::<f64>(&[2, 3, 3, 2], &mut r).map(|v| if v.abs() < 0.05 { 0.3 } else { v });
            check_layer(&mut act, &x, 1e-4, &mut r).unwrap();
        }
    }

    #[test]
    fn dropout_keeps_expectation_and_masks_gradient() {
        let mut d = Dropout::<f64>::new("d", 0.5, 3).unwrap();
        let x = Tensor::full(&[1, 100, 100, 1], 1.0);
        let y = d.forward(&x, Mode::Train).unwrap();
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.05);
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let g = d.backward(&x, true).unwrap();
        assert_eq!(g, y);
        assert_eq!(d.forward(&x, Mode::Eval).unwrap(), x);
        assert!(Dropout::<f64>::new("d", 1.0, 0).is_err());
    }
}
