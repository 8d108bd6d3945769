use super::init::init_normal;
use super::tensor::{gemm, Mat};
use super::{Layer, Mode, Param, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected layer on `[batch, in]` inputs.
pub struct Dense<T: Real> {
    name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(name: impl Into<String>, inputs: usize, outputs: usize, init_std: f64, rng: &mut Rng) -> Self {
        let name = name.into();
        Self {
            weight: Param::new(format!("{name}/kernel"), init_normal(&[inputs, outputs], 0.0, init_std, rng)),
            bias: Param::new(format!("{name}/bias"), Tensor::zeros(&[outputs])),
            name,
            inputs,
            outputs,
            input: None,
        }
    }
}

impl<T: Real> Layer<T> for Dense<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let n = match x.shape() {
            [n, k] if *k == self.inputs => *n,
            s => return Err(Error::Shape(format!("{}: expected [n, {}], got {s:?}", self.name, self.inputs))),
        };
        let mut y = Tensor::zeros(&[n, self.outputs]);
        for row in y.data_mut().chunks_exact_mut(self.outputs) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(
            Mat::new(x.data(), n, self.inputs),
            Mat::new(self.weight.value.data(), self.inputs, self.outputs),
            T::one(),
            y.data_mut(),
        );
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Shape(format!("{}: backward before forward", self.name)))?;
        let n = x.shape()[0];
        if param_grads {
            gemm(
                Mat::new(x.data(), n, self.inputs).t(),
                Mat::new(grad_out.data(), n, self.outputs),
                T::one(),
                self.weight.grad.data_mut(),
            );
            for row in grad_out.data().chunks_exact(self.outputs) {
                for (b, &g) in self.bias.grad.data_mut().iter_mut().zip(row) {
                    *b += g;
                }
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        gemm(
            Mat::new(grad_out.data(), n, self.outputs),
            Mat::new(self.weight.value.data(), self.inputs, self.outputs).t(),
            T::zero(),
            dx.data_mut(),
        );
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
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
    use crate::rng;

    #[test]
    fn dense_gradients() {
        let mut r = rng::seeded(4);
        let mut d = Dense::<f64>::new("d", 5, 3, 0.5, &mut r);
        d.bias.value = random_tensor(&[3], &mut r);
        let x = random_tensor::<f64>(&[4, 5], &mut r);
        check_layer(&mut d, &x, 1e-4, &mut r).unwrap();
    }
}
