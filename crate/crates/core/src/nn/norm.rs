use super::{Layer, Mode, Param, Real, Tensor};
use crate::error::{Error, Result};

/// Batch normalisation over every axis except the last (channels).
pub struct BatchNorm<T: Real> {
    name: String,
    pub channels: usize,
    /// Weight of the current batch in the running averages.
    pub momentum: f64,
    pub eps: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    cache: Option<Cache<T>>,
}

struct Cache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: impl Into<String>, channels: usize, momentum: f64, eps: f64) -> Self {
        let name = name.into();
        Self {
            gamma: Param::new(format!("{name}/gamma"), Tensor::full(&[channels], T::one())),
            beta: Param::new(format!("{name}/beta"), Tensor::zeros(&[channels])),
            running_mean: Param::buffer(format!("{name}/moving_mean"), Tensor::zeros(&[channels])),
            running_var: Param::buffer(format!("{name}/moving_variance"), Tensor::full(&[channels], T::one())),
            name,
            channels,
            momentum,
            eps,
            cache: None,
        }
    }
}

impl<T: Real> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let c = self.channels;
        if x.shape().last() != Some(&c) {
            return Err(Error::Shape(format!(
                "{}: expected {c} channels, got shape {:?}",
                self.name,
                x.shape()
            )));
        }
        let count = x.len() / c;
        if count == 0 {
            return Err(Error::Shape(format!("{}: empty batch", self.name)));
        }
        let eps = T::lit(self.eps);
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0f64; c];
                let mut sq = vec![0.0f64; c];
                for px in x.data().chunks_exact(c) {
                    for k in 0..c {
                        mean[k] += px[k].as_f64();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                for px in x.data().chunks_exact(c) {
                    for k in 0..c {
                        sq[k] += (px[k].as_f64() - mean[k]).powi(2);
                    }
                }
                let var: Vec<f64> = sq.iter().map(|s| s / count as f64).collect();
                let m = T::lit(self.momentum);
                let keep = T::one() - m;
                for k in 0..c {
                    let rm = &mut self.running_mean.value.data_mut()[k];
                    *rm = keep * *rm + m * T::lit(mean[k]);
                    let rv = &mut self.running_var.value.data_mut()[k];
                    *rv = keep * *rv + m * T::lit(var[k]);
                }
                (
                    mean.into_iter().map(T::lit).collect::<Vec<T>>(),
                    var.into_iter().map(T::lit).collect::<Vec<T>>(),
                )
            }
            Mode::Eval => (
                self.running_mean.value.data().to_vec(),
                self.running_var.value.data().to_vec(),
            ),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut xhat = x.clone().into_data();
        let mut y = Tensor::zeros(x.shape());
        for (hp, yp) in xhat.chunks_exact_mut(c).zip(y.data_mut().chunks_exact_mut(c)) {
            for k in 0..c {
                hp[k] = (hp[k] - mean[k]) * inv_std[k];
                yp[k] = gamma[k] * hp[k] + beta[k];
            }
        }
        self.cache = Some(Cache { xhat, inv_std, mode });
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Shape(format!("{}: backward before forward", self.name)))?;
        let c = self.channels;
        let count = T::lit((grad_out.len() / c) as f64);
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for (dp, hp) in grad_out.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for k in 0..c {
                sum_dy[k] += dp[k];
                sum_dy_xhat[k] += dp[k] * hp[k];
            }
        }
        if param_grads {
            for k in 0..c {
                self.gamma.grad.data_mut()[k] += sum_dy_xhat[k];
                self.beta.grad.data_mut()[k] += sum_dy[k];
            }
        }
        let gamma = self.gamma.value.data();
        let mut dx = Tensor::zeros(grad_out.shape());
        for ((xp, dp), hp) in dx
            .data_mut()
            .chunks_exact_mut(c)
            .zip(grad_out.data().chunks_exact(c))
            .zip(cache.xhat.chunks_exact(c))
        {
            for k in 0..c {
                let s = gamma[k] * cache.inv_std[k];
                xp[k] = match cache.mode {
                    Mode::Train => s * (dp[k] - sum_dy[k] / count - hp[k] * sum_dy_xhat[k] / count),
                    Mode::Eval => s * dp[k],
                };
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    fn name(&self) -> &str {
        &self.name
    }
}
