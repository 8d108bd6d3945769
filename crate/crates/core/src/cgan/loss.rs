use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// Minimise `-log D(fake)`.
    #[default]
    NonSaturating,
    /// Minimise `log(1 - D(fake))`.
    Saturating,
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    crate::nn::activation::sigmoid(x)
}

/// Gradient of the discriminator loss with respect to the real logits.
pub fn real_logit_grad<T: Real>(d_real: &Tensor<T>) -> Tensor<T> {
    let count = d_real.len() as f64;
    d_real.map(|r| T::lit((sigmoid(r.as_f64()) - 1.0) / count))
}

/// Loss values and gradients with respect to the discriminator logits and
/// the generator output.
#[derive(Debug, Clone)]
pub struct CganLosses<T: Real> {
    pub loss_d: f64,
    pub loss_g: f64,
    pub adversarial: f64,
    /// Batch mean of `||label - out||_2` (not yet multiplied by beta).
    pub l2: f64,
    pub grad_real: Tensor<T>,
    /// Gradient of `loss_d` with respect to the fake logits.
    pub grad_fake_d: Tensor<T>,
    /// Gradient of the adversarial part of `loss_g` with respect to the fake logits.
    pub grad_fake_g: Tensor<T>,
    /// Gradient of `beta * l2` with respect to the generator output.
    pub grad_out: Tensor<T>,
}

/// Patch-averaged binary cross-entropy on logits for both networks plus the
/// weighted L2 term. Every output patch counts as one decision; the batch is
/// averaged.
pub fn cgan_losses<T: Real>(
    d_real: &Tensor<T>,
    d_fake: &Tensor<T>,
    g_out: &Tensor<T>,
    label: &Tensor<T>,
    beta: f64,
    kind: GeneratorLoss,
) -> Result<CganLosses<T>> {
    for (t, what) in [(d_real, "real logits"), (d_fake, "fake logits"), (g_out, "generator output"), (label, "label")] {
        t.check_finite(what)?;
    }
    if d_real.shape() != d_fake.shape() || g_out.shape() != label.shape() {
        return Err(Error::Shape(format!(
            "loss inputs disagree: {:?}/{:?} and {:?}/{:?}",
            d_real.shape(),
            d_fake.shape(),
            g_out.shape(),
            label.shape()
        )));
    }
    let count = d_real.len() as f64;
    let mut loss_d = 0.0;
    let mut adversarial = 0.0;
    let mut grad_real = Tensor::zeros(d_real.shape());
    let mut grad_fake_d = Tensor::zeros(d_fake.shape());
    let mut grad_fake_g = Tensor::zeros(d_fake.shape());
    for (&r, g) in d_real.data().iter().zip(grad_real.data_mut()) {
        let r = r.as_f64();
        loss_d += softplus(-r);
        *g = T::lit((sigmoid(r) - 1.0) / count);
    }
    for ((&f, gd), gg) in d_fake
        .data()
        .iter()
        .zip(grad_fake_d.data_mut())
        .zip(grad_fake_g.data_mut())
    {
        let f = f.as_f64();
        let s = sigmoid(f);
        loss_d += softplus(f);
        *gd = T::lit(s / count);
        match kind {
            GeneratorLoss::NonSaturating => {
                adversarial += softplus(-f);
                *gg = T::lit((s - 1.0) / count);
            }
            GeneratorLoss::Saturating => {
                adversarial -= softplus(f);
                *gg = T::lit(-s / count);
            }
        }
    }
    loss_d /= count;
    adversarial /= count;

    let n = g_out.shape()[0].max(1);
    let per = g_out.len() / n;
    let mut l2 = 0.0;
    let mut grad_out = Tensor::zeros(g_out.shape());
    for i in 0..n {
        let (o, y) = (&g_out.data()[i * per..(i + 1) * per], &label.data()[i * per..(i + 1) * per]);
        let norm = o
            .iter()
            .zip(y)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
            .sum::<f64>()
            .sqrt();
        l2 += norm;
        if norm > 0.0 {
            let k = beta / (n as f64 * norm);
            for ((g, a), b) in grad_out.data_mut()[i * per..(i + 1) * per].iter_mut().zip(o).zip(y) {
                *g = T::lit(k * (a.as_f64() - b.as_f64()));
            }
        }
    }
    l2 /= n as f64;
    let loss_g = adversarial + beta * l2;
    if !(loss_d.is_finite() && loss_g.is_finite()) {
        return Err(Error::Numerical(format!("non-finite losses: D {loss_d}, G {loss_g}")));
    }
    Ok(CganLosses {
        loss_d,
        loss_g,
        adversarial,
        l2,
        grad_real,
        grad_fake_d,
        grad_fake_g,
        grad_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{finite_difference, relative_error};

    fn t(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, v).unwrap()
    }

    #[test]
    fn perfect_discriminator_has_zero_loss() {
        let real = Tensor::full(&[1, 2, 2, 1], 60.0);
        let fake = Tensor::full(&[1, 2, 2, 1], -60.0);
        let out = Tensor::<f64>::zeros(&[1, 1, 2, 1]);
        let l = cgan_losses(&real, &fake, &out, &out, 100.0, GeneratorLoss::NonSaturating).unwrap();
        assert!(l.loss_d < 1e-20);
        assert_eq!(l.l2, 0.0);
        assert!(l.grad_out.data().iter().all(|&g| g == 0.0));
        // Extreme logits stay finite.
        let real = Tensor::full(&[1, 2, 2, 1], -1e4);
        let l = cgan_losses(&real, &fake, &out, &out, 1.0, GeneratorLoss::Saturating).unwrap();
        assert!((l.loss_d - 1e4).abs() < 1e-6);
    }

    #[test]
    fn beta_zero_is_pure_adversarial() {
        let real = t(&[2, 1, 1, 1], vec![0.3, -0.1]);
        let fake = t(&[2, 1, 1, 1], vec![-0.7, 1.2]);
        let out = t(&[2, 1, 1, 2], vec![0.1, 0.2, 0.3, 0.4]);
        let label = t(&[2, 1, 1, 2], vec![0.0, 0.0, 1.0, 1.0]);
        let l = cgan_losses(&real, &fake, &out, &label, 0.0, GeneratorLoss::NonSaturating).unwrap();
        assert_eq!(l.loss_g, l.adversarial);
        let expect = (softplus(0.7) + softplus(-1.2)) / 2.0;
        assert!((l.adversarial - expect).abs() < 1e-15);
    }

    #[test]
    fn l2_is_batch_mean_of_norms() {
        let z = Tensor::<f64>::zeros(&[2, 1, 1, 1]);
        let out = t(&[2, 1, 1, 2], vec![3.0, 4.0, 0.0, 0.0]);
        let label = Tensor::zeros(&[2, 1, 1, 2]);
        let l = cgan_losses(&z, &z, &out, &label, 10.0, GeneratorLoss::NonSaturating).unwrap();
        assert!((l.l2 - 2.5).abs() < 1e-15);
        assert!((l.grad_out.data()[0] - 10.0 / 2.0 * 0.6).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let real = t(&[2, 2, 1, 1], vec![0.3, -1.1, 0.8, 2.0]);
        let fake = t(&[2, 2, 1, 1], vec![-0.7, 1.2, 0.1, -2.5]);
        let out = t(&[2, 1, 1, 3], vec![0.1, 0.2, 0.3, 0.4, -0.5, 0.6]);
        let label = t(&[2, 1, 1, 3], vec![0.0, 0.5, 1.0, 1.0, 0.0, -0.2]);
        for kind in [GeneratorLoss::NonSaturating, GeneratorLoss::Saturating] {
            let l = cgan_losses(&real, &fake, &out, &label, 3.0, kind).unwrap();
            let coords: Vec<usize> = (0..4).collect();
            let mut fd = |v: &[f64]| cgan_losses(&t(&[2, 2, 1, 1], v.to_vec()), &fake, &out, &label, 3.0, kind).unwrap().loss_d;
            for (a, n) in l.grad_real.data().iter().zip(finite_difference(&mut fd, real.data(), &coords, 1e-5)) {
                assert!(relative_error(*a, n) < 1e-6);
            }
            let mut fd = |v: &[f64]| cgan_losses(&real, &t(&[2, 2, 1, 1], v.to_vec()), &out, &label, 3.0, kind).unwrap().loss_d;
            for (a, n) in l.grad_fake_d.data().iter().zip(finite_difference(&mut fd, fake.data(), &coords, 1e-5)) {
                assert!(relative_error(*a, n) < 1e-6);
            }
            let mut fd = |v: &[f64]| cgan_losses(&real, &t(&[2, 2, 1, 1], v.to_vec()), &out, &label, 3.0, kind).unwrap().adversarial;
            for (a, n) in l.grad_fake_g.data().iter().zip(finite_difference(&mut fd, fake.data(), &coords, 1e-5)) {
                assert!(relative_error(*a, n) < 1e-6);
            }
            let coords: Vec<usize> = (0..6).collect();
            let mut fd = |v: &[f64]| 3.0 * cgan_losses(&real, &fake, &t(&[2, 1, 1, 3], v.to_vec()), &label, 3.0, kind).unwrap().l2;
            for (a, n) in l.grad_out.data().iter().zip(finite_difference(&mut fd, out.data(), &coords, 1e-5)) {
                assert!(relative_error(*a, n) < 1e-6);
            }
        }
    }

    #[test]
    fn nan_input_is_rejected() {
        let z = Tensor::<f64>::zeros(&[1, 1, 1, 1]);
        let nan = Tensor::full(&[1, 1, 1, 1], f64::NAN);
        assert!(cgan_losses(&nan, &z, &z, &z, 1.0, GeneratorLoss::NonSaturating).is_err());
    }
}
