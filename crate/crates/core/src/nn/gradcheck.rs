//! Central finite-difference checks for layers and scalar functions.

use rand::seq::index::sample;

use super::conv::random_tensor;
use super::{Layer, Mode, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

const STEP: f64 = 1e-3;
const FLOOR: f64 = 1e-6;
const MAX_PROBES: usize = 48;

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

/// Central-difference gradient of `f` at `x` in the listed coordinates.
pub fn finite_difference(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], coords: &[usize], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn probes(n: usize, rng: &mut Rng) -> Vec<usize> {
    if n <= MAX_PROBES {
        (0..n).collect()
    } else {
        sample(rng, n, MAX_PROBES).into_vec()
    }
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Compares analytic input and parameter gradients of `layer` at `x` against
/// finite differences of `<layer(x), r>` for a random `r`. Large tensors are
/// probed at a random subset of coordinates.
pub fn check_layer(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, tol: f64, rng: &mut Rng) -> Result<()> {
    check_layer_with_step(layer, x, tol, STEP, rng)
}

/// [`check_layer`] with an explicit difference step, for deep stacks whose
/// curvature makes the default step's truncation error visible.
pub fn check_layer_with_step(
    layer: &mut dyn Layer<f64>,
    x: &Tensor<f64>,
    tol: f64,
    step: f64,
    rng: &mut Rng,
) -> Result<()> {
    let y = layer.forward(x, Mode::Train)?;
    let r = random_tensor::<f64>(y.shape(), rng);
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&r, true)?;
    let grads: Vec<Tensor<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();

    let coords = probes(x.len(), rng);
    let shape = x.shape().to_vec();
    let mut loss = |v: &[f64]| {
        let xt = Tensor::from_vec(&shape, v.to_vec()).expect("shape");
        dot(&layer.forward(&xt, Mode::Train).expect("forward"), &r)
    };
    let fd = finite_difference(&mut loss, x.data(), &coords, step);
    for (&i, &n) in coords.iter().zip(&fd) {
        let e = relative_error(dx.data()[i], n);
        if e > tol {
            return Err(Error::Numerical(format!(
                "input gradient {i}: analytic {} vs numeric {n} (rel {e:.2e})",
                dx.data()[i]
            )));
        }
    }

    let count = layer.params().len();
    for (pi, analytic) in grads.iter().enumerate().take(count) {
        if !layer.params()[pi].trainable {
            continue;
        }
        let coords = probes(analytic.len(), rng);
        for &i in &coords {
            let base = layer.params()[pi].value.data()[i];
            let mut eval = |v: f64| {
                layer.params_mut()[pi].value.data_mut()[i] = v;
                dot(&layer.forward(x, Mode::Train).expect("forward"), &r)
            };
            let n = (eval(base + step) - eval(base - step)) / (2.0 * step);
            eval(base);
            let e = relative_error(analytic.data()[i], n);
            if e > tol {
                return Err(Error::Numerical(format!(
                    "{} [{i}]: analytic {} vs numeric {n} (rel {e:.2e})",
                    layer.params()[pi].name,
                    analytic.data()[i]
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_of_polynomial() {
        let mut f = |v: &[f64]| v[0].powi(3) + 2.0 * v[0] * v[1];
        let g = finite_difference(&mut f, &[1.5, -0.5], &[0, 1], 1e-5);
        assert!(relative_error(g[0], 3.0 * 2.25 - 1.0) < 1e-8);
        assert!(relative_error(g[1], 3.0) < 1e-8);
    }
}
