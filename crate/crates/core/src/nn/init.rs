use rand_distr::{Distribution, Normal};

use super::{Real, Tensor};
use crate::rng::Rng;

/// Tensor with i.i.d. `N(mean, std^2)` entries.
pub fn init_normal<T: Real>(shape: &[usize], mean: f64, std: f64, rng: &mut Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = if std > 0.0 {
        let dist = Normal::new(mean, std).expect("finite positive std");
        (0..n).map(|_| T::lit(dist.sample(rng))).collect()
    } else {
        vec![T::lit(mean); n]
    };
    Tensor::from_vec(shape, data).expect("matching length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn sample_moments() {
        let t: Tensor<f64> = init_normal(&[100, 100], 0.0, 0.2, &mut rng::seeded(1));
        let n = t.len() as f64;
        let mean = t.sum() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01);
        assert!((var.sqrt() - 0.2).abs() < 0.005);
    }

    #[test]
    fn same_seed_same_weights() {
        let a: Tensor<f32> = init_normal(&[5, 5], 0.0, 1.0, &mut rng::seeded(9));
        let b: Tensor<f32> = init_normal(&[5, 5], 0.0, 1.0, &mut rng::seeded(9));
        assert_eq!(a, b);
    }
}
