use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// I.i.d. zero-mean Gaussian tensor; reproducible for a fixed generator
/// state.
pub fn gaussian_init<E: Scalar, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Result<Tensor<E>> {
    if !(std > 0.0) {
        return Err(Error::invalid("gaussian_init", "std must be positive"));
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid("gaussian_init", e.to_string()))?;
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| E::from_f64(normal.sample(rng))).collect();
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn fixed_seed_reproduces() {
        let a: Tensor<f32> =
            gaussian_init(&[4, 4], 0.01, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
        let b: Tensor<f32> =
            gaussian_init(&[4, 4], 0.01, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn sample_statistics() {
        let n = 100_000;
        let t: Tensor<f64> =
            gaussian_init(&[n], 0.01, &mut ChaCha12Rng::seed_from_u64(42)).unwrap();
        let mean = t.data().iter().sum::<f64>() / n as f64;
        let var = t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        assert!((std - 0.01).abs() / 0.01 < 0.02, "sample std {}", std);
        // mean within 3 sigma/sqrt(n)
        assert!(mean.abs() < 3.0 * 0.01 / (n as f64).sqrt(), "sample mean {}", mean);
    }

    #[test]
    fn rejects_nonpositive_std() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(gaussian_init::<f32, _>(&[2], 0.0, &mut rng).is_err());
        assert!(gaussian_init::<f32, _>(&[2], -1.0, &mut rng).is_err());
    }
}
