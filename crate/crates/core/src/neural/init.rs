use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `(fan_in, fan_out)` for dense `[in, out]` and conv `[out, in, kernel]` shapes.
pub fn fans(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [fan_in, fan_out] if fan_in > 0 && fan_out > 0 => Ok((fan_in, fan_out)),
        [out, inp, k] if out > 0 && inp > 0 && k > 0 => Ok((inp * k, out * k)),
        _ => Err(Error::InvalidArgument(alloc::format!("cannot derive fans from shape {shape:?}"))),
    }
}

pub fn xavier_bound(shape: &[usize]) -> Result<f64> {
    let (fan_in, fan_out) = fans(shape)?;
    Ok(libm::sqrt(6.0 / (fan_in + fan_out) as f64))
}

/// Glorot-uniform tensor, fully determined by `seed`.
pub fn xavier_init(shape: &[usize], seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_init_with(shape, &mut rng)
}

pub fn xavier_init_with<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor> {
    let bound = xavier_bound(shape)?;
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = xavier_init(&[20, 30], 7).unwrap();
        let b = xavier_init(&[20, 30], 7).unwrap();
        let c = xavier_init(&[20, 30], 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn within_bound_and_centered() {
        let t = xavier_init(&[100, 100], 3).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        // Uniform(−a, a) has std a/√3.
        let sigma_mean = bound / 3f64.sqrt() / n.sqrt();
        assert!(mean.abs() < 3.0 * sigma_mean, "mean {mean}");
    }

    #[test]
    fn conv_fans() {
        assert_eq!(fans(&[64, 32, 5]).unwrap(), (160, 320));
        assert!(xavier_init(&[5], 1).is_err());
        assert!(xavier_init(&[0, 3], 1).is_err());
    }
}
