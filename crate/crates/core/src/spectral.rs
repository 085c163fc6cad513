//! Discrete Fourier transform and truncated sinusoid reconstructions.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::IndicatorSeries;

/// Component counts used for the trend feature columns.
pub const DEFAULT_COMPONENTS: [usize; 2] = [3, 9];
/// Trailing window, in trading days, each rolling reconstruction sees.
pub const DEFAULT_WINDOW: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub coefficients: Vec<Complex64>,
    pub source_length: usize,
}

impl Spectrum {
    fn check(&self) -> Result<()> {
        if self.source_length == 0 || self.coefficients.len() != self.source_length {
            return Err(Error::InvalidArgument(alloc::format!(
                "malformed spectrum: {} coefficients for source length {}",
                self.coefficients.len(),
                self.source_length
            )));
        }
        Ok(())
    }
}

// e^{sign·i2π·mn/N} with the phase reduced mod N first so large products stay exact.
fn twiddle(m: usize, n: usize, len: usize, sign: f64) -> Complex64 {
    let phase = ((m as u128 * n as u128) % len as u128) as f64;
    let angle = sign * 2.0 * PI * phase / len as f64;
    Complex64::new(libm::cos(angle), libm::sin(angle))
}

/// `X_m = Σ_n x_n e^{-i2πmn/N}`, computed directly in O(N²).
pub fn dft(x: &[f64]) -> Result<Spectrum> {
    if x.is_empty() {
        return Err(Error::EmptySeries);
    }
    let len = x.len();
    let coefficients = (0..len)
        .map(|m| {
            x.iter()
                .enumerate()
                .map(|(n, &v)| twiddle(m, n, len, -1.0) * v)
                .sum()
        })
        .collect();
    Ok(Spectrum {
        coefficients,
        source_length: len,
    })
}

fn idft_complex(s: &Spectrum) -> Vec<Complex64> {
    let len = s.source_length;
    (0..len)
        .map(|n| {
            let acc: Complex64 = s
                .coefficients
                .iter()
                .enumerate()
                .map(|(m, &c)| c * twiddle(m, n, len, 1.0))
                .sum();
            acc / len as f64
        })
        .collect()
}

/// Inverse transform; any imaginary residue is discarded.
pub fn idft(s: &Spectrum) -> Result<Vec<f64>> {
    s.check()?;
    Ok(idft_complex(s).into_iter().map(|c| c.re).collect())
}

/// Keeps the `k` strongest components and inverts.
///
/// A component is the DC bin, the Nyquist bin (even lengths), or a conjugate
/// pair `(m, N - m)`; pairs are kept or dropped together so the result is real.
/// Ties in magnitude go to the lower frequency.
pub fn reconstruct_topk(s: &Spectrum, k: usize) -> Result<Vec<f64>> {
    idft(&truncate_topk(s, k)?)
}

fn truncate_topk(s: &Spectrum, k: usize) -> Result<Spectrum> {
    s.check()?;
    let len = s.source_length;
    if k > len {
        return Err(Error::InvalidArgument(alloc::format!(
            "k = {k} exceeds spectrum length {len}"
        )));
    }
    let mut components: Vec<usize> = (0..=len / 2).collect();
    components.sort_by(|&a, &b| {
        s.coefficients[b]
            .norm()
            .total_cmp(&s.coefficients[a].norm())
            .then(a.cmp(&b))
    });
    let mut kept = vec![Complex64::new(0.0, 0.0); len];
    for &m in components.iter().take(k) {
        kept[m] = s.coefficients[m];
        kept[(len - m) % len] = s.coefficients[(len - m) % len];
    }
    Ok(Spectrum {
        coefficients: kept,
        source_length: len,
    })
}

/// Rolling top-k reconstructions, one column per entry of `components`.
///
/// The value at day `t` is the last point of the reconstruction of
/// `close[t - window + 1 ..= t]`, so it only depends on the past.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub window: usize,
    pub components: Vec<usize>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            components: DEFAULT_COMPONENTS.to_vec(),
        }
    }
}

impl SpectralConfig {
    pub fn warmup(&self) -> usize {
        self.window - 1
    }

    /// Reconstruction values for the window ending at the last element of
    /// `history`, one per configured component count.
    pub fn features_at_end(&self, history: &[f64]) -> Result<Vec<f64>> {
        if history.len() < self.window {
            return Err(Error::SeriesTooShort {
                needed: self.window,
                got: history.len(),
            });
        }
        let spectrum = dft(&history[history.len() - self.window..])?;
        self.components
            .iter()
            .map(|&k| Ok(reconstruct_topk(&spectrum, k.min(self.window))?[self.window - 1]))
            .collect()
    }
}

pub fn rolling_reconstructions(close: &[f64], config: &SpectralConfig) -> Result<Vec<IndicatorSeries>> {
    if config.window == 0 {
        return Err(Error::InvalidArgument("spectral window must be positive".into()));
    }
    let warmup = config.warmup();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); config.components.len()];
    for t in warmup..close.len() {
        for (col, v) in columns.iter_mut().zip(config.features_at_end(&close[..=t])?) {
            col.push(v);
        }
    }
    Ok(config
        .components
        .iter()
        .zip(columns)
        .map(|(k, values)| IndicatorSeries::new(alloc::format!("fourier_recon_k{k}"), warmup, values))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_series(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()
    }

    // Straight double sum, independent of the twiddle helper.
    fn brute_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|m| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (m as f64) * (j as f64) / n;
                    acc += Complex64::new(v * a.cos(), v * a.sin());
                }
                acc
            })
            .collect()
    }

    #[test]
    fn quarter_wave_example() {
        let s = dft(&[0.0, 1.0, 0.0, -1.0]).unwrap();
        let expected = [
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, -2.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 2.0),
        ];
        for (got, want) in s.coefficients.iter().zip(expected) {
            assert!((got - want).norm() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn matches_brute_force_sum() {
        let x = random_series(3, 37);
        let s = dft(&x).unwrap();
        for (a, b) in s.coefficients.iter().zip(brute_dft(&x)) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn constant_series_is_dc_only() {
        let s = dft(&[2.5; 16]).unwrap();
        assert!((s.coefficients[0] - Complex64::new(40.0, 0.0)).norm() < 1e-12);
        assert!(s.coefficients[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn inverse_examples() {
        let s = Spectrum {
            coefficients: vec![Complex64::new(4.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)],
            source_length: 4,
        };
        for v in idft(&s).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let zero = Spectrum {
            coefficients: vec![Complex64::new(0.0, 0.0); 5],
            source_length: 5,
        };
        assert_eq!(idft(&zero).unwrap(), vec![0.0; 5]);
        let bad = Spectrum {
            coefficients: vec![Complex64::new(0.0, 0.0); 3],
            source_length: 5,
        };
        assert!(idft(&bad).is_err());
        assert_eq!(dft(&[]), Err(Error::EmptySeries));
    }

    #[test]
    fn parseval_and_round_trip() {
        let x = random_series(11, 64);
        let s = dft(&x).unwrap();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = s.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>() / 64.0;
        assert!((time - freq).abs() < 1e-9 * time.max(1.0));
        for (a, b) in idft(&s).unwrap().iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn topk_limits() {
        let x = random_series(5, 21);
        let s = dft(&x).unwrap();
        for (a, b) in reconstruct_topk(&s, 21).unwrap().iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(reconstruct_topk(&s, 0).unwrap().iter().all(|v| *v == 0.0));
        assert!(reconstruct_topk(&s, 22).is_err());
    }

    #[test]
    fn topk_output_is_real() {
        for len in [8usize, 9, 30] {
            let x = random_series(len as u64, len);
            let s = dft(&x).unwrap();
            for k in 0..=len / 2 + 1 {
                let residue = idft_complex(&truncate_topk(&s, k).unwrap());
                assert!(residue.iter().all(|c| c.im.abs() < 1e-9));
            }
        }
    }

    #[test]
    fn residual_non_increasing_in_k() {
        let x: Vec<f64> = (0..128)
            .map(|i| {
                let t = i as f64;
                100.0 + 0.2 * t + 5.0 * (t / 9.0).sin() + 2.0 * (t / 3.0).cos()
            })
            .collect();
        let s = dft(&x).unwrap();
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let mut last = f64::INFINITY;
        for k in 0..=65 {
            let rec = reconstruct_topk(&s, k).unwrap();
            let rms = (rec.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 128.0).sqrt();
            assert!(rms <= last + 1e-9, "k={k}: {rms} > {last}");
            assert!(rec.iter().map(|v| v * v).sum::<f64>() <= energy + 1e-6);
            last = rms;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn rolling_columns_are_causal() {
        let x = random_series(9, 80);
        let cfg = SpectralConfig::default();
        let cols = rolling_reconstructions(&x, &cfg).unwrap();
        assert_eq!(cols.len(), 2);
        assert_eq!(cols[0].warmup, 31);
        assert_eq!(cols[0].values.len(), 80 - 31);
        let mut altered = x.clone();
        altered[60] += 100.0;
        let cols2 = rolling_reconstructions(&altered, &cfg).unwrap();
        for t in 31..60 {
            assert_eq!(cols[0].at(t), cols2[0].at(t));
            assert_eq!(cols[1].at(t), cols2[1].at(t));
        }
    }

    proptest::proptest! {
        #[test]
        fn linearity(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let x = random_series(seed, 24);
            let y = random_series(seed + 7919, 24);
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let (sx, sy, sm) = (dft(&x).unwrap(), dft(&y).unwrap(), dft(&mix).unwrap());
            for m in 0..24 {
                let expected = sx.coefficients[m] * a + sy.coefficients[m] * b;
                proptest::prop_assert!((sm.coefficients[m] - expected).norm() < 1e-9);
            }
        }
    }
}
