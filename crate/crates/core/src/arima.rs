//! ARIMA(p, d, 0) estimation by conditional least squares, plus the
//! autocorrelation tools used to pick the order.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::IndicatorSeries;
use crate::linalg::least_squares;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaSpec {
    /// The (5, 1, 0) order used for every ticker.
    pub const DEFAULT: ArimaSpec = ArimaSpec { p: 5, d: 1, q: 0 };

    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        let spec = Self { p, d, q };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q != 0 {
            return Err(Error::InvalidArgument("moving-average terms are not supported".into()));
        }
        if self.d > 1 {
            return Err(Error::InvalidArgument("differencing order must be 0 or 1".into()));
        }
        Ok(())
    }
}

impl Default for ArimaSpec {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    #[serde(flatten)]
    pub spec: ArimaSpec,
    pub phi: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
}

impl ArimaFit {
    /// Zero AR coefficients around a drift of `intercept`: a random walk when `d = 1`.
    pub fn random_walk(spec: ArimaSpec, intercept: f64) -> Self {
        Self {
            spec,
            phi: vec![0.0; spec.p],
            intercept,
            sigma2: 0.0,
        }
    }
}

/// Applies `Δx_t = x_t − x_{t−1}` `d` times.
pub fn difference(x: &[f64], d: usize) -> Result<Vec<f64>> {
    if x.len() <= d {
        return Err(Error::SeriesTooShort {
            needed: d + 1,
            got: x.len(),
        });
    }
    let mut out = x.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Inverse of a single differencing pass: running sum anchored at `level`.
pub fn integrate(diffs: &[f64], level: f64) -> Vec<f64> {
    let mut acc = level;
    diffs
        .iter()
        .map(|d| {
            acc += d;
            acc
        })
        .collect()
}

fn autocovariances(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if x.len() <= max_lag {
        return Err(Error::SeriesTooShort {
            needed: max_lag + 1,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    Ok((0..=max_lag)
        .map(|lag| {
            centered
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n
        })
        .collect())
}

/// Sample autocorrelations `ρ_0..=ρ_max_lag` with the biased (1/N) estimator.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let cov = autocovariances(x, max_lag)?;
    if cov[0] <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(cov.iter().map(|c| c / cov[0]).collect())
}

/// Partial autocorrelations via the Durbin–Levinson recursion.
///
/// Index 0 holds 1.0 so that `pacf[l]` lines up with `acf[l]`.
pub fn pacf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(x, max_lag)?;
    Ok(pacf_from_acf(&rho))
}

pub(crate) fn pacf_from_acf(rho: &[f64]) -> Vec<f64> {
    let max_lag = rho.len() - 1;
    let mut out = vec![1.0; max_lag + 1];
    if max_lag == 0 {
        return out;
    }
    let mut phi = vec![0.0; max_lag + 1];
    phi[1] = rho[1];
    out[1] = rho[1];
    let mut v = 1.0 - rho[1] * rho[1];
    for k in 2..=max_lag {
        let num = rho[k] - (1..k).map(|j| phi[j] * rho[k - j]).sum::<f64>();
        let kk = if v.abs() < 1e-300 { 0.0 } else { num / v };
        let prev = phi.clone();
        for j in 1..k {
            phi[j] = prev[j] - kk * prev[k - j];
        }
        phi[k] = kk;
        out[k] = kk;
        v *= 1.0 - kk * kk;
    }
    out
}

/// Ordinary least squares of `w_t` on `(1, w_{t−1}, …, w_{t−p})`, where `w`
/// is `x` differenced `d` times.
pub fn fit_ar(x: &[f64], spec: ArimaSpec) -> Result<ArimaFit> {
    spec.validate()?;
    let w = difference(x, spec.d)?;
    let p = spec.p;
    if w.len() <= 10 * p || w.len() <= p + 1 {
        return Err(Error::SeriesTooShort {
            needed: (10 * p).max(p + 1) + 1 + spec.d,
            got: x.len(),
        });
    }
    let rows = w.len() - p;
    let cols = p + 1;
    let mut design = Vec::with_capacity(rows * cols);
    for t in p..w.len() {
        design.push(1.0);
        design.extend((1..=p).map(|lag| w[t - lag]));
    }
    let target = &w[p..];
    let beta = least_squares(&design, rows, cols, target)?;
    let sigma2 = (0..rows)
        .map(|i| {
            let fitted: f64 = (0..cols).map(|j| design[i * cols + j] * beta[j]).sum();
            let r = target[i] - fitted;
            r * r
        })
        .sum::<f64>()
        / rows as f64;
    Ok(ArimaFit {
        spec,
        intercept: beta[0],
        phi: beta[1..].to_vec(),
        sigma2,
    })
}

/// Multi-step forecast: the AR recursion runs on differenced values, feeding
/// its own outputs back in, and the result is re-integrated from the last
/// observed level.
pub fn forecast(fit: &ArimaFit, history: &[f64], steps: usize) -> Result<Vec<f64>> {
    let ArimaSpec { p, d, .. } = fit.spec;
    if fit.phi.len() != p {
        return Err(Error::LengthMismatch {
            left: fit.phi.len(),
            right: p,
        });
    }
    if history.len() < p + d || history.is_empty() {
        return Err(Error::SeriesTooShort {
            needed: (p + d).max(1),
            got: history.len(),
        });
    }
    if steps == 0 {
        return Ok(Vec::new());
    }
    let tail = &history[history.len() - (p + d).max(1)..];
    let mut w = difference(tail, d)?;
    let start = w.len();
    for _ in 0..steps {
        let n = w.len();
        let next = fit.intercept
            + fit
                .phi
                .iter()
                .enumerate()
                .map(|(i, phi)| phi * w[n - 1 - i])
                .sum::<f64>();
        w.push(next);
    }
    let predicted = &w[start..];
    Ok(if d == 1 {
        integrate(predicted, history[history.len() - 1])
    } else {
        predicted.to_vec()
    })
}

/// Trailing window of differences used for the rolling autocorrelation columns.
pub const AUTOCORR_WINDOW: usize = 30;

/// Per-day ARIMA-derived columns for one ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct ArimaFeatures {
    pub forecast_1d: IndicatorSeries,
    pub acf_lag1: IndicatorSeries,
    pub pacf_lag1: IndicatorSeries,
}

impl ArimaFeatures {
    pub fn forecast_warmup(fit: &ArimaFit) -> usize {
        (fit.spec.p + fit.spec.d).max(1) - 1
    }

    pub fn autocorr_warmup() -> usize {
        AUTOCORR_WINDOW
    }

    /// `(forecast_1d, acf_lag1, pacf_lag1)` for the day ending `history`.
    ///
    /// A flat trailing window has no defined autocorrelation; both
    /// autocorrelation columns read 0 there.
    pub fn values_at_end(fit: &ArimaFit, history: &[f64]) -> Result<[f64; 3]> {
        let next = forecast(fit, history, 1)?[0];
        if history.len() < AUTOCORR_WINDOW + 1 {
            return Err(Error::SeriesTooShort {
                needed: AUTOCORR_WINDOW + 1,
                got: history.len(),
            });
        }
        let diffs = difference(&history[history.len() - AUTOCORR_WINDOW - 1..], 1)?;
        let (a1, p1) = match acf(&diffs, 1) {
            Ok(rho) => (rho[1], pacf_from_acf(&rho)[1]),
            Err(Error::ZeroVariance) => (0.0, 0.0),
            Err(e) => return Err(e),
        };
        Ok([next, a1, p1])
    }

    pub fn compute(close: &[f64], fit: &ArimaFit) -> Result<Self> {
        let fw = Self::forecast_warmup(fit);
        let aw = Self::autocorr_warmup();
        let mut forecast_1d = Vec::new();
        for t in fw..close.len() {
            forecast_1d.push(forecast(fit, &close[..=t], 1)?[0]);
        }
        let (mut acf1, mut pacf1) = (Vec::new(), Vec::new());
        for t in aw..close.len() {
            let [_, a, p] = Self::values_at_end(fit, &close[..=t])?;
            acf1.push(a);
            pacf1.push(p);
        }
        Ok(Self {
            forecast_1d: IndicatorSeries::new("arima_forecast_1d", fw, forecast_1d),
            acf_lag1: IndicatorSeries::new("acf_lag1", aw, acf1),
            pacf_lag1: IndicatorSeries::new("pacf_lag1", aw, pacf1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn simulate_ar(phi: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let burn = 500;
        let mut x = vec![0.0; phi.len()];
        for _ in 0..n + burn {
            let e: f64 = StandardNormal.sample(&mut rng);
            let t = x.len();
            let v = e + phi.iter().enumerate().map(|(i, p)| p * x[t - 1 - i]).sum::<f64>();
            x.push(v);
        }
        x.split_off(x.len() - n)
    }

    #[test]
    fn difference_examples() {
        assert_eq!(difference(&[1.0, 3.0, 6.0, 10.0], 0).unwrap(), vec![1.0, 3.0, 6.0, 10.0]);
        assert_eq!(difference(&[1.0, 3.0, 6.0, 10.0], 1).unwrap(), vec![2.0, 3.0, 4.0]);
        assert_eq!(difference(&[2.0, 5.0, 8.0, 11.0], 1).unwrap(), vec![3.0; 3]);
        assert!(difference(&[1.0], 1).is_err());
    }

    #[test]
    fn integrate_inverts_difference() {
        let x = [4.0, 2.5, 7.0, 7.25, -1.0];
        let back = integrate(&difference(&x, 1).unwrap(), x[0]);
        assert_eq!(back, x[1..].to_vec());
    }

    #[test]
    fn acf_basics() {
        let alt: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rho = acf(&alt, 3).unwrap();
        assert_eq!(rho[0], 1.0);
        // Closed form for the biased estimator on a zero-mean ±1 sequence.
        assert!((rho[1] - (-999.0 / 1000.0)).abs() < 1e-12);
        assert_eq!(acf(&[2.0; 10], 2), Err(Error::ZeroVariance));
        assert!(acf(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn white_noise_has_small_correlations() {
        let noise = simulate_ar(&[], 10_000, 42);
        let rho = acf(&noise, 5).unwrap();
        assert!(rho[1].abs() < 0.05);
        let partial = pacf(&noise, 5).unwrap();
        assert!(partial[1..].iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn pacf_of_ar1() {
        let x = simulate_ar(&[0.5], 10_000, 7);
        let rho = acf(&x, 6).unwrap();
        let partial = pacf(&x, 6).unwrap();
        assert_eq!(partial[1], rho[1]);
        assert!((partial[1] - 0.5).abs() < 0.05);
        assert!(partial[2..].iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn fit_ar1_recovers_coefficient() {
        let x = simulate_ar(&[0.5], 10_000, 1);
        let fit = fit_ar(&x, ArimaSpec::new(1, 0, 0).unwrap()).unwrap();
        assert!((0.45..=0.55).contains(&fit.phi[0]), "{:?}", fit.phi);
        assert!(fit.sigma2 > 0.0);
    }

    #[test]
    fn exact_ar2_recovered() {
        let mut x = vec![1.0, 0.5];
        for t in 2..60 {
            x.push(0.3 + 0.6 * x[t - 1] - 0.2 * x[t - 2]);
        }
        // Start the fit away from the fixed point so the regressors vary.
        let fit = fit_ar(&x[..40], ArimaSpec::new(2, 0, 0).unwrap()).unwrap();
        assert!((fit.phi[0] - 0.6).abs() < 1e-8);
        assert!((fit.phi[1] + 0.2).abs() < 1e-8);
        assert!((fit.intercept - 0.3).abs() < 1e-8);
    }

    #[test]
    fn constant_differences_are_singular() {
        let line: Vec<f64> = (0..200).map(|i| 3.0 * i as f64).collect();
        assert_eq!(fit_ar(&line, ArimaSpec::DEFAULT), Err(Error::Singular));
        assert!(fit_ar(&line[..40], ArimaSpec::DEFAULT).is_err());
        assert!(ArimaSpec::new(1, 1, 1).is_err());
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let x = simulate_ar(&[0.4, -0.2], 400, 3);
        let spec = ArimaSpec::new(2, 0, 0).unwrap();
        let fit = fit_ar(&x, spec).unwrap();
        let mut dots = [0.0; 3];
        for t in 2..x.len() {
            let r = x[t] - fit.intercept - fit.phi[0] * x[t - 1] - fit.phi[1] * x[t - 2];
            dots[0] += r;
            dots[1] += r * x[t - 1];
            dots[2] += r * x[t - 2];
        }
        assert!(dots.iter().all(|d| d.abs() < 1e-8), "{dots:?}");
    }

    #[test]
    fn random_walk_forecast_is_flat() {
        let fit = ArimaFit::random_walk(ArimaSpec::DEFAULT, 0.0);
        let history = [5.0, 6.0, 4.0, 7.0, 8.0, 9.5];
        assert_eq!(forecast(&fit, &history, 4).unwrap(), vec![9.5; 4]);
        assert!(forecast(&fit, &history, 0).unwrap().is_empty());
        assert!(forecast(&fit, &history[..5], 1).is_err());
    }

    #[test]
    fn one_step_by_hand() {
        let fit = ArimaFit {
            spec: ArimaSpec::DEFAULT,
            phi: vec![0.5, -0.25, 0.1, 0.0, 0.2],
            intercept: 0.3,
            sigma2: 1.0,
        };
        let history = [10.0, 11.0, 10.5, 12.0, 12.5, 12.0];
        // Differences, most recent first: -0.5, 0.5, 1.5, -0.5, 1.0.
        let dnext = 0.3 + 0.5 * -0.5 + -0.25 * 0.5 + 0.1 * 1.5 + 0.0 * -0.5 + 0.2 * 1.0;
        let got = forecast(&fit, &history, 1).unwrap();
        assert!((got[0] - (12.0 + dnext)).abs() < 1e-12);
    }

    #[test]
    fn two_steps_equal_one_step_twice() {
        let fit = ArimaFit {
            spec: ArimaSpec::DEFAULT,
            phi: vec![0.3, 0.1, -0.2, 0.05, 0.1],
            intercept: 0.01,
            sigma2: 1.0,
        };
        let mut history = vec![3.0, 3.5, 3.2, 3.9, 4.4, 4.1, 4.0];
        let two = forecast(&fit, &history, 2).unwrap();
        let first = forecast(&fit, &history, 1).unwrap();
        history.push(first[0]);
        let second = forecast(&fit, &history, 1).unwrap();
        assert_eq!(two, vec![first[0], second[0]]);
    }

    #[test]
    fn rolling_features_handle_flat_windows() {
        let fit = ArimaFit::random_walk(ArimaSpec::DEFAULT, 0.0);
        let feats = ArimaFeatures::compute(&[50.0; 40], &fit).unwrap();
        assert_eq!(feats.forecast_1d.warmup, 5);
        assert_eq!(feats.acf_lag1.warmup, 30);
        assert!(feats.acf_lag1.values.iter().all(|v| *v == 0.0));
        assert!(feats.forecast_1d.values.iter().all(|v| *v == 50.0));
    }

    proptest::proptest! {
        #[test]
        fn acf_bounded_and_reversal_invariant(xs in proptest::collection::vec(-50f64..50.0, 8..60)) {
            if let Ok(rho) = acf(&xs, 5) {
                let mut rev = xs.clone();
                rev.reverse();
                let rho_rev = acf(&rev, 5).unwrap();
                for (a, b) in rho.iter().zip(&rho_rev) {
                    proptest::prop_assert!(a.abs() <= 1.0 + 1e-12);
                    proptest::prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
