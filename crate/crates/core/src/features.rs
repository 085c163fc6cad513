//! The 128-column daily feature matrix: 16 columns for each of 8 tickers.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::arima::{ArimaFeatures, ArimaFit};
use crate::error::{Error, Result};
use crate::indicators::{bollinger, ema, macd, sma, IndicatorSeries, BOLLINGER_STD_WINDOW, MACD_FAST, MACD_SLOW};
use crate::ingest::PriceSeries;
use crate::spectral::{rolling_reconstructions, SpectralConfig};

pub const TICKER_COUNT: usize = 8;
pub const FEATURES_PER_TICKER: usize = 16;
pub const FEATURE_WIDTH: usize = TICKER_COUNT * FEATURES_PER_TICKER;
pub const VOLUME_SCALE: f64 = 1e-6;
/// Shortest shared calendar accepted by [`FeaturePipeline::matrix`].
pub const MIN_COMMON_DAYS: usize = MACD_SLOW + BOLLINGER_STD_WINDOW + 5;

/// Per-ticker column order. The two spectral columns are named after the
/// configured component counts.
pub const CATALOG: [&str; FEATURES_PER_TICKER] = [
    "close",
    "adj_close",
    "volume",
    "log_return",
    "sma7",
    "sma21",
    "ema12",
    "ema26",
    "macd",
    "bollinger_upper",
    "bollinger_lower",
    "fourier_recon_k3",
    "fourier_recon_k9",
    "arima_forecast_1d",
    "acf_lag1",
    "pacf_lag1",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub rows: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn row_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dates.len() != self.rows.len() {
            return Err(Error::LengthMismatch {
                left: self.dates.len(),
                right: self.rows.len(),
            });
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.feature_names.len() {
                return Err(Error::shape("feature row", &[self.feature_names.len()], &[row.len()]));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{} on {}", self.feature_names[j], self.dates[i])));
            }
        }
        Ok(())
    }
}

/// Close, adjusted close and volume of one ticker on the shared calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerHistory {
    pub ticker: String,
    pub close: Vec<f64>,
    pub adj_close: Vec<f64>,
    pub volume: Vec<f64>,
}

/// Several tickers restricted to the dates they all trade on, in
/// ticker-alphabetical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<TickerHistory>,
}

impl Panel {
    pub fn align(series: &[PriceSeries]) -> Result<Self> {
        let mut sorted: Vec<&PriceSeries> = series.iter().collect();
        sorted.sort_by(|a, b| a.ticker.cmp(&b.ticker));
        if sorted.windows(2).any(|w| w[0].ticker == w[1].ticker) {
            return Err(Error::InvalidArgument("duplicate ticker in panel".into()));
        }
        let mut counts: BTreeMap<NaiveDate, usize> = BTreeMap::new();
        for s in &sorted {
            for b in s.bars() {
                *counts.entry(b.date).or_default() += 1;
            }
        }
        let dates: Vec<NaiveDate> = counts
            .into_iter()
            .filter(|(_, c)| *c == sorted.len())
            .map(|(d, _)| d)
            .collect();
        let tickers = sorted
            .iter()
            .map(|s| {
                let bars: Vec<_> = s.bars().iter().filter(|b| dates.binary_search(&b.date).is_ok()).collect();
                TickerHistory {
                    ticker: s.ticker.clone(),
                    close: bars.iter().map(|b| b.close).collect(),
                    adj_close: bars.iter().map(|b| b.adj_close).collect(),
                    volume: bars.iter().map(|b| b.volume).collect(),
                }
            })
            .collect();
        Ok(Self { dates, tickers })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t.ticker == ticker)
    }

    /// The panel as it stood at the end of `date`.
    pub fn up_to(&self, date: NaiveDate) -> Self {
        self.truncate(self.dates.partition_point(|d| *d <= date))
    }

    pub fn truncate(&self, len: usize) -> Self {
        Self {
            dates: self.dates[..len].to_vec(),
            tickers: self
                .tickers
                .iter()
                .map(|t| TickerHistory {
                    ticker: t.ticker.clone(),
                    close: t.close[..len].to_vec(),
                    adj_close: t.adj_close[..len].to_vec(),
                    volume: t.volume[..len].to_vec(),
                })
                .collect(),
        }
    }

    /// Appends a simulated day: `target` closes at `close` (adjusted close
    /// keeps its last ratio to close), every other value repeats the last
    /// observed day. The new date is the calendar day after the last one.
    pub fn push_simulated(&mut self, target: usize, close: f64) -> Result<()> {
        let last = *self.dates.last().ok_or(Error::EmptySeries)?;
        let next = last
            .succ_opt()
            .ok_or_else(|| Error::InvalidArgument("calendar overflow".into()))?;
        self.dates.push(next);
        for (i, t) in self.tickers.iter_mut().enumerate() {
            let (c, a, v) = (
                *t.close.last().unwrap_or(&0.0),
                *t.adj_close.last().unwrap_or(&0.0),
                *t.volume.last().unwrap_or(&0.0),
            );
            if i == target {
                let ratio = if c != 0.0 { a / c } else { 1.0 };
                t.close.push(close);
                t.adj_close.push(close * ratio);
            } else {
                t.close.push(c);
                t.adj_close.push(a);
            }
            t.volume.push(v);
        }
        Ok(())
    }
}

/// Everything needed to turn a [`Panel`] into feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub spectral: SpectralConfig,
    /// ARIMA fit per ticker symbol.
    pub fits: BTreeMap<String, ArimaFit>,
}

impl FeaturePipeline {
    pub fn new(spectral: SpectralConfig, fits: BTreeMap<String, ArimaFit>) -> Result<Self> {
        if spectral.components.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "the catalog has two spectral columns, got {} component counts",
                spectral.components.len()
            )));
        }
        Ok(Self { spectral, fits })
    }

    pub fn feature_names(&self, panel: &Panel) -> Vec<String> {
        let mut names = Vec::with_capacity(FEATURE_WIDTH);
        for t in &panel.tickers {
            for (j, base) in CATALOG.iter().enumerate() {
                let base = match j {
                    11 => format!("fourier_recon_k{}", self.spectral.components[0]),
                    12 => format!("fourier_recon_k{}", self.spectral.components[1]),
                    _ => String::from(*base),
                };
                names.push(format!("{}.{}", t.ticker, base));
            }
        }
        names
    }

    fn fit(&self, ticker: &str) -> Result<&ArimaFit> {
        self.fits
            .get(ticker)
            .ok_or_else(|| Error::InvalidArgument(format!("no ARIMA fit for ticker {ticker}")))
    }

    /// Leading days of the shared calendar without a full feature row.
    pub fn warmup(&self) -> usize {
        let arima = self
            .fits
            .values()
            .map(ArimaFeatures::forecast_warmup)
            .max()
            .unwrap_or(0);
        [
            self.spectral.warmup(),
            ArimaFeatures::autocorr_warmup(),
            arima,
            crate::indicators::BOLLINGER_MEAN_WINDOW - 1,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }

    fn check_panel(&self, panel: &Panel) -> Result<()> {
        if panel.tickers.len() != TICKER_COUNT {
            return Err(Error::InvalidArgument(format!(
                "feature matrix needs {TICKER_COUNT} tickers, got {}",
                panel.tickers.len()
            )));
        }
        Ok(())
    }

    /// Every defined row, from day `warmup()` of the panel onwards.
    pub fn matrix(&self, panel: &Panel) -> Result<FeatureMatrix> {
        self.check_panel(panel)?;
        if panel.len() < MIN_COMMON_DAYS {
            return Err(Error::SeriesTooShort {
                needed: MIN_COMMON_DAYS,
                got: panel.len(),
            });
        }
        let start = self.warmup();
        let mut rows = vec![Vec::with_capacity(FEATURE_WIDTH); panel.len() - start];
        for t in &panel.tickers {
            let columns = self.ticker_columns(t)?;
            for (i, row) in rows.iter_mut().enumerate() {
                for col in &columns {
                    row.push(col.at(start + i).ok_or(Error::SeriesTooShort {
                        needed: col.warmup + 1,
                        got: start + i + 1,
                    })?);
                }
            }
        }
        let m = FeatureMatrix {
            dates: panel.dates[start..].to_vec(),
            rows,
            feature_names: self.feature_names(panel),
        };
        m.validate()?;
        Ok(m)
    }

    /// The feature row of the panel's last day. Equal to the last row of
    /// [`Self::matrix`] on the same panel.
    pub fn last_row(&self, panel: &Panel) -> Result<Vec<f64>> {
        self.check_panel(panel)?;
        let mut row = Vec::with_capacity(FEATURE_WIDTH);
        for t in &panel.tickers {
            for col in self.ticker_columns_at_end(t)? {
                row.push(col);
            }
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature column {j}")));
        }
        Ok(row)
    }

    fn ticker_columns(&self, t: &TickerHistory) -> Result<Vec<IndicatorSeries>> {
        let close = &t.close;
        let fit = self.fit(&t.ticker)?;
        let band = bollinger(close)?;
        let mut spectral = rolling_reconstructions(close, &self.spectral)?.into_iter();
        let arima = ArimaFeatures::compute(close, fit)?;
        Ok(vec![
            IndicatorSeries::new("close", 0, close.clone()),
            IndicatorSeries::new("adj_close", 0, t.adj_close.clone()),
            IndicatorSeries::new("volume", 0, t.volume.iter().map(|v| v * VOLUME_SCALE).collect()),
            log_returns(close),
            sma(close, 7)?,
            sma(close, 21)?,
            ema(close, MACD_FAST)?,
            ema(close, MACD_SLOW)?,
            macd(close)?,
            band.upper,
            band.lower,
            spectral.next().ok_or(Error::EmptySeries)?,
            spectral.next().ok_or(Error::EmptySeries)?,
            arima.forecast_1d,
            arima.acf_lag1,
            arima.pacf_lag1,
        ])
    }

    fn ticker_columns_at_end(&self, t: &TickerHistory) -> Result<[f64; FEATURES_PER_TICKER]> {
        let close = &t.close;
        let n = close.len();
        if n <= self.warmup() {
            return Err(Error::SeriesTooShort {
                needed: self.warmup() + 1,
                got: n,
            });
        }
        let fit = self.fit(&t.ticker)?;
        let last = |s: Result<IndicatorSeries>| -> Result<f64> { s?.last().ok_or(Error::EmptySeries) };
        let band = bollinger(&close[n - crate::indicators::BOLLINGER_MEAN_WINDOW..])?;
        let spectral = self.spectral.features_at_end(close)?;
        let [forecast_1d, acf1, pacf1] = ArimaFeatures::values_at_end(fit, close)?;
        Ok([
            close[n - 1],
            t.adj_close[n - 1],
            t.volume[n - 1] * VOLUME_SCALE,
            libm::log(close[n - 1] / close[n - 2]),
            last(sma(&close[n - 7..], 7))?,
            last(sma(&close[n - 21..], 21))?,
            last(ema(close, MACD_FAST))?,
            last(ema(close, MACD_SLOW))?,
            last(macd(close))?,
            band.upper.last().ok_or(Error::EmptySeries)?,
            band.lower.last().ok_or(Error::EmptySeries)?,
            spectral[0],
            spectral[1],
            forecast_1d,
            acf1,
            pacf1,
        ])
    }
}

fn log_returns(close: &[f64]) -> IndicatorSeries {
    IndicatorSeries::new(
        "log_return",
        1,
        close.windows(2).map(|w| libm::log(w[1] / w[0])).collect(),
    )
}

/// Per-column z-scores fitted on training rows; a flat column is centered
/// but not rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptySeries)?;
        let n = rows.len() as f64;
        let width = first.len();
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = libm::sqrt(v);
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Maps the training range of a price series onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { min, max })
    }

    fn span(&self) -> f64 {
        if self.max > self.min {
            self.max - self.min
        } else {
            1.0
        }
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / self.span()
    }

    pub fn unscale(&self, v: f64) -> f64 {
        v * self.span() + self.min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::OhlcvBar;

    fn series(ticker: &str, days: usize, price: impl Fn(usize) -> f64) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let bars = (0..days)
            .map(|i| {
                let c = price(i);
                OhlcvBar {
                    date: start + chrono::Days::new(i as u64),
                    open: c,
                    high: c * 1.01,
                    low: c * 0.99,
                    close: c,
                    adj_close: c * 0.98,
                    volume: 1e6 + i as f64,
                }
            })
            .collect();
        PriceSeries::new(ticker, bars).unwrap()
    }

    fn tickers() -> Vec<&'static str> {
        vec!["TXT", "BA", "LMT", "NOC", "GD", "RTX", "HII", "SPR"]
    }

    fn pipeline(names: &[&str]) -> FeaturePipeline {
        let fits = names
            .iter()
            .map(|t| (String::from(*t), ArimaFit::random_walk(crate::arima::ArimaSpec::DEFAULT, 0.0)))
            .collect();
        FeaturePipeline::new(SpectralConfig::default(), fits).unwrap()
    }

    fn wavy_panel(days: usize) -> Panel {
        let all: Vec<PriceSeries> = tickers()
            .iter()
            .enumerate()
            .map(|(k, t)| series(t, days, |i| 50.0 + 10.0 * k as f64 + 5.0 * libm::sin(i as f64 * 0.3 + k as f64)))
            .collect();
        Panel::align(&all).unwrap()
    }

    #[test]
    fn constant_prices() {
        let all: Vec<PriceSeries> = tickers().iter().map(|t| series(t, 80, |_| 42.0)).collect();
        let panel = Panel::align(&all).unwrap();
        let p = pipeline(&tickers());
        let m = p.matrix(&panel).unwrap();
        assert_eq!(m.width(), FEATURE_WIDTH);
        assert_eq!(m.len(), 80 - p.warmup());
        for name in m.feature_names.iter().filter(|n| n.ends_with(".macd")) {
            assert!(m.column(name).unwrap().iter().all(|v| *v == 0.0));
        }
        for name in m.feature_names.iter().filter(|n| n.contains(".bollinger_")) {
            assert!(m.column(name).unwrap().iter().all(|v| *v == 42.0));
        }
    }

    #[test]
    fn names_unique_and_alphabetical() {
        let panel = wavy_panel(60);
        let names = pipeline(&tickers()).feature_names(&panel);
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), FEATURE_WIDTH);
        assert_eq!(names[0], "BA.close");
        assert_eq!(names[FEATURE_WIDTH - 1], "TXT.pacf_lag1");
    }

    #[test]
    fn row_count_is_intersection_minus_warmup() {
        let mut all: Vec<PriceSeries> = tickers().iter().map(|t| series(t, 90, |i| 10.0 + i as f64)).collect();
        // One ticker starts 7 days late, so the shared calendar has 83 days.
        all[3] = series(tickers()[3], 97, |i| 10.0 + i as f64);
        let bars = all[3].bars()[7..].to_vec();
        all[3] = PriceSeries::new(tickers()[3], bars).unwrap();
        let panel = Panel::align(&all).unwrap();
        assert_eq!(panel.len(), 83);
        let p = pipeline(&tickers());
        // Longest warmup: 32-day spectral window.
        assert_eq!(p.warmup(), 31);
        assert_eq!(p.matrix(&panel).unwrap().len(), 83 - 31);
    }

    #[test]
    fn rejects_wrong_ticker_count_and_short_calendar() {
        let all: Vec<PriceSeries> = tickers()[..7].iter().map(|t| series(t, 80, |_| 3.0)).collect();
        let panel = Panel::align(&all).unwrap();
        assert!(pipeline(&tickers()).matrix(&panel).is_err());
        assert!(pipeline(&tickers()).matrix(&wavy_panel(40)).is_err());
    }

    #[test]
    fn last_row_matches_matrix() {
        let panel = wavy_panel(120);
        let p = pipeline(&tickers());
        let m = p.matrix(&panel).unwrap();
        for len in [32, 33, 50, 120] {
            let row = p.last_row(&panel.truncate(len)).unwrap();
            let expected = &m.rows[len - 1 - p.warmup()];
            for (a, b) in row.iter().zip(expected) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rows_are_causal() {
        let panel = wavy_panel(100);
        let p = pipeline(&tickers());
        let full = p.matrix(&panel).unwrap();
        let early = p.matrix(&panel.truncate(70)).unwrap();
        assert_eq!(&full.rows[..early.len()], &early.rows[..]);
    }

    #[test]
    fn simulated_day_holds_other_tickers() {
        let mut panel = wavy_panel(60);
        let before = panel.clone();
        panel.push_simulated(0, 123.0).unwrap();
        assert_eq!(panel.len(), 61);
        assert_eq!(*panel.tickers[0].close.last().unwrap(), 123.0);
        assert_eq!(panel.tickers[1].close[60], before.tickers[1].close[59]);
        assert_eq!(panel.tickers[0].volume[60], before.tickers[0].volume[59]);
    }

    #[test]
    fn scalers_round_trip() {
        let mm = MinMaxScaler::fit(&[10.0, 20.0, 15.0]).unwrap();
        assert_eq!(mm.scale(10.0), 0.0);
        assert_eq!(mm.scale(20.0), 1.0);
        assert!((mm.unscale(mm.scale(17.3)) - 17.3).abs() < 1e-12);
        let cs = ColumnScaler::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(cs.transform_row(&[2.0, 5.0]), vec![0.0, 0.0]);
        assert_eq!(cs.transform_row(&[3.0, 6.0]), vec![1.0, 1.0]);
    }
}
