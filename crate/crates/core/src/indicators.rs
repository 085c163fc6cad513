//! Moving averages, MACD and Bollinger bands over close prices.
//!
//! All functions index by trading day; gaps in the calendar are ignored.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MACD_FAST: usize = 12;
pub const MACD_SLOW: usize = 26;
pub const BOLLINGER_MEAN_WINDOW: usize = 21;
pub const BOLLINGER_STD_WINDOW: usize = 20;

/// An indicator aligned to its source series: `values[i]` belongs to source
/// index `warmup + i`, and the first `warmup` days are undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    pub name: String,
    pub warmup: usize,
    pub values: Vec<f64>,
}

impl IndicatorSeries {
    pub fn new(name: impl Into<String>, warmup: usize, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            warmup,
            values,
        }
    }

    /// Value at source index `t`, `None` inside the warmup or past the end.
    pub fn at(&self, t: usize) -> Option<f64> {
        t.checked_sub(self.warmup).and_then(|i| self.values.get(i).copied())
    }

    /// Length of the source series this indicator was computed from.
    pub fn source_len(&self) -> usize {
        self.warmup + self.values.len()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    libm::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

/// Trailing simple moving average.
pub fn sma(close: &[f64], window: usize) -> Result<IndicatorSeries> {
    if window == 0 {
        return Err(Error::InvalidArgument("sma window must be at least 1".into()));
    }
    if window > close.len() {
        return Err(Error::SeriesTooShort {
            needed: window,
            got: close.len(),
        });
    }
    let values = close.windows(window).map(mean).collect();
    Ok(IndicatorSeries::new(alloc::format!("sma{window}"), window - 1, values))
}

/// Exponential moving average with `k = 2 / (period + 1)`, seeded with the
/// first price.
pub fn ema(close: &[f64], period: usize) -> Result<IndicatorSeries> {
    if period == 0 {
        return Err(Error::InvalidArgument("ema period must be at least 1".into()));
    }
    let k = 2.0 / (period as f64 + 1.0);
    Ok(IndicatorSeries::new(
        alloc::format!("ema{period}"),
        0,
        ema_with_factor(close, k)?,
    ))
}

pub(crate) fn ema_with_factor(close: &[f64], k: f64) -> Result<Vec<f64>> {
    let (&first, rest) = close.split_first().ok_or(Error::EmptySeries)?;
    let mut out = Vec::with_capacity(close.len());
    let mut prev = first;
    out.push(prev);
    for &price in rest {
        prev += k * (price - prev);
        out.push(prev);
    }
    Ok(out)
}

/// 12-period EMA minus 26-period EMA.
pub fn macd(close: &[f64]) -> Result<IndicatorSeries> {
    let fast = ema(close, MACD_FAST)?;
    let slow = ema(close, MACD_SLOW)?;
    let values = fast
        .values
        .iter()
        .zip(&slow.values)
        .map(|(f, s)| f - s)
        .collect();
    Ok(IndicatorSeries::new("macd", 0, values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BollingerBands {
    pub upper: IndicatorSeries,
    pub lower: IndicatorSeries,
}

/// 21-day mean plus/minus the 20-day population standard deviation.
///
/// The two windows differ in length on purpose; both end at the current day.
pub fn bollinger(close: &[f64]) -> Result<BollingerBands> {
    if close.len() < BOLLINGER_MEAN_WINDOW {
        return Err(Error::SeriesTooShort {
            needed: BOLLINGER_MEAN_WINDOW,
            got: close.len(),
        });
    }
    let warmup = BOLLINGER_MEAN_WINDOW - 1;
    let mut upper = Vec::with_capacity(close.len() - warmup);
    let mut lower = Vec::with_capacity(close.len() - warmup);
    for t in warmup..close.len() {
        let mid = mean(&close[t + 1 - BOLLINGER_MEAN_WINDOW..=t]);
        let spread = population_std(&close[t + 1 - BOLLINGER_STD_WINDOW..=t]);
        upper.push(mid + spread);
        lower.push(mid - spread);
    }
    Ok(BollingerBands {
        upper: IndicatorSeries::new("bollinger_upper", warmup, upper),
        lower: IndicatorSeries::new("bollinger_lower", warmup, lower),
    })
}
