//! Seeded synthetic prices and news for tests, fixtures and smoke runs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::{LabeledSeedCorpus, NewsDocument, OhlcvBar, PriceSeries};
use crate::sentiment::Polarity;

/// Eight aerospace and defence symbols used by the bundled fixtures.
pub const FIXTURE_TICKERS: [&str; 8] = ["BA", "GD", "HII", "LMT", "NOC", "RTX", "SPR", "TXT"];

/// Monday to Friday dates, `count` of them, starting at or after `start`.
pub fn weekdays(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Weekdays from `start` through `end` inclusive.
pub fn weekdays_between(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = start;
    while d <= end {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriceShape {
    /// `level + amplitude·sin(2πt/period + phase)` plus Gaussian noise.
    Sine {
        level: f64,
        amplitude: f64,
        period: f64,
        noise: f64,
    },
    /// Geometric random walk with the given daily log-volatility.
    RandomWalk { start: f64, volatility: f64 },
}

/// A valid OHLCV series over `dates`. The close path is drawn from `shape`;
/// the other fields are jittered around it so every bar is consistent.
pub fn price_series(ticker: &str, dates: &[NaiveDate], shape: PriceShape, seed: u64) -> Result<PriceSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(0.0..core::f64::consts::TAU);
    let mut level = match shape {
        PriceShape::RandomWalk { start, .. } => start,
        _ => 0.0,
    };
    let mut bars = Vec::with_capacity(dates.len());
    let mut prev_close = None;
    for (t, &date) in dates.iter().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng);
        let close = match shape {
            PriceShape::Sine {
                level,
                amplitude,
                period,
                noise,
            } => level + amplitude * libm::sin(core::f64::consts::TAU * t as f64 / period + phase) + noise * z,
            PriceShape::RandomWalk { volatility, .. } => {
                if t > 0 {
                    level *= libm::exp(volatility * z);
                }
                level
            }
        };
        if !(close > 0.0) {
            return Err(Error::InvalidArgument(format!("synthetic close {close} is not positive")));
        }
        let open = prev_close.unwrap_or(close) * (1.0 + 0.002 * rng.random_range(-1.0..1.0));
        let high = open.max(close) * (1.0 + 0.01 * rng.random::<f64>());
        let low = open.min(close) * (1.0 - 0.01 * rng.random::<f64>());
        let volume = libm::round(2e6 * (1.0 + 0.5 * rng.random::<f64>()));
        bars.push(OhlcvBar {
            date,
            open,
            high,
            low,
            close,
            adj_close: close * 0.97,
            volume,
        });
        prev_close = Some(close);
    }
    PriceSeries::new(ticker, bars)
}

/// Eight sine-plus-noise tickers on a shared calendar, each with its own
/// level, period and phase.
pub fn sine_panel(dates: &[NaiveDate], noise: f64, seed: u64) -> Result<Vec<PriceSeries>> {
    FIXTURE_TICKERS
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let shape = PriceShape::Sine {
                level: 60.0 + 40.0 * i as f64,
                amplitude: 8.0 + i as f64,
                period: 20.0 + 3.0 * i as f64,
                noise,
            };
            price_series(t, dates, shape, seed.wrapping_add(i as u64))
        })
        .collect()
}

const POSITIVE: [&str; 12] = [
    "gains", "strong", "beats", "growth", "upgrade", "record", "profit", "surge", "win", "rally", "robust", "optimistic",
];
const NEGATIVE: [&str; 12] = [
    "losses", "weak", "misses", "decline", "downgrade", "crash", "grounded", "plunge", "delay", "lawsuit", "cut", "pessimistic",
];
const NEUTRAL: [&str; 12] = [
    "reports", "announces", "schedules", "meeting", "quarter", "shares", "company", "holds", "statement", "filing",
    "update", "today",
];

fn pick<'a, R: Rng>(rng: &mut R, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

/// Labeled seed sentences built from the fixture word lists.
pub fn seed_corpus_rows(per_class: usize, seed: u64) -> Vec<(String, Polarity)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(3 * per_class);
    for i in 0..per_class {
        for (words, label) in [
            (&NEGATIVE, Polarity::Negative),
            (&NEUTRAL, Polarity::Neutral),
            (&POSITIVE, Polarity::Positive),
        ] {
            let a = words[i % words.len()];
            let b = pick(&mut rng, words);
            let c = pick(&mut rng, &NEUTRAL);
            rows.push((format!("{a} {c} {b}"), label));
        }
    }
    rows
}

pub fn seed_corpus(per_class: usize, seed: u64) -> Result<LabeledSeedCorpus> {
    let rows = seed_corpus_rows(per_class, seed);
    LabeledSeedCorpus::from_texts(rows.iter().map(|(t, l)| (t.as_str(), *l)))
}

/// Raw fields of one generated news item.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDocument {
    pub id: String,
    pub tickers: Vec<String>,
    pub date: NaiveDate,
    pub source: String,
    pub text: String,
}

impl RawDocument {
    pub fn parse(&self) -> Result<NewsDocument> {
        NewsDocument::from_text(self.id.clone(), self.tickers.clone(), self.date, self.source.clone(), &self.text)
            .map_err(Error::InvalidArgument)
    }
}

/// `count` documents spread over `dates`, each naming one or two tickers
/// and carrying three to twelve sentences.
pub fn news_corpus(dates: &[NaiveDate], count: usize, seed: u64) -> Vec<RawDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = ["wire", "journal", "blog"];
    (0..count)
        .map(|i| {
            let date = dates[(i * dates.len()) / count.max(1)];
            let first = FIXTURE_TICKERS[rng.random_range(0..FIXTURE_TICKERS.len())];
            let mut tickers = alloc::vec![String::from(first)];
            if rng.random_bool(0.25) {
                let second = FIXTURE_TICKERS[rng.random_range(0..FIXTURE_TICKERS.len())];
                if second != first {
                    tickers.push(String::from(second));
                }
            }
            let n = rng.random_range(3..=12);
            let mut text = String::new();
            for s in 0..n {
                let words = match rng.random_range(0..3) {
                    0 => &NEGATIVE,
                    1 => &NEUTRAL,
                    _ => &POSITIVE,
                };
                let (a, b) = (pick(&mut rng, words), pick(&mut rng, &NEUTRAL));
                let end = if s % 4 == 3 { "!" } else { "." };
                text.push_str(&format!("{} {a} {b}{end} ", first.to_lowercase()));
            }
            RawDocument {
                id: format!("doc{i:04}"),
                tickers,
                date,
                source: String::from(sources[i % sources.len()]),
                text: String::from(text.trim_end()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn weekday_calendar() {
        let d = weekdays(day(2020, 1, 24), 3);
        assert_eq!(d, [day(2020, 1, 24), day(2020, 1, 27), day(2020, 1, 28)]);
        let test = weekdays_between(day(2020, 1, 25), day(2020, 3, 6));
        assert_eq!(test.len(), 30);
        assert_eq!(test[0], day(2020, 1, 27));
    }

    #[test]
    fn generated_data_is_valid_and_seeded() {
        let dates = weekdays(day(2019, 1, 1), 120);
        let a = sine_panel(&dates, 0.5, 3).unwrap();
        let b = sine_panel(&dates, 0.5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let rw = price_series("X", &dates, PriceShape::RandomWalk { start: 50.0, volatility: 0.02 }, 1).unwrap();
        assert_eq!(rw.len(), 120);
        let docs = news_corpus(&dates, 40, 5);
        assert_eq!(docs.len(), 40);
        for d in &docs {
            let parsed = d.parse().unwrap();
            assert!((3..=12).contains(&parsed.sentences.len()));
        }
        assert!(seed_corpus(10, 1).is_ok());
    }
}
