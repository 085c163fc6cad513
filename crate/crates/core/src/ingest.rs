//! Validated in-memory forms of daily price bars and news text.
//!
//! File parsing lives in the `stgan` crate; everything here is pure and
//! operates on already-decoded records.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sentiment::Polarity;

/// Generator windows are 30 trading days long; shorter series cannot train.
pub const MIN_TRAINING_LENGTH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

impl OhlcvBar {
    pub fn validate(&self) -> core::result::Result<(), String> {
        let prices = [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
            ("adj_close", self.adj_close),
        ];
        for (name, value) in prices {
            if !value.is_finite() || value <= 0.0 {
                return Err(format!("{name} must be a positive finite price, got {value}"));
            }
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err(format!("volume must be non-negative, got {}", self.volume));
        }
        if self.low > self.high {
            return Err(format!("low {} exceeds high {}", self.low, self.high));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} exceeds min(open, close) {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} is below max(open, close) {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        Ok(())
    }
}

/// Daily bars for one ticker with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub ticker: String,
    bars: Vec<OhlcvBar>,
}

impl PriceSeries {
    /// Validates every bar and the date ordering. Row numbers in errors are
    /// 1-based positions in `bars`.
    pub fn new(ticker: impl Into<String>, bars: Vec<OhlcvBar>) -> Result<Self> {
        if bars.is_empty() {
            return Err(Error::EmptySeries);
        }
        for (i, bar) in bars.iter().enumerate() {
            bar.validate()
                .map_err(|reason| Error::InvalidRow { row: i + 1, reason })?;
            if i > 0 && bars[i - 1].date >= bar.date {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    reason: format!(
                        "date {} does not follow {} (dates must be strictly increasing)",
                        bar.date,
                        bars[i - 1].date
                    ),
                });
            }
        }
        Ok(Self {
            ticker: ticker.into(),
            bars,
        })
    }

    /// Sorts by date before validating.
    pub fn from_unsorted(ticker: impl Into<String>, mut bars: Vec<OhlcvBar>) -> Result<Self> {
        bars.sort_by_key(|b| b.date);
        Self::new(ticker, bars)
    }

    pub fn bars(&self) -> &[OhlcvBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.bars[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.bars[self.bars.len() - 1].date
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.bars.binary_search_by_key(&date, |b| b.date).ok()
    }

    /// Bars dated on or before `date`. May be empty.
    pub fn up_to(&self, date: NaiveDate) -> &[OhlcvBar] {
        let end = self.bars.partition_point(|b| b.date <= date);
        &self.bars[..end]
    }

    pub fn ensure_trainable(&self) -> Result<()> {
        if self.len() < MIN_TRAINING_LENGTH {
            return Err(Error::SeriesTooShort {
                needed: MIN_TRAINING_LENGTH,
                got: self.len(),
            });
        }
        Ok(())
    }

    // Sub-series of an already valid series stay valid, except for emptiness.
    fn slice_unchecked(&self, bars: &[OhlcvBar]) -> Self {
        Self {
            ticker: self.ticker.clone(),
            bars: bars.to_vec(),
        }
    }
}

/// Splits into bars dated `<= cutoff` and bars dated `> cutoff`.
///
/// Either half may be empty at the boundaries; the cutoff itself must fall
/// within the first and last dates of the series.
pub fn split_train_test(series: &PriceSeries, cutoff: NaiveDate) -> Result<(PriceSeries, PriceSeries)> {
    if cutoff < series.first_date() || cutoff > series.last_date() {
        return Err(Error::CutoffOutOfRange {
            cutoff,
            first: series.first_date(),
            last: series.last_date(),
        });
    }
    let at = series.bars.partition_point(|b| b.date <= cutoff);
    Ok((
        series.slice_unchecked(&series.bars[..at]),
        series.slice_unchecked(&series.bars[at..]),
    ))
}

/// Lowercases and strips every non-alphanumeric character, splitting on
/// whitespace. Applying it to its own output joined by spaces is a no-op.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let token: String = raw
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect();
            (!token.is_empty()).then_some(token)
        })
        .collect()
}

/// Splits on '.', '!' or '?' when followed by whitespace or end of text, then
/// tokenizes each piece. Sentences with no tokens are dropped.
pub fn split_sentences(text: &str) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                sentences.push(tokenize(&text[start..end]));
                start = end;
            }
        }
    }
    if start < text.len() {
        sentences.push(tokenize(&text[start..]));
    }
    sentences.retain(|s| !s.is_empty());
    sentences
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsDocument {
    pub doc_id: String,
    pub tickers: Vec<String>,
    pub date: NaiveDate,
    pub source: String,
    pub sentences: Vec<Vec<String>>,
}

impl NewsDocument {
    /// Builds a document from raw text. Fails when no sentence survives
    /// preprocessing.
    pub fn from_text(
        doc_id: impl Into<String>,
        tickers: Vec<String>,
        date: NaiveDate,
        source: impl Into<String>,
        text: &str,
    ) -> core::result::Result<Self, String> {
        let sentences = split_sentences(text);
        if sentences.is_empty() {
            return Err("text contains no sentences".into());
        }
        Ok(Self {
            doc_id: doc_id.into(),
            tickers,
            date,
            source: source.into(),
            sentences,
        })
    }

    pub fn mentions(&self, ticker: &str) -> bool {
        self.tickers.iter().any(|t| t == ticker)
    }
}

/// Word- or phrase-level examples for the Naive Bayes classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeedCorpus {
    entries: Vec<(Vec<String>, Polarity)>,
}

impl LabeledSeedCorpus {
    pub fn new(entries: Vec<(Vec<String>, Polarity)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        for class in Polarity::ALL {
            if !entries.iter().any(|(_, label)| *label == class) {
                return Err(Error::MissingClass(class.value()));
            }
        }
        Ok(Self { entries })
    }

    /// Tokenizes raw `(text, label)` pairs.
    pub fn from_texts<'a>(rows: impl IntoIterator<Item = (&'a str, Polarity)>) -> Result<Self> {
        Self::new(
            rows.into_iter()
                .map(|(text, label)| (tokenize(text), label))
                .collect(),
        )
    }

    pub fn entries(&self) -> &[(Vec<String>, Polarity)] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, d).unwrap()
    }

    fn bar(d: u32, close: f64) -> OhlcvBar {
        OhlcvBar {
            date: day(d),
            open: close,
            high: close + 1.0,
            low: close - 1.0,
            close,
            adj_close: close,
            volume: 1000.0,
        }
    }

    #[test]
    fn single_bar_series() {
        let s = PriceSeries::new("BA", vec![bar(2, 10.0)]).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn low_above_high_names_the_row() {
        let mut bad = bar(3, 10.0);
        bad.low = 12.0;
        let err = PriceSeries::new("BA", vec![bar(2, 10.0), bad]).unwrap_err();
        match err {
            Error::InvalidRow { row, reason } => {
                assert_eq!(row, 2);
                assert!(reason.contains("low"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_dates_and_empty() {
        assert!(PriceSeries::new("BA", vec![bar(2, 5.0), bar(2, 5.0)]).is_err());
        assert_eq!(PriceSeries::new("BA", vec![]), Err(Error::EmptySeries));
        let s = PriceSeries::from_unsorted("BA", vec![bar(5, 5.0), bar(2, 6.0)]).unwrap();
        assert_eq!(s.first_date(), day(2));
    }

    #[test]
    fn split_at_last_date_leaves_test_empty() {
        let s = PriceSeries::new("BA", (2..10).map(|d| bar(d, d as f64)).collect()).unwrap();
        let (train, test) = split_train_test(&s, day(9)).unwrap();
        assert_eq!(train.len(), 8);
        assert!(test.is_empty());
        let (train, test) = split_train_test(&s, day(4)).unwrap();
        assert_eq!((train.len(), test.len()), (3, 5));
        assert!(split_train_test(&s, day(20)).is_err());
        assert!(split_train_test(&s, day(1)).is_err());
    }

    #[test]
    fn two_sentence_split() {
        assert_eq!(
            split_sentences("Good. Bad."),
            vec![vec!["good".to_string()], vec!["bad".to_string()]]
        );
    }

    #[test]
    fn decimal_points_do_not_split() {
        let s = split_sentences("Revenue rose 3.5 percent! Was it enough? Maybe");
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], vec!["revenue", "rose", "35", "percent"]);
        assert_eq!(s[2], vec!["maybe"]);
    }

    #[test]
    fn empty_sentences_dropped() {
        assert_eq!(split_sentences("... !? Hello."), vec![vec!["hello".to_string()]]);
        assert!(NewsDocument::from_text("x", vec![], day(2), "src", " . ").is_err());
    }

    #[test]
    fn seed_corpus_requires_every_class() {
        let err = LabeledSeedCorpus::from_texts([("good", Polarity::Positive), ("bad", Polarity::Negative)])
            .unwrap_err();
        assert_eq!(err, Error::MissingClass(0));
        assert_eq!(LabeledSeedCorpus::new(vec![]), Err(Error::EmptyCorpus));
    }

    proptest::proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "\\PC{0,80}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            proptest::prop_assert_eq!(once, twice);
        }

        #[test]
        fn split_is_a_partition(n in 1usize..60, cut in 0usize..60) {
            let bars: Vec<OhlcvBar> = (0..n)
                .map(|i| {
                    let mut b = bar(1, 10.0 + i as f64);
                    b.date = day(1) + chrono::Days::new(i as u64);
                    b
                })
                .collect();
            let s = PriceSeries::new("X", bars).unwrap();
            let cutoff = s.bars()[cut.min(n - 1)].date;
            let (train, test) = split_train_test(&s, cutoff).unwrap();
            let mut joined = train.bars().to_vec();
            joined.extend_from_slice(test.bars());
            proptest::prop_assert_eq!(joined.as_slice(), s.bars());
            proptest::prop_assert!(train.bars().iter().all(|b| b.date <= cutoff));
            proptest::prop_assert!(test.bars().iter().all(|b| b.date > cutoff));
        }
    }
}
