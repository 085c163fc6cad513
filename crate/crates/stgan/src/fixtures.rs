//! The bundled synthetic fixture set: eight tickers, a news corpus, a seed
//! corpus and a small run configuration.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use stgan_core::synthetic::{news_corpus, seed_corpus_rows, sine_panel, weekdays_between};

use crate::error::{Error, Result};
use crate::formats::{write_corpus, write_prices, write_seed_rows, CorpusRecord};

pub const FIXTURE_SEED: u64 = 2020;
pub const FIXTURE_DOCUMENTS: usize = 120;

pub fn first_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date")
}

pub fn last_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 6).expect("valid date")
}

/// Run configuration for the fixtures: full defaults except a network small
/// enough to train on one core in seconds.
pub const FIXTURE_CONFIG: &str = r#"seed = 7

[paths]
prices_dir = "prices"
corpus = "corpus.jsonl"
seed_corpus = "seed_corpus.csv"
out_dir = "runs"

[data]
target = "BA"
cutoff = 2020-01-24

[gan]
hidden = 16
epochs = 20
checkpoint_interval = 10
"#;

pub fn write_fixtures(dir: &Path) -> Result<()> {
    let dates = weekdays_between(first_day(), last_day());
    for series in sine_panel(&dates, 0.5, FIXTURE_SEED)? {
        write_prices(&dir.join("prices").join(format!("{}.csv", series.ticker)), &series)?;
    }
    let records: Vec<CorpusRecord> = news_corpus(&dates, FIXTURE_DOCUMENTS, FIXTURE_SEED)
        .into_iter()
        .map(|d| CorpusRecord {
            id: d.id,
            tickers: d.tickers,
            date: d.date,
            source: d.source,
            text: d.text,
        })
        .collect();
    write_corpus(&dir.join("corpus.jsonl"), &records)?;
    write_seed_rows(&dir.join("seed_corpus.csv"), &seed_corpus_rows(40, FIXTURE_SEED))?;
    let config = dir.join("config.toml");
    fs::write(&config, FIXTURE_CONFIG).map_err(|e| Error::io(&config, e))
}
