//! Readers and writers for every on-disk format the pipeline uses.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stgan_core::features::FeatureMatrix;
use stgan_core::ingest::{LabeledSeedCorpus, NewsDocument, OhlcvBar, PriceSeries};
use stgan_core::sentiment::Polarity;

use crate::error::{Error, Result};

pub const PRICE_HEADER: [&str; 7] = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"];

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Creates `path` and any missing parent directories.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_prices<R: Read>(reader: R, ticker: &str) -> Result<PriceSeries, stgan_core::Error> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| stgan_core::Error::MalformedLine { line: 1, reason: e.to_string() })?;
    if header.iter().ne(PRICE_HEADER) {
        return Err(stgan_core::Error::MalformedLine {
            line: 1,
            reason: format!("header must be {:?}", PRICE_HEADER.join(",")),
        });
    }
    let mut bars = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| stgan_core::Error::InvalidRow { row, reason: e.to_string() })?;
        let field = |k: usize| record.get(k).unwrap_or("").trim();
        let number = |k: usize| {
            field(k).parse::<f64>().map_err(|_| stgan_core::Error::InvalidRow {
                row,
                reason: format!("{} is not a number: {:?}", PRICE_HEADER[k], field(k)),
            })
        };
        let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d").map_err(|_| stgan_core::Error::InvalidRow {
            row,
            reason: format!("Date is not ISO-8601: {:?}", field(0)),
        })?;
        bars.push(OhlcvBar {
            date,
            open: number(1)?,
            high: number(2)?,
            low: number(3)?,
            close: number(4)?,
            adj_close: number(5)?,
            volume: number(6)?,
        });
    }
    PriceSeries::new(ticker, bars)
}

pub fn read_prices(path: &Path, ticker: &str) -> Result<PriceSeries> {
    parse_prices(open(path)?, ticker).map_err(|e| Error::format(path, e))
}

pub fn write_prices_to<W: Write>(writer: W, series: &PriceSeries) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PRICE_HEADER)?;
    for b in series.bars() {
        w.write_record([
            b.date.format("%Y-%m-%d").to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.adj_close.to_string(),
            b.volume.to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_prices(path: &Path, series: &PriceSeries) -> Result<()> {
    let w = create(path)?;
    write_prices_to(w, series).map_err(|e| Error::io(path, e))
}

/// One corpus line as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub tickers: Vec<String>,
    pub date: NaiveDate,
    pub source: String,
    pub text: String,
}

impl CorpusRecord {
    pub fn to_document(&self) -> Result<NewsDocument, String> {
        NewsDocument::from_text(
            self.id.clone(),
            self.tickers.clone(),
            self.date,
            self.source.clone(),
            &self.text,
        )
    }
}

/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<CorpusRecord>, stgan_core::Error> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| stgan_core::Error::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| stgan_core::Error::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        record
            .to_document()
            .map_err(|reason| stgan_core::Error::MalformedLine { line: line_no, reason })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    parse_corpus(BufReader::new(open(path)?)).map_err(|e| Error::format(path, e))
}

pub fn read_documents(path: &Path) -> Result<Vec<NewsDocument>> {
    read_corpus(path)?
        .iter()
        .map(|r| r.to_document().map_err(|m| Error::format(path, m)))
        .collect()
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::format(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

pub fn parse_seed_rows<R: Read>(reader: R) -> Result<Vec<(String, Polarity)>, stgan_core::Error> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| stgan_core::Error::MalformedLine { line: 1, reason: e.to_string() })?;
    if header.iter().ne(["text", "label"]) {
        return Err(stgan_core::Error::MalformedLine {
            line: 1,
            reason: "header must be \"text,label\"".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| stgan_core::Error::InvalidRow { row, reason: e.to_string() })?;
        let label = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse::<i8>()
            .map_err(|e| e.to_string())
            .and_then(Polarity::try_from)
            .map_err(|reason| stgan_core::Error::InvalidRow { row, reason })?;
        rows.push((record.get(0).unwrap_or("").to_string(), label));
    }
    Ok(rows)
}

pub fn read_seed_rows(path: &Path) -> Result<Vec<(String, Polarity)>> {
    parse_seed_rows(open(path)?).map_err(|e| Error::format(path, e))
}

pub fn read_seed_corpus(path: &Path) -> Result<LabeledSeedCorpus> {
    let rows = read_seed_rows(path)?;
    Ok(LabeledSeedCorpus::from_texts(rows.iter().map(|(t, l)| (t.as_str(), *l)))?)
}

pub fn write_seed_rows(path: &Path, rows: &[(String, Polarity)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| Error::format(path, e);
    w.write_record(["text", "label"]).map_err(io)?;
    for (text, label) in rows {
        w.write_record([text.as_str(), &label.value().to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_feature_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| Error::format(path, e);
    w.write_record(std::iter::once("date").chain(m.feature_names.iter().map(String::as_str)))
        .map_err(err)?;
    for (date, row) in m.dates.iter().zip(&m.rows) {
        w.write_record(std::iter::once(date.to_string()).chain(row.iter().map(f64::to_string)))
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_matrix(path: &Path) -> Result<FeatureMatrix> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let err = |m: String| Error::format(path, m);
    let header = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.get(0) != Some("date") {
        return Err(err("first column must be \"date\"".into()));
    }
    let feature_names: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let (mut dates, mut rows) = (Vec::new(), Vec::new());
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let date = record
            .get(0)
            .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
            .ok_or_else(|| err(format!("row {}: bad date", i + 1)))?;
        let row = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(format!("row {}: {e}", i + 1)))?;
        dates.push(date);
        rows.push(row);
    }
    let m = FeatureMatrix {
        dates,
        rows,
        feature_names,
    };
    m.validate().map_err(|e| err(e.to_string()))?;
    Ok(m)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format(path, e))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| Error::format(path, e))
}

/// `(date, truth, prediction)` rows for one forecast run.
pub fn write_plot_csv(path: &Path, dates: &[NaiveDate], truth: &[f64], predicted: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| Error::format(path, e);
    w.write_record(["date", "truth", "prediction"]).map_err(err)?;
    for ((d, t), p) in dates.iter().zip(truth).zip(predicted) {
        w.write_record([d.to_string(), t.to_string(), p.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
