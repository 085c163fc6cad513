use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use stgan::formats::{parse_corpus, parse_prices, parse_seed_rows, write_prices_to, CorpusRecord};
use stgan_core::ingest::{OhlcvBar, PriceSeries};
use stgan_core::sentiment::Polarity;

fn bar_strategy() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (1e-3..1e6f64, 0.0..0.2f64, 0.0..0.2f64, 0.0..1.0f64, 0.0..1e9f64)
}

prop_compose! {
    fn series()(raw in prop::collection::vec(bar_strategy(), 1..40), gap in 1u64..4) -> PriceSeries {
        let first = NaiveDate::from_ymd_opt(2015, 3, 2).unwrap();
        let bars = raw
            .iter()
            .enumerate()
            .map(|(i, &(close, up, down, adj, volume))| OhlcvBar {
                date: first.checked_add_days(Days::new(i as u64 * gap)).unwrap(),
                open: close,
                high: close * (1.0 + up),
                low: close / (1.0 + down),
                close,
                adj_close: close * (0.5 + adj),
                volume: volume.floor(),
            })
            .collect();
        PriceSeries::new("LMT", bars).unwrap()
    }
}

proptest! {
    #[test]
    fn price_csv_round_trips_exactly(s in series()) {
        let mut buf = Vec::new();
        write_prices_to(&mut buf, &s).unwrap();
        let back = parse_prices(buf.as_slice(), "LMT").unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn corpus_lines_round_trip(texts in prop::collection::vec("[a-z][a-zA-Z ,.!?\"\\\\]{0,60}", 1..10)) {
        let records: Vec<CorpusRecord> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| CorpusRecord {
                id: format!("d{i}"),
                tickers: vec!["BA".into()],
                date: NaiveDate::from_ymd_opt(2019, 6, 3).unwrap(),
                source: "wire".into(),
                text: t.clone(),
            })
            .collect();
        let text: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        prop_assert_eq!(parse_corpus(text.as_bytes()).unwrap(), records);
    }
}

#[test]
fn seed_rows_reject_unknown_labels() {
    let rows = parse_seed_rows("text,label\ngood news,1\nbad news,-1\nmeh,0\n".as_bytes()).unwrap();
    assert_eq!(rows[1], ("bad news".to_string(), Polarity::Negative));
    assert!(parse_seed_rows("text,label\nodd,2\n".as_bytes()).is_err());
    assert!(parse_seed_rows("sentence,label\nodd,1\n".as_bytes()).is_err());
}

#[test]
fn out_of_order_dates_are_rejected() {
    let csv = "Date,Open,High,Low,Close,Adj Close,Volume\n\
               2020-01-03,1,1,1,1,1,0\n\
               2020-01-02,1,1,1,1,1,0\n";
    assert!(parse_prices(csv.as_bytes(), "BA").is_err());
}
