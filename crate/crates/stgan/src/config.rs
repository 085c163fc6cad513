//! Declarative run configuration read from TOML.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stgan_core::arima::ArimaSpec;
use stgan_core::eval::{ModelKind, HORIZONS};
use stgan_core::features::TICKER_COUNT;
use stgan_core::gan::GanConfig;
use stgan_core::sentiment::{DEFAULT_ALPHA, DEFAULT_CONTEXT_WINDOW};
use stgan_core::spectral::SpectralConfig;
use stgan_core::synthetic::FIXTURE_TICKERS;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory holding one `<TICKER>.csv` per ticker.
    pub prices_dir: PathBuf,
    pub corpus: PathBuf,
    pub seed_corpus: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            prices_dir: "prices".into(),
            corpus: "corpus.jsonl".into(),
            seed_corpus: "seed_corpus.csv".into(),
            out_dir: "runs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub tickers: Vec<String>,
    pub target: String,
    /// Last training day, as a TOML date or an ISO-8601 string.
    #[serde(deserialize_with = "date_or_string")]
    pub cutoff: NaiveDate,
}

fn date_or_string<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<NaiveDate, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Toml(toml::value::Datetime),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Text(s) => s,
        Raw::Toml(dt) => dt.to_string(),
    };
    NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(|_| serde::de::Error::custom(format!("{text:?} is not a YYYY-MM-DD date")))
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            tickers: FIXTURE_TICKERS.iter().map(|t| t.to_string()).collect(),
            target: "BA".into(),
            cutoff: NaiveDate::from_ymd_opt(2020, 1, 24).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SentimentConfig {
    pub alpha: f64,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatentConfig {
    /// `label × confidence` components; `false` keeps the bare confidence.
    pub signed: bool,
    /// Token window for the keyword-context sentiment reported alongside the seed.
    pub window: usize,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            signed: true,
            window: DEFAULT_CONTEXT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub fourier_window: usize,
    pub fourier_components: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let s = SpectralConfig::default();
        Self {
            fourier_window: s.window,
            fourier_components: s.components,
        }
    }
}

impl FeatureConfig {
    pub fn spectral(&self) -> SpectralConfig {
        SpectralConfig {
            window: self.fourier_window,
            components: self.fourier_components.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub models: Vec<ModelKind>,
    pub horizons: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            horizons: HORIZONS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: DataConfig,
    pub sentiment: SentimentConfig,
    pub latent: LatentConfig,
    pub features: FeatureConfig,
    pub arima: ArimaSpec,
    pub gan: GanConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.tickers.len() != TICKER_COUNT {
            return Err(Error::Config(format!(
                "data.tickers needs {TICKER_COUNT} symbols, got {}",
                self.data.tickers.len()
            )));
        }
        if !self.data.tickers.contains(&self.data.target) {
            return Err(Error::Config(format!("target {} is not among data.tickers", self.data.target)));
        }
        if self.eval.horizons.is_empty() || self.eval.horizons.contains(&0) {
            return Err(Error::Config("eval.horizons must be non-empty and positive".into()));
        }
        if self.features.fourier_components.len() != 2 {
            return Err(Error::Config("features.fourier_components needs two entries".into()));
        }
        self.arima.validate()?;
        self.gan.validate()?;
        Ok(())
    }

    /// Relative paths are taken from the config file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.paths.prices_dir,
            &mut self.paths.corpus,
            &mut self.paths.seed_corpus,
            &mut self.paths.out_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Hex SHA-256 of the config text and the effective seed.
pub fn config_hash(config_text: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(config_text.as_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Run directory layout under `<out>/<first 12 hex digits of the hash>`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(out_dir: &Path, hash: &str) -> Self {
        Self {
            root: out_dir.join(&hash[..12]),
        }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }

    pub fn prices(&self, ticker: &str) -> PathBuf {
        self.data().join("prices").join(format!("{ticker}.csv"))
    }

    pub fn corpus(&self) -> PathBuf {
        self.data().join("corpus.jsonl")
    }

    pub fn seed_corpus(&self) -> PathBuf {
        self.data().join("seed_corpus.csv")
    }

    pub fn features(&self) -> PathBuf {
        self.data().join("features.csv")
    }

    pub fn context(&self) -> PathBuf {
        self.models().join("forecast_context.json")
    }

    pub fn arima(&self, ticker: &str) -> PathBuf {
        self.models().join("arima").join(format!("{ticker}.json"))
    }

    pub fn sentiment_model(&self) -> PathBuf {
        self.models().join("sentiment.json")
    }

    pub fn latent(&self) -> PathBuf {
        self.models().join("latent.json")
    }

    pub fn checkpoint(&self, model: ModelKind) -> PathBuf {
        self.models().join(model.name())
    }
}
