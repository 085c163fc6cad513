//! The pipeline stages behind each CLI command. Every stage reads upstream
//! artifacts from the run directory and writes its own.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use stgan_core::arima::ArimaFit;
use stgan_core::eval::{
    experiment_grid, network_setup, Experiment, ExperimentConfig, Forecaster, ModelKind, Report, SentimentBaseline,
};
use stgan_core::features::Panel;
use stgan_core::gan::{self, ForecastContext, GanModel};
use stgan_core::ingest::{NewsDocument, PriceSeries};
use stgan_core::latent::{select_top_confidence, standardize, LatentMode, LatentSeed};
use stgan_core::sentiment::{analyze_document, context_sentiment, daily_mean_sentiment, train_nb, NaiveBayesModel};

use crate::checkpoint::{CheckpointDir, TrainingLog};
use crate::config::{config_hash, RunConfig, RunLayout};
use crate::error::{Error, Result};
use crate::formats::{
    create, read_corpus, read_documents, read_json, read_prices, read_seed_corpus, read_seed_rows, write_corpus,
    write_feature_matrix, write_json, write_plot_csv, write_prices, write_seed_rows,
};

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
}

/// Resolved configuration and run directory for one invocation.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub hash: String,
    pub layout: RunLayout,
}

impl Run {
    /// Loads `config_path` (defaults when absent) and applies overrides. The
    /// run directory is keyed by the config text and the effective seed.
    pub fn open(config_path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let (text, base) = match config_path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (text, base)
            }
            None => (String::new(), PathBuf::from(".")),
        };
        let mut config = RunConfig::from_toml(&text)?;
        config.resolve_paths(&base);
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        config.gan.seed = config.seed;
        if let Some(epochs) = overrides.epochs {
            config.gan.epochs = epochs;
        }
        if let Some(out) = &overrides.out {
            config.paths.out_dir = out.clone();
        }
        config.validate()?;
        let hash = config_hash(&text, config.seed);
        let layout = RunLayout::new(&config.paths.out_dir, &hash);
        Ok(Self { config, hash, layout })
    }

    fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            target: self.config.data.target.clone(),
            cutoff: self.config.data.cutoff,
            spectral: self.config.features.spectral(),
            arima: self.config.arima,
        }
    }

    fn series(&self) -> Result<Vec<PriceSeries>> {
        self.config
            .data
            .tickers
            .iter()
            .map(|t| read_prices(&self.layout.prices(t), t))
            .collect()
    }

    fn experiment(&self) -> Result<Experiment> {
        let panel = Panel::align(&self.series()?)?;
        let context: ForecastContext = read_json(&self.layout.context())?;
        Ok(Experiment::with_context(panel, self.experiment_config(), context)?)
    }

    /// News about the target published on or before the cutoff.
    fn target_documents(&self) -> Result<Vec<NewsDocument>> {
        let cutoff = self.config.data.cutoff;
        Ok(read_documents(&self.layout.corpus())?
            .into_iter()
            .filter(|d| d.mentions(&self.config.data.target) && d.date <= cutoff)
            .collect())
    }

    fn sentiment_model(&self) -> Result<NaiveBayesModel> {
        read_json(&self.layout.sentiment_model())
    }
}

/// Copies validated inputs into the run's data directory in canonical form.
pub fn ingest(run: &Run) -> Result<()> {
    let paths = &run.config.paths;
    for t in &run.config.data.tickers {
        let series = read_prices(&paths.prices_dir.join(format!("{t}.csv")), t)?;
        series.ensure_trainable()?;
        write_prices(&run.layout.prices(t), &series)?;
    }
    let mut corpus = read_corpus(&paths.corpus)?;
    corpus.sort_by(|a, b| (a.date, &a.id).cmp(&(b.date, &b.id)));
    write_corpus(&run.layout.corpus(), &corpus)?;
    let seed_rows = read_seed_rows(&paths.seed_corpus)?;
    write_seed_rows(&run.layout.seed_corpus(), &seed_rows)?;
    read_seed_corpus(&run.layout.seed_corpus())?;
    info!(
        "ingested {} tickers, {} documents, {} seed rows into {}",
        run.config.data.tickers.len(),
        corpus.len(),
        seed_rows.len(),
        run.layout.data().display()
    );
    Ok(())
}

/// Fits ARIMA per ticker and the scalers on the training span, and writes
/// the full feature matrix.
pub fn features(run: &Run) -> Result<()> {
    let experiment = Experiment::prepare(&run.series()?, run.experiment_config())?;
    let matrix = experiment.context.pipeline.matrix(&experiment.panel)?;
    write_feature_matrix(&run.layout.features(), &matrix)?;
    for (ticker, fit) in &experiment.context.pipeline.fits {
        write_json(&run.layout.arima(ticker), fit)?;
    }
    write_json(&run.layout.context(), &experiment.context)?;
    info!("{} feature rows of width {}", matrix.len(), matrix.width());
    Ok(())
}

pub fn train_sentiment(run: &Run) -> Result<()> {
    let corpus = read_seed_corpus(&run.layout.seed_corpus())?;
    let model = train_nb(&corpus, run.config.sentiment.alpha)?;
    write_json(&run.layout.sentiment_model(), &model)?;
    info!("vocabulary of {} tokens", model.vocabulary().len());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordContext {
    pub keyword: String,
    pub window: usize,
    /// `None` when the keyword never appears or has no scorable neighbours.
    pub sentiment: Option<f64>,
}

pub fn build_latent(run: &Run) -> Result<()> {
    let model = run.sentiment_model()?;
    let docs = run.target_documents()?;
    let sentiments: Vec<_> = docs.iter().flat_map(|d| analyze_document(&model, d)).collect();
    let mode = if run.config.latent.signed {
        LatentMode::Signed
    } else {
        LatentMode::Unsigned
    };
    let seed = select_top_confidence(&sentiments, mode)?;
    if seed.padded > 0 {
        warn!("only {} scored sentences; latent padded with {} zeros", sentiments.len(), seed.padded);
    }
    let seed = standardize(&seed)?;
    write_json(&run.layout.latent(), &seed)?;
    let keyword = run.config.data.target.to_lowercase();
    let sentiment = match context_sentiment(&model, &docs, &keyword, run.config.latent.window) {
        Ok(v) => Some(v),
        Err(stgan_core::Error::KeywordNotFound | stgan_core::Error::NoScorableContext) => None,
        Err(e) => return Err(e.into()),
    };
    write_json(
        &run.layout.models().join("keyword_context.json"),
        &KeywordContext {
            keyword,
            window: run.config.latent.window,
            sentiment,
        },
    )
}

/// Trains every network model in the grid, checkpointing every
/// `checkpoint_interval` epochs. A divergence saves the last good state and
/// fails with a numeric error.
pub fn train(run: &Run) -> Result<()> {
    let experiment = run.experiment()?;
    let latent: LatentSeed = read_json(&run.layout.latent())?;
    for kind in run.config.eval.models.iter().copied().filter(|k| k.is_network()) {
        let (config, objective, init) = network_setup(kind, &run.config.gan, &latent.values)?;
        let data = experiment.training_data(config.sequence_length)?;
        let mut model = GanModel::new(config, &init)?;
        let ckpt = CheckpointDir::new(run.layout.checkpoint(kind));
        let interval = model.config.checkpoint_interval;
        let outcome = gan::train(&mut model, &data, objective, |e, m| {
            log::debug!("{kind} epoch {}: d {:.6} g {:.6}", e.epoch, e.discriminator, e.generator);
            if e.epoch % interval == 0 {
                ckpt.save(kind, m).map_err(|err| stgan_core::Error::InvalidArgument(err.to_string()))?;
            }
            Ok(())
        });
        let history = match outcome {
            Ok(h) => h,
            Err(e) => {
                ckpt.save(kind, &model)?;
                return Err(e.into());
            }
        };
        ckpt.save(kind, &model)?;
        ckpt.save_log(&TrainingLog {
            model: kind,
            seed: run.config.seed,
            config_hash: run.hash.clone(),
            epochs: history,
        })?;
        info!("trained {kind} for {} epochs", model.epoch);
    }
    Ok(())
}

fn load_network(run: &Run, kind: ModelKind) -> Result<GanModel> {
    Ok(CheckpointDir::new(run.layout.checkpoint(kind)).load()?.1)
}

/// Rolls the ST-GAN out from the last training day over the longest horizon.
pub fn forecast(run: &Run) -> Result<PathBuf> {
    let experiment = run.experiment()?;
    let model = load_network(run, ModelKind::StGan)?;
    let n = run.config.eval.horizons.iter().copied().max().unwrap_or(1);
    let predicted = gan::forecast_horizon(&model, &experiment.context, &experiment.panel, experiment.origin, n)?;
    let path = run.layout.reports().join("forecast_st_gan.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let err = |e: csv::Error| Error::format(&path, e);
    w.write_record(["step", "prediction"]).map_err(err)?;
    for (i, p) in predicted.iter().enumerate() {
        w.write_record([(i + 1).to_string(), p.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub model: ModelKind,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub seed: u64,
    pub cutoff: NaiveDate,
    pub models: Vec<ModelProvenance>,
    pub report: Report,
}

/// Builds every configured model from its artifacts and writes the report
/// (CSV and JSON) and one plot CSV per run.
pub fn evaluate(run: &Run) -> Result<ReportFile> {
    let experiment = run.experiment()?;
    let target = &run.config.data.target;
    let mut models: Vec<(ModelKind, Forecaster)> = Vec::new();
    let mut provenance = Vec::new();
    for kind in run.config.eval.models.iter().copied() {
        let (forecaster, prov) = match kind {
            k if k.is_network() => {
                let ckpt = CheckpointDir::new(run.layout.checkpoint(k));
                let (_, model) = ckpt.load()?;
                let log = ckpt.load_log()?;
                let prov = ModelProvenance {
                    model: k,
                    seed: Some(log.seed),
                    config_hash: Some(log.config_hash),
                    epochs: Some(model.epoch),
                };
                (Forecaster::Network(model), prov)
            }
            ModelKind::Arima510 => {
                let fit: ArimaFit = read_json(&run.layout.arima(target))?;
                (Forecaster::Arima(fit), ModelProvenance { model: kind, seed: None, config_hash: None, epochs: None })
            }
            _ => {
                let nb = run.sentiment_model()?;
                let daily = daily_mean_sentiment(&nb, &run.target_documents()?);
                let baseline = SentimentBaseline::fit(
                    &daily,
                    &experiment.panel.dates,
                    experiment.target_closes(),
                    run.config.data.cutoff,
                )?;
                (Forecaster::Sentiment(baseline), ModelProvenance { model: kind, seed: None, config_hash: None, epochs: None })
            }
        };
        models.push((kind, forecaster));
        provenance.push(prov);
    }
    let refs: Vec<(&str, &Forecaster)> = models.iter().map(|(k, f)| (k.name(), f)).collect();
    let (report, runs) = experiment_grid(&experiment, &refs, &run.config.eval.horizons)?;
    let csv_path = run.layout.reports().join("report.csv");
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    let err = |e: csv::Error| Error::format(&csv_path, e);
    w.write_record(["metric", "model", "N", "value"]).map_err(err)?;
    for (metric, model, n, value) in report.records() {
        w.write_record([metric, model, &n.to_string(), &value.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    for r in &runs {
        let path = run.layout.plots().join(format!("{}_N{}.csv", r.model, r.horizon));
        write_plot_csv(&path, &r.dates, &r.truth, &r.predicted)?;
    }
    let file = ReportFile {
        config_hash: run.hash.clone(),
        seed: run.config.seed,
        cutoff: run.config.data.cutoff,
        models: provenance,
        report,
    };
    write_json(&run.layout.reports().join("report.json"), &file)?;
    Ok(file)
}

/// Plain-text table with one row per model and RMSE/NRMSE columns per horizon.
pub fn render_table(report: &Report) -> String {
    let mut out = format!("{:<20}", "model");
    for n in &report.horizons {
        out.push_str(&format!(" {:>12} {:>12}", format!("RMSE N={n}"), format!("NRMSE N={n}")));
    }
    out.push('\n');
    let mut names: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !names.contains(&r.model.as_str()) {
            names.push(&r.model);
        }
    }
    for name in names {
        out.push_str(&format!("{name:<20}"));
        for n in &report.horizons {
            match report.get(name, *n) {
                Some(r) => out.push_str(&format!(" {:>12.4} {:>12.6}", r.rmse, r.nrmse)),
                None => out.push_str(&format!(" {:>12} {:>12}", "-", "-")),
            }
        }
        out.push('\n');
    }
    out
}
