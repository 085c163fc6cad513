//! Forecast metrics, baseline models and the horizon experiment grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::arima::{self, ArimaFit, ArimaSpec};
use crate::error::{Error, Result};
use crate::features::{ColumnScaler, FeatureMatrix, FeaturePipeline, MinMaxScaler, Panel};
use crate::gan::{self, EpochLoss, ForecastContext, GanConfig, GanModel, Objective, TrainingData};
use crate::ingest::PriceSeries;
use crate::latent::LATENT_DIM;
use crate::linalg::least_squares;
use crate::spectral::SpectralConfig;

/// Horizons reported in the grid.
pub const HORIZONS: [usize; 3] = [1, 15, 30];

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptySeries);
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(libm::sqrt(sse / pred.len() as f64))
}

/// `rmse_val` divided by the mean of `truth`.
pub fn nrmse(rmse_val: f64, truth: &[f64]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    if mean == 0.0 {
        return Err(Error::ZeroMeanTruth);
    }
    Ok(rmse_val / mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub model: String,
    pub ticker: String,
    pub horizon: usize,
    pub dates: Vec<NaiveDate>,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
    pub rmse: f64,
    pub nrmse: f64,
}

impl ForecastRun {
    pub fn new(
        model: impl Into<String>,
        ticker: impl Into<String>,
        dates: Vec<NaiveDate>,
        predicted: Vec<f64>,
        truth: Vec<f64>,
    ) -> Result<Self> {
        if dates.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: truth.len(),
            });
        }
        let r = rmse(&predicted, &truth)?;
        let n = nrmse(r, &truth)?;
        Ok(Self {
            model: model.into(),
            ticker: ticker.into(),
            horizon: truth.len(),
            dates,
            predicted,
            truth,
            rmse: r,
            nrmse: n,
        })
    }
}

/// Every model the grid knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    StGan,
    GanRandomLatent,
    FcLstm,
    Arima510,
    SentimentOnly,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::StGan,
        ModelKind::GanRandomLatent,
        ModelKind::FcLstm,
        ModelKind::Arima510,
        ModelKind::SentimentOnly,
    ];
    pub const BASELINES: [ModelKind; 4] = [
        ModelKind::GanRandomLatent,
        ModelKind::FcLstm,
        ModelKind::Arima510,
        ModelKind::SentimentOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::StGan => "st_gan",
            ModelKind::GanRandomLatent => "gan_random_latent",
            ModelKind::FcLstm => "fc_lstm",
            ModelKind::Arima510 => "arima510",
            ModelKind::SentimentOnly => "sentiment_only",
        }
    }

    /// Whether the model is one of the neural networks.
    pub fn is_network(self) -> bool {
        matches!(self, ModelKind::StGan | ModelKind::GanRandomLatent | ModelKind::FcLstm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Standard-normal latent used by the plain GAN baseline.
pub fn random_latent(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..LATENT_DIM).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Network configuration, training objective and latent for a network model,
/// derived from the shared GAN configuration.
pub fn network_setup(kind: ModelKind, base: &GanConfig, sentiment_latent: &[f64]) -> Result<(GanConfig, Objective, Vec<f64>)> {
    let config = base.clone();
    match kind {
        ModelKind::StGan => Ok((config, Objective::Adversarial, sentiment_latent.to_vec())),
        ModelKind::GanRandomLatent => Ok((config, Objective::Adversarial, random_latent(base.seed))),
        ModelKind::FcLstm => Ok((
            GanConfig {
                train_latent: false,
                ..config
            },
            Objective::Supervised,
            vec![0.0; base.latent_dim],
        )),
        other => Err(Error::InvalidArgument(format!("{other} is not a network model"))),
    }
}

/// Least-squares map from a day's mean news sentiment to the next day's
/// simple return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentBaseline {
    pub intercept: f64,
    pub slope: f64,
    /// Mean sentence label per calendar day, for days up to the cutoff.
    pub daily: BTreeMap<NaiveDate, f64>,
}

impl SentimentBaseline {
    pub const DESCRIPTION: &'static str =
        "sentiment_only: next-day return = a + b * daily mean sentence sentiment (least squares on the training span), compounded from the last known close";

    /// Fits on consecutive training days of `closes`; days without news
    /// count as neutral. A constant regressor falls back to the mean return.
    pub fn fit(daily: &BTreeMap<NaiveDate, f64>, dates: &[NaiveDate], closes: &[f64], cutoff: NaiveDate) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: closes.len(),
            });
        }
        let end = dates.partition_point(|d| *d <= cutoff);
        if end < 3 {
            return Err(Error::SeriesTooShort { needed: 3, got: end });
        }
        let mut design = Vec::with_capacity(2 * (end - 1));
        let mut returns = Vec::with_capacity(end - 1);
        for t in 0..end - 1 {
            if closes[t] == 0.0 {
                return Err(Error::InvalidArgument(format!("zero close on {}", dates[t])));
            }
            design.push(1.0);
            design.push(daily.get(&dates[t]).copied().unwrap_or(0.0));
            returns.push(closes[t + 1] / closes[t] - 1.0);
        }
        let (intercept, slope) = match least_squares(&design, returns.len(), 2, &returns) {
            Ok(beta) => (beta[0], beta[1]),
            Err(Error::Singular) => (returns.iter().sum::<f64>() / returns.len() as f64, 0.0),
            Err(e) => return Err(e),
        };
        let daily = daily.range(..=cutoff).map(|(d, s)| (*d, *s)).collect();
        Ok(Self { intercept, slope, daily })
    }

    /// The origin day's sentiment drives the first step; later days have no
    /// news yet and use the intercept alone.
    pub fn forecast(&self, last_close: f64, origin: NaiveDate, n: usize) -> Vec<f64> {
        let mut price = last_close;
        (0..n)
            .map(|step| {
                let s = if step == 0 {
                    self.daily.get(&origin).copied().unwrap_or(0.0)
                } else {
                    0.0
                };
                price *= 1.0 + self.intercept + self.slope * s;
                price
            })
            .collect()
    }
}

/// A trained model ready to roll out forecasts.
#[derive(Debug, Clone)]
pub enum Forecaster {
    Network(GanModel),
    Arima(ArimaFit),
    Sentiment(SentimentBaseline),
}

impl Forecaster {
    /// `n` closes after `origin`, reading only panel days up to `origin`.
    pub fn forecast(&self, ctx: &ForecastContext, panel: &Panel, origin: NaiveDate, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidArgument("forecast horizon must be at least one day".into()));
        }
        if let Forecaster::Network(model) = self {
            return gan::forecast_horizon(model, ctx, panel, origin, n);
        }
        let history = panel.up_to(origin);
        if history.dates.last() != Some(&origin) {
            return Err(Error::InvalidArgument(format!("{origin} is not a trading day of the panel")));
        }
        let closes = &history
            .tickers
            .get(history.ticker_index(&ctx.target).ok_or_else(|| Error::InvalidArgument(format!("target {} not in panel", ctx.target)))?)
            .ok_or(Error::EmptySeries)?
            .close;
        match self {
            Forecaster::Arima(fit) => arima::forecast(fit, closes, n),
            Forecaster::Sentiment(s) => Ok(s.forecast(*closes.last().ok_or(Error::EmptySeries)?, origin, n)),
            Forecaster::Network(_) => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub target: String,
    /// Last training day; forecasts start on the next trading day.
    pub cutoff: NaiveDate,
    pub spectral: SpectralConfig,
    pub arima: ArimaSpec,
}

/// ARIMA fit on a training span, falling back to a random walk with drift
/// when the regression is singular.
pub fn fit_arima_or_walk(closes: &[f64], spec: ArimaSpec) -> Result<ArimaFit> {
    match arima::fit_ar(closes, spec) {
        Ok(fit) => Ok(fit),
        Err(Error::Singular) => {
            let drift = if closes.len() > 1 {
                (closes[closes.len() - 1] - closes[0]) / (closes.len() - 1) as f64
            } else {
                0.0
            };
            Ok(ArimaFit::random_walk(spec, drift))
        }
        Err(e) => Err(e),
    }
}

/// A target ticker's panel, its train/test split and the fitted feature
/// pipeline and scalers.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub panel: Panel,
    pub context: ForecastContext,
    /// Feature rows on and before the cutoff.
    pub train_matrix: FeatureMatrix,
    pub origin: NaiveDate,
}

impl Experiment {
    pub fn prepare(series: &[PriceSeries], config: ExperimentConfig) -> Result<Self> {
        let panel = Panel::align(series)?;
        Self::from_panel(panel, config)
    }

    pub fn from_panel(panel: Panel, config: ExperimentConfig) -> Result<Self> {
        let target = panel
            .ticker_index(&config.target)
            .ok_or_else(|| Error::InvalidArgument(format!("target {} not in panel", config.target)))?;
        let train = panel.up_to(config.cutoff);
        let origin = *train.dates.last().ok_or(Error::CutoffOutOfRange {
            cutoff: config.cutoff,
            first: panel.dates.first().copied().unwrap_or(config.cutoff),
            last: panel.dates.last().copied().unwrap_or(config.cutoff),
        })?;
        if train.len() == panel.len() {
            return Err(Error::CutoffOutOfRange {
                cutoff: config.cutoff,
                first: panel.dates[0],
                last: origin,
            });
        }
        let mut fits = BTreeMap::new();
        for t in &train.tickers {
            fits.insert(t.ticker.clone(), fit_arima_or_walk(&t.close, config.arima)?);
        }
        let pipeline = FeaturePipeline::new(config.spectral.clone(), fits)?;
        let train_matrix = pipeline.matrix(&train)?;
        let feature_scaler = ColumnScaler::fit(&train_matrix.rows)?;
        let target_scaler = MinMaxScaler::fit(&train.tickers[target].close)?;
        let context = ForecastContext {
            pipeline,
            feature_scaler,
            target_scaler,
            target: config.target.clone(),
        };
        Ok(Self {
            config,
            panel,
            context,
            train_matrix,
            origin,
        })
    }

    /// Rebuilds an experiment around a previously fitted context.
    pub fn with_context(panel: Panel, config: ExperimentConfig, context: ForecastContext) -> Result<Self> {
        if context.target != config.target || panel.ticker_index(&config.target).is_none() {
            return Err(Error::InvalidArgument(format!("target {} does not match the context", config.target)));
        }
        let train = panel.up_to(config.cutoff);
        let origin = *train.dates.last().ok_or(Error::EmptySeries)?;
        if train.len() == panel.len() {
            return Err(Error::CutoffOutOfRange {
                cutoff: config.cutoff,
                first: panel.dates[0],
                last: origin,
            });
        }
        let train_matrix = context.pipeline.matrix(&train)?;
        Ok(Self {
            config,
            panel,
            context,
            train_matrix,
            origin,
        })
    }

    fn target_index(&self) -> usize {
        self.panel.ticker_index(&self.config.target).unwrap_or(0)
    }

    pub fn target_closes(&self) -> &[f64] {
        &self.panel.tickers[self.target_index()].close
    }

    /// Scaled windows and next-day targets from the training span.
    pub fn training_data(&self, sequence_length: usize) -> Result<TrainingData> {
        let rows: Vec<Vec<f64>> = self
            .train_matrix
            .rows
            .iter()
            .map(|r| self.context.feature_scaler.transform_row(r))
            .collect();
        let offset = self.panel.dates.partition_point(|d| *d < self.train_matrix.dates[0]);
        let closes = self.target_closes();
        let target: Vec<f64> = (0..rows.len())
            .map(|i| self.context.target_scaler.scale(closes[offset + i]))
            .collect();
        TrainingData::new(&rows, &target, sequence_length)
    }

    /// Dates and closes of the first `n` test days.
    pub fn truth(&self, n: usize) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
        let start = self.panel.dates.partition_point(|d| *d <= self.origin);
        let available = self.panel.len() - start;
        if n > available {
            return Err(Error::SeriesTooShort { needed: n, got: available });
        }
        Ok((
            self.panel.dates[start..start + n].to_vec(),
            self.target_closes()[start..start + n].to_vec(),
        ))
    }

    /// Target closes of training days only.
    pub fn train_closes(&self) -> &[f64] {
        let end = self.panel.dates.partition_point(|d| *d <= self.origin);
        &self.target_closes()[..end]
    }

    pub fn arima_baseline(&self) -> Result<Forecaster> {
        let fit = self
            .context
            .pipeline
            .fits
            .get(&self.config.target)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no ARIMA fit for {}", self.config.target)))?;
        Ok(Forecaster::Arima(fit))
    }

    pub fn sentiment_baseline(&self, daily: &BTreeMap<NaiveDate, f64>) -> Result<Forecaster> {
        Ok(Forecaster::Sentiment(SentimentBaseline::fit(
            daily,
            &self.panel.dates,
            self.target_closes(),
            self.config.cutoff,
        )?))
    }

    /// Builds and trains one of the network models.
    pub fn train_network<F>(
        &self,
        kind: ModelKind,
        base: &GanConfig,
        sentiment_latent: &[f64],
        observer: F,
    ) -> Result<(GanModel, Vec<EpochLoss>)>
    where
        F: FnMut(&EpochLoss, &GanModel) -> Result<()>,
    {
        let (config, objective, latent) = network_setup(kind, base, sentiment_latent)?;
        let data = self.training_data(config.sequence_length)?;
        let mut model = GanModel::new(config, &latent)?;
        let history = gan::train(&mut model, &data, objective, observer)?;
        Ok((model, history))
    }

    pub fn run(&self, name: &str, model: &Forecaster, n: usize) -> Result<ForecastRun> {
        self.run_on(name, model, &self.panel, n)
    }

    /// Like [`Self::run`] with forecasts computed from `panel`, which may
    /// differ from the experiment's own after the origin.
    pub fn run_on(&self, name: &str, model: &Forecaster, panel: &Panel, n: usize) -> Result<ForecastRun> {
        let (dates, truth) = self.truth(n)?;
        let predicted = model.forecast(&self.context, panel, self.origin, n)?;
        ForecastRun::new(name, self.config.target.clone(), dates, predicted, truth)
    }
}

/// One (model, horizon) cell of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub horizon: usize,
    pub rmse: f64,
    pub nrmse: f64,
    pub mean_truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub ticker: String,
    pub origin: NaiveDate,
    pub horizons: Vec<usize>,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

impl Report {
    /// `(metric, model, N, value)` records, rmse before nrmse for each cell.
    pub fn records(&self) -> Vec<(&'static str, &str, usize, f64)> {
        self.rows
            .iter()
            .flat_map(|r| {
                [
                    ("rmse", r.model.as_str(), r.horizon, r.rmse),
                    ("nrmse", r.model.as_str(), r.horizon, r.nrmse),
                ]
            })
            .collect()
    }

    pub fn get(&self, model: &str, horizon: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model == model && r.horizon == horizon)
    }
}

/// Runs every model at every horizon from the experiment's origin.
pub fn experiment_grid(experiment: &Experiment, models: &[(&str, &Forecaster)], horizons: &[usize]) -> Result<(Report, Vec<ForecastRun>)> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (name, model) in models {
        for &n in horizons {
            let run = experiment.run(name, model, n)?;
            rows.push(ReportRow {
                model: run.model.clone(),
                horizon: n,
                rmse: run.rmse,
                nrmse: run.nrmse,
                mean_truth: run.truth.iter().sum::<f64>() / n as f64,
            });
            runs.push(run);
        }
    }
    let notes = if models.iter().any(|(_, m)| matches!(m, Forecaster::Sentiment(_))) {
        vec![SentimentBaseline::DESCRIPTION.to_string()]
    } else {
        Vec::new()
    };
    Ok((
        Report {
            ticker: experiment.config.target.clone(),
            origin: experiment.origin,
            horizons: horizons.to_vec(),
            rows,
            notes,
        },
        runs,
    ))
}

/// Copy of `panel` with every value after `origin` replaced by garbage.
pub fn corrupt_after(panel: &Panel, origin: NaiveDate) -> Panel {
    let start = panel.dates.partition_point(|d| *d <= origin);
    let mut out = panel.clone();
    for (k, t) in out.tickers.iter_mut().enumerate() {
        for i in start..t.close.len() {
            let junk = 1.0e6 + 7.0 * (i + k) as f64;
            t.close[i] = junk;
            t.adj_close[i] = -junk;
            t.volume[i] = 0.0;
        }
    }
    out
}

/// One-step-ahead errors over consecutive test days, each prediction made
/// from real history up to the previous day, next to the repeat-last
/// predictor on the same days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneStepComparison {
    pub days: usize,
    pub model_rmse: f64,
    pub repeat_last_rmse: f64,
}

pub fn one_step_comparison(experiment: &Experiment, model: &GanModel, days: usize) -> Result<OneStepComparison> {
    let start = experiment.panel.dates.partition_point(|d| *d <= experiment.origin);
    if days == 0 || start + days > experiment.panel.len() {
        return Err(Error::SeriesTooShort {
            needed: days.max(1),
            got: experiment.panel.len() - start,
        });
    }
    let origins = &experiment.panel.dates[start - 1..start + days - 1];
    let closes = experiment.target_closes();
    let truth = &closes[start..start + days];
    let predicted = gan::one_step_predictions(model, &experiment.context, &experiment.panel, origins)?;
    let repeat = &closes[start - 1..start + days - 1];
    Ok(OneStepComparison {
        days,
        model_rmse: rmse(&predicted, truth)?,
        repeat_last_rmse: rmse(repeat, truth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{price_series, sine_panel, weekdays, PriceShape, FIXTURE_TICKERS};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(rmse(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), libm::sqrt(12.5), epsilon = 1e-15);
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { left: 1, right: 2 }));
        assert_eq!(rmse(&[], &[]), Err(Error::EmptySeries));
    }

    #[test]
    fn nrmse_examples() {
        assert_eq!(nrmse(1.0, &[-1.0, 1.0]), Err(Error::ZeroMeanTruth));
        assert_abs_diff_eq!(nrmse(0.16, &[326.5]).unwrap(), 0.16 / 326.5, epsilon = 1e-15);
        assert_abs_diff_eq!(nrmse(0.16, &[326.5]).unwrap(), 0.00049, epsilon = 1e-5);
    }

    #[test]
    fn model_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert_eq!("lstm".parse::<ModelKind>(), Err(Error::UnknownModel("lstm".into())));
    }

    #[test]
    fn sentiment_baseline_recovers_planted_map() {
        let dates = weekdays(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 40);
        let mut daily = BTreeMap::new();
        let mut closes = vec![100.0];
        for (i, d) in dates.iter().enumerate().take(39) {
            let s = [(-1.0), 0.0, 0.5, 1.0][i % 4];
            daily.insert(*d, s);
            let last = *closes.last().unwrap();
            closes.push(last * (1.0 + 0.001 + 0.02 * s));
        }
        let fit = SentimentBaseline::fit(&daily, &dates, &closes, dates[39]).unwrap();
        assert_abs_diff_eq!(fit.intercept, 0.001, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope, 0.02, epsilon = 1e-12);
        let path = fit.forecast(100.0, dates[3], 2);
        assert_abs_diff_eq!(path[0], 100.0 * 1.021, epsilon = 1e-10);
        assert_abs_diff_eq!(path[1], 100.0 * 1.021 * 1.001, epsilon = 1e-10);
    }

    #[test]
    fn sentiment_baseline_without_news_uses_mean_return() {
        let dates = weekdays(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 5);
        let closes = [100.0, 101.0, 100.0, 102.0, 103.0];
        let fit = SentimentBaseline::fit(&BTreeMap::new(), &dates, &closes, dates[4]).unwrap();
        assert_eq!(fit.slope, 0.0);
        let mean = (0.01 + (100.0 / 101.0 - 1.0) + 0.02 + (103.0 / 102.0 - 1.0)) / 4.0;
        assert_abs_diff_eq!(fit.intercept, mean, epsilon = 1e-15);
    }

    fn experiment(series: &[PriceSeries], cutoff_index: usize) -> Experiment {
        let cutoff = series[0].dates()[cutoff_index];
        Experiment::prepare(
            series,
            ExperimentConfig {
                target: "BA".into(),
                cutoff,
                spectral: SpectralConfig::default(),
                arima: ArimaSpec::DEFAULT,
            },
        )
        .unwrap()
    }

    #[test]
    fn arima_on_random_walk_is_nearly_flat() {
        let dates = weekdays(NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), 260);
        let series: Vec<PriceSeries> = FIXTURE_TICKERS
            .iter()
            .enumerate()
            .map(|(i, t)| {
                price_series(t, &dates, PriceShape::RandomWalk { start: 50.0, volatility: 0.01 }, i as u64).unwrap()
            })
            .collect();
        let exp = experiment(&series, 220);
        let model = exp.arima_baseline().unwrap();
        let run = exp.run("arima510", &model, 15).unwrap();
        let last = *exp.train_closes().last().unwrap();
        for p in &run.predicted {
            assert!((p - last).abs() / last < 0.03, "{p} vs {last}");
        }
    }

    #[test]
    fn grid_shape_identity_and_no_leakage() {
        let dates = weekdays(NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), 200);
        let series = sine_panel(&dates, 0.5, 11).unwrap();
        let exp = experiment(&series, 160);
        let arima = exp.arima_baseline().unwrap();
        let mut daily = BTreeMap::new();
        daily.insert(exp.origin, 0.5);
        let senti = exp.sentiment_baseline(&daily).unwrap();
        let base = GanConfig {
            hidden: 4,
            epochs: 1,
            conv_channels: [2, 2, 2],
            dense_hidden: 3,
            ..GanConfig::default()
        };
        let (net, _) = exp.train_network(ModelKind::FcLstm, &base, &[], |_, _| Ok(())).unwrap();
        let net = Forecaster::Network(net);
        let models = [("arima510", &arima), ("sentiment_only", &senti), ("fc_lstm", &net)];
        let (report, runs) = experiment_grid(&exp, &models, &HORIZONS).unwrap();
        assert_eq!(report.records().len(), 3 * 3 * 2);
        for r in &runs {
            assert_eq!(r.predicted.len(), r.horizon);
            let ybar = r.truth.iter().sum::<f64>() / r.truth.len() as f64;
            assert!((r.nrmse - r.rmse / ybar).abs() <= 1e-12 * r.nrmse.abs().max(1.0));
        }
        let corrupted = corrupt_after(&exp.panel, exp.origin);
        for (name, model) in models {
            for n in [15, 30] {
                let clean = exp.run(name, model, n).unwrap();
                let dirty = exp.run_on(name, model, &corrupted, n).unwrap();
                assert_eq!(clean.predicted, dirty.predicted, "{name} N={n}");
            }
        }
        let (again, _) = experiment_grid(&exp, &models, &HORIZONS).unwrap();
        assert_eq!(report, again);
    }

    proptest! {
        #[test]
        fn rmse_symmetric_and_bounded(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r = rmse(&a, &b).unwrap();
            prop_assert_eq!(r, rmse(&b, &a).unwrap());
            let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
            let max = diffs.iter().copied().fold(0.0, f64::max);
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            prop_assert!(r <= max * (1.0 + 1e-12));
            prop_assert!(r >= mean / libm::sqrt(diffs.len() as f64) * (1.0 - 1e-12));
            prop_assert!(r >= mean * (1.0 - 1e-12));
        }

        #[test]
        fn nrmse_scale_invariant(pairs in prop::collection::vec((1.0f64..500.0, 1.0f64..500.0), 1..30), k in 0.1f64..100.0) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let n1 = nrmse(rmse(&a, &b).unwrap(), &b).unwrap();
            let a2: Vec<f64> = a.iter().map(|v| v * k).collect();
            let b2: Vec<f64> = b.iter().map(|v| v * k).collect();
            let n2 = nrmse(rmse(&a2, &b2).unwrap(), &b2).unwrap();
            prop_assert!((n1 - n2).abs() <= 1e-12 * n1.max(1.0));
        }
    }
}
