//! LSTM generator seeded by the sentiment latent, 1-D CNN discriminator,
//! adversarial training and multi-day autoregressive forecasting.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ColumnScaler, FeaturePipeline, MinMaxScaler, Panel};
use crate::latent::LATENT_DIM;
use crate::neural::graph::{BatchStats, Graph, Var};
use crate::neural::init::xavier_init_with;
use crate::neural::layers::{dense, l1, lstm, update_running, LstmVars};
use crate::neural::optim::{Adam, AdamConfig};
use crate::neural::params::{Bindings, ParamId, ParamSet};
use crate::neural::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `½(mean(1 − D(real)) + mean(D(fake)))`.
    #[default]
    Linear,
    /// Binary cross-entropy with the non-saturating generator objective.
    Bce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    pub input_features: usize,
    pub hidden: usize,
    pub sequence_length: usize,
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub generator_optimizer: AdamConfig,
    pub discriminator_optimizer: AdamConfig,
    pub l1_lambda: f64,
    pub forget_bias: f64,
    pub conv_channels: [usize; 3],
    pub kernel_size: usize,
    pub stride: usize,
    pub dense_hidden: usize,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub loss: LossKind,
    pub train_latent: bool,
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            input_features: crate::features::FEATURE_WIDTH,
            hidden: 500,
            sequence_length: 30,
            latent_dim: LATENT_DIM,
            epochs: 500,
            batch_size: 16,
            generator_optimizer: AdamConfig::default(),
            discriminator_optimizer: AdamConfig::default(),
            l1_lambda: 1e-4,
            forget_bias: 1.0,
            conv_channels: [32, 64, 128],
            kernel_size: 5,
            stride: 2,
            dense_hidden: 64,
            leaky_slope: 0.01,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            loss: LossKind::Linear,
            train_latent: true,
            checkpoint_interval: 50,
            seed: 0,
        }
    }
}

impl GanConfig {
    /// Length left after the three convolutions, if every stage fits.
    pub fn conv_output_len(&self) -> Option<usize> {
        let mut len = self.sequence_length;
        for _ in 0..3 {
            len = crate::neural::layers::conv_output_len(len, self.kernel_size, self.stride)?;
        }
        Some(len)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_features", self.input_features),
            ("hidden", self.hidden),
            ("sequence_length", self.sequence_length),
            ("latent_dim", self.latent_dim),
            ("batch_size", self.batch_size),
            ("dense_hidden", self.dense_hidden),
            ("checkpoint_interval", self.checkpoint_interval),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::InvalidArgument("conv channels must be positive".into()));
        }
        if self.conv_output_len().is_none() {
            return Err(Error::InvalidArgument(format!(
                "sequence length {} does not survive three kernel-{} stride-{} convolutions",
                self.sequence_length, self.kernel_size, self.stride
            )));
        }
        if !(self.l1_lambda >= 0.0) {
            return Err(Error::InvalidArgument("l1_lambda must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorIds {
    pub latent: ParamId,
    pub proj_h: ParamId,
    pub proj_c: ParamId,
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub lstm_bias: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorVars {
    pub latent: Var,
    pub proj_h: Var,
    pub proj_c: Var,
    pub lstm: LstmVars,
    pub head_w: Var,
    pub head_b: Var,
}

impl GeneratorIds {
    pub fn vars(&self, b: &Bindings) -> GeneratorVars {
        GeneratorVars {
            latent: b.get(self.latent),
            proj_h: b.get(self.proj_h),
            proj_c: b.get(self.proj_c),
            lstm: LstmVars {
                w_input: b.get(self.w_input),
                w_hidden: b.get(self.w_hidden),
                bias: b.get(self.lstm_bias),
            },
            head_w: b.get(self.head_w),
            head_b: b.get(self.head_b),
        }
    }

    pub fn lstm_params(&self) -> [ParamId; 3] {
        [self.w_input, self.w_hidden, self.lstm_bias]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorIds {
    pub conv_w: [ParamId; 3],
    pub conv_b: [ParamId; 3],
    pub bn_gamma: [ParamId; 2],
    pub bn_beta: [ParamId; 2],
    pub bn_mean: [ParamId; 2],
    pub bn_var: [ParamId; 2],
    pub dense1_w: ParamId,
    pub dense1_b: ParamId,
    pub dense2_w: ParamId,
    pub dense2_b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorVars {
    pub conv_w: [Var; 3],
    pub conv_b: [Var; 3],
    pub bn_gamma: [Var; 2],
    pub bn_beta: [Var; 2],
    pub bn_mean: [Var; 2],
    pub bn_var: [Var; 2],
    pub dense1_w: Var,
    pub dense1_b: Var,
    pub dense2_w: Var,
    pub dense2_b: Var,
}

impl DiscriminatorIds {
    pub fn vars(&self, b: &Bindings) -> DiscriminatorVars {
        DiscriminatorVars {
            conv_w: self.conv_w.map(|i| b.get(i)),
            conv_b: self.conv_b.map(|i| b.get(i)),
            bn_gamma: self.bn_gamma.map(|i| b.get(i)),
            bn_beta: self.bn_beta.map(|i| b.get(i)),
            bn_mean: self.bn_mean.map(|i| b.get(i)),
            bn_var: self.bn_var.map(|i| b.get(i)),
            dense1_w: b.get(self.dense1_w),
            dense1_b: b.get(self.dense1_b),
            dense2_w: b.get(self.dense2_w),
            dense2_b: b.get(self.dense2_b),
        }
    }
}

/// Batch-norm behaviour of a discriminator pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Batch,
    Running,
}

/// Predicted (scaled) close for each window of `features: [batch, T, F]`.
pub fn generator_forward(g: &mut Graph, v: &GeneratorVars, features: Var) -> Result<Var> {
    let batch = g.value(features).shape()[0];
    let h0 = g.matmul(v.latent, v.proj_h)?;
    let h0 = g.broadcast_rows(h0, batch)?;
    let c0 = g.matmul(v.latent, v.proj_c)?;
    let c0 = g.broadcast_rows(c0, batch)?;
    let h = lstm(g, features, h0, c0, &v.lstm)?;
    dense(g, h, v.head_w, v.head_b)
}

/// Logit and probability for each price window `[batch, 1, T]`, plus the
/// batch statistics of both normalization layers when `mode` is `Batch`.
///
/// Windows are ordered newest close first. An unpadded kernel-5 stride-2
/// convolution over 30 values never reads the final position, so the
/// newest close, the one the generator supplies, must come first.
pub fn discriminator_forward(
    g: &mut Graph,
    v: &DiscriminatorVars,
    windows: Var,
    config: &GanConfig,
    mode: NormMode,
) -> Result<(Var, Var, Vec<BatchStats>)> {
    let shape = g.value(windows).shape();
    if shape.len() != 3 || shape[1] != 1 || shape[2] != config.sequence_length {
        return Err(Error::shape("discriminator input", &[shape[0], 1, config.sequence_length], shape));
    }
    let mut x = windows;
    let mut stats = Vec::new();
    for layer in 0..3 {
        x = g.conv1d(x, v.conv_w[layer], v.conv_b[layer], config.stride)?;
        if layer > 0 {
            let k = layer - 1;
            x = match mode {
                NormMode::Batch => {
                    let (y, s) = g.batch_norm(x, v.bn_gamma[k], v.bn_beta[k], config.bn_eps)?;
                    stats.push(s);
                    y
                }
                NormMode::Running => {
                    let mean = g.value(v.bn_mean[k]).data().to_vec();
                    let var = g.value(v.bn_var[k]).data().to_vec();
                    g.batch_norm_fixed(x, v.bn_gamma[k], v.bn_beta[k], &mean, &var, config.bn_eps)?
                }
            };
        }
        x = g.leaky_relu(x, config.leaky_slope);
    }
    let shape = g.value(x).shape().to_vec();
    let x = g.reshape(x, &[shape[0], shape[1] * shape[2]])?;
    let x = dense(g, x, v.dense1_w, v.dense1_b)?;
    let x = g.relu(x);
    let logit = dense(g, x, v.dense2_w, v.dense2_b)?;
    let prob = g.sigmoid(logit);
    Ok((logit, prob, stats))
}

/// `½(mean(1 − d_real) + mean(d_fake))` on plain score slices.
pub fn gan_loss(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::EmptySeries);
    }
    let real = d_real.iter().map(|d| 1.0 - d).sum::<f64>() / d_real.len() as f64;
    let fake = d_fake.iter().sum::<f64>() / d_fake.len() as f64;
    Ok(0.5 * (real + fake))
}

fn linear_loss(g: &mut Graph, p_real: Var, p_fake: Var) -> Var {
    let neg = g.scale(p_real, -1.0);
    let miss = g.add_scalar(neg, 1.0);
    let a = g.mean(miss);
    let b = g.mean(p_fake);
    let s = g.add(a, b).expect("scalar means share a shape");
    g.scale(s, 0.5)
}

// ½(mean softplus(−z_real) + mean softplus(z_fake)) = −½(mean ln D(real) + mean ln(1 − D(fake)))
fn bce_loss(g: &mut Graph, z_real: Var, z_fake: Var) -> Var {
    let neg = g.scale(z_real, -1.0);
    let a = g.softplus(neg);
    let a = g.mean(a);
    let b = g.softplus(z_fake);
    let b = g.mean(b);
    let s = g.add(a, b).expect("scalar means share a shape");
    g.scale(s, 0.5)
}

// −½·mean ln D(fake)
fn bce_generator_loss(g: &mut Graph, z_fake: Var) -> Var {
    let neg = g.scale(z_fake, -1.0);
    let a = g.softplus(neg);
    let a = g.mean(a);
    g.scale(a, 0.5)
}

/// Windows cut from aligned feature rows and target closes, both already
/// scaled. Sample `i` predicts the close of the day after its last row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub sequence_length: usize,
    pub width: usize,
    /// `sequence_length × width` values per sample.
    pub windows: Vec<Vec<f64>>,
    /// The `sequence_length − 1` real closes before the target, oldest first.
    pub prefixes: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl TrainingData {
    pub fn new(rows: &[Vec<f64>], target: &[f64], sequence_length: usize) -> Result<Self> {
        if rows.len() != target.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: target.len(),
            });
        }
        if sequence_length < 2 || rows.len() < sequence_length + 1 {
            return Err(Error::SeriesTooShort {
                needed: sequence_length + 1,
                got: rows.len(),
            });
        }
        let width = rows[0].len();
        let mut data = Self {
            sequence_length,
            width,
            windows: Vec::new(),
            prefixes: Vec::new(),
            targets: Vec::new(),
        };
        for t in sequence_length - 1..rows.len() - 1 {
            let window: Vec<f64> = rows[t + 1 - sequence_length..=t].iter().flatten().copied().collect();
            data.windows.push(window);
            data.prefixes.push(target[t + 2 - sequence_length..=t].to_vec());
            data.targets.push(target[t + 1]);
        }
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let b = idx.len();
        let t = self.sequence_length;
        let features = Tensor::new(
            &[b, t, self.width],
            idx.iter().flat_map(|&i| self.windows[i].iter().copied()).collect(),
        )?;
        let prefixes = Tensor::new(
            &[b, t - 1],
            idx.iter().flat_map(|&i| self.prefixes[i].iter().rev().copied()).collect(),
        )?;
        let mut real = Vec::with_capacity(b * t);
        for &i in idx {
            real.push(self.targets[i]);
            real.extend(self.prefixes[i].iter().rev());
        }
        Ok(Batch {
            features,
            prefixes,
            real: Tensor::new(&[b, 1, t], real)?,
            targets: Tensor::new(&[b, 1], idx.iter().map(|&i| self.targets[i]).collect())?,
        })
    }
}

struct Batch {
    features: Tensor,
    /// Newest first.
    prefixes: Tensor,
    /// Newest first, target at index 0.
    real: Tensor,
    targets: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean discriminator objective over the epoch's batches.
    pub discriminator: f64,
    /// Mean generator objective (including the L1 term).
    pub generator: f64,
}

/// Parameters and optimizer state of one adversarial model.
#[derive(Debug, Clone)]
pub struct GanModel {
    pub config: GanConfig,
    pub generator: ParamSet,
    pub discriminator: ParamSet,
    pub g_ids: GeneratorIds,
    pub d_ids: DiscriminatorIds,
    g_opt: Adam,
    d_opt: Adam,
    pub epoch: usize,
}

fn stream(seed: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane);
    rng
}

impl GanModel {
    /// Fresh Xavier-initialized networks with `latent` as the seed vector.
    pub fn new(config: GanConfig, latent: &[f64]) -> Result<Self> {
        config.validate()?;
        if latent.len() != config.latent_dim {
            return Err(Error::shape("latent", &[config.latent_dim], &[latent.len()]));
        }
        let (f, h, z) = (config.input_features, config.hidden, config.latent_dim);
        let mut rng = stream(config.seed, 1);
        let mut gen = ParamSet::new();
        let latent_id = gen.add("latent", Tensor::new(&[1, z], latent.to_vec())?);
        gen.set_trainable(latent_id, config.train_latent);
        let proj_h = gen.add("proj.h", xavier_init_with(&[z, h], &mut rng)?);
        let proj_c = gen.add("proj.c", xavier_init_with(&[z, h], &mut rng)?);
        let w_input = gen.add("lstm.w_input", xavier_init_with(&[f, 4 * h], &mut rng)?);
        let w_hidden = gen.add("lstm.w_hidden", xavier_init_with(&[h, 4 * h], &mut rng)?);
        let mut bias = Tensor::zeros(&[4 * h]);
        bias.data_mut()[h..2 * h].fill(config.forget_bias);
        let lstm_bias = gen.add("lstm.bias", bias);
        let head_w = gen.add("head.w", xavier_init_with(&[h, 1], &mut rng)?);
        let head_b = gen.add("head.b", Tensor::zeros(&[1]));
        let g_ids = GeneratorIds {
            latent: latent_id,
            proj_h,
            proj_c,
            w_input,
            w_hidden,
            lstm_bias,
            head_w,
            head_b,
        };

        let mut rng = stream(config.seed, 2);
        let mut disc = ParamSet::new();
        let [c1, c2, c3] = config.conv_channels;
        let k = config.kernel_size;
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for (i, (cin, cout)) in [(1, c1), (c1, c2), (c2, c3)].into_iter().enumerate() {
            conv_w.push(disc.add(format!("conv{}.w", i + 1), xavier_init_with(&[cout, cin, k], &mut rng)?));
            conv_b.push(disc.add(format!("conv{}.b", i + 1), Tensor::zeros(&[cout])));
        }
        let mut bn = Vec::new();
        for (i, c) in [(2, c2), (3, c3)] {
            bn.push((
                disc.add(format!("bn{i}.gamma"), Tensor::full(&[c], 1.0)),
                disc.add(format!("bn{i}.beta"), Tensor::zeros(&[c])),
                disc.add_buffer(format!("bn{i}.running_mean"), Tensor::zeros(&[c])),
                disc.add_buffer(format!("bn{i}.running_var"), Tensor::full(&[c], 1.0)),
            ));
        }
        let flat = c3 * config.conv_output_len().unwrap_or(1);
        let dense1_w = disc.add("dense1.w", xavier_init_with(&[flat, config.dense_hidden], &mut rng)?);
        let dense1_b = disc.add("dense1.b", Tensor::zeros(&[config.dense_hidden]));
        let dense2_w = disc.add("dense2.w", xavier_init_with(&[config.dense_hidden, 1], &mut rng)?);
        let dense2_b = disc.add("dense2.b", Tensor::zeros(&[1]));
        let d_ids = DiscriminatorIds {
            conv_w: [conv_w[0], conv_w[1], conv_w[2]],
            conv_b: [conv_b[0], conv_b[1], conv_b[2]],
            bn_gamma: [bn[0].0, bn[1].0],
            bn_beta: [bn[0].1, bn[1].1],
            bn_mean: [bn[0].2, bn[1].2],
            bn_var: [bn[0].3, bn[1].3],
            dense1_w,
            dense1_b,
            dense2_w,
            dense2_b,
        };
        let g_opt = Adam::new(config.generator_optimizer, &gen);
        let d_opt = Adam::new(config.discriminator_optimizer, &disc);
        Ok(Self {
            config,
            generator: gen,
            discriminator: disc,
            g_ids,
            d_ids,
            g_opt,
            d_opt,
            epoch: 0,
        })
    }

    pub fn latent(&self) -> &[f64] {
        self.generator.value(self.g_ids.latent).data()
    }

    /// Scaled predictions for `features: [batch, T, F]`.
    pub fn predict(&self, features: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let b = self.generator.bind(&mut g, true);
        let x = g.constant(features.clone());
        let y = generator_forward(&mut g, &self.g_ids.vars(&b), x)?;
        let out = g.value(y).data().to_vec();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator output".into()));
        }
        Ok(out)
    }

    /// Discriminator scores for newest-first price windows `[batch, 1, T]`
    /// using running batch-norm statistics.
    pub fn score(&self, windows: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let b = self.discriminator.bind(&mut g, true);
        let x = g.constant(windows.clone());
        let (_, p, _) = discriminator_forward(&mut g, &self.d_ids.vars(&b), x, &self.config, NormMode::Running)?;
        Ok(g.value(p).data().to_vec())
    }

    fn fake_windows(g: &mut Graph, prefixes: Var, predicted: Var) -> Result<Var> {
        let joined = g.concat_cols(predicted, prefixes)?;
        let (b, t) = (g.value(joined).shape()[0], g.value(joined).shape()[1]);
        g.reshape(joined, &[b, 1, t])
    }

    /// [`gan_loss`] of the current networks on samples `idx` of `data`,
    /// with batch-norm in batch mode. Nothing is updated.
    pub fn batch_loss(&self, data: &TrainingData, idx: &[usize]) -> Result<f64> {
        self.batch_gan_loss(&data.batch(idx)?)
    }

    fn batch_gan_loss(&self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let gb = self.generator.bind(&mut g, true);
        let db = self.discriminator.bind(&mut g, true);
        let (_, p_real, _, _, p_fake, _) = self.adversarial_pass(&mut g, &gb, &db, batch)?;
        gan_loss(g.value(p_real).data(), g.value(p_fake).data())
    }

    #[allow(clippy::type_complexity)]
    fn adversarial_pass(
        &self,
        g: &mut Graph,
        gb: &Bindings,
        db: &Bindings,
        batch: &Batch,
    ) -> Result<(Var, Var, Vec<BatchStats>, Var, Var, Var)> {
        let gv = self.g_ids.vars(gb);
        let dv = self.d_ids.vars(db);
        let features = g.constant(batch.features.clone());
        let prefixes = g.constant(batch.prefixes.clone());
        let real = g.constant(batch.real.clone());
        let predicted = generator_forward(g, &gv, features)?;
        let fake = Self::fake_windows(g, prefixes, predicted)?;
        let (z_real, p_real, stats) = discriminator_forward(g, &dv, real, &self.config, NormMode::Batch)?;
        let (z_fake, p_fake, _) = discriminator_forward(g, &dv, fake, &self.config, NormMode::Batch)?;
        Ok((z_real, p_real, stats, z_fake, p_fake, predicted))
    }

    /// One descent step of the discriminator with the generator frozen.
    /// Returns the objective before the update.
    fn discriminator_step(&mut self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let gb = self.generator.bind(&mut g, true);
        let db = self.discriminator.bind(&mut g, false);
        let (z_real, p_real, stats, z_fake, p_fake, _) = self.adversarial_pass(&mut g, &gb, &db, batch)?;
        let loss = match self.config.loss {
            LossKind::Linear => linear_loss(&mut g, p_real, p_fake),
            LossKind::Bce => bce_loss(&mut g, z_real, z_fake),
        };
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite("discriminator loss".into()));
        }
        let grads = g.backward(loss)?;
        self.discriminator.store_grads(&db, &grads);
        self.d_opt.step(&mut self.discriminator)?;
        for (k, s) in stats.iter().enumerate() {
            let (mid, vid) = (self.d_ids.bn_mean[k], self.d_ids.bn_var[k]);
            let mut mean = self.discriminator.value(mid).clone();
            let mut var = self.discriminator.value(vid).clone();
            update_running(&mut mean, &mut var, s, self.config.bn_momentum);
            self.discriminator.get_mut(mid).value = mean;
            self.discriminator.get_mut(vid).value = var;
        }
        Ok(value)
    }

    /// One step of the generator and latent against a frozen discriminator:
    /// ascends the adversarial loss, descends the L1 penalty.
    fn generator_step(&mut self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let gb = self.generator.bind(&mut g, false);
        let db = self.discriminator.bind(&mut g, true);
        let (_, p_real, _, z_fake, p_fake, _) = self.adversarial_pass(&mut g, &gb, &db, batch)?;
        let adversarial = match self.config.loss {
            LossKind::Linear => {
                let l = linear_loss(&mut g, p_real, p_fake);
                g.scale(l, -1.0)
            }
            LossKind::Bce => bce_generator_loss(&mut g, z_fake),
        };
        let lstm_vars: Vec<Var> = self.g_ids.lstm_params().iter().map(|id| gb.get(*id)).collect();
        let penalty = l1(&mut g, &lstm_vars, self.config.l1_lambda)?;
        let loss = g.add(adversarial, penalty)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite("generator loss".into()));
        }
        let grads = g.backward(loss)?;
        self.generator.store_grads(&gb, &grads);
        self.g_opt.step(&mut self.generator)?;
        Ok(value)
    }

    /// Squared-error step of the generator alone.
    fn supervised_step(&mut self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let gb = self.generator.bind(&mut g, false);
        let features = g.constant(batch.features.clone());
        let targets = g.constant(batch.targets.clone());
        let predicted = generator_forward(&mut g, &self.g_ids.vars(&gb), features)?;
        let err = g.sub(predicted, targets)?;
        let sq = g.mul(err, err)?;
        let mse = g.mean(sq);
        let lstm_vars: Vec<Var> = self.g_ids.lstm_params().iter().map(|id| gb.get(*id)).collect();
        let penalty = l1(&mut g, &lstm_vars, self.config.l1_lambda)?;
        let loss = g.add(mse, penalty)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite("supervised loss".into()));
        }
        let grads = g.backward(loss)?;
        self.generator.store_grads(&gb, &grads);
        self.g_opt.step(&mut self.generator)?;
        Ok(value)
    }
}

/// How the generator is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Adversarial,
    /// Squared error against the next close; the discriminator is unused.
    Supervised,
}

/// Runs `config.epochs − model.epoch` epochs. `observer` sees every
/// finished epoch and the model after it.
///
/// On a non-finite loss or gradient the model is restored to its state at
/// the last checkpoint epoch (or at the start of the call) and
/// [`Error::Diverged`] is returned.
pub fn train<F>(model: &mut GanModel, data: &TrainingData, objective: Objective, mut observer: F) -> Result<Vec<EpochLoss>>
where
    F: FnMut(&EpochLoss, &GanModel) -> Result<()>,
{
    if data.is_empty() {
        return Err(Error::SeriesTooShort {
            needed: model.config.sequence_length + 1,
            got: 0,
        });
    }
    if data.sequence_length != model.config.sequence_length || data.width != model.config.input_features {
        return Err(Error::shape(
            "training data",
            &[model.config.sequence_length, model.config.input_features],
            &[data.sequence_length, data.width],
        ));
    }
    let mut rng = stream(model.config.seed, 3);
    rng.set_word_pos(0);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::new();
    let mut last_good = model.clone();
    // Replay the shuffles of epochs already run so a resumed model sees the
    // same batch order as an uninterrupted one.
    for _ in 0..model.epoch {
        order.shuffle(&mut rng);
    }
    while model.epoch < model.config.epochs {
        order.shuffle(&mut rng);
        let epoch = model.epoch + 1;
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        let outcome: Result<()> = (|| {
            for chunk in order.chunks(model.config.batch_size) {
                // Batch-norm needs two samples per batch.
                if chunk.len() < 2 && objective == Objective::Adversarial {
                    continue;
                }
                let batch = data.batch(chunk)?;
                match objective {
                    Objective::Adversarial => {
                        d_sum += model.discriminator_step(&batch)?;
                        g_sum += model.generator_step(&batch)?;
                    }
                    Objective::Supervised => g_sum += model.supervised_step(&batch)?,
                }
                batches += 1;
            }
            if !model.generator.is_finite() || !model.discriminator.is_finite() {
                return Err(Error::NonFinite("parameters".into()));
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            if e.is_numeric() {
                *model = last_good;
                return Err(Error::Diverged { epoch });
            }
            return Err(e);
        }
        model.epoch = epoch;
        let n = batches.max(1) as f64;
        let record = EpochLoss {
            epoch,
            discriminator: d_sum / n,
            generator: g_sum / n,
        };
        history.push(record);
        if epoch.is_multiple_of(model.config.checkpoint_interval) || epoch == model.config.epochs {
            last_good = model.clone();
        }
        observer(&record, model)?;
    }
    Ok(history)
}

/// Everything fitted on the training span that forecasting needs besides
/// the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastContext {
    pub pipeline: FeaturePipeline,
    pub feature_scaler: ColumnScaler,
    pub target_scaler: MinMaxScaler,
    pub target: String,
}

impl ForecastContext {
    fn target_index(&self, panel: &Panel) -> Result<usize> {
        panel
            .ticker_index(&self.target)
            .ok_or_else(|| Error::InvalidArgument(format!("target {} not in panel", self.target)))
    }
}

/// `n` closes following `origin`, feeding each prediction back as the next
/// day's close.
///
/// Only days up to and including `origin` are read from `panel`.
pub fn forecast_horizon(
    model: &GanModel,
    ctx: &ForecastContext,
    panel: &Panel,
    origin: NaiveDate,
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("forecast horizon must be at least one day".into()));
    }
    let mut history = panel.up_to(origin);
    if history.dates.last() != Some(&origin) {
        return Err(Error::InvalidArgument(format!("{origin} is not a trading day of the panel")));
    }
    let target = ctx.target_index(&history)?;
    let t = model.config.sequence_length;
    let matrix = ctx.pipeline.matrix(&history)?;
    if matrix.len() < t {
        return Err(Error::SeriesTooShort {
            needed: t,
            got: matrix.len(),
        });
    }
    let mut window: Vec<Vec<f64>> = matrix.rows[matrix.len() - t..]
        .iter()
        .map(|r| ctx.feature_scaler.transform_row(r))
        .collect();
    let mut out = Vec::with_capacity(n);
    for step in 0..n {
        let features = Tensor::new(&[1, t, model.config.input_features], window.iter().flatten().copied().collect())?;
        let close = ctx.target_scaler.unscale(model.predict(&features)?[0]);
        out.push(close);
        if step + 1 < n {
            history.push_simulated(target, close)?;
            let row = ctx.pipeline.last_row(&history)?;
            window.remove(0);
            window.push(ctx.feature_scaler.transform_row(&row));
        }
    }
    Ok(out)
}

/// One-day-ahead predictions from every origin in `origins`, each using
/// real data up to that origin.
pub fn one_step_predictions(model: &GanModel, ctx: &ForecastContext, panel: &Panel, origins: &[NaiveDate]) -> Result<Vec<f64>> {
    let matrix = ctx.pipeline.matrix(panel)?;
    let t = model.config.sequence_length;
    let mut out = Vec::with_capacity(origins.len());
    for origin in origins {
        let end = matrix
            .row_of(*origin)
            .ok_or_else(|| Error::InvalidArgument(format!("{origin} has no feature row")))?;
        if end + 1 < t {
            return Err(Error::SeriesTooShort { needed: t, got: end + 1 });
        }
        let window: Vec<f64> = matrix.rows[end + 1 - t..=end]
            .iter()
            .flat_map(|r| ctx.feature_scaler.transform_row(r))
            .collect();
        let features = Tensor::new(&[1, t, model.config.input_features], window)?;
        out.push(ctx.target_scaler.unscale(model.predict(&features)?[0]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::gradient_check;
    use rand::Rng;

    fn tiny_config() -> GanConfig {
        GanConfig {
            input_features: 3,
            hidden: 4,
            latent_dim: 5,
            conv_channels: [2, 3, 4],
            dense_hidden: 3,
            epochs: 2,
            batch_size: 4,
            seed: 9,
            ..GanConfig::default()
        }
    }

    fn random_latent(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn synthetic_data(config: &GanConfig, days: usize) -> TrainingData {
        let rows: Vec<Vec<f64>> = (0..days)
            .map(|i| (0..config.input_features).map(|j| libm::sin(0.2 * i as f64 + j as f64)).collect())
            .collect();
        let target: Vec<f64> = (0..days).map(|i| 0.5 + 0.4 * libm::sin(0.2 * i as f64)).collect();
        TrainingData::new(&rows, &target, config.sequence_length).unwrap()
    }

    #[test]
    fn loss_examples() {
        assert_eq!(gan_loss(&[1.0, 1.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(gan_loss(&[0.5], &[0.5, 0.5]).unwrap(), 0.5);
        assert!((gan_loss(&[0.8, 0.6], &[0.3, 0.1]).unwrap() - 0.25).abs() < 1e-15);
        assert!(gan_loss(&[], &[0.5]).is_err());
    }

    #[test]
    fn default_config_matches_hyperparameter_table() {
        let c = GanConfig::default();
        assert_eq!((c.hidden, c.sequence_length, c.epochs, c.batch_size), (500, 30, 500, 16));
        assert_eq!(c.generator_optimizer.lr, 0.01);
        assert_eq!((c.kernel_size, c.stride, c.leaky_slope), (5, 2, 0.01));
        assert_eq!((c.bn_momentum, c.bn_eps), (0.9, 1e-5));
        assert_eq!(c.conv_output_len(), Some(1));
        assert_eq!(c.latent_dim, 100);
        assert_eq!(c.input_features, 128);
    }

    #[test]
    fn zero_generator_predicts_zero() {
        let config = tiny_config();
        let mut m = GanModel::new(config.clone(), &random_latent(5, 1)).unwrap();
        for p in m.generator.iter_mut() {
            if p.name != "latent" {
                p.value = Tensor::zeros(p.value.shape());
            }
        }
        let x = Tensor::full(&[3, 30, 3], 0.7);
        assert_eq!(m.predict(&x).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn zero_discriminator_scores_half() {
        let mut m = GanModel::new(tiny_config(), &random_latent(5, 1)).unwrap();
        for p in m.discriminator.iter_mut() {
            if !p.name.contains("running") {
                p.value = Tensor::zeros(p.value.shape());
            }
        }
        let w = Tensor::new(&[2, 1, 30], random_latent(60, 4)).unwrap();
        assert_eq!(m.score(&w).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn discriminator_scores_are_probabilities_and_deterministic() {
        let m = GanModel::new(tiny_config(), &random_latent(5, 1)).unwrap();
        let w = Tensor::new(&[3, 1, 30], random_latent(90, 4)).unwrap();
        let a = m.score(&w).unwrap();
        assert!(a.iter().all(|s| *s > 0.0 && *s < 1.0));
        assert_eq!(a, m.score(&w).unwrap());
        assert!(m.score(&Tensor::zeros(&[1, 1, 29])).is_err());
    }

    #[test]
    fn latent_moves_prediction() {
        let config = tiny_config();
        let z = random_latent(5, 1);
        let m = GanModel::new(config.clone(), &z).unwrap();
        let x = Tensor::new(&[1, 30, 3], random_latent(90, 2)).unwrap();
        let base = m.predict(&x).unwrap()[0];
        let dir = random_latent(5, 3);
        let mut moved = m.clone();
        let h = 1e-4;
        moved.generator.get_mut(m.g_ids.latent).value =
            Tensor::new(&[1, 5], z.iter().zip(&dir).map(|(a, d)| a + h * d).collect()).unwrap();
        let derivative = (moved.predict(&x).unwrap()[0] - base) / h;
        assert!(derivative.abs() > 0.0);
    }

    #[test]
    fn composite_gradients() {
        let config = tiny_config();
        let m = GanModel::new(config.clone(), &random_latent(5, 1)).unwrap();
        let data = synthetic_data(&config, 40);
        let batch = data.batch(&[0, 3, 5]).unwrap();
        let mut inputs: Vec<Tensor> = m.generator.iter().map(|p| p.value.clone()).collect();
        let ng = inputs.len();
        inputs.extend(m.discriminator.iter().map(|p| p.value.clone()));
        let errors = gradient_check(&inputs, 1e-5, |g, v| {
            let gv = GeneratorVars {
                latent: v[0],
                proj_h: v[1],
                proj_c: v[2],
                lstm: LstmVars {
                    w_input: v[3],
                    w_hidden: v[4],
                    bias: v[5],
                },
                head_w: v[6],
                head_b: v[7],
            };
            let d = &v[ng..];
            let dv = DiscriminatorVars {
                conv_w: [d[0], d[2], d[4]],
                conv_b: [d[1], d[3], d[5]],
                bn_gamma: [d[6], d[10]],
                bn_beta: [d[7], d[11]],
                bn_mean: [d[8], d[12]],
                bn_var: [d[9], d[13]],
                dense1_w: d[14],
                dense1_b: d[15],
                dense2_w: d[16],
                dense2_b: d[17],
            };
            let features = g.constant(batch.features.clone());
            let prefixes = g.constant(batch.prefixes.clone());
            let real = g.constant(batch.real.clone());
            let predicted = generator_forward(g, &gv, features)?;
            let fake = GanModel::fake_windows(g, prefixes, predicted)?;
            let (_, p_real, _) = discriminator_forward(g, &dv, real, &config, NormMode::Batch)?;
            let (_, p_fake, _) = discriminator_forward(g, &dv, fake, &config, NormMode::Batch)?;
            Ok(linear_loss(g, p_real, p_fake))
        })
        .unwrap();
        let names: Vec<String> = m.generator.iter().chain(m.discriminator.iter()).map(|p| p.name.clone()).collect();
        for (name, e) in names.iter().zip(&errors) {
            // Running statistics are not used in batch mode.
            if name.contains("running") {
                continue;
            }
            assert!(*e < 1e-4, "{name}: {e}");
        }
    }

    #[test]
    fn one_epoch_moves_every_group() {
        let config = GanConfig { epochs: 1, ..tiny_config() };
        let mut m = GanModel::new(config.clone(), &random_latent(5, 1)).unwrap();
        let before = m.clone();
        let data = synthetic_data(&config, 64);
        let hist = train(&mut m, &data, Objective::Adversarial, |_, _| Ok(())).unwrap();
        assert_eq!(hist.len(), 1);
        let delta = |a: &ParamSet, b: &ParamSet| {
            a.flatten().iter().zip(b.flatten()).map(|(x, y)| (x - y).abs()).sum::<f64>()
        };
        let dz: f64 = m.latent().iter().zip(before.latent()).map(|(a, b)| (a - b).abs()).sum();
        assert!(delta(&m.generator, &before.generator) > 0.0);
        assert!(delta(&m.discriminator, &before.discriminator) > 0.0);
        assert!(dz > 0.0);
    }

    #[test]
    fn frozen_latent_is_untouched() {
        let config = GanConfig {
            epochs: 1,
            train_latent: false,
            ..tiny_config()
        };
        let z = random_latent(5, 1);
        let mut m = GanModel::new(config.clone(), &z).unwrap();
        train(&mut m, &synthetic_data(&config, 64), Objective::Adversarial, |_, _| Ok(())).unwrap();
        assert_eq!(m.latent(), &z[..]);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let config = tiny_config();
        let data = synthetic_data(&config, 50);
        let run = || {
            let mut m = GanModel::new(config.clone(), &random_latent(5, 1)).unwrap();
            let h = train(&mut m, &data, Objective::Adversarial, |_, _| Ok(())).unwrap();
            (h, m.generator.flatten())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn small_steps_move_loss_the_right_way() {
        let mut config = tiny_config();
        config.generator_optimizer.lr = 1e-5;
        config.discriminator_optimizer.lr = 1e-5;
        config.l1_lambda = 0.0;
        let data = synthetic_data(&config, 50);
        let batch = data.batch(&[0, 1, 2, 3, 4, 5]).unwrap();
        let mut m = GanModel::new(config.clone(), &random_latent(5, 1)).unwrap();
        let before = m.batch_gan_loss(&batch).unwrap();
        m.discriminator_step(&batch).unwrap();
        let after_d = m.batch_gan_loss(&batch).unwrap();
        assert!(after_d <= before, "{after_d} > {before}");
        m.generator_step(&batch).unwrap();
        let after_g = m.batch_gan_loss(&batch).unwrap();
        assert!(after_g >= after_d, "{after_g} < {after_d}");
    }

    #[test]
    fn divergence_restores_last_good_state() {
        let config = GanConfig { epochs: 3, ..tiny_config() };
        let mut m = GanModel::new(config.clone(), &random_latent(5, 1)).unwrap();
        let start = m.generator.flatten();
        let mut data = synthetic_data(&config, 40);
        data.targets[0] = f64::NAN;
        data.prefixes.iter_mut().for_each(|p| p[0] = f64::NAN);
        let err = train(&mut m, &data, Objective::Adversarial, |_, _| Ok(())).unwrap_err();
        assert_eq!(err, Error::Diverged { epoch: 1 });
        assert_eq!(m.generator.flatten(), start);
        assert_eq!(m.epoch, 0);
    }

    #[test]
    fn training_windows_line_up() {
        let rows: Vec<Vec<f64>> = (0..35).map(|i| vec![i as f64]).collect();
        let target: Vec<f64> = (0..35).map(|i| 100.0 + i as f64).collect();
        let d = TrainingData::new(&rows, &target, 30).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d.windows[0].first(), Some(&0.0));
        assert_eq!(d.windows[0].last(), Some(&29.0));
        assert_eq!(d.targets[0], 130.0);
        assert_eq!(d.prefixes[0].len(), 29);
        assert_eq!(d.prefixes[0][28], 129.0);
        assert!(TrainingData::new(&rows[..30], &target[..30], 30).is_err());
    }
}
