//! Conditional GAN that fills in the channel rows behind the 1-bit RF chains.
//!
//! The generator maps the zero-filled, normalised channel `H_ce` to the full
//! channel; the discriminator judges `(H_ce, candidate)` pairs patch by patch.

mod loss;
mod nets;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use loss::{cgan_losses, real_logit_grad, softplus, CganLosses, GeneratorLoss};
pub use nets::{DiscriminatorConfig, DiscriminatorNet, GeneratorConfig, GeneratorNet, InitConfig};

use crate::channel::{ChannelKind, ChannelMatrix};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{concat_channels, split_channels, Adam, AdamConfig, Layer, Mode, Param, Tensor};
use crate::preprocess::{default_scale_factor, normalize_scale, unstack_reim, ScaleRecord};
use crate::rng;

/// Ratio between the full and the measured antenna count.
const ROW_RATIO: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CganConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub init: InitConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Weight of the L2 term in the generator objective.
    pub beta: f64,
    pub generator_loss: GeneratorLoss,
    pub seed: u64,
    /// Normalisation target; `None` uses `sqrt(M * N_sub)`.
    pub scale_factor: Option<f64>,
}

impl Default for CganConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            init: InitConfig::default(),
            epochs: 150,
            batch_size: 8,
            adam: AdamConfig::default(),
            beta: 100.0,
            generator_loss: GeneratorLoss::NonSaturating,
            seed: 0,
            scale_factor: None,
        }
    }
}

impl CganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be a finite non-negative number, got {}", self.beta)));
        }
        if self.generator.out_channels * 2 != self.discriminator.in_channels
            || self.generator.in_channels != self.generator.out_channels
        {
            return Err(Error::Config(
                "discriminator input must hold the condition and the candidate".into(),
            ));
        }
        self.adam.validate()
    }
}

/// One normalised generator input with its optional target.
#[derive(Debug, Clone, PartialEq)]
pub struct CganSample {
    pub rows: usize,
    pub cols: usize,
    pub input: Vec<f32>,
    pub label: Option<Vec<f32>>,
    /// Normalisation of `H_ce`; the label shares it.
    pub scale: ScaleRecord,
}

impl CganSample {
    /// Normalises `h_ce` to the configured scale and maps `h` with the same
    /// gain divided by `sqrt(M / M')`, so both have unit RMS entries.
    pub fn new(h_ce: &ChannelMatrix, h: Option<&ChannelMatrix>, scale_factor: Option<f64>) -> Result<Self> {
        let (rows, cols) = h_ce.shape();
        let sf = scale_factor.unwrap_or_else(|| default_scale_factor(rows, cols));
        let stacked = normalize_scale(h_ce, sf)?;
        let label = match h {
            Some(h) => {
                if h.shape() != (rows, cols) {
                    return Err(Error::Shape(format!(
                        "label shape {:?} differs from input {:?}",
                        h.shape(),
                        (rows, cols)
                    )));
                }
                let g = label_gain(&stacked.scale);
                Some(h.data().iter().flat_map(|z| [(z.re * g) as f32, (z.im * g) as f32]).collect())
            }
            None => None,
        };
        Ok(Self {
            rows,
            cols,
            input: stacked.data.iter().map(|&v| v as f32).collect(),
            label,
            scale: stacked.scale,
        })
    }

    /// Generator output in the channel domain.
    pub fn denormalize(&self, out: &[f32]) -> Result<ChannelMatrix> {
        let inv = 1.0 / label_gain(&self.scale);
        let v: Vec<f64> = out.iter().map(|&x| x as f64 * inv).collect();
        unstack_reim(&v, self.rows, self.cols, ChannelKind::Generated)
    }
}

fn label_gain(scale: &ScaleRecord) -> f64 {
    scale.gain() / ROW_RATIO.sqrt()
}

/// `||a - b||^2 / ||a||^2`.
pub fn nse_real(reference: &[f32], estimate: &[f32]) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (&a, &b) in reference.iter().zip(estimate) {
        num += (a as f64 - b as f64).powi(2);
        den += (a as f64).powi(2);
    }
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub l2_term: f64,
    /// Mean NSE of the generator output on the validation set.
    pub val_nse: f64,
    /// Mean L2 term on the validation set.
    pub val_l2: f64,
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,loss_D,loss_G,l2_term,val_nse,val_l2\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            r.epoch, r.loss_d, r.loss_g, r.l2_term, r.val_nse, r.val_l2
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Aggregates over one pass.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLosses {
    pub loss_d: f64,
    pub loss_g: f64,
    pub l2: f64,
}

/// Generator, discriminator and their optimisers.
pub struct Cgan {
    pub config: CganConfig,
    pub generator: GeneratorNet<f32>,
    pub discriminator: DiscriminatorNet<f32>,
    adam_g: Adam,
    adam_d: Adam,
}

fn batch_tensor<'a>(items: impl Iterator<Item = &'a [f32]>, rows: usize, cols: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::new();
    let mut n = 0;
    for it in items {
        data.extend_from_slice(it);
        n += 1;
    }
    Tensor::from_vec(&[n, rows, cols, 2], data)
}

fn check_samples(samples: &[CganSample], need_labels: bool) -> Result<(usize, usize)> {
    let first = samples.first().ok_or_else(|| Error::Config("no samples".into()))?;
    for s in samples {
        if (s.rows, s.cols) != (first.rows, first.cols) {
            return Err(Error::Shape("samples differ in shape".into()));
        }
        if need_labels && s.label.is_none() {
            return Err(Error::Config("training sample without label".into()));
        }
    }
    Ok((first.rows, first.cols))
}

impl Cgan {
    pub fn new(config: CganConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            generator: GeneratorNet::new(config.generator.clone(), &config.init, config.seed)?,
            discriminator: DiscriminatorNet::new(config.discriminator.clone(), &config.init, config.seed)?,
            adam_g: Adam::new(config.adam),
            adam_d: Adam::new(config.adam),
            config,
        })
    }

    /// One discriminator and one generator update on a batch.
    pub fn train_step(&mut self, input: &Tensor<f32>, label: &Tensor<f32>) -> Result<StepLosses> {
        let c = self.config.generator.in_channels;
        let fake = self.generator.forward(input, Mode::Train)?;
        fake.check_finite("generator output")?;

        self.discriminator.params_mut().iter_mut().for_each(|p| p.zero_grad());
        let real_logits = self.discriminator.forward(&concat_channels(input, label)?, Mode::Train)?;
        real_logits.check_finite("real logits")?;
        self.discriminator.backward(&real_logit_grad(&real_logits), true)?;

        let fake_logits = self.discriminator.forward(&concat_channels(input, &fake)?, Mode::Train)?;
        let l = cgan_losses(
            &real_logits,
            &fake_logits,
            &fake,
            label,
            self.config.beta,
            self.config.generator_loss,
        )?;
        // Generator gradient through the discriminator before its update.
        let d_in = self.discriminator.backward(&l.grad_fake_g, false)?;
        let (_, mut g_adv) = split_channels(&d_in, c)?;
        g_adv.add_assign(&l.grad_out);
        self.discriminator.backward(&l.grad_fake_d, true)?;

        self.generator.params_mut().iter_mut().for_each(|p| p.zero_grad());
        self.generator.backward(&g_adv, true)?;
        for p in self.generator.params().iter().chain(self.discriminator.params().iter()) {
            p.grad.check_finite(&p.name)?;
        }
        self.adam_d.step(&mut self.discriminator.params_mut());
        self.adam_g.step(&mut self.generator.params_mut());
        Ok(StepLosses {
            loss_d: l.loss_d,
            loss_g: l.loss_g,
            l2: l.l2,
        })
    }

    /// Generator output (normalised domain) for a batch, inference mode.
    pub fn generate(&mut self, input: &Tensor<f32>) -> Result<Tensor<f32>> {
        let out = self.generator.forward(input, Mode::Eval)?;
        out.check_finite("generator output")?;
        Ok(out)
    }

    /// Estimated full channels for every sample.
    pub fn infer(&mut self, samples: &[CganSample]) -> Result<Vec<ChannelMatrix>> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let (rows, cols) = check_samples(samples, false)?;
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.config.batch_size) {
            let x = batch_tensor(chunk.iter().map(|s| s.input.as_slice()), rows, cols)?;
            let y = self.generate(&x)?;
            for (i, s) in chunk.iter().enumerate() {
                out.push(s.denormalize(y.item(i))?);
            }
        }
        Ok(out)
    }

    /// Mean losses (inference mode) plus per-sample NSE against the labels.
    pub fn evaluate(&mut self, samples: &[CganSample]) -> Result<(StepLosses, Vec<f64>)> {
        let (rows, cols) = check_samples(samples, true)?;
        let mut sums = StepLosses::default();
        let mut nse = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.config.batch_size) {
            let x = batch_tensor(chunk.iter().map(|s| s.input.as_slice()), rows, cols)?;
            let y = batch_tensor(chunk.iter().map(|s| s.label.as_deref().unwrap()), rows, cols)?;
            let fake = self.generate(&x)?;
            let real_logits = self.discriminator.forward(&concat_channels(&x, &y)?, Mode::Eval)?;
            let fake_logits = self.discriminator.forward(&concat_channels(&x, &fake)?, Mode::Eval)?;
            let l = cgan_losses(&real_logits, &fake_logits, &fake, &y, self.config.beta, self.config.generator_loss)?;
            let w = chunk.len() as f64;
            sums.loss_d += l.loss_d * w;
            sums.loss_g += l.loss_g * w;
            sums.l2 += l.l2 * w;
            for (i, s) in chunk.iter().enumerate() {
                nse.push(nse_real(s.label.as_deref().unwrap(), fake.item(i)));
            }
        }
        let n = samples.len() as f64;
        Ok((
            StepLosses {
                loss_d: sums.loss_d / n,
                loss_g: sums.loss_g / n,
                l2: sums.l2 / n,
            },
            nse,
        ))
    }

    fn params_all(&self) -> Vec<&Param<f32>> {
        let mut v = self.generator.params();
        v.extend(self.discriminator.params());
        v
    }

    /// Saves both networks with the configuration as metadata.
    pub fn save(&self, path: &Path, epoch: usize) -> Result<()> {
        let meta = serde_json::json!({ "epoch": epoch, "config": self.config });
        Checkpoint::from_params(&self.params_all(), meta).save(path)
    }

    /// Rebuilds a model from a checkpoint written by [`Cgan::save`]. Returns
    /// the stored epoch.
    pub fn load(path: &Path) -> Result<(Self, usize)> {
        let ck = Checkpoint::load(path)?;
        let config: CganConfig = serde_json::from_value(ck.meta["config"].clone())
            .map_err(|e| Error::Format(format!("checkpoint configuration: {e}")))?;
        let epoch = ck.meta["epoch"].as_u64().unwrap_or(0) as usize;
        let mut model = Self::new(config)?;
        let mut params = model.generator.params_mut();
        params.extend(model.discriminator.params_mut());
        ck.restore(&mut params)?;
        Ok((model, epoch))
    }
}

/// Trains a fresh model. `val` may be empty. `on_epoch` runs after every
/// epoch (including the untrained epoch 0 evaluation) and may, for example,
/// write checkpoints.
pub fn train_cgan(
    train: &[CganSample],
    val: &[CganSample],
    config: &CganConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &Cgan) -> Result<()>,
) -> Result<(Cgan, Vec<EpochRecord>)> {
    let (rows, cols) = check_samples(train, true)?;
    if !val.is_empty() && check_samples(val, true)? != (rows, cols) {
        return Err(Error::Shape("validation samples differ in shape from training samples".into()));
    }
    let mut model = Cgan::new(config.clone())?;
    model.generator.check_input(rows, cols)?;
    let mut history = Vec::with_capacity(config.epochs + 1);

    let record = |model: &mut Cgan, epoch: usize, train_losses: StepLosses| -> Result<EpochRecord> {
        let (val_nse, val_l2) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let (l, nse) = model.evaluate(val)?;
            (nse.iter().sum::<f64>() / nse.len() as f64, l.l2)
        };
        Ok(EpochRecord {
            epoch,
            loss_d: train_losses.loss_d,
            loss_g: train_losses.loss_g,
            l2_term: train_losses.l2,
            val_nse,
            val_l2,
        })
    };

    let (initial, _) = model.evaluate(train)?;
    let r0 = record(&mut model, 0, initial)?;
    on_epoch(&r0, &model)?;
    history.push(r0);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        let mut shuffle = rng::stream(rng::derive(config.seed, "cgan/shuffle"), epoch as u64);
        order.shuffle(&mut shuffle);
        let mut sums = StepLosses::default();
        for idx in order.chunks(config.batch_size) {
            let x = batch_tensor(idx.iter().map(|&i| train[i].input.as_slice()), rows, cols)?;
            let y = batch_tensor(idx.iter().map(|&i| train[i].label.as_deref().unwrap()), rows, cols)?;
            let l = model.train_step(&x, &y).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("epoch {epoch}: {m}")),
                other => other,
            })?;
            let w = idx.len() as f64;
            sums.loss_d += l.loss_d * w;
            sums.loss_g += l.loss_g * w;
            sums.l2 += l.l2 * w;
        }
        let n = train.len() as f64;
        let means = StepLosses {
            loss_d: sums.loss_d / n,
            loss_g: sums.loss_g / n,
            l2: sums.l2 / n,
        };
        let r = record(&mut model, epoch, means)?;
        on_epoch(&r, &model)?;
        history.push(r);
    }
    Ok((model, history))
}
