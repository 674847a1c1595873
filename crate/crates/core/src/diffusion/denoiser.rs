//! Class-conditional noise predictor trained with condition dropout.

use ndarray::{s, Array2};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{ShapeDataset, NUM_CLASSES, PIXELS};
use super::schedule::NoiseSchedule;
use crate::error::{ensure_len, Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, DenseGrads, DenseNet, ParamBlock};

pub const TIME_EMBED_DIM: usize = 16;
pub const CLASS_EMBED_DIM: usize = 16;
pub const DENOISER_INPUT: usize = PIXELS + TIME_EMBED_DIM + CLASS_EMBED_DIM;
/// Row of the embedding table used for the unconditional prediction.
pub const NULL_CLASS: usize = NUM_CLASSES;
/// Default spread for the output scaling.
pub const PRECOND_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate reached at the last epoch by cosine decay from `lr`.
    pub lr_final: f64,
    pub p_uncond: f64,
    /// Spread `σ` of the output scaling (see [`OutputScaling`]); `None` trains
    /// the raw network output as the noise prediction.
    pub precond_sigma: Option<f64>,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 512],
            epochs: 400,
            batch_size: 64,
            lr: 3e-4,
            lr_final: 3e-4,
            p_uncond: 0.1,
            precond_sigma: Some(PRECOND_SIGMA),
        }
    }
}

/// Sinusoidal embedding of a training timestep.
pub fn time_embedding(t: usize) -> [f64; TIME_EMBED_DIM] {
    let half = TIME_EMBED_DIM / 2;
    let mut out = [0.0; TIME_EMBED_DIM];
    for k in 0..half {
        let freq = 10_000f64.powf(-(k as f64) / half as f64);
        let (s, c) = (t as f64 * freq).sin_cos();
        out[2 * k] = s;
        out[2 * k + 1] = c;
    }
    out
}

/// Fixed per-timestep wrapper around the network output `F`:
/// `ε̂ = c_skip·(x_t − √ᾱ_t·μ) + c_out·F`.
///
/// `c_skip` is the least-squares linear noise estimate for data of mean `μ` and
/// spread `σ`, and `c_out` gives `F` a unit-variance target. With a small `σ`
/// the network predicts a scaled clean image rather than the noise at all but
/// the smallest `t`, which a ReLU MLP fits far better than the time-scaled
/// identity map an ε-prediction needs. The loss is unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputScaling {
    /// `[c_skip, c_out, shift]` for `t = 0..=T`; empty means the identity.
    table: Vec<[f64; 3]>,
}

impl OutputScaling {
    pub fn identity() -> Self {
        Self { table: Vec::new() }
    }

    pub fn new(schedule: &NoiseSchedule, sigma: f64, mean: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mean.is_finite()) {
            return Err(Error::Config(format!(
                "output scaling needs finite σ > 0 and μ, got σ = {sigma}, μ = {mean}"
            )));
        }
        let table = schedule
            .alpha_bars()
            .iter()
            .map(|&ab| {
                let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
                let var = s * s + a * a * sigma * sigma;
                [s / var, a * sigma / var.sqrt(), a * mean]
            })
            .collect();
        Ok(Self { table })
    }

    pub fn from_table(table: Vec<[f64; 3]>) -> Result<Self> {
        if table.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("output scaling table".into()));
        }
        Ok(Self { table })
    }

    pub fn table(&self) -> &[[f64; 3]] {
        &self.table
    }

    pub fn is_identity(&self) -> bool {
        self.table.is_empty()
    }

    /// `[c_skip, c_out, shift]` at `t`.
    pub fn coefficients(&self, t: usize) -> Result<[f64; 3]> {
        if self.table.is_empty() {
            return Ok([0.0, 1.0, 0.0]);
        }
        self.table.get(t).copied().ok_or(Error::TimestepOutOfRange {
            t,
            t_max: self.table.len() - 1,
        })
    }

    fn apply(&self, x_t: &[f64], t: usize, out: &mut [f64]) -> Result<()> {
        let [skip, scale, shift] = self.coefficients(t)?;
        for (o, x) in out.iter_mut().zip(x_t) {
            *o = skip * (x - shift) + scale * *o;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub net: DenseNet,
    /// `(NUM_CLASSES + 1) × CLASS_EMBED_DIM`; the last row is the null condition.
    pub embeddings: Array2<f64>,
    pub scaling: OutputScaling,
}

impl Denoiser {
    pub fn new(hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut widths = vec![DENOISER_INPUT];
        widths.extend_from_slice(hidden);
        widths.push(PIXELS);
        let net = DenseNet::new(&widths, Activation::Relu, Activation::Identity, rng)?;
        let embeddings =
            Array2::from_shape_fn((NUM_CLASSES + 1, CLASS_EMBED_DIM), |_| rng.sample(StandardNormal));
        Self::from_parts(net, embeddings, OutputScaling::identity())
    }

    pub fn with_scaling(self, scaling: OutputScaling) -> Self {
        Self { scaling, ..self }
    }

    pub fn from_parts(net: DenseNet, embeddings: Array2<f64>, scaling: OutputScaling) -> Result<Self> {
        ensure_len("denoiser input width", DENOISER_INPUT, net.in_width())?;
        ensure_len("denoiser output width", PIXELS, net.out_width())?;
        ensure_len("embedding rows", NUM_CLASSES + 1, embeddings.nrows())?;
        ensure_len("embedding width", CLASS_EMBED_DIM, embeddings.ncols())?;
        Ok(Self {
            net,
            embeddings,
            scaling,
        })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count() + self.embeddings.len()
    }

    fn fill_row(&self, row: &mut [f64], x_t: &[f64], t: usize, class: usize) {
        row[..PIXELS].copy_from_slice(x_t);
        row[PIXELS..PIXELS + TIME_EMBED_DIM].copy_from_slice(&time_embedding(t));
        for (dst, src) in row[PIXELS + TIME_EMBED_DIM..]
            .iter_mut()
            .zip(self.embeddings.row(class))
        {
            *dst = *src;
        }
    }

    /// `ε_θ(x_t, t, c)`; `None` selects the null condition.
    pub fn predict(&self, x_t: &[f64], t: usize, class: Option<usize>) -> Result<Vec<f64>> {
        ensure_len("denoiser image", PIXELS, x_t.len())?;
        let class = class.unwrap_or(NULL_CLASS);
        if class > NULL_CLASS {
            return Err(Error::Config(format!("class {class} out of range")));
        }
        let mut row = vec![0.0; DENOISER_INPUT];
        self.fill_row(&mut row, x_t, t, class);
        let mut out = self.net.predict(&row)?;
        self.scaling.apply(x_t, t, &mut out)?;
        Ok(out)
    }

    /// Unconditional and conditional predictions from a single batched pass.
    pub fn predict_pair(&self, x_t: &[f64], t: usize, label: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        ensure_len("denoiser image", PIXELS, x_t.len())?;
        if label >= NUM_CLASSES {
            return Err(Error::Config(format!("label {label} out of range")));
        }
        let mut input = Array2::zeros((2, DENOISER_INPUT));
        for (r, class) in [NULL_CLASS, label].into_iter().enumerate() {
            let mut row = input.row_mut(r);
            self.fill_row(row.as_slice_mut().expect("row"), x_t, t, class);
        }
        let out = self.net.predict_batch(input.view())?;
        let (mut uncond, mut cond) = (out.row(0).to_vec(), out.row(1).to_vec());
        self.scaling.apply(x_t, t, &mut uncond)?;
        self.scaling.apply(x_t, t, &mut cond)?;
        Ok((uncond, cond))
    }
}

/// Noised training examples with their noise targets.
#[derive(Debug, Clone, Default)]
pub struct NoiseBatch {
    pub x_t: Vec<Vec<f64>>,
    pub t: Vec<usize>,
    /// Embedding row per example; [`NULL_CLASS`] for unconditional.
    pub class: Vec<usize>,
    pub noise: Vec<Vec<f64>>,
}

impl NoiseBatch {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            x_t: Vec::with_capacity(n),
            t: Vec::with_capacity(n),
            class: Vec::with_capacity(n),
            noise: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, x_t: Vec<f64>, t: usize, class: usize, noise: Vec<f64>) {
        self.x_t.push(x_t);
        self.t.push(t);
        self.class.push(class);
        self.noise.push(noise);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserGrads {
    pub net: DenseGrads,
    pub embeddings: Array2<f64>,
}

impl Denoiser {
    /// Mean squared noise-prediction error over every pixel of the batch, and
    /// its gradient with respect to the network and the embedding table.
    pub fn loss_and_grads(&self, batch: &NoiseBatch) -> Result<(f64, DenoiserGrads)> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::Config("empty denoiser batch".into()));
        }
        let mut input = Array2::zeros((b, DENOISER_INPUT));
        let mut target = Array2::zeros((b, PIXELS));
        for r in 0..b {
            ensure_len("batch image", PIXELS, batch.x_t[r].len())?;
            ensure_len("batch noise", PIXELS, batch.noise[r].len())?;
            if batch.class[r] > NULL_CLASS {
                return Err(Error::Config(format!("class {} out of range", batch.class[r])));
            }
            let mut row = input.row_mut(r);
            self.fill_row(row.as_slice_mut().expect("row"), &batch.x_t[r], batch.t[r], batch.class[r]);
            target.row_mut(r).assign(&ndarray::ArrayView1::from(&batch.noise[r]));
        }
        let (mut out, tape) = self.net.forward_batch(input.view())?;
        let mut scales = Vec::with_capacity(b);
        for (r, mut row) in out.rows_mut().into_iter().enumerate() {
            self.scaling.apply(&batch.x_t[r], batch.t[r], row.as_slice_mut().expect("row"))?;
            scales.push(self.scaling.coefficients(batch.t[r])?[1]);
        }
        let diff = &out - &target;
        let n = (b * PIXELS) as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        let mut upstream = diff * (2.0 / n);
        for (mut row, scale) in upstream.rows_mut().into_iter().zip(scales) {
            row *= scale;
        }
        let net = self.net.backward(&tape, upstream.view())?;
        let mut embeddings = Array2::<f64>::zeros(self.embeddings.raw_dim());
        let emb_cols = net.input.slice(s![.., PIXELS + TIME_EMBED_DIM..]);
        for (r, &class) in batch.class.iter().enumerate() {
            let mut dst = embeddings.row_mut(class);
            dst += &emb_cols.row(r);
        }
        Ok((loss, DenoiserGrads { net, embeddings }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
}

/// Minimizes `E‖ε − ε_θ(x_t, t, c)‖²`, replacing `c` by the null row with
/// probability `p_uncond`. With `p_uncond >= 1` every class row is tied to the
/// trained null row afterwards, so conditional and unconditional predictions agree.
pub fn train_denoiser(
    dataset: &ShapeDataset,
    schedule: &NoiseSchedule,
    config: &DenoiserConfig,
    seed: u64,
) -> Result<(Denoiser, DenoiserReport)> {
    train_denoiser_with(dataset, schedule, config, seed, |_, _| {})
}

/// As [`train_denoiser`], calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn train_denoiser_with(
    dataset: &ShapeDataset,
    schedule: &NoiseSchedule,
    config: &DenoiserConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(Denoiser, DenoiserReport)> {
    if dataset.train.is_empty() {
        return Err(Error::Config("denoiser training set is empty".into()));
    }
    if config.batch_size == 0 || !(0.0..=1.0).contains(&config.p_uncond) {
        return Err(Error::Config("invalid denoiser batch size or p_uncond".into()));
    }
    if !(config.lr > 0.0 && config.lr_final > 0.0 && config.lr_final <= config.lr) {
        return Err(Error::Config(format!(
            "need 0 < lr_final ({}) <= lr ({})",
            config.lr_final, config.lr
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scaling = match config.precond_sigma {
        Some(sigma) => OutputScaling::new(schedule, sigma, mean_pixel(dataset))?,
        None => OutputScaling::identity(),
    };
    let mut model = Denoiser::new(&config.hidden, &mut rng)?.with_scaling(scaling);
    let initial_val_loss = validation_loss(&model, dataset, schedule, seed)?;
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut order = dataset.train.clone();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let always_null = config.p_uncond >= 1.0;

    for epoch in 0..config.epochs {
        let progress = epoch as f64 / config.epochs.saturating_sub(1).max(1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        opt.set_lr(config.lr_final + (config.lr - config.lr_final) * cosine);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let b = chunk.len();
            let mut batch = NoiseBatch::with_capacity(b);
            for &idx in chunk {
                let t = rng.random_range(1..=schedule.t_train());
                let noise: Vec<f64> = (0..PIXELS).map(|_| rng.sample(StandardNormal)).collect();
                let x_t = schedule.q_sample(dataset.images[idx].pixels(), t, &noise)?;
                let class = if always_null || rng.random::<f64>() < config.p_uncond {
                    NULL_CLASS
                } else {
                    dataset.labels[idx]
                };
                batch.push(x_t, t, class, noise);
            }
            let (loss, grads) = model.loss_and_grads(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("denoiser loss is {loss} in epoch {epoch}")));
            }
            let Denoiser { net, embeddings, .. } = &mut model;
            let mut blocks = net.param_blocks(&grads.net, "denoiser.")?;
            blocks.push(ParamBlock {
                name: "denoiser.embeddings".into(),
                values: embeddings.as_slice_mut().expect("standard layout"),
                grad: grads.embeddings.as_slice().expect("standard layout"),
            });
            opt.step(blocks)?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }

    if always_null {
        let null_row = model.embeddings.row(NULL_CLASS).to_owned();
        for c in 0..NUM_CLASSES {
            model.embeddings.row_mut(c).assign(&null_row);
        }
    }
    let final_val_loss = validation_loss(&model, dataset, schedule, seed)?;
    Ok((
        model,
        DenoiserReport {
            epoch_losses,
            initial_val_loss,
            final_val_loss,
        },
    ))
}

/// Noise-prediction loss over the test split (train split if there is no test
/// data) with timesteps and noise fixed by `seed`, conditioning on the true label.
pub fn validation_loss(
    model: &Denoiser,
    dataset: &ShapeDataset,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<f64> {
    let indices = if dataset.test.is_empty() {
        &dataset.train
    } else {
        &dataset.test
    };
    if indices.is_empty() {
        return Err(Error::Config("no images to validate on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
    let mut input = Array2::zeros((indices.len(), DENOISER_INPUT));
    let mut target = Array2::zeros((indices.len(), PIXELS));
    let mut noised = Vec::with_capacity(indices.len());
    for (r, &idx) in indices.iter().enumerate() {
        let t = rng.random_range(1..=schedule.t_train());
        let noise: Vec<f64> = (0..PIXELS).map(|_| rng.sample(StandardNormal)).collect();
        let x_t = schedule.q_sample(dataset.images[idx].pixels(), t, &noise)?;
        let mut row = input.row_mut(r);
        model.fill_row(row.as_slice_mut().expect("row"), &x_t, t, dataset.labels[idx]);
        target.row_mut(r).assign(&ndarray::ArrayView1::from(&noise));
        noised.push((x_t, t));
    }
    let mut out = model.net.predict_batch(input.view())?;
    for (mut row, (x_t, t)) in out.rows_mut().into_iter().zip(&noised) {
        model.scaling.apply(x_t, *t, row.as_slice_mut().expect("row"))?;
    }
    Ok((&out - &target).iter().map(|d| d * d).sum::<f64>() / out.len() as f64)
}

/// Mean pixel value over the training split.
fn mean_pixel(dataset: &ShapeDataset) -> f64 {
    let total: f64 = dataset.train.iter().map(|&i| dataset.images[i].pixels().iter().sum::<f64>()).sum();
    total / (dataset.train.len() * PIXELS) as f64
}
