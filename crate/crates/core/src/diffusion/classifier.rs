//! Small dense proxy classifier over clean 16×16 images.

use ndarray::Array2;
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{ShapeDataset, NUM_CLASSES, PIXELS};
use crate::error::{ensure_len, Error, Result};
use crate::image::GrayImage;
use crate::nn::{Activation, Adam, AdamConfig, DenseNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyClassifier {
    pub net: DenseNet,
}

impl ProxyClassifier {
    pub fn new(hidden: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut widths = vec![PIXELS];
        widths.extend_from_slice(hidden);
        widths.push(NUM_CLASSES);
        Self::from_net(DenseNet::new(&widths, Activation::Relu, Activation::Identity, rng)?)
    }

    pub fn from_net(net: DenseNet) -> Result<Self> {
        ensure_len("classifier input", PIXELS, net.in_width())?;
        ensure_len("classifier output", NUM_CLASSES, net.out_width())?;
        Ok(Self { net })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Class probabilities (softmax of the logits).
    pub fn classify(&self, pixels: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.net.predict(pixels)?))
    }

    pub fn classify_image(&self, image: &GrayImage) -> Result<Vec<f64>> {
        self.classify(image.pixels())
    }

    pub fn predict_label(&self, pixels: &[f64]) -> Result<usize> {
        let p = self.classify(pixels)?;
        Ok(argmax(&p))
    }

    /// Post-activation outputs of every hidden layer.
    pub fn hidden_activations(&self, pixels: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (_, tape) = self.net.forward(pixels)?;
        let outs = tape.layer_outputs();
        Ok(outs[..outs.len() - 1]
            .iter()
            .map(|a| a.row(0).to_vec())
            .collect())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierReport {
    pub epoch_losses: Vec<f64>,
    pub test_accuracy: f64,
}

pub fn train_classifier(
    dataset: &ShapeDataset,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<(ProxyClassifier, ClassifierReport)> {
    train_classifier_with(dataset, config, seed, |_, _| {})
}

/// Cross-entropy training on clean images; `on_epoch(epoch, mean_loss)` is
/// called after each epoch.
pub fn train_classifier_with(
    dataset: &ShapeDataset,
    config: &ClassifierConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(ProxyClassifier, ClassifierReport)> {
    if dataset.train.is_empty() {
        return Err(Error::Config("classifier training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("classifier batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clf = ProxyClassifier::new(&config.hidden, &mut rng)?;
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut order = dataset.train.clone();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let b = chunk.len();
            let mut input = Array2::zeros((b, PIXELS));
            for (r, &idx) in chunk.iter().enumerate() {
                input
                    .row_mut(r)
                    .assign(&ndarray::ArrayView1::from(dataset.images[idx].pixels()));
            }
            let (logits, tape) = clf.net.forward_batch(input.view())?;
            let mut upstream = Array2::zeros((b, NUM_CLASSES));
            let mut loss = 0.0;
            for (r, &idx) in chunk.iter().enumerate() {
                let p = softmax(logits.row(r).as_slice().expect("row"));
                let y = dataset.labels[idx];
                loss -= p[y].max(1e-300).ln();
                for (k, &pk) in p.iter().enumerate() {
                    upstream[[r, k]] = (pk - if k == y { 1.0 } else { 0.0 }) / b as f64;
                }
            }
            loss /= b as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("classifier loss is {loss} in epoch {epoch}")));
            }
            let grads = clf.net.backward(&tape, upstream.view())?;
            opt.step(clf.net.param_blocks(&grads, "classifier.")?)?;
            total += loss * b as f64;
        }
        let mean = total / order.len() as f64;
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }

    let test_accuracy = accuracy(&clf, dataset, &dataset.test)?;
    Ok((
        clf,
        ClassifierReport {
            epoch_losses,
            test_accuracy,
        },
    ))
}

/// Fraction of `indices` whose argmax prediction equals the label; 0 when empty.
pub fn accuracy(clf: &ProxyClassifier, dataset: &ShapeDataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for &i in indices {
        if clf.predict_label(dataset.images[i].pixels())? == dataset.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}
