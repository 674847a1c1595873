//! Image-quality metrics and parameter accounting.
//!
//! PSNR and SSIM operate on the `[0, 255]` scale after mapping from `[-1, 1]`.
//! SSIM averages a uniform 8×8 window over every stride-1 position.

use crate::diffusion::{Denoiser, ProxyClassifier};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::nn::DenseNet;
use crate::policy::{Actor, Critic};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub peak: f64,
    pub k1: f64,
    pub k2: f64,
    pub window: usize,
    pub psnr_cap: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            peak: 255.0,
            k1: 0.01,
            k2: 0.03,
            window: 8,
            psnr_cap: 100.0,
        }
    }
}

impl MetricConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.peak).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.peak).powi(2)
    }
}

fn check_shapes(x: &GrayImage, y: &GrayImage) -> Result<()> {
    if x.same_shape(y) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            context: "metric image pair",
            expected: x.len(),
            actual: y.len(),
        })
    }
}

pub fn mse_255(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    check_shapes(x, y)?;
    let sum: f64 = x
        .to_unit_255()
        .iter()
        .zip(y.to_unit_255())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

/// `10·log₁₀(L²/MSE)`, or the cap when the images are identical.
pub fn psnr_from_mse(mse: f64, config: &MetricConfig) -> f64 {
    if mse == 0.0 {
        config.psnr_cap
    } else {
        10.0 * (config.peak * config.peak / mse).log10()
    }
}

pub fn psnr(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    let config = MetricConfig::default();
    Ok(psnr_from_mse(mse_255(x, y)?, &config))
}

pub fn ssim(x: &GrayImage, y: &GrayImage) -> Result<f64> {
    ssim_with(x, y, &MetricConfig::default())
}

pub fn ssim_with(x: &GrayImage, y: &GrayImage, config: &MetricConfig) -> Result<f64> {
    check_shapes(x, y)?;
    let w = config.window;
    let (width, height) = (x.width(), x.height());
    if w == 0 || width < w || height < w {
        return Err(Error::ImageTooSmall {
            width,
            height,
            window: w,
        });
    }
    let a = x.to_unit_255();
    let b = y.to_unit_255();
    let (c1, c2) = (config.c1(), config.c2());
    let n = (w * w) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for oy in 0..=height - w {
        for ox in 0..=width - w {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for yy in oy..oy + w {
                let row = yy * width;
                for xx in ox..ox + w {
                    let (p, q) = (a[row + xx], b[row + xx]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (mu_a, mu_b) = (sa / n, sb / n);
            let var_a = saa / n - mu_a * mu_a;
            let var_b = sbb / n - mu_b * mu_b;
            let cov = sab / n - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Sum of absolute forward differences in both directions, per pixel.
pub fn tv(x: &GrayImage) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let (w, h) = (x.width(), x.height());
    let mut sum = 0.0;
    for yy in 0..h {
        for xx in 0..w {
            let v = x.get(xx, yy);
            if xx + 1 < w {
                sum += (x.get(xx + 1, yy) - v).abs();
            }
            if yy + 1 < h {
                sum += (x.get(xx, yy + 1) - v).abs();
            }
        }
    }
    sum / x.len() as f64
}

/// Layerwise distance between unit-normalized hidden activations of the proxy
/// classifier. Dense layers have a single spatial position, so each layer
/// contributes the squared L2 distance of its normalized activation vectors.
pub fn lpips_proxy(x: &GrayImage, y: &GrayImage, clf: &ProxyClassifier) -> Result<f64> {
    check_shapes(x, y)?;
    let fx = clf.hidden_activations(x.pixels())?;
    let fy = clf.hidden_activations(y.pixels())?;
    Ok(lpips_from_features(&fx, &fy))
}

pub fn lpips_from_features(fx: &[Vec<f64>], fy: &[Vec<f64>]) -> f64 {
    fx.iter()
        .zip(fy)
        .map(|(a, b)| {
            let (na, nb) = (unit(a), unit(b));
            na.iter().zip(&nb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
        })
        .sum()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

/// Trainable scalar count.
pub trait ParamCount {
    fn param_count(&self) -> usize;
}

impl ParamCount for DenseNet {
    fn param_count(&self) -> usize {
        DenseNet::param_count(self)
    }
}

impl ParamCount for Actor {
    fn param_count(&self) -> usize {
        Actor::param_count(self)
    }
}

impl ParamCount for Critic {
    fn param_count(&self) -> usize {
        Critic::param_count(self)
    }
}

impl ParamCount for Denoiser {
    fn param_count(&self) -> usize {
        Denoiser::param_count(self)
    }
}

impl ParamCount for ProxyClassifier {
    fn param_count(&self) -> usize {
        ProxyClassifier::param_count(self)
    }
}

pub fn param_count(model: &impl ParamCount) -> usize {
    model.param_count()
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
