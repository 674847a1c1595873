//! Dense feed-forward networks with exact reverse-mode gradients, plus Adam.
//!
//! Every network in the crate (actor heads, critic, denoiser, proxy classifier)
//! is a [`DenseNet`]. A forward pass returns a [`Tape`] holding each layer's input
//! and post-activation output; [`DenseNet::backward`] replays it to produce
//! parameter gradients summed over the batch, along with the gradient with respect
//! to the network input.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer `y = act(W x + b)` with `W` stored as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct DenseNet {
    layers: Vec<Dense>,
    // bumped whenever parameters may have changed, so stale tapes are caught
    version: u64,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }

    /// Post-activation output of every layer, outermost last.
    pub fn layer_outputs(&self) -> &[Array2<f64>] {
        &self.outputs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Parameter gradients summed over the batch, plus per-row input gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub layers: Vec<LayerGrad>,
    pub input: Array2<f64>,
}

impl DenseGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
            input: Array2::zeros((0, net.in_width())),
        }
    }

    /// Accumulates parameter gradients; input gradients are not merged.
    pub fn accumulate(&mut self, other: &DenseGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weight *= factor;
            g.bias *= factor;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()).copied())
            .collect()
    }
}

impl DenseNet {
    /// Builds a net with the given layer widths. Hidden layers use `hidden`,
    /// the last layer uses `output`. Weights are uniform in `±1/√fan_in`,
    /// biases start at zero.
    pub fn new(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let n_layers = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation: if i + 1 == n_layers { output } else { hidden },
                }
            })
            .collect();
        Ok(Self { layers, version: 0 })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for l in &layers {
            ensure_len("layer bias", l.out_width(), l.bias.len())?;
        }
        for pair in layers.windows(2) {
            ensure_len("adjacent layer widths", pair[0].out_width(), pair[1].in_width())?;
        }
        for (i, l) in layers.iter().enumerate() {
            if !l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable layer access; invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn out_width(&self) -> usize {
        self.layers[self.layers.len() - 1].out_width()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.in_width())
            .chain(self.layers.iter().map(Dense::out_width))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let (out, tape) = self.forward_batch(x)?;
        Ok((out.into_raw_vec_and_offset().0, tape))
    }

    /// Rows of `input` are independent samples.
    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        ensure_len("network input width", self.in_width(), input.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &self.layers {
            let y = affine(layer, x.view());
            inputs.push(x);
            outputs.push(y.clone());
            x = y;
        }
        Ok((
            x,
            Tape {
                version: self.version,
                inputs,
                outputs,
            },
        ))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.predict_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn predict_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        ensure_len("network input width", self.in_width(), input.ncols())?;
        let mut x = affine(&self.layers[0], input);
        for layer in &self.layers[1..] {
            x = affine(layer, x.view());
        }
        Ok(x)
    }

    /// Gradients of `Σ_rows ⟨upstream_row, output_row⟩`.
    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<DenseGrads> {
        if tape.version != self.version || tape.inputs.len() != self.layers.len() {
            return Err(Error::StaleTape);
        }
        ensure_len("upstream batch", tape.batch_size(), upstream.nrows())?;
        ensure_len("upstream width", self.out_width(), upstream.ncols())?;
        if !upstream.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("upstream gradient".into()));
        }

        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut delta_out = upstream.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &tape.outputs[i];
            let mut delta = delta_out;
            delta.zip_mut_with(y, |d, &yv| *d *= layer.activation.derivative_from_output(yv));
            let weight = delta.t().dot(&tape.inputs[i]);
            let bias = delta.sum_axis(Axis(0));
            delta_out = delta.dot(&layer.weight);
            layer_grads.push(LayerGrad { weight, bias });
        }
        layer_grads.reverse();
        Ok(DenseGrads {
            layers: layer_grads,
            input: delta_out,
        })
    }

    pub fn backward_vec(&self, tape: &Tape, upstream: &[f64]) -> Result<DenseGrads> {
        let u = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row view");
        self.backward(tape, u)
    }

    /// Named parameter blocks paired with their gradients, for an optimizer step.
    pub fn param_blocks<'a>(
        &'a mut self,
        grads: &'a DenseGrads,
        prefix: &str,
    ) -> Result<Vec<ParamBlock<'a>>> {
        ensure_len("gradient layers", self.layers.len(), grads.layers.len())?;
        self.version += 1;
        let mut blocks = Vec::with_capacity(2 * self.layers.len());
        for (i, (layer, g)) in self.layers.iter_mut().zip(&grads.layers).enumerate() {
            ensure_len("weight gradient", layer.weight.len(), g.weight.len())?;
            ensure_len("bias gradient", layer.bias.len(), g.bias.len())?;
            blocks.push(ParamBlock {
                name: format!("{prefix}layer{i}.weight"),
                values: layer.weight.as_slice_mut().expect("standard layout"),
                grad: g.weight.as_slice().expect("standard layout"),
            });
            blocks.push(ParamBlock {
                name: format!("{prefix}layer{i}.bias"),
                values: layer.bias.as_slice_mut().expect("standard layout"),
                grad: g.bias.as_slice().expect("standard layout"),
            });
        }
        Ok(blocks)
    }

    /// All parameters in `param_blocks` order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        ensure_len("flat parameters", self.param_count(), values.len())?;
        self.version += 1;
        let mut it = values.iter();
        for l in &mut self.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = *it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

fn affine(layer: &Dense, x: ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    let act = layer.activation;
    if act != Activation::Identity {
        z.mapv_inplace(|v| act.apply(v));
    }
    z
}

/// A named slice of parameters and the matching gradient.
pub struct ParamBlock<'a> {
    pub name: String,
    pub values: &'a mut [f64],
    pub grad: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created on the first step and
/// keyed by block position, so callers must pass blocks in a stable order.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Changes the learning rate for later steps; the moments are kept.
    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, blocks: Vec<ParamBlock<'_>>) -> Result<()> {
        for b in &blocks {
            ensure_len("adam block", b.values.len(), b.grad.len())?;
            if let Some(i) = b.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}[{i}]", b.name)));
            }
        }
        if self.m.is_empty() {
            self.m = blocks.iter().map(|b| vec![0.0; b.values.len()]).collect();
            self.v = self.m.clone();
        }
        ensure_len("adam block count", self.m.len(), blocks.len())?;
        for (b, m) in blocks.iter().zip(&self.m) {
            ensure_len("adam moment", m.len(), b.values.len())?;
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (b, (m, v)) in blocks.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for ((p, &g), (mi, vi)) in b
                .values
                .iter_mut()
                .zip(b.grad)
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(weight: Array2<f64>, bias: Array1<f64>, act: Activation) -> DenseNet {
        DenseNet::from_layers(vec![Dense {
            weight,
            bias,
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single(Array2::eye(2), Array1::zeros(2), Activation::Identity);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap().0, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let net = single(Array2::zeros((1, 3)), array![0.5], Activation::Identity);
        assert_eq!(net.predict(&[7.0, -3.0, 2.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn linear_weight_gradient_is_input() {
        let net = single(array![[0.3, -0.2], [0.1, 0.4]], array![0.0, 0.0], Activation::Identity);
        let x = [2.0, -5.0];
        let (_, tape) = net.forward(&x).unwrap();
        let g = net.backward_vec(&tape, &[1.0, 0.0]).unwrap();
        assert_eq!(g.layers[0].weight, array![[2.0, -5.0], [0.0, 0.0]]);
        assert_eq!(g.layers[0].bias, array![1.0, 0.0]);
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let (_, tape) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let g = net.backward_vec(&tape, &[0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::new(&[3, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
        let (_, tape) = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(net.backward_vec(&tape, &[1.0]).is_err());
        assert!(DenseNet::new(&[3], Activation::Tanh, Activation::Identity, &mut rng).is_err());
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = DenseNet::new(&[2, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let (_, tape) = net.forward(&[1.0, 2.0]).unwrap();
        let g = net.backward_vec(&tape, &[1.0, 1.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        adam.step(net.param_blocks(&g, "").unwrap()).unwrap();
        assert!(matches!(net.backward_vec(&tape, &[1.0, 1.0]), Err(Error::StaleTape)));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = DenseNet::new(&[16, 8, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        assert!(net.layers()[0].weight.iter().all(|w| w.abs() <= 0.25));
        assert!(net.layers()[1].weight.iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
        assert!(net.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![1.0, -2.0];
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(vec![ParamBlock {
            name: "p".into(),
            values: &mut p,
            grad: &[0.0, 0.0],
        }])
        .unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut adam = Adam::new(AdamConfig::with_lr(0.01));
        adam.step(vec![ParamBlock {
            name: "p".into(),
            values: &mut p,
            grad: &[3.0, -0.002, 0.0],
        }])
        .unwrap();
        assert!((p[0] + 0.01).abs() < 1e-8);
        assert!((p[1] - 0.01).abs() < 1e-6);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let mut w = vec![0.0];
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        for _ in 0..100 {
            let g = [2.0 * (w[0] - 3.0)];
            adam.step(vec![ParamBlock {
                name: "w".into(),
                values: &mut w,
                grad: &g,
            }])
            .unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.5, "w = {}", w[0]);
    }

    #[test]
    fn adam_rejects_non_finite_and_names_block() {
        let mut p = vec![1.0];
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam
            .step(vec![ParamBlock {
                name: "critic.layer2.bias".into(),
                values: &mut p,
                grad: &[f64::INFINITY],
            }])
            .unwrap_err();
        assert!(err.to_string().contains("critic.layer2.bias"));
        assert_eq!(p, vec![1.0]);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn flat_params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = DenseNet::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let flat = net.flat_params();
        assert_eq!(flat.len(), net.param_count());
        let doubled: Vec<f64> = flat.iter().map(|v| 2.0 * v).collect();
        net.set_flat_params(&doubled).unwrap();
        assert_eq!(net.flat_params(), doubled);
    }
}
