//! Dense feedforward autoencoder.
//!
//! Every layer computes `a = act(W x + b)` with `W` stored row-major as
//! `(out_dim, in_dim)`. A model is a chain of layers whose last output width
//! equals the first input width, so the network reconstructs its input.
//!
//! The training objective for a batch `B` is
//!
//! ```text
//! mean_b ||x_b - y_b||^2
//!   + sparsity_weight * sum_j KL(target || mean_b h_bj)   (sigmoid hidden units)
//!   + l2_weight * sum W^2
//! ```
//!
//! and is minimised with plain mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the bottleneck layer used throughout the detectors.
pub const DEFAULT_BOTTLENECK: usize = 31;

/// Mean hidden activations are kept this far from 0 and 1 inside the KL term.
const KL_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Autoencoder family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// One hidden layer: `d -> p -> d`.
    Ae,
    /// Three hidden layers: `d -> d/2 -> p -> d/2 -> d`.
    Sae,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Ae => "ae",
            Arch::Sae => "sae",
        }
    }

    /// Sigmoid layer chain for an input of width `input_dim`.
    pub fn layer_specs(self, input_dim: usize, bottleneck: usize) -> Result<Vec<LayerSpec>> {
        if input_dim == 0 || bottleneck == 0 {
            return Err(Error::config("layer widths must be positive"));
        }
        let s = Activation::Sigmoid;
        Ok(match self {
            Arch::Ae => vec![
                LayerSpec::new(input_dim, bottleneck, s),
                LayerSpec::new(bottleneck, input_dim, s),
            ],
            Arch::Sae => {
                let half = input_dim / 2;
                if half == 0 {
                    return Err(Error::config("stacked autoencoder needs input width >= 2"));
                }
                vec![
                    LayerSpec::new(input_dim, half, s),
                    LayerSpec::new(half, bottleneck, s),
                    LayerSpec::new(bottleneck, half, s),
                    LayerSpec::new(half, input_dim, s),
                ]
            }
        })
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(Arch::Ae),
            "sae" => Ok(Arch::Sae),
            other => Err(Error::config(format!("unknown architecture '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.in_dim, self.out_dim, self.activation)
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.biases).map(|(row, b)| {
            let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
            self.activation.apply(z)
        }));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub sparsity_target: f64,
    pub sparsity_weight: f64,
    pub l2_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.5,
            batch_size: 8,
            sparsity_target: 0.05,
            sparsity_weight: 1.0,
            l2_weight: 0.001,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Objective without sparsity or weight decay.
    pub fn unregularized() -> Self {
        Self {
            sparsity_weight: 0.0,
            l2_weight: 0.0,
            ..Self::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return Err(Error::config("sparsity_target must lie in (0, 1)"));
        }
        if !(self.sparsity_weight >= 0.0) || !(self.l2_weight >= 0.0) {
            return Err(Error::config("regularization weights must be >= 0"));
        }
        Ok(())
    }
}

/// Activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// One vector per hidden layer, in order.
    pub hidden: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Gradient of the batch objective, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Gradients {
    fn zeros_like(model: &AeModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    /// All parameters flattened in layer order, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0_f64, |m, g| m.max(g.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeModel {
    layers: Vec<Layer>,
    /// Configuration of the last `train` call, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trained_with: Option<TrainConfig>,
}

impl AeModel {
    /// Seeded model with weights uniform in `±1/sqrt(in_dim)` and zero biases.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_chain(specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|s| {
                let limit = 1.0 / (s.in_dim as f64).sqrt();
                let weights = (0..s.in_dim * s.out_dim)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Layer {
                    in_dim: s.in_dim,
                    out_dim: s.out_dim,
                    activation: s.activation,
                    weights,
                    biases: vec![0.0; s.out_dim],
                }
            })
            .collect();
        Ok(Self {
            layers,
            trained_with: None,
        })
    }

    pub fn for_arch(arch: Arch, input_dim: usize, bottleneck: usize, seed: u64) -> Result<Self> {
        Self::init(&arch.layer_specs(input_dim, bottleneck)?, seed)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<_> = layers.iter().map(Layer::spec).collect();
        validate_chain(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::config(format!("layer {i}: parameter count does not match its shape")));
            }
        }
        Ok(Self {
            layers,
            trained_with: None,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn trained_with(&self) -> Option<&TrainConfig> {
        self.trained_with.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Layer widths from input to output, e.g. `[768, 31, 768]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    /// `Ae` or `Sae` when the widths follow one of those shapes.
    pub fn arch(&self) -> Option<Arch> {
        let dims = self.dims();
        match dims.as_slice() {
            [d, _, o] if d == o => Some(Arch::Ae),
            [d, w, _, w2, o] if d == o && w == w2 && *w == d / 2 => Some(Arch::Sae),
            _ => None,
        }
    }

    /// Index of the hidden layer whose activations are the learned features.
    pub fn bottleneck_index(&self) -> usize {
        (self.layers.len() / 2).saturating_sub(1)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::input(format!(
                "expected a vector of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        let mut acts = self.activations(x);
        let output = acts.pop().expect("at least one layer");
        Ok(Forward {
            hidden: acts,
            output,
        })
    }

    /// Output of every layer (hidden layers then the reconstruction).
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.forward_into(acts.last().map_or(x, |a| a.as_slice()), &mut out);
            acts.push(out);
        }
        acts
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output)
    }

    /// Squared Euclidean distance between `x` and its reconstruction.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        let y = self.reconstruct(x)?;
        Ok(squared_distance(x, &y))
    }

    pub fn reconstruction_errors<V: AsRef<[f64]>>(&self, xs: &[V]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.reconstruction_error(x.as_ref())).collect()
    }

    /// Bottleneck activations.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut acts = self.activations(x);
        Ok(acts.swap_remove(self.bottleneck_index()))
    }

    pub fn batch_loss<V: AsRef<[f64]>>(&self, batch: &[V], cfg: &TrainConfig) -> Result<f64> {
        self.check_batch(batch)?;
        let n = batch.len() as f64;
        let acts: Vec<Vec<Vec<f64>>> = batch.iter().map(|x| self.activations(x.as_ref())).collect();
        let recon: f64 = batch
            .iter()
            .zip(&acts)
            .map(|(x, a)| squared_distance(x.as_ref(), a.last().expect("output")))
            .sum::<f64>()
            / n;

        let mut sparsity = 0.0;
        if cfg.sparsity_weight > 0.0 {
            for li in self.sparse_layers() {
                for rho_hat in mean_activation(&acts, li) {
                    sparsity += kl_divergence(cfg.sparsity_target, rho_hat);
                }
            }
        }

        let l2: f64 = if cfg.l2_weight > 0.0 {
            self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum()
        } else {
            0.0
        };

        Ok(recon + cfg.sparsity_weight * sparsity + cfg.l2_weight * l2)
    }

    /// Analytic gradient of [`AeModel::batch_loss`].
    pub fn backprop_gradients<V: AsRef<[f64]>>(
        &self,
        batch: &[V],
        cfg: &TrainConfig,
    ) -> Result<Gradients> {
        self.check_batch(batch)?;
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_gradients(batch.iter().map(AsRef::as_ref), batch.len(), cfg, &mut grads);
        Ok(grads)
    }

    fn accumulate_gradients<'a>(
        &self,
        batch: impl Iterator<Item = &'a [f64]> + Clone,
        n: usize,
        cfg: &TrainConfig,
        grads: &mut Gradients,
    ) {
        let inv_n = 1.0 / n as f64;
        let acts: Vec<Vec<Vec<f64>>> = batch.clone().map(|x| self.activations(x)).collect();
        let last = self.layers.len() - 1;

        // d(sparsity)/d(h_bj) is the same for every sample: weight * dKL/d(rho_hat) / n.
        let mut sparsity_grad: Vec<Option<Vec<f64>>> = vec![None; self.layers.len()];
        if cfg.sparsity_weight > 0.0 {
            let rho = cfg.sparsity_target;
            for li in self.sparse_layers() {
                let g = mean_activation(&acts, li)
                    .into_iter()
                    .map(|r| {
                        let r = r.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
                        cfg.sparsity_weight * (-rho / r + (1.0 - rho) / (1.0 - r)) * inv_n
                    })
                    .collect();
                sparsity_grad[li] = Some(g);
            }
        }

        let mut delta: Vec<f64> = Vec::new();
        let mut upstream: Vec<f64> = Vec::new();
        for (x, a) in batch.zip(&acts) {
            // dL/dy
            let y = &a[last];
            upstream.clear();
            upstream.extend(y.iter().zip(x).map(|(yi, xi)| 2.0 * (yi - xi) * inv_n));

            for li in (0..=last).rev() {
                let layer = &self.layers[li];
                let out = &a[li];
                if let Some(sg) = &sparsity_grad[li] {
                    for (u, g) in upstream.iter_mut().zip(sg) {
                        *u += g;
                    }
                }
                delta.clear();
                delta.extend(
                    upstream
                        .iter()
                        .zip(out)
                        .map(|(u, o)| u * layer.activation.derivative_from_output(*o)),
                );
                let input: &[f64] = if li == 0 { x } else { &a[li - 1] };
                let g = &mut grads.layers[li];
                for (i, d) in delta.iter().enumerate() {
                    g.biases[i] += d;
                    if *d != 0.0 {
                        let row = &mut g.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                        for (gw, xj) in row.iter_mut().zip(input) {
                            *gw += d * xj;
                        }
                    }
                }
                if li > 0 {
                    upstream.clear();
                    upstream.resize(layer.in_dim, 0.0);
                    for (row, d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta) {
                        if *d != 0.0 {
                            for (u, w) in upstream.iter_mut().zip(row) {
                                *u += w * d;
                            }
                        }
                    }
                }
            }
        }

        if cfg.l2_weight > 0.0 {
            for (g, l) in grads.layers.iter_mut().zip(&self.layers) {
                for (gw, w) in g.weights.iter_mut().zip(&l.weights) {
                    *gw += 2.0 * cfg.l2_weight * w;
                }
            }
        }
    }

    /// Mini-batch gradient descent for `cfg.epochs` passes, reshuffling
    /// the sample order each epoch from a generator seeded with `cfg.seed`.
    pub fn train<V: AsRef<[f64]> + Sync>(mut self, data: &[V], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        self.check_batch(data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut grads = Gradients::zeros_like(&self);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                for g in &mut grads.layers {
                    g.weights.fill(0.0);
                    g.biases.fill(0.0);
                }
                let batch = chunk.iter().map(|&i| data[i].as_ref());
                self.accumulate_gradients(batch, chunk.len(), cfg, &mut grads);
                self.apply_step(&grads, cfg.learning_rate);
            }
        }
        self.trained_with = Some(*cfg);
        Ok(self)
    }

    fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in l.weights.iter_mut().zip(&g.weights) {
                *w -= lr * gw;
            }
            for (b, gb) in l.biases.iter_mut().zip(&g.biases) {
                *b -= lr * gb;
            }
        }
    }

    /// Hidden layers carrying the sparsity penalty.
    fn sparse_layers(&self) -> impl Iterator<Item = usize> + '_ {
        let last = self.layers.len() - 1;
        (0..last).filter(|&i| self.layers[i].activation == Activation::Sigmoid)
    }

    fn check_batch<V: AsRef<[f64]>>(&self, batch: &[V]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::input("batch is empty"));
        }
        batch.iter().try_for_each(|x| self.check_input(x.as_ref()))
    }

    fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                return &mut l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                return &mut l.biases[idx];
            }
            idx -= l.biases.len();
        }
        panic!("parameter index out of range");
    }
}

/// Largest relative disagreement between analytic and central-difference
/// gradients over every parameter.
pub fn gradient_check<V: AsRef<[f64]>>(
    model: &AeModel,
    batch: &[V],
    cfg: &TrainConfig,
    eps: f64,
) -> Result<f64> {
    let analytic = model.backprop_gradients(batch, cfg)?;
    compare_with_finite_differences(model, batch, cfg, eps, &analytic)
}

/// Checks an arbitrary gradient set against central differences.
pub fn compare_with_finite_differences<V: AsRef<[f64]>>(
    model: &AeModel,
    batch: &[V],
    cfg: &TrainConfig,
    eps: f64,
    analytic: &Gradients,
) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::input("finite-difference step must be > 0"));
    }
    model.check_batch(batch)?;
    let flat = analytic.flatten();
    if flat.len() != model.parameter_count() {
        return Err(Error::input("gradient shape does not match the model"));
    }
    let mut probe = model.clone();
    let mut worst = 0.0_f64;
    for (i, a) in flat.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + eps;
        let plus = probe.batch_loss(batch, cfg)?;
        *probe.param_mut(i) = orig - eps;
        let minus = probe.batch_loss(batch, cfg)?;
        *probe.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(*a, numeric));
    }
    Ok(worst)
}

/// Gradient checks over seeded random small networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckSuite {
    pub nets: usize,
    pub max_input: usize,
    pub max_hidden: usize,
    pub max_batch: usize,
    pub eps: f64,
    pub seed: u64,
}

impl Default for GradcheckSuite {
    fn default() -> Self {
        Self {
            nets: 100,
            max_input: 10,
            max_hidden: 5,
            max_batch: 8,
            eps: 1e-5,
            seed: 0,
        }
    }
}

/// Worst relative error over `suite.nets` random `d -> p -> d` networks with
/// the full regularised objective. `flip_sign` negates the analytic gradient,
/// which a working check must catch.
pub fn random_gradient_checks(suite: &GradcheckSuite, flip_sign: bool) -> Result<f64> {
    if suite.max_input < 2 || suite.max_hidden < 1 || suite.max_batch < 1 {
        return Err(Error::config("gradient check dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed);
    let mut worst = 0.0_f64;
    for _ in 0..suite.nets {
        let d = rng.random_range(2..=suite.max_input);
        let p = rng.random_range(1..=suite.max_hidden);
        let model = AeModel::for_arch(Arch::Ae, d, p, rng.random())?;
        let batch: Vec<Vec<f64>> = (0..rng.random_range(1..=suite.max_batch))
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect();
        let cfg = TrainConfig::default();
        let mut analytic = model.backprop_gradients(&batch, &cfg)?;
        if flip_sign {
            for l in &mut analytic.layers {
                l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|g| *g = -*g);
            }
        }
        worst = worst.max(compare_with_finite_differences(&model, &batch, &cfg, suite.eps, &analytic)?);
    }
    Ok(worst)
}

/// `|a - b| / max(|a|, |b|, 1)`: relative for large gradients, absolute near zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kl_divergence(p: f64, q: f64) -> f64 {
    let q = q.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

fn mean_activation(acts: &[Vec<Vec<f64>>], layer: usize) -> Vec<f64> {
    let width = acts[0][layer].len();
    let mut mean = vec![0.0; width];
    for a in acts {
        for (m, v) in mean.iter_mut().zip(&a[layer]) {
            *m += v;
        }
    }
    let n = acts.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    let (first, last) = match (specs.first(), specs.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::config("a model needs at least one layer")),
    };
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::config(format!("layer {i} has a zero width")));
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(Error::config(format!(
                "layer {i} outputs {} values but layer {} expects {}",
                pair[0].out_dim,
                i + 1,
                pair[1].in_dim
            )));
        }
    }
    if last.out_dim != first.in_dim {
        return Err(Error::config(format!(
            "reconstruction width {} differs from input width {}",
            last.out_dim, first.in_dim
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(i: usize, o: usize) -> LayerSpec {
        LayerSpec::new(i, o, Activation::Sigmoid)
    }

    fn identity_1x1() -> AeModel {
        AeModel::from_layers(vec![Layer {
            in_dim: 1,
            out_dim: 1,
            activation: Activation::Linear,
            weights: vec![1.0],
            biases: vec![0.0],
        }])
        .unwrap()
    }

    /// Linear net whose output is the constant `c` regardless of input.
    fn constant_output(c: &[f64]) -> AeModel {
        let d = c.len();
        AeModel::from_layers(vec![Layer {
            in_dim: d,
            out_dim: d,
            activation: Activation::Linear,
            weights: vec![0.0; d * d],
            biases: c.to_vec(),
        }])
        .unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let specs = [sig(768, 31), sig(31, 768)];
        let a = AeModel::init(&specs, 7).unwrap();
        let b = AeModel::init(&specs, 7).unwrap();
        assert_eq!(a, b);
        let bits = |m: &AeModel| -> Vec<u64> {
            m.layers.iter().flat_map(|l| l.weights.iter().map(|w| w.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(a, AeModel::init(&specs, 8).unwrap());
    }

    #[test]
    fn init_weight_range_and_zero_bias() {
        let m = AeModel::init(&[sig(16, 4), sig(4, 16)], 3).unwrap();
        for l in m.layers() {
            let lim = 1.0 / (l.in_dim as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= lim));
            assert!(l.biases.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn init_shapes() {
        let m = AeModel::init(&[sig(128, 31), sig(31, 128)], 1).unwrap();
        assert_eq!(m.layers()[1].out_dim, 128);
        assert_eq!(m.dims(), vec![128, 31, 128]);
        assert_eq!(m.arch(), Some(Arch::Ae));
    }

    #[test]
    fn init_rejects_mismatched_reconstruction() {
        let err = AeModel::init(&[sig(768, 31), sig(31, 100)], 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = AeModel::init(&[sig(8, 4), sig(3, 8)], 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(AeModel::init(&[], 1).is_err());
    }

    #[test]
    fn sae_widths() {
        let m = AeModel::for_arch(Arch::Sae, 768, 31, 0).unwrap();
        assert_eq!(m.dims(), vec![768, 384, 31, 384, 768]);
        assert_eq!(m.arch(), Some(Arch::Sae));
        assert_eq!(m.bottleneck_index(), 1);
    }

    #[test]
    fn zero_weights_give_half_activations() {
        let mut m = AeModel::init(&[sig(5, 3), sig(3, 5)], 0).unwrap();
        for l in &mut m.layers {
            l.weights.fill(0.0);
        }
        let f = m.forward(&[0.3, 0.1, 0.9, 0.2, 0.5]).unwrap();
        assert_eq!(f.hidden, vec![vec![0.5; 3]]);
        assert_eq!(m.encode(&[0.0; 5]).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn identity_net_reproduces_input() {
        let m = identity_1x1();
        assert_eq!(m.forward(&[0.3]).unwrap().output, vec![0.3]);
        assert_eq!(m.reconstruction_error(&[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn wrong_length_is_an_input_error() {
        let m = AeModel::for_arch(Arch::Ae, 6, 3, 9).unwrap();
        assert!(matches!(m.forward(&[0.0; 5]), Err(Error::Input(_))));
        assert!(matches!(m.reconstruction_error(&[0.0; 7]), Err(Error::Input(_))));
    }

    #[test]
    fn reconstruction_error_values() {
        let zeros = constant_output(&[0.0, 0.0]);
        assert_eq!(zeros.reconstruction_error(&[1.0, 0.0]).unwrap(), 1.0);
        let halves = constant_output(&[0.5, 0.5]);
        // 0.3^2 + 0.1^2
        let e = halves.reconstruction_error(&[0.2, 0.4]).unwrap();
        assert!((e - 0.10).abs() < 1e-15, "{e}");
    }

    #[test]
    fn batch_loss_zero_for_perfect_reconstruction() {
        let m = identity_1x1();
        let loss = m.batch_loss(&[vec![0.3], vec![-2.0]], &TrainConfig::unregularized()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(matches!(
            m.batch_loss::<Vec<f64>>(&[], &TrainConfig::unregularized()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn kl_term_vanishes_at_target() {
        // Hidden unit with zero weights and bias logit(0.05) sits exactly at the target.
        let target: f64 = 0.05;
        let logit = (target / (1.0 - target)).ln();
        let m = AeModel::from_layers(vec![
            Layer { in_dim: 2, out_dim: 1, activation: Activation::Sigmoid, weights: vec![0.0, 0.0], biases: vec![logit] },
            Layer { in_dim: 1, out_dim: 2, activation: Activation::Linear, weights: vec![0.0, 0.0], biases: vec![0.2, 0.4] },
        ])
        .unwrap();
        let cfg = TrainConfig { sparsity_weight: 1.0, l2_weight: 0.0, ..TrainConfig::default() };
        let loss = m.batch_loss(&[vec![0.2, 0.4]], &cfg).unwrap();
        assert!(loss.abs() < 1e-15, "{loss}");
    }

    #[test]
    fn hand_computed_two_one_two_loss() {
        // x = (1, 0); h = sigmoid(0.5*1 + (-1)*0 + 0) = sigmoid(0.5)
        // y = (2h, -h + 1) linear
        let m = AeModel::from_layers(vec![
            Layer { in_dim: 2, out_dim: 1, activation: Activation::Sigmoid, weights: vec![0.5, -1.0], biases: vec![0.0] },
            Layer { in_dim: 1, out_dim: 2, activation: Activation::Linear, weights: vec![2.0, -1.0], biases: vec![0.0, 1.0] },
        ])
        .unwrap();
        let h = 1.0 / (1.0 + (-0.5f64).exp()); // 0.6224593312018546
        let y0 = 2.0 * h;
        let y1 = 1.0 - h;
        let recon = (1.0 - y0).powi(2) + (0.0 - y1).powi(2);
        let l2 = 0.25 + 1.0 + 4.0 + 1.0;
        let rho: f64 = 0.05;
        let kl = rho * (rho / h).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - h)).ln();
        let cfg = TrainConfig { sparsity_weight: 0.5, l2_weight: 0.01, sparsity_target: rho, ..TrainConfig::default() };
        let loss = m.batch_loss(&[vec![1.0, 0.0]], &cfg).unwrap();
        assert!((loss - (recon + 0.5 * kl + 0.01 * l2)).abs() < 1e-14);
        // hand-computed value of the reconstruction part
        assert!((recon - 0.20252).abs() < 1e-5, "{recon}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = AeModel::init(&[sig(6, 3), sig(3, 6)], 11).unwrap();
        let batch = vec![
            vec![0.1, 0.5, 0.9, 0.3, 0.7, 0.2],
            vec![0.8, 0.4, 0.6, 0.1, 0.0, 1.0],
            vec![0.3, 0.3, 0.3, 0.9, 0.2, 0.5],
        ];
        let err = gradient_check(&m, &batch, &TrainConfig::default(), 1e-5).unwrap();
        assert!(err < 1e-5, "{err}");
        let m = AeModel::init(&[sig(4, 2), sig(2, 4)], 5).unwrap();
        let err = gradient_check(&m, &batch.iter().map(|v| v[..4].to_vec()).collect::<Vec<_>>(), &TrainConfig::default(), 1e-5).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn identity_gradient_check_is_tight() {
        let err = gradient_check(&identity_1x1(), &[vec![0.3]], &TrainConfig::unregularized(), 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
        let err = gradient_check(&identity_1x1(), &[vec![0.3]], &TrainConfig::default(), 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn gradient_check_rejects_nonpositive_eps() {
        let r = gradient_check(&identity_1x1(), &[vec![0.3]], &TrainConfig::default(), 0.0);
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn flipped_gradient_is_caught() {
        let m = AeModel::init(&[sig(4, 2), sig(2, 4)], 2).unwrap();
        let batch = [vec![0.9, 0.1, 0.4, 0.7]];
        let cfg = TrainConfig::unregularized();
        let mut g = m.backprop_gradients(&batch, &cfg).unwrap();
        for l in &mut g.layers {
            l.weights.iter_mut().for_each(|w| *w = -*w);
        }
        let err = compare_with_finite_differences(&m, &batch, &cfg, 1e-5, &g).unwrap();
        assert!(err > 1e-3, "{err}");
    }

    #[test]
    fn perfect_reconstruction_has_zero_gradient() {
        let g = identity_1x1().backprop_gradients(&[vec![0.3], vec![0.7]], &TrainConfig::unregularized()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let m = AeModel::init(&[sig(4, 2), sig(2, 4)], 4).unwrap();
        let x = vec![0.2, 0.4, 0.6, 0.8];
        let cfg = TrainConfig::default();
        let one = m.backprop_gradients(&[x.clone()], &cfg).unwrap().flatten();
        let two = m.backprop_gradients(&[x.clone(), x], &cfg).unwrap().flatten();
        for (a, b) in one.iter().zip(&two) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<Vec<f64>> = (0..50).map(|i| (0..8).map(|j| ((i * 7 + j * 3) % 11) as f64 / 10.0).collect()).collect();
        let cfg = TrainConfig { seed: 99, ..TrainConfig::default() };
        let m = AeModel::for_arch(Arch::Ae, 8, 3, 1).unwrap();
        let a = m.clone().train(&data, &cfg).unwrap();
        let b = m.train(&data, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let m = AeModel::for_arch(Arch::Ae, 2, 1, 1).unwrap();
        assert!(m.train(&[vec![0.0, 1.0]], &cfg).is_err());
    }

    #[test]
    fn training_on_constant_data_reduces_error() {
        let x: Vec<f64> = (0..10).map(|j| 0.1 + 0.08 * j as f64).collect();
        let data = vec![x.clone(); 200];
        let cfg = TrainConfig::unregularized().with_seed(3);
        let m = AeModel::for_arch(Arch::Ae, 10, 4, 3).unwrap();
        let before = m.batch_loss(&data, &cfg).unwrap();
        let trained = m.train(&data, &cfg).unwrap();
        let after = trained.batch_loss(&data, &cfg).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn train_rejects_dimension_mismatch() {
        let m = AeModel::for_arch(Arch::Ae, 3, 2, 1).unwrap();
        let r = m.train(&[vec![0.0; 3], vec![0.0; 4]], &TrainConfig::default());
        assert!(matches!(r, Err(Error::Input(_))));
    }
}
