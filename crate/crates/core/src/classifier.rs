//! Fully connected ReLU network with a softmax output, trained from scratch
//! with mini-batch gradient descent on cross-entropy.
//!
//! Parameters live in one flat buffer: for each layer, the row-major
//! `out x in` weight matrix followed by the bias vector. Inputs are z-scored
//! with per-dimension statistics that only [`train`] can fit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::par::{self, ExecMode};

pub const HIDDEN_LAYERS: usize = 6;
pub const HIDDEN_WIDTH: usize = 32;
pub const DEFAULT_CLASS_COUNT: usize = 10;

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPosterior {
    probs: Vec<f64>,
}

impl ClassPosterior {
    /// Accepts vectors with entries in [0, 1] summing to 1 within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidPosterior("needs at least two classes".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidPosterior(format!("entry outside [0, 1] in {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPosterior(format!("entries sum to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// 0-based index of the most probable class, lowest index on ties.
    pub fn argmax(&self) -> usize {
        crate::fusion::argmax(&self.probs).expect("posterior has a finite entry")
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Standardization {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardization {
    fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    fn fit(rows: &[&[f64]], dim: usize) -> Self {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                // constant dimensions pass through centred but unscaled
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.std)
                .map(|((v, m), s)| (v - m) / s),
        );
    }
}

/// A trained or freshly initialized network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    params: Vec<f64>,
    standardization: Standardization,
    feature_layout: String,
}

/// Per-layer activations of one forward pass; `acts[0]` is the standardized
/// input and `acts[L]` the logits.
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Six hidden layers of 32 units between `input_dim` and `class_count`.
    pub fn init(input_dim: usize, class_count: usize, seed: u64) -> Result<Self> {
        Self::init_with_hidden(input_dim, &[HIDDEN_WIDTH; HIDDEN_LAYERS], class_count, seed)
    }

    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn init_with_hidden(input_dim: usize, hidden: &[usize], class_count: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(input_dim, hidden, class_count)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for l in 0..model.layer_count() {
            let (fan_in, fan_out) = (model.layer_dims[l], model.layer_dims[l + 1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for w in &mut model.params[offset..offset + fan_in * fan_out] {
                *w = normal.sample(&mut rng);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(model)
    }

    /// A model with every parameter zero.
    pub fn zeros(input_dim: usize, hidden: &[usize], class_count: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidModel("input_dim must be positive".into()));
        }
        if class_count < 2 {
            return Err(Error::InvalidModel("class_count must be at least 2".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidModel("hidden layer widths must be positive".into()));
        }
        let mut layer_dims = vec![input_dim];
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(class_count);
        let count = layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            layer_dims,
            params: vec![0.0; count],
            standardization: Standardization::identity(input_dim),
            feature_layout: String::new(),
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_dims.last().expect("at least two layer dims")
    }

    fn layer_count(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Flat parameter buffer: per layer, row-major weights then biases.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn feature_layout(&self) -> &str {
        &self.feature_layout
    }

    /// Tags the model with the feature layout signature it expects.
    pub fn with_feature_layout(mut self, layout: impl Into<String>) -> Self {
        self.feature_layout = layout.into();
        self
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        // (weight offset, bias offset, fan_in, fan_out)
        let mut offset = 0;
        self.layer_dims.windows(2).map(move |w| {
            let (i, o) = (w[0], w[1]);
            let wo = offset;
            offset += i * o + o;
            (wo, wo + i * o, i, o)
        })
    }

    fn trace(&self, standardized: Vec<f64>) -> Trace {
        let mut acts = Vec::with_capacity(self.layer_dims.len());
        acts.push(standardized);
        let last = self.layer_count() - 1;
        for (l, (wo, bo, fan_in, fan_out)) in self.layer_offsets().enumerate() {
            let input = &acts[l];
            let weights = &self.params[wo..bo];
            let biases = &self.params[bo..bo + fan_out];
            let out: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(biases)
                .map(|(row, b)| {
                    let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        Trace { acts }
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.standardization.apply(x, &mut out);
        out
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Output-layer logits for one feature vector.
    pub fn logits(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        self.check_input(features.as_slice())?;
        let trace = self.trace(self.standardize(features.as_slice()));
        Ok(trace.acts.into_iter().last().expect("logits"))
    }

    pub fn forward(&self, features: &FeatureVector) -> Result<ClassPosterior> {
        Ok(softmax_posterior(&self.logits(features)?))
    }

    pub fn forward_batch(&self, mode: ExecMode, features: &[FeatureVector]) -> Result<Vec<ClassPosterior>> {
        par::try_map(mode, features, |f| self.forward(f))
    }

    /// Cross-entropy of one standardized sample, and optionally its gradient
    /// accumulated into `grad`.
    fn loss_and_grad(&self, x_std: &[f64], label_idx: usize, grad: Option<&mut [f64]>) -> f64 {
        let trace = self.trace(x_std.to_vec());
        let logits = trace.acts.last().expect("logits");
        let probs = softmax(logits);
        let loss = log_sum_exp(logits) - logits[label_idx];
        if let Some(grad) = grad {
            self.backward(&trace, &probs, label_idx, grad);
        }
        loss
    }

    fn backward(&self, trace: &Trace, probs: &[f64], label_idx: usize, grad: &mut [f64]) {
        let offsets: Vec<_> = self.layer_offsets().collect();
        let mut delta: Vec<f64> = probs.to_vec();
        delta[label_idx] -= 1.0;
        for l in (0..self.layer_count()).rev() {
            let (wo, bo, fan_in, fan_out) = offsets[l];
            let input = &trace.acts[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[wo + o * fan_in..wo + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[bo + o] += d;
            }
            if l > 0 {
                let weights = &self.params[wo..bo];
                let mut prev = vec![0.0; fan_in];
                for (o, row) in weights.chunks_exact(fan_in).enumerate() {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                // ReLU derivative, taken as 0 at 0
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }

    /// ReLU on/off pattern of every hidden unit.
    fn activation_mask(&self, x_std: &[f64]) -> Vec<bool> {
        let trace = self.trace(x_std.to_vec());
        let hidden = &trace.acts[1..trace.acts.len() - 1];
        hidden.iter().flatten().map(|&a| a > 0.0).collect()
    }

    /// Writes the model as JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, writer: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(writer, &ModelFile::from(self))?;
        Ok(())
    }

    /// Loads a model and checks that it was trained on `expected_layout`.
    pub fn load(path: impl AsRef<Path>, expected_layout: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), expected_layout)
    }

    pub fn read_from(reader: impl std::io::Read, expected_layout: Option<&str>) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(reader)?;
        let model = file.into_model()?;
        if let Some(expected) = expected_layout {
            if model.feature_layout != expected {
                return Err(Error::LayoutMismatch {
                    expected: model.feature_layout.clone(),
                    actual: expected.to_string(),
                });
            }
        }
        Ok(model)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Max-subtracted softmax of a logit vector.
pub fn softmax_posterior(logits: &[f64]) -> ClassPosterior {
    ClassPosterior {
        probs: softmax(logits),
    }
}

const MODEL_FORMAT: &str = "myowave-mlp/1";

#[derive(Serialize, Deserialize)]
struct LayerFile {
    fan_in: usize,
    fan_out: usize,
    /// Row-major `fan_out x fan_in`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    feature_layout: String,
    layer_dims: Vec<usize>,
    hidden_activation: String,
    output_activation: String,
    standardization_mean: Vec<f64>,
    standardization_std: Vec<f64>,
    layers: Vec<LayerFile>,
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        let layers = m
            .layer_offsets()
            .map(|(wo, bo, fan_in, fan_out)| LayerFile {
                fan_in,
                fan_out,
                weights: m.params[wo..bo].to_vec(),
                biases: m.params[bo..bo + fan_out].to_vec(),
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.into(),
            feature_layout: m.feature_layout.clone(),
            layer_dims: m.layer_dims.clone(),
            hidden_activation: "relu".into(),
            output_activation: "softmax".into(),
            standardization_mean: m.standardization.mean.clone(),
            standardization_std: m.standardization.std.clone(),
            layers,
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<MlpModel> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if self.format != MODEL_FORMAT {
            return bad(format!("unsupported format `{}`", self.format));
        }
        if self.hidden_activation != "relu" || self.output_activation != "softmax" {
            return bad("only relu hidden layers with a softmax output are supported".into());
        }
        let dims = &self.layer_dims;
        if dims.len() < 2 || dims.contains(&0) {
            return bad(format!("invalid layer dims {dims:?}"));
        }
        let input_dim = dims[0];
        let mut model = MlpModel::zeros(input_dim, &dims[1..dims.len() - 1], dims[dims.len() - 1])?;
        if self.layers.len() != dims.len() - 1 {
            return bad("layer count does not match layer dims".into());
        }
        let mut params = Vec::with_capacity(model.params.len());
        for (l, layer) in self.layers.into_iter().enumerate() {
            if layer.fan_in != dims[l]
                || layer.fan_out != dims[l + 1]
                || layer.weights.len() != dims[l] * dims[l + 1]
                || layer.biases.len() != dims[l + 1]
            {
                return bad(format!("layer {} has inconsistent shapes", l + 1));
            }
            params.extend(layer.weights);
            params.extend(layer.biases);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if self.standardization_mean.len() != input_dim
            || self.standardization_std.len() != input_dim
            || self.standardization_std.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.standardization_mean.iter().any(|m| !m.is_finite())
        {
            return bad("invalid standardization vectors".into());
        }
        model.params = params;
        model.standardization = Standardization {
            mean: self.standardization_mean,
            std: self.standardization_std,
        };
        model.feature_layout = self.feature_layout;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Epochs without held-out improvement before stopping; 0 disables
    /// early stopping and the held-out split.
    pub patience: usize,
    /// Fraction of each class held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            patience: 30,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTrainConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a non-negative finite number");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean training loss of each completed epoch.
    pub loss_history: Vec<f64>,
    /// Held-out loss of each completed epoch; empty without early stopping.
    pub validation_history: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Fits the input standardization on `data` and trains the network.
///
/// The examples are first put into a canonical order (label, then feature
/// values), so the result depends on the set of examples and the seed but not
/// on the order they were passed in.
pub fn train(model: MlpModel, data: &[(FeatureVector, usize)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = model;
    let classes = model.class_count();
    let dim = model.input_dim();
    let mut seen = vec![false; classes];
    for (fv, label) in data {
        model.check_input(fv.as_slice())?;
        if *label == 0 || *label > classes {
            return Err(Error::LabelOutOfRange {
                label: *label,
                class_count: classes,
            });
        }
        seen[label - 1] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingClass(missing + 1));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        data[a].1.cmp(&data[b].1).then_with(|| {
            let (x, y) = (data[a].0.as_slice(), data[b].0.as_slice());
            x.iter()
                .zip(y)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let rows: Vec<&[f64]> = order.iter().map(|&i| data[i].0.as_slice()).collect();
    model.standardization = Standardization::fit(&rows, dim);
    let examples: Vec<(Vec<f64>, usize)> = order
        .iter()
        .map(|&i| (model.standardize(data[i].0.as_slice()), data[i].1 - 1))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut train_idx, val_idx) = holdout(&examples, classes, cfg, &mut rng);

    let mut grad = vec![0.0; model.params.len()];
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut validation_history = Vec::new();
    let mut best = (f64::INFINITY, model.params.clone(), 0usize);

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (x, y) = &examples[i];
                epoch_loss += model.loss_and_grad(x, *y, Some(&mut grad));
            }
            let step = cfg.learning_rate / batch.len() as f64;
            if step != 0.0 {
                for (p, g) in model.params.iter_mut().zip(&grad) {
                    *p -= step * g;
                }
            }
        }
        let mean_loss = epoch_loss / train_idx.len() as f64;
        if !mean_loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged(epoch));
        }
        loss_history.push(mean_loss);

        if val_idx.is_empty() {
            best = (mean_loss, Vec::new(), epoch);
            continue;
        }
        let val_loss = val_idx
            .iter()
            .map(|&i| model.loss_and_grad(&examples[i].0, examples[i].1, None))
            .sum::<f64>()
            / val_idx.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        validation_history.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, model.params.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            log::debug!("early stop at epoch {epoch}, best epoch {}", best.2);
            break;
        }
    }
    if !val_idx.is_empty() && best.2 > 0 {
        model.params = best.1;
    }
    Ok(TrainOutcome {
        model,
        loss_history,
        validation_history,
        best_epoch: best.2,
    })
}

/// Splits example indices into (train, held-out). The held-out set takes a
/// fraction of every class, leaving at least one example per class for
/// training.
fn holdout(
    examples: &[(Vec<f64>, usize)],
    classes: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    if cfg.patience == 0 || cfg.validation_fraction == 0.0 {
        return ((0..examples.len()).collect(), Vec::new());
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..classes {
        let mut members: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].1 == c).collect();
        members.shuffle(rng);
        let k = ((members.len() as f64 * cfg.validation_fraction).round() as usize).min(members.len() - 1);
        val.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Result of comparing backpropagated gradients to finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Parameters compared.
    pub checked: usize,
    /// Parameters passed over because a perturbation flipped a ReLU unit.
    pub skipped_at_kinks: usize,
}

/// Step of the central differences.
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
const MIN_CHECKED: usize = 200;

/// Compares the analytic cross-entropy gradient with central finite
/// differences on a seeded random subset of at least 200 parameters (or all,
/// if fewer). Parameters whose `±step` perturbation changes the on/off
/// pattern of any ReLU unit are skipped: the loss is not differentiable
/// across that kink, so the finite difference says nothing about backprop.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-7)`.
pub fn gradient_check(model: &MlpModel, sample: (&FeatureVector, usize), seed: u64) -> Result<GradientCheck> {
    let (fv, label) = sample;
    model.check_input(fv.as_slice())?;
    if label == 0 || label > model.class_count() {
        return Err(Error::LabelOutOfRange {
            label,
            class_count: model.class_count(),
        });
    }
    let x = model.standardize(fv.as_slice());
    let y = label - 1;
    let mut analytic = vec![0.0; model.params.len()];
    model.loss_and_grad(&x, y, Some(&mut analytic));
    let base_mask = model.activation_mask(&x);

    let mut candidates: Vec<usize> = (0..model.params.len()).collect();
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut probe = model.clone();
    let mut report = GradientCheck {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
    };
    for &i in &candidates {
        if report.checked >= MIN_CHECKED {
            break;
        }
        let original = probe.params[i];
        probe.params[i] = original + GRADIENT_CHECK_STEP;
        let plus_mask = probe.activation_mask(&x);
        let plus = probe.loss_and_grad(&x, y, None);
        probe.params[i] = original - GRADIENT_CHECK_STEP;
        let minus_mask = probe.activation_mask(&x);
        let minus = probe.loss_and_grad(&x, y, None);
        probe.params[i] = original;
        if plus_mask != base_mask || minus_mask != base_mask {
            report.skipped_at_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * GRADIENT_CHECK_STEP);
        let a = analytic[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(1e-7);
        report.max_absolute_error = report.max_absolute_error.max(abs);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn fv(v: Vec<f64>) -> FeatureVector {
        FeatureVector::new(v).unwrap()
    }

    fn random_input(dim: usize, seed: u64) -> FeatureVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fv((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
    }

    #[test]
    fn default_architecture() {
        let m = MlpModel::init(102, 10, 1).unwrap();
        assert_eq!(m.layer_dims(), &[102, 32, 32, 32, 32, 32, 32, 10]);
        assert_eq!(m.param_count(), 102 * 32 + 32 + 5 * (32 * 32 + 32) + 32 * 10 + 10);
        assert_eq!(MlpModel::init(102, 10, 1).unwrap(), m);
        assert_ne!(MlpModel::init(102, 10, 2).unwrap(), m);
        assert!(MlpModel::init(0, 10, 1).is_err());
        assert!(MlpModel::init(5, 1, 1).is_err());
    }

    #[test]
    fn init_is_he_scaled_with_zero_biases() {
        let m = MlpModel::init(400, 10, 3).unwrap();
        let (wo, bo, fan_in, fan_out) = m.layer_offsets().next().unwrap();
        let w = &m.params[wo..bo];
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / fan_in as f64).abs() < 0.1 * 2.0 / fan_in as f64, "{var}");
        assert!(m.params[bo..bo + fan_out].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(102, &[32; 6], 10).unwrap();
        let p = m.forward(&random_input(102, 0)).unwrap();
        for &v in p.probs() {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn posterior_sums_to_one() {
        let m = MlpModel::init(20, 10, 5).unwrap();
        for s in 0..50 {
            let p = m.forward(&random_input(20, s)).unwrap();
            let total: f64 = p.probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(p.probs().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let z = vec![1.0, -2.0, 0.5, 3.0];
        let a = softmax_posterior(&z);
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.456).collect();
        let b = softmax_posterior(&shifted);
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-12);
        }
        let big = softmax_posterior(&[1000.0, 0.0]);
        assert!(big.probs()[0].is_finite() && big.probs()[0] > 0.999);
    }

    #[test]
    fn dimension_mismatch() {
        let m = MlpModel::init(10, 3, 0).unwrap();
        match m.forward(&random_input(9, 0)) {
            Err(Error::DimensionMismatch { expected, actual }) => assert_eq!((expected, actual), (10, 9)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn posterior_validation() {
        assert!(ClassPosterior::new(vec![0.5, 0.6]).is_err());
        assert!(ClassPosterior::new(vec![1.2, -0.2]).is_err());
        assert!(ClassPosterior::new(vec![1.0]).is_err());
        assert_eq!(ClassPosterior::new(vec![0.25, 0.5, 0.25]).unwrap().argmax(), 1);
    }

    fn toy_separable(n: usize, seed: u64) -> Vec<(FeatureVector, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| loop {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                let margin = x + 0.5 * y;
                if margin.abs() > 0.1 {
                    break (fv(vec![x, y]), if margin > 0.0 { 1 } else { 2 });
                }
            })
            .collect()
    }

    fn accuracy(m: &MlpModel, data: &[(FeatureVector, usize)]) -> f64 {
        let hits = data
            .iter()
            .filter(|(x, y)| m.forward(x).unwrap().argmax() + 1 == *y)
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn learns_linearly_separable_toy_set() {
        let data = toy_separable(200, 11);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 0.05,
            seed: 4,
            patience: 0,
            ..TrainConfig::default()
        };
        let out = train(MlpModel::init(2, 2, 9).unwrap(), &data, &cfg).unwrap();
        assert_eq!(accuracy(&out.model, &data), 1.0);
        assert_eq!(out.loss_history.len(), 200);
        assert!(out.loss_history.last().unwrap() < &out.loss_history[0]);
    }

    #[test]
    fn loss_is_non_increasing_on_separable_set_at_small_step() {
        let data = toy_separable(200, 3);
        let cfg = TrainConfig {
            epochs: 100,
            batch_size: 200,
            learning_rate: 0.01,
            seed: 1,
            patience: 0,
            ..TrainConfig::default()
        };
        let out = train(MlpModel::init(2, 2, 2).unwrap(), &data, &cfg).unwrap();
        for w in out.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = toy_separable(50, 0);
        let m = MlpModel::init(2, 2, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train(m.clone(), &data, &cfg).unwrap();
        assert_eq!(out.model.params(), m.params());
    }

    #[test]
    fn training_is_deterministic_and_order_independent() {
        let data = toy_separable(120, 5);
        let cfg = TrainConfig {
            epochs: 20,
            learning_rate: 0.02,
            seed: 77,
            patience: 5,
            ..TrainConfig::default()
        };
        let a = train(MlpModel::init(2, 2, 1).unwrap(), &data, &cfg).unwrap();
        let b = train(MlpModel::init(2, 2, 1).unwrap(), &data, &cfg).unwrap();
        assert_eq!(a, b);
        let mut reversed = data.clone();
        reversed.reverse();
        let c = train(MlpModel::init(2, 2, 1).unwrap(), &reversed, &cfg).unwrap();
        assert_eq!(a.model.params(), c.model.params());
    }

    #[test]
    fn training_errors() {
        let m = MlpModel::init(2, 3, 0).unwrap();
        let data = toy_separable(20, 0);
        assert!(matches!(
            train(m.clone(), &data, &TrainConfig::default()),
            Err(Error::MissingClass(3))
        ));
        let mut bad = data.clone();
        bad[0].1 = 4;
        assert!(matches!(
            train(m.clone(), &bad, &TrainConfig::default()),
            Err(Error::LabelOutOfRange { .. })
        ));
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(m.clone(), &data, &cfg).is_err());

        let mut data3 = toy_separable(30, 1);
        data3.push((fv(vec![0.0, 0.0]), 3));
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(m, &data3, &cfg), Err(Error::Diverged(_))));
    }

    #[test]
    fn gradient_check_fresh_model() {
        let m = MlpModel::init(102, 10, 21).unwrap();
        let x = random_input(102, 8);
        let r = gradient_check(&m, (&x, 4), 3).unwrap();
        assert!(r.checked >= 200);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
        assert_eq!(gradient_check(&m, (&x, 4), 3).unwrap(), r);
    }

    #[test]
    fn gradient_check_zero_model() {
        let m = MlpModel::zeros(102, &[32; 6], 10).unwrap();
        let x = random_input(102, 1);
        let r = gradient_check(&m, (&x, 2), 0).unwrap();
        assert!(r.checked >= 200, "{r:?}");
        assert!(r.max_absolute_error < 1e-6, "{r:?}");
    }

    #[test]
    fn model_file_round_trip_and_layout_check() {
        let m = MlpModel::init(6, 3, 2).unwrap().with_feature_layout("a,b,c,d,e,f");
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = MlpModel::read_from(buf.as_slice(), Some("a,b,c,d,e,f")).unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            MlpModel::read_from(buf.as_slice(), Some("x")),
            Err(Error::LayoutMismatch { .. })
        ));
        let text = String::from_utf8(buf).unwrap().replace("\"relu\"", "\"tanh\"");
        assert!(MlpModel::read_from(text.as_bytes(), None).is_err());
    }
}
