//! Flat model parameters, analytic per-sample gradients for the desk-scale
//! model family, and local mini-batch SGD.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Sample};
use crate::error::{input, Error, Result};
use crate::privacy::{self, PrivacyConfig};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerShape {
    pub fn new(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered layer shapes describing how the flat parameter sequence is split.
#[derive(Debug, Clone, Eq)]
pub struct Layout(Arc<Vec<LayerShape>>);

impl PartialEq for Layout {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Layout {
    pub fn new(layers: Vec<LayerShape>) -> Self {
        Self(Arc::new(layers))
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.0
    }

    pub fn total_len(&self) -> usize {
        self.0.iter().map(LayerShape::len).sum()
    }

    /// Stable textual form, used for digests in model files.
    pub fn describe(&self) -> String {
        self.0
            .iter()
            .map(|l| {
                let dims: Vec<String> = l.shape.iter().map(|d| d.to_string()).collect();
                format!("{}:{}", l.name, dims.join("x"))
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::Dimension {
                expected: layout.total_len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return input(format!("parameter {i} is not finite"));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        Self {
            values: vec![0.0; layout.total_len()],
            layout,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn from_parts_unchecked(values: Vec<f64>, layout: Layout) -> Self {
        debug_assert_eq!(values.len(), layout.total_len());
        Self { values, layout }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_parts_unchecked(self.values.iter().map(|v| v * c).collect(), self.layout.clone())
    }

    pub fn check_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearRegression,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// `(pred - y)^2 / 2`
    MeanSquaredError,
    /// Logistic loss on a raw logit.
    BinaryCrossEntropy,
}

fn default_true() -> bool {
    true
}

/// Desk-scale model family: linear regression or a one-hidden-layer tanh MLP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    pub loss: Loss,
    /// Intercept term for linear models; MLP layers always carry biases.
    #[serde(default = "default_true")]
    pub bias: bool,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, loss: Loss) -> Self {
        Self {
            kind: ModelKind::LinearRegression,
            input_dim,
            hidden_dim: None,
            loss,
            bias: true,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, loss: Loss) -> Self {
        Self {
            kind: ModelKind::Mlp,
            input_dim,
            hidden_dim: Some(hidden_dim),
            loss,
            bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return input("input dimension must be positive");
        }
        match (self.kind, self.hidden_dim) {
            (ModelKind::Mlp, None) | (ModelKind::Mlp, Some(0)) => input("mlp needs a positive hidden dimension"),
            _ => Ok(()),
        }
    }

    pub fn layout(&self) -> Layout {
        let d = self.input_dim;
        let layers = match self.kind {
            ModelKind::LinearRegression => {
                let mut v = vec![LayerShape::new("weight", &[1, d])];
                if self.bias {
                    v.push(LayerShape::new("bias", &[1]));
                }
                v
            }
            ModelKind::Mlp => {
                let h = self.hidden_dim.unwrap_or(0);
                vec![
                    LayerShape::new("hidden.weight", &[h, d]),
                    LayerShape::new("hidden.bias", &[h]),
                    LayerShape::new("output.weight", &[1, h]),
                    LayerShape::new("output.bias", &[1]),
                ]
            }
        };
        Layout::new(layers)
    }

    /// Total parameter count M.
    pub fn parameter_count(&self) -> usize {
        self.layout().total_len()
    }

    pub fn is_classifier(&self) -> bool {
        self.loss == Loss::BinaryCrossEntropy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_per_round: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 8,
            epochs_per_round: 4,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return input("learning rate must be a non-negative finite number");
        }
        if self.batch_size == 0 {
            return input("batch size must be at least 1");
        }
        Ok(())
    }

    pub fn batches_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch_size)
    }
}

/// Random initialization: small Gaussian weights for linear models, Xavier
/// uniform for MLP layers, zero biases.
pub fn init_model<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<ParameterVector> {
    spec.validate()?;
    let layout = spec.layout();
    let mut values = vec![0.0; layout.total_len()];
    match spec.kind {
        ModelKind::LinearRegression => {
            let normal = Normal::new(0.0, 0.01).expect("valid std");
            for v in values.iter_mut().take(spec.input_dim) {
                *v = normal.sample(rng);
            }
        }
        ModelKind::Mlp => {
            let d = spec.input_dim;
            let h = spec.hidden_dim.unwrap_or(0);
            let a1 = (6.0 / (d + h) as f64).sqrt();
            let u1 = Uniform::new_inclusive(-a1, a1).expect("valid range");
            for v in values.iter_mut().take(h * d) {
                *v = u1.sample(rng);
            }
            let a2 = (6.0 / (h + 1) as f64).sqrt();
            let u2 = Uniform::new_inclusive(-a2, a2).expect("valid range");
            let start = h * d + h;
            for v in values[start..start + h].iter_mut() {
                *v = u2.sample(rng);
            }
        }
    }
    Ok(ParameterVector::from_parts_unchecked(values, layout))
}

fn check_model(model: &ParameterVector, spec: &ModelSpec) -> Result<()> {
    if model.layout != spec.layout() {
        return Err(Error::LayoutMismatch);
    }
    Ok(())
}

fn check_sample(sample: &Sample, spec: &ModelSpec) -> Result<()> {
    if sample.features.len() != spec.input_dim {
        return Err(Error::Dimension {
            expected: spec.input_dim,
            got: sample.features.len(),
        });
    }
    Ok(())
}

/// Raw model output: the regression value or the classifier logit.
pub fn predict(model: &ParameterVector, spec: &ModelSpec, features: &[f64]) -> f64 {
    let w = &model.values;
    let d = spec.input_dim;
    match spec.kind {
        ModelKind::LinearRegression => {
            let z: f64 = w[..d].iter().zip(features).map(|(a, b)| a * b).sum();
            if spec.bias {
                z + w[d]
            } else {
                z
            }
        }
        ModelKind::Mlp => {
            let h = spec.hidden_dim.unwrap_or(0);
            let (w1, rest) = w.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(h);
            let mut out = b2[0];
            for j in 0..h {
                let a: f64 = w1[j * d..(j + 1) * d].iter().zip(features).map(|(x, y)| x * y).sum::<f64>() + b1[j];
                out += w2[j] * a.tanh();
            }
            out
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample loss given the raw output.
pub fn loss_value(loss: Loss, output: f64, target: f64) -> f64 {
    match loss {
        Loss::MeanSquaredError => 0.5 * (output - target).powi(2),
        Loss::BinaryCrossEntropy => output.max(0.0) - output * target + (-output.abs()).exp().ln_1p(),
    }
}

/// dLoss/dOutput.
fn loss_derivative(loss: Loss, output: f64, target: f64) -> f64 {
    match loss {
        Loss::MeanSquaredError => output - target,
        Loss::BinaryCrossEntropy => sigmoid(output) - target,
    }
}

/// Accumulates `scale * grad(sample)` into `out`; returns the sample loss.
fn accumulate_gradient(model: &[f64], spec: &ModelSpec, sample: &Sample, out: &mut [f64]) -> f64 {
    let d = spec.input_dim;
    let x = &sample.features;
    match spec.kind {
        ModelKind::LinearRegression => {
            let mut z: f64 = model[..d].iter().zip(x).map(|(a, b)| a * b).sum();
            if spec.bias {
                z += model[d];
            }
            let delta = loss_derivative(spec.loss, z, sample.target);
            for (g, xi) in out[..d].iter_mut().zip(x) {
                *g += delta * xi;
            }
            if spec.bias {
                out[d] += delta;
            }
            loss_value(spec.loss, z, sample.target)
        }
        ModelKind::Mlp => {
            let h = spec.hidden_dim.unwrap_or(0);
            let (w1, rest) = model.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(h);
            let mut act = vec![0.0; h];
            let mut z = b2[0];
            for j in 0..h {
                let pre: f64 = w1[j * d..(j + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b1[j];
                act[j] = pre.tanh();
                z += w2[j] * act[j];
            }
            let delta = loss_derivative(spec.loss, z, sample.target);
            let (gw1, grest) = out.split_at_mut(h * d);
            let (gb1, grest) = grest.split_at_mut(h);
            let (gw2, gb2) = grest.split_at_mut(h);
            gb2[0] += delta;
            for j in 0..h {
                gw2[j] += delta * act[j];
                let dpre = delta * w2[j] * (1.0 - act[j] * act[j]);
                gb1[j] += dpre;
                for (g, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += dpre * xi;
                }
            }
            loss_value(spec.loss, z, sample.target)
        }
    }
}

/// One gradient per sample, each laid out like `model`.
pub fn per_sample_gradients<'a, I>(model: &ParameterVector, spec: &ModelSpec, batch: I) -> Result<Vec<ParameterVector>>
where
    I: IntoIterator<Item = &'a Sample>,
{
    check_model(model, spec)?;
    let mut out = Vec::new();
    for sample in batch {
        check_sample(sample, spec)?;
        let mut g = vec![0.0; model.len()];
        accumulate_gradient(&model.values, spec, sample, &mut g);
        out.push(ParameterVector::from_parts_unchecked(g, model.layout.clone()));
    }
    if out.is_empty() {
        return input("gradient batch is empty");
    }
    Ok(out)
}

pub fn sample_loss(model: &ParameterVector, spec: &ModelSpec, sample: &Sample) -> f64 {
    loss_value(spec.loss, predict(model, spec, &sample.features), sample.target)
}

pub fn mean_loss(model: &ParameterVector, spec: &ModelSpec, data: &LabeledDataset) -> f64 {
    let total: f64 = data.samples().iter().map(|s| sample_loss(model, spec, s)).sum();
    total / data.len() as f64
}

/// `model - lr * mean(gradients)`.
pub fn sgd_step(model: &ParameterVector, gradients: &[ParameterVector], config: &SgdConfig) -> Result<ParameterVector> {
    if gradients.is_empty() {
        return input("no gradients to apply");
    }
    let mut sum = vec![0.0; model.len()];
    for g in gradients {
        model.check_layout(g)?;
        for (s, v) in sum.iter_mut().zip(&g.values) {
            *s += v;
        }
    }
    Ok(apply_gradient_sum(model, &sum, gradients.len(), config.learning_rate))
}

fn apply_gradient_sum(model: &ParameterVector, sum: &[f64], count: usize, lr: f64) -> ParameterVector {
    let n = count as f64;
    let values = model.values.iter().zip(sum).map(|(w, s)| w - lr * (s / n)).collect();
    ParameterVector::from_parts_unchecked(values, model.layout.clone())
}

/// Result of a local training call.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTraining {
    pub model: ParameterVector,
    /// Mean training loss over the batches of each (possibly partial) epoch,
    /// measured before each step.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Runs `epochs_per_round` passes of shuffled mini-batch SGD.
pub fn local_train<R: Rng + ?Sized>(
    model: &ParameterVector,
    spec: &ModelSpec,
    dataset: &LabeledDataset,
    config: &SgdConfig,
    privacy: Option<&PrivacyConfig>,
    rng: &mut R,
) -> Result<LocalTraining> {
    config.validate()?;
    if dataset.is_empty() {
        return input("local dataset is empty");
    }
    let steps = config.epochs_per_round * config.batches_per_epoch(dataset.len());
    train_steps(model, spec, dataset, config, privacy, steps, rng)
}

/// Runs exactly `steps` mini-batch updates, reshuffling at each epoch
/// boundary. With `steps = epochs * batches_per_epoch` this is identical to
/// [`local_train`].
pub fn train_steps<R: Rng + ?Sized>(
    model: &ParameterVector,
    spec: &ModelSpec,
    dataset: &LabeledDataset,
    config: &SgdConfig,
    privacy: Option<&PrivacyConfig>,
    steps: usize,
    rng: &mut R,
) -> Result<LocalTraining> {
    config.validate()?;
    check_model(model, spec)?;
    if dataset.is_empty() {
        return input("local dataset is empty");
    }
    if let Some(s) = dataset.samples().first() {
        check_sample(s, spec)?;
    }
    if let Some(p) = privacy {
        p.validate()?;
    }
    let privacy = privacy.filter(|p| p.is_active());
    let samples = dataset.samples();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut current = model.clone();
    let mut epoch_losses = Vec::new();
    let mut done = 0;
    let mut sum = vec![0.0; model.len()];
    while done < steps {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in order.chunks(config.batch_size) {
            if done == steps {
                break;
            }
            match privacy {
                None => {
                    sum.iter_mut().for_each(|s| *s = 0.0);
                    for &i in batch {
                        loss_sum += accumulate_gradient(&current.values, spec, &samples[i], &mut sum);
                    }
                    current = apply_gradient_sum(&current, &sum, batch.len(), config.learning_rate);
                }
                Some(p) => {
                    for &i in batch {
                        loss_sum += sample_loss(&current, spec, &samples[i]);
                    }
                    let grads = per_sample_gradients(&current, spec, batch.iter().map(|&i| &samples[i]))?;
                    let private = privacy::privatize(&grads, p, rng)?;
                    current = sgd_step(&current, &private, config)?;
                }
            }
            loss_count += batch.len();
            done += 1;
        }
        epoch_losses.push(loss_sum / loss_count as f64);
    }
    if !current.is_finite() {
        return input("training diverged to non-finite parameters");
    }
    Ok(LocalTraining {
        model: current,
        epoch_losses,
        steps,
    })
}

/// Test-set quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    /// Mean absolute error of a regression model.
    Mae(f64),
    Classification { accuracy: f64, auc: f64 },
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mae(_) => "mae",
            Metric::Classification { .. } => "accuracy",
        }
    }

    /// MAE for regression, accuracy for classification.
    pub fn headline(&self) -> f64 {
        match *self {
            Metric::Mae(v) => v,
            Metric::Classification { accuracy, .. } => accuracy,
        }
    }
}

pub fn evaluate(model: &ParameterVector, spec: &ModelSpec, dataset: &LabeledDataset) -> Result<Metric> {
    check_model(model, spec)?;
    if dataset.is_empty() {
        return input("evaluation dataset is empty");
    }
    let outputs: Vec<f64> = dataset
        .samples()
        .iter()
        .map(|s| {
            check_sample(s, spec)?;
            Ok(predict(model, spec, &s.features))
        })
        .collect::<Result<_>>()?;
    Ok(metric_from_outputs(spec, &outputs, dataset.samples()))
}

pub(crate) fn metric_from_outputs(spec: &ModelSpec, outputs: &[f64], samples: &[Sample]) -> Metric {
    let n = samples.len() as f64;
    if spec.is_classifier() {
        let correct = outputs
            .iter()
            .zip(samples)
            .filter(|(z, s)| (**z >= 0.0) == (s.target >= 0.5))
            .count();
        Metric::Classification {
            accuracy: correct as f64 / n,
            auc: auc(outputs, samples),
        }
    } else {
        Metric::Mae(outputs.iter().zip(samples).map(|(z, s)| (z - s.target).abs()).sum::<f64>() / n)
    }
}

/// Rank-based ROC AUC with midranks for ties; 0.5 when a class is absent.
fn auc(scores: &[f64], samples: &[Sample]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let pos: Vec<usize> = (0..samples.len()).filter(|&k| samples[k].target >= 0.5).collect();
    let n_pos = pos.len() as f64;
    let n_neg = samples.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return 0.5;
    }
    let rank_sum: f64 = pos.iter().map(|&k| ranks[k]).sum();
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TargetKind;
    use crate::rng::substream;

    fn scalar_model(w: f64) -> (ParameterVector, ModelSpec) {
        let spec = ModelSpec {
            bias: false,
            ..ModelSpec::linear(1, Loss::MeanSquaredError)
        };
        (ParameterVector::new(vec![w], spec.layout()).unwrap(), spec)
    }

    fn sample(x: &[f64], y: f64) -> Sample {
        Sample::new(x.to_vec(), y)
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let (m, spec) = scalar_model(0.0);
        let g = per_sample_gradients(&m, &spec, &[sample(&[1.0], 0.0)]).unwrap();
        assert_eq!(g[0].values(), &[0.0]);
    }

    #[test]
    fn hand_differentiated_gradient() {
        // d/dw (wx - y)^2 / 2 = (wx - y) x = (2 - 0) * 2
        let (m, spec) = scalar_model(1.0);
        let g = per_sample_gradients(&m, &spec, &[sample(&[2.0], 0.0)]).unwrap();
        assert_eq!(g[0].values(), &[4.0]);
    }

    #[test]
    fn one_gradient_per_sample() {
        let spec = ModelSpec::mlp(3, 4, Loss::MeanSquaredError);
        let m = init_model(&spec, &mut substream(0, "init", &[])).unwrap();
        let batch: Vec<Sample> = (0..5).map(|i| sample(&[i as f64, 1.0, -1.0], 0.5)).collect();
        let g = per_sample_gradients(&m, &spec, &batch).unwrap();
        assert_eq!(g.len(), 5);
        assert!(g.iter().all(|v| v.layout() == m.layout()));
    }

    #[test]
    fn gradient_errors() {
        let (m, spec) = scalar_model(1.0);
        assert!(matches!(
            per_sample_gradients(&m, &spec, &[sample(&[1.0, 2.0], 0.0)]),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
        assert!(matches!(per_sample_gradients(&m, &spec, &[]), Err(Error::Input(_))));
    }

    #[test]
    fn sgd_step_examples() {
        let (m, _) = scalar_model(1.0);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            ..SgdConfig::default()
        };
        let g = ParameterVector::new(vec![1.0], m.layout().clone()).unwrap();
        assert!((sgd_step(&m, std::slice::from_ref(&g), &cfg).unwrap().values()[0] - 0.9).abs() < 1e-15);
        let zero = ParameterVector::zeros(m.layout().clone());
        assert_eq!(sgd_step(&m, &[zero], &cfg).unwrap(), m);
        let frozen = SgdConfig {
            learning_rate: 0.0,
            ..cfg
        };
        assert_eq!(sgd_step(&m, &[g], &frozen).unwrap(), m);
        assert!(matches!(sgd_step(&m, &[], &cfg), Err(Error::Input(_))));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let spec = ModelSpec::linear(1, Loss::MeanSquaredError);
        let data = LabeledDataset::new(
            (0..10).map(|i| sample(&[i as f64], 2.0 * i as f64)).collect(),
            TargetKind::Continuous,
        )
        .unwrap();
        let m = init_model(&spec, &mut substream(0, "init", &[])).unwrap();
        let cfg = SgdConfig {
            epochs_per_round: 0,
            ..SgdConfig::default()
        };
        let out = local_train(&m, &spec, &data, &cfg, None, &mut substream(0, "s", &[])).unwrap();
        assert_eq!(out.model, m);
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn linear_training_reduces_loss() {
        let spec = ModelSpec::linear(1, Loss::MeanSquaredError);
        let data = LabeledDataset::new(
            (0..40).map(|i| sample(&[i as f64 / 20.0 - 1.0], 3.0 * (i as f64 / 20.0 - 1.0) + 0.5)).collect(),
            TargetKind::Continuous,
        )
        .unwrap();
        let m = ParameterVector::zeros(spec.layout());
        let before = mean_loss(&m, &spec, &data);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            batch_size: 4,
            epochs_per_round: 50,
        };
        let out = local_train(&m, &spec, &data, &cfg, None, &mut substream(1, "s", &[])).unwrap();
        let after = mean_loss(&out.model, &spec, &data);
        assert!(after < before * 1e-3, "{before} -> {after}");
        assert_eq!(out.epoch_losses.len(), 50);
        assert!(out.epoch_losses.last().unwrap() < &out.epoch_losses[0]);
    }

    #[test]
    fn evaluate_examples() {
        let spec = ModelSpec::linear(1, Loss::MeanSquaredError);
        let data = LabeledDataset::new(vec![sample(&[1.0], 2.0), sample(&[3.0], 2.0)], TargetKind::Continuous).unwrap();
        let zero = ParameterVector::zeros(spec.layout());
        assert_eq!(evaluate(&zero, &spec, &data).unwrap(), Metric::Mae(2.0));
        let perfect = ParameterVector::new(vec![0.0, 2.0], spec.layout()).unwrap();
        assert_eq!(evaluate(&perfect, &spec, &data).unwrap(), Metric::Mae(0.0));

        let cls = ModelSpec::linear(1, Loss::BinaryCrossEntropy);
        let always_pos = ParameterVector::new(vec![0.0, 5.0], cls.layout()).unwrap();
        let labels = LabeledDataset::new(
            (0..10).map(|i| sample(&[i as f64], (i % 2) as f64)).collect(),
            TargetKind::Binary,
        )
        .unwrap();
        match evaluate(&always_pos, &cls, &labels).unwrap() {
            Metric::Classification { accuracy, auc } => {
                assert_eq!(accuracy, 0.5);
                assert_eq!(auc, 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        let empty = LabeledDataset::empty(TargetKind::Continuous);
        assert!(evaluate(&zero, &spec, &empty).is_err());
    }

    #[test]
    fn bce_loss_is_stable() {
        assert!((loss_value(Loss::BinaryCrossEntropy, 0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(loss_value(Loss::BinaryCrossEntropy, 800.0, 0.0).is_finite());
        assert!(loss_value(Loss::BinaryCrossEntropy, -800.0, 0.0) < 1e-300);
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(ModelSpec::linear(10, Loss::MeanSquaredError).parameter_count(), 11);
        assert_eq!(ModelSpec::mlp(10, 5, Loss::MeanSquaredError).parameter_count(), 61);
        assert!(ModelSpec {
            hidden_dim: None,
            ..ModelSpec::mlp(3, 2, Loss::MeanSquaredError)
        }
        .validate()
        .is_err());
    }
}
