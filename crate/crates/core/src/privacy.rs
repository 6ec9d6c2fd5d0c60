//! Gradient defenses (clipped Gaussian noise, non-unique gradients) and the
//! membership-inference attack used to score how much a model leaks about
//! its learners' training sets.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Sample};
use crate::error::{input, Result};
use crate::param::{per_sample_gradients, predict, sample_loss, sigmoid, ModelSpec, ParameterVector};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrivacyMode {
    #[default]
    None,
    GaussianNoise,
    NonUnique,
}

fn default_clip() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    #[serde(default)]
    pub mode: PrivacyMode,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// Noise multiplier; the per-coordinate noise std is `sigma * clip_norm`.
    #[serde(default)]
    pub sigma: f64,
    /// Weight kept on the unique gradient component.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            mode: PrivacyMode::None,
            clip_norm: default_clip(),
            sigma: 0.0,
            alpha: default_alpha(),
        }
    }
}

impl PrivacyConfig {
    pub fn gaussian(clip_norm: f64, sigma: f64) -> Self {
        Self {
            mode: PrivacyMode::GaussianNoise,
            clip_norm,
            sigma,
            ..Self::default()
        }
    }

    pub fn non_unique(alpha: f64) -> Self {
        Self {
            mode: PrivacyMode::NonUnique,
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PrivacyMode::None => Ok(()),
            PrivacyMode::GaussianNoise => {
                if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
                    return input(format!("clip norm {} must be positive", self.clip_norm));
                }
                if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
                    return input(format!("sigma {} must be non-negative", self.sigma));
                }
                Ok(())
            }
            PrivacyMode::NonUnique => {
                if !(0.0..1.0).contains(&self.alpha) {
                    return input(format!("alpha {} must lie in [0, 1)", self.alpha));
                }
                Ok(())
            }
        }
    }

    pub fn is_active(&self) -> bool {
        self.mode != PrivacyMode::None
    }
}

/// Applies the configured defense to one batch of per-sample gradients.
pub fn privatize<R: Rng + ?Sized>(
    gradients: &[ParameterVector],
    config: &PrivacyConfig,
    rng: &mut R,
) -> Result<Vec<ParameterVector>> {
    config.validate()?;
    match config.mode {
        PrivacyMode::None => Ok(gradients.to_vec()),
        PrivacyMode::GaussianNoise => clip_and_noise(gradients, config, rng),
        PrivacyMode::NonUnique => Ok(non_unique_gradients(gradients, config.alpha)?.gradients),
    }
}

/// Scales `g` by `min(1, clip_norm / |g|)`.
pub fn clip(g: &ParameterVector, clip_norm: f64) -> ParameterVector {
    let norm = g.norm();
    if norm <= clip_norm {
        g.clone()
    } else {
        g.scaled(clip_norm / norm)
    }
}

/// Clips every gradient to `clip_norm` and adds one shared noise vector
/// `N(0, (sigma * clip_norm)^2 I)`. Because the same draw is added to each
/// clipped gradient, the batch mean carries the noise exactly once.
pub fn clip_and_noise<R: Rng + ?Sized>(
    gradients: &[ParameterVector],
    config: &PrivacyConfig,
    rng: &mut R,
) -> Result<Vec<ParameterVector>> {
    if config.mode != PrivacyMode::GaussianNoise {
        return input("clip_and_noise requires gaussian-noise mode");
    }
    config.validate()?;
    let Some(first) = gradients.first() else {
        return input("gradient batch is empty");
    };
    for g in gradients {
        first.check_layout(g)?;
    }
    let std = config.sigma * config.clip_norm;
    let noise: Vec<f64> = if std > 0.0 {
        let normal = Normal::new(0.0, std).expect("valid std");
        (0..first.len()).map(|_| normal.sample(rng)).collect()
    } else {
        vec![0.0; first.len()]
    };
    Ok(gradients
        .iter()
        .map(|g| {
            let mut c = clip(g, config.clip_norm);
            c.values_mut().iter_mut().zip(&noise).for_each(|(v, n)| *v += n);
            c
        })
        .collect())
}

/// Split of one gradient into the part lying in the span of the other
/// gradients of its batch and the orthogonal remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub span: Vec<f64>,
    pub unique: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonUniqueOutput {
    pub gradients: Vec<ParameterVector>,
    /// Set when the batch has a single sample, so there is nothing to
    /// project onto and every output is `alpha * g`.
    pub span_empty: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative residual below which a vector is treated as linearly dependent
/// on the basis built so far.
const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the span of `vectors`, by modified Gram-Schmidt
/// with one reorthogonalization pass. Dependent vectors are skipped.
fn orthonormal_basis<'a>(vectors: impl Iterator<Item = &'a [f64]>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let original = dot(v, v).sqrt();
        if original == 0.0 {
            continue;
        }
        let mut r = v.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&r, q);
                r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&r, &r).sqrt();
        if norm > RANK_TOL * original {
            r.iter_mut().for_each(|x| *x /= norm);
            basis.push(r);
        }
    }
    basis
}

/// Decomposes `gradients[i]` against the span of the others.
pub fn decompose(gradients: &[ParameterVector], i: usize) -> Decomposition {
    let basis = orthonormal_basis(
        gradients
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, g)| g.values()),
    );
    let g = gradients[i].values();
    let mut unique = g.to_vec();
    for _ in 0..2 {
        for q in &basis {
            let c = dot(&unique, q);
            unique.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
    let span = g.iter().zip(&unique).map(|(a, b)| a - b).collect();
    Decomposition { span, unique }
}

/// Replaces each gradient with `span + alpha * unique`, down-weighting the
/// component no other sample in the batch shares.
pub fn non_unique_gradients(gradients: &[ParameterVector], alpha: f64) -> Result<NonUniqueOutput> {
    if !(0.0..=1.0).contains(&alpha) {
        return input(format!("alpha {alpha} must lie in [0, 1]"));
    }
    let Some(first) = gradients.first() else {
        return input("gradient batch is empty");
    };
    for g in gradients {
        first.check_layout(g)?;
    }
    let out = (0..gradients.len())
        .map(|i| {
            let d = decompose(gradients, i);
            let values = d.span.iter().zip(&d.unique).map(|(s, u)| s + alpha * u).collect();
            ParameterVector::from_parts_unchecked(values, first.layout().clone())
        })
        .collect();
    Ok(NonUniqueOutput {
        gradients: out,
        span_empty: gradients.len() == 1,
    })
}

/// Number of attack features per sample.
pub const ATTACK_FEATURES: usize = 3;

/// White-box membership features: per-sample loss, gradient norm and
/// absolute prediction error (probability error for classifiers).
pub fn attack_features(model: &ParameterVector, spec: &ModelSpec, sample: &Sample) -> Result<[f64; ATTACK_FEATURES]> {
    let grad = per_sample_gradients(model, spec, std::iter::once(sample))?;
    let out = predict(model, spec, &sample.features);
    let err = if spec.is_classifier() {
        (sigmoid(out) - sample.target).abs()
    } else {
        (out - sample.target).abs()
    };
    Ok([sample_loss(model, spec, sample), grad[0].norm(), err])
}

/// One learner's labelled membership set: samples it trained on and an
/// equal number it never saw.
#[derive(Debug, Clone)]
pub struct AttackDataset {
    members: Vec<Sample>,
    non_members: Vec<Sample>,
}

impl AttackDataset {
    pub fn new(members: Vec<Sample>, non_members: Vec<Sample>) -> Result<Self> {
        if members.len() != non_members.len() {
            return input(format!(
                "attack set is unbalanced: {} members vs {} non-members",
                members.len(),
                non_members.len()
            ));
        }
        if members.is_empty() {
            return input("attack set is empty");
        }
        Ok(Self { members, non_members })
    }

    /// Pairs the first `min(|train|, |held_out|)` samples of each.
    pub fn balanced(train: &LabeledDataset, held_out: &[Sample]) -> Result<Self> {
        let n = train.len().min(held_out.len());
        Self::new(train.samples()[..n].to_vec(), held_out[..n].to_vec())
    }

    pub fn members(&self) -> &[Sample] {
        &self.members
    }

    pub fn non_members(&self) -> &[Sample] {
        &self.non_members
    }

    pub fn len(&self) -> usize {
        self.members.len() + self.non_members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Feature rows with labels (1 = member).
    fn featurize(&self, model: &ParameterVector, spec: &ModelSpec) -> Result<Vec<([f64; ATTACK_FEATURES], f64)>> {
        let mut rows = Vec::with_capacity(self.len());
        for s in &self.members {
            rows.push((attack_features(model, spec, s)?, 1.0));
        }
        for s in &self.non_members {
            rows.push((attack_features(model, spec, s)?, 0.0));
        }
        Ok(rows)
    }
}

/// Logistic regression over standardized `log1p` attack features.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackClassifier {
    mean: [f64; ATTACK_FEATURES],
    std: [f64; ATTACK_FEATURES],
    weights: [f64; ATTACK_FEATURES],
    bias: f64,
}

/// Minimum members (and non-members) an attacker needs to train.
pub const MIN_ATTACK_SAMPLES: usize = 20;

const ATTACK_ITERS: usize = 500;
const ATTACK_LR: f64 = 0.5;

impl AttackClassifier {
    fn transform(&self, f: &[f64; ATTACK_FEATURES]) -> [f64; ATTACK_FEATURES] {
        std::array::from_fn(|i| (f[i].ln_1p() - self.mean[i]) / self.std[i])
    }

    /// Membership probability for raw attack features.
    pub fn score(&self, f: &[f64; ATTACK_FEATURES]) -> f64 {
        let x = self.transform(f);
        sigmoid(dot(&x, &self.weights) + self.bias)
    }

    /// Fraction of `set` classified correctly at threshold 0.5.
    pub fn accuracy(&self, model: &ParameterVector, spec: &ModelSpec, set: &AttackDataset) -> Result<f64> {
        let rows = set.featurize(model, spec)?;
        let correct = rows
            .iter()
            .filter(|(f, y)| (self.score(f) >= 0.5) == (*y == 1.0))
            .count();
        Ok(correct as f64 / rows.len() as f64)
    }
}

/// Fits an attacker on its own membership set against `model`. Full-batch
/// gradient descent from a seeded small random start.
pub fn train_attacker(model: &ParameterVector, spec: &ModelSpec, set: &AttackDataset, seed: u64) -> Result<AttackClassifier> {
    if set.members.len() < MIN_ATTACK_SAMPLES {
        return input(format!(
            "attacker needs at least {MIN_ATTACK_SAMPLES} members and non-members, has {}",
            set.members.len()
        ));
    }
    let rows = set.featurize(model, spec)?;
    let n = rows.len() as f64;
    let logs: Vec<[f64; ATTACK_FEATURES]> = rows.iter().map(|(f, _)| std::array::from_fn(|i| f[i].ln_1p())).collect();
    let mut mean = [0.0; ATTACK_FEATURES];
    let mut std = [0.0; ATTACK_FEATURES];
    for i in 0..ATTACK_FEATURES {
        mean[i] = logs.iter().map(|r| r[i]).sum::<f64>() / n;
        let var = logs.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / n;
        std[i] = if var > 1e-24 { var.sqrt() } else { 1.0 };
    }
    let xs: Vec<[f64; ATTACK_FEATURES]> = logs
        .iter()
        .map(|r| std::array::from_fn(|i| (r[i] - mean[i]) / std[i]))
        .collect();
    let mut rng = substream(seed, "attack.init", &[]);
    let init = Normal::new(0.0, 0.01).expect("valid std");
    let mut weights: [f64; ATTACK_FEATURES] = std::array::from_fn(|_| init.sample(&mut rng));
    let mut bias = 0.0;
    for _ in 0..ATTACK_ITERS {
        let mut gw = [0.0; ATTACK_FEATURES];
        let mut gb = 0.0;
        for (x, (_, y)) in xs.iter().zip(&rows) {
            let r = sigmoid(dot(x, &weights) + bias) - y;
            for i in 0..ATTACK_FEATURES {
                gw[i] += r * x[i];
            }
            gb += r;
        }
        for i in 0..ATTACK_FEATURES {
            weights[i] -= ATTACK_LR * gw[i] / n;
        }
        bias -= ATTACK_LR * gb / n;
    }
    Ok(AttackClassifier {
        mean,
        std,
        weights,
        bias,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VulnerabilityEntry {
    pub attacker: usize,
    pub target: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VulnerabilityReport {
    pub round: usize,
    /// Off-diagonal (attacker, target) accuracies in row-major order.
    pub entries: Vec<VulnerabilityEntry>,
    pub mean: f64,
}

impl VulnerabilityReport {
    /// CSV with columns `round,attacker,target,accuracy` and a final summary
    /// row whose attacker and target fields read `mean`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["round", "attacker", "target", "accuracy"])
            .map_err(csv_err)?;
        for e in &self.entries {
            out.write_record([
                self.round.to_string(),
                e.attacker.to_string(),
                e.target.to_string(),
                e.accuracy.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.write_record([self.round.to_string(), "mean".into(), "mean".into(), self.mean.to_string()])
            .map_err(csv_err)?;
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Format(e.to_string())
}

/// Every learner trains an attacker on its own membership set and is
/// scored on every other learner's set; the report averages the
/// `N * (N - 1)` off-diagonal accuracies.
pub fn vulnerability(
    model: &ParameterVector,
    spec: &ModelSpec,
    sets: &[AttackDataset],
    round: usize,
    seed: u64,
) -> Result<VulnerabilityReport> {
    let n = sets.len();
    if n < 2 {
        return input("vulnerability needs at least 2 learners");
    }
    let attackers: Vec<AttackClassifier> = (0..n)
        .into_par_iter()
        .map(|k| train_attacker(model, spec, &sets[k], crate::rng::subseed(seed, "attacker", &[k as u64, round as u64])))
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&t| t != a).map(move |t| (a, t))).collect();
    let entries: Vec<VulnerabilityEntry> = pairs
        .into_par_iter()
        .map(|(a, t)| {
            Ok(VulnerabilityEntry {
                attacker: a,
                target: t,
                accuracy: attackers[a].accuracy(model, spec, &sets[t])?,
            })
        })
        .collect::<Result<_>>()?;
    let mean = entries.iter().map(|e| e.accuracy).sum::<f64>() / entries.len() as f64;
    Ok(VulnerabilityReport { round, entries, mean })
}
