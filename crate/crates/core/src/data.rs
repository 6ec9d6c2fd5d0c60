//! Synthetic datasets, stratified train/test splits and partitioning into
//! federated environments (Uniform/Skewed amounts x IID/Non-IID targets).
//!
//! # Dataset file format
//!
//! Plain text, one sample per line, comma separated: feature columns first,
//! the target last. A single header line precedes the samples:
//!
//! ```text
//! # fedsim-dataset v1 dim=<input-dim> kind=<continuous|binary>
//! 0.12,-1.3,...,61.7
//! ```
//!
//! Floats use the shortest representation that parses back to the same
//! value, so export followed by import is lossless.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::param::sigmoid;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, target: f64) -> Self {
        Self { features, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// Bounded, age-like regression target.
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Sample>,
    kind: TargetKind,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Sample>, kind: TargetKind) -> Result<Self> {
        if samples.is_empty() {
            return input("dataset must not be empty");
        }
        let dim = samples[0].features.len();
        if let Some(bad) = samples.iter().find(|s| s.features.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: bad.features.len(),
            });
        }
        Ok(Self { samples, kind })
    }

    /// The only way to get an empty dataset; used to exercise error paths.
    pub fn empty(kind: TargetKind) -> Self {
        Self { samples: Vec::new(), kind }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            kind: self.kind,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let kind = match self.kind {
            TargetKind::Continuous => "continuous",
            TargetKind::Binary => "binary",
        };
        writeln!(w, "# fedsim-dataset v1 dim={} kind={}", self.dim(), kind)?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            for f in &s.features {
                line.push_str(&f.to_string());
                line.push(',');
            }
            line.push_str(&s.target.to_string());
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("missing header".into()))??;
        let mut dim = None;
        let mut kind = None;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("#") || fields.next() != Some("fedsim-dataset") || fields.next() != Some("v1") {
            return Err(Error::Format(format!("unrecognized header: {header}")));
        }
        for f in fields {
            match f.split_once('=') {
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                Some(("kind", "continuous")) => kind = Some(TargetKind::Continuous),
                Some(("kind", "binary")) => kind = Some(TargetKind::Binary),
                _ => return Err(Error::Format(format!("unknown header field {f}"))),
            }
        }
        let (dim, kind) = match (dim, kind) {
            (Some(d), Some(k)) => (d, k),
            _ => return Err(Error::Format("header needs dim and kind".into())),
        };
        let mut samples = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 2)))?;
            if vals.len() != dim + 1 {
                return Err(Error::Format(format!(
                    "line {}: expected {} columns, found {}",
                    n + 2,
                    dim + 1,
                    vals.len()
                )));
            }
            let (features, target) = vals.split_at(dim);
            samples.push(Sample::new(features.to_vec(), target[0]));
        }
        Self::new(samples, kind)
    }
}

/// Shape of the synthetic task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub input_dim: usize,
    pub target_kind: TargetKind,
    /// Inclusive bounds for continuous targets.
    pub target_range: (f64, f64),
    /// Standard deviation of the noiseless target signal.
    pub signal_std: f64,
    /// Additive Gaussian noise on continuous targets.
    pub noise_std: f64,
    /// Standard deviation of each feature.
    pub feature_std: f64,
}

impl SyntheticConfig {
    pub fn new(input_dim: usize, target_kind: TargetKind) -> Self {
        Self {
            input_dim,
            target_kind,
            target_range: (45.0, 80.0),
            signal_std: 5.0,
            noise_std: 2.5,
            feature_std: 1.0,
        }
    }
}

/// Convenience wrapper over [`generate`] with default task shape.
pub fn generate_synthetic(seed: u64, n: usize, input_dim: usize, target_kind: TargetKind) -> Result<LabeledDataset> {
    generate(seed, n, &SyntheticConfig::new(input_dim, target_kind))
}

/// Features are i.i.d. Gaussian. Continuous targets are
/// `mid + signal_std * <beta, x> / feature_std + noise`, clamped to the
/// configured range; binary targets are Bernoulli draws of
/// `sigmoid(2 * <beta, x> / feature_std)`. `beta` is a unit vector fixed by
/// the seed.
pub fn generate(seed: u64, n: usize, cfg: &SyntheticConfig) -> Result<LabeledDataset> {
    if n < 10 {
        return input(format!("synthetic dataset needs at least 10 samples, got {n}"));
    }
    if cfg.input_dim == 0 {
        return input("input dimension must be positive");
    }
    let (lo, hi) = cfg.target_range;
    if !(lo < hi) {
        return input("target range must satisfy lo < hi");
    }
    if !(cfg.feature_std > 0.0 && cfg.signal_std >= 0.0 && cfg.noise_std >= 0.0) {
        return input("standard deviations must be non-negative (feature std positive)");
    }
    let mut truth_rng = substream(seed, "data.truth", &[]);
    let mut beta: Vec<f64> = (0..cfg.input_dim).map(|_| truth_rng.sample(StandardNormal)).collect();
    let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    beta.iter_mut().for_each(|b| *b /= norm);

    let mut rng = substream(seed, "data.samples", &[]);
    let feature = Normal::new(0.0, cfg.feature_std).expect("valid std");
    let mid = 0.5 * (lo + hi);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..cfg.input_dim).map(|_| feature.sample(&mut rng)).collect();
        let proj: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() / cfg.feature_std;
        let target = match cfg.target_kind {
            TargetKind::Continuous => {
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.noise_std;
                (mid + cfg.signal_std * proj + noise).clamp(lo, hi)
            }
            TargetKind::Binary => {
                if rng.random::<f64>() < sigmoid(2.0 * proj) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        samples.push(Sample::new(x, target));
    }
    LabeledDataset::new(samples, cfg.target_kind)
}

/// Indices sorted by target, ties in random order.
fn rank_order<R: Rng + ?Sized>(data: &LabeledDataset, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    idx.sort_by(|&a, &b| data.samples[a].target.total_cmp(&data.samples[b].target));
    idx
}

/// Splits `n` items into `parts` contiguous groups, first `n % parts` one larger.
pub fn balanced_sizes(n: usize, parts: usize) -> Vec<usize> {
    let base = n / parts;
    let extra = n % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Integer apportionment of `total` by `shares` (largest remainder, ties to
/// the lower index).
fn apportion(total: usize, shares: &[f64]) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| total as f64 * s / sum).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Number of quantile bins used for stratification and IID checks.
pub const QUANTILE_BINS: usize = 10;

/// Stratified split: test size is `floor(fraction * n)`, allocated across
/// target-quantile strata by largest remainder.
pub fn split_train_test(data: &LabeledDataset, test_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return input(format!("test fraction {test_fraction} must lie in (0, 1)"));
    }
    let n = data.len();
    let n_test = (test_fraction * n as f64 + 1e-9).floor() as usize;
    if n_test == 0 || n_test == n {
        return input(format!("test fraction {test_fraction} leaves an empty side for {n} samples"));
    }
    let mut rng = substream(seed, "split", &[]);
    let ranked = rank_order(data, &mut rng);
    let bins = balanced_sizes(n, QUANTILE_BINS.min(n));
    let quotas = apportion(n_test, &bins.iter().map(|&b| b as f64).collect::<Vec<_>>());
    let mut train = Vec::with_capacity(n - n_test);
    let mut test = Vec::with_capacity(n_test);
    let mut start = 0;
    for (size, quota) in bins.iter().zip(quotas) {
        let mut stratum = ranked[start..start + size].to_vec();
        stratum.shuffle(&mut rng);
        test.extend_from_slice(&stratum[..quota]);
        train.extend_from_slice(&stratum[quota..]);
        start += size;
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(&train), data.subset(&test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmountMode {
    Uniform,
    Skewed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionMode {
    Iid,
    NonIid,
}

fn default_skew() -> f64 {
    0.75
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub sites: usize,
    pub amount: AmountMode,
    pub distribution: DistributionMode,
    /// Geometric decay of site shares under `Skewed`.
    #[serde(default = "default_skew")]
    pub skew_ratio: f64,
}

impl PartitionPlan {
    pub fn new(sites: usize, amount: AmountMode, distribution: DistributionMode) -> Self {
        Self {
            sites,
            amount,
            distribution,
            skew_ratio: default_skew(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return input("a partition plan needs at least 2 sites");
        }
        if self.amount == AmountMode::Skewed && !(self.skew_ratio > 0.0 && self.skew_ratio <= 1.0) {
            return input(format!("skew ratio {} outside (0, 1]", self.skew_ratio));
        }
        Ok(())
    }

    /// Per-site sample counts for `n` training samples.
    pub fn site_sizes(&self, n: usize) -> Result<Vec<usize>> {
        self.validate()?;
        if n < self.sites {
            return input(format!("{} sites but only {n} samples", self.sites));
        }
        let sizes = match self.amount {
            AmountMode::Uniform => balanced_sizes(n, self.sites),
            AmountMode::Skewed => {
                let shares: Vec<f64> = (0..self.sites).map(|i| self.skew_ratio.powi(i as i32)).collect();
                apportion(n, &shares)
            }
        };
        if sizes.contains(&0) {
            return input(format!("skewed plan leaves a site empty with {n} samples"));
        }
        Ok(sizes)
    }
}

/// Rounds the real matrix `expected[bin][site]` to floor/ceil entries whose
/// row sums equal `row_totals` and column sums equal `col_totals`. Which
/// cells round up is decided by a max-flow over the cells with a fractional
/// remainder.
fn round_matrix(expected: &[Vec<f64>], row_totals: &[usize], col_totals: &[usize]) -> Vec<Vec<usize>> {
    let rows = expected.len();
    let cols = col_totals.len();
    let floor = |e: f64| (e + 1e-9).floor() as usize;
    let mut out: Vec<Vec<usize>> = expected.iter().map(|r| r.iter().map(|&e| floor(e)).collect()).collect();

    // Nodes: source, rows, cols, sink.
    let (src, sink) = (0, rows + cols + 1);
    let nodes = rows + cols + 2;
    let mut cap = vec![vec![0usize; nodes]; nodes];
    for b in 0..rows {
        cap[src][1 + b] = row_totals[b] - out[b].iter().sum::<usize>();
        for k in 0..cols {
            if expected[b][k] - out[b][k] as f64 > 1e-9 {
                cap[1 + b][1 + rows + k] = 1;
            }
        }
    }
    for k in 0..cols {
        cap[1 + rows + k][sink] = col_totals[k] - (0..rows).map(|b| out[b][k]).sum::<usize>();
    }
    loop {
        let mut prev = vec![usize::MAX; nodes];
        prev[src] = src;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for v in 0..nodes {
                if prev[v] == usize::MAX && cap[u][v] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[sink] == usize::MAX {
            break;
        }
        let mut v = sink;
        while v != src {
            let u = prev[v];
            cap[u][v] -= 1;
            cap[v][u] += 1;
            v = u;
        }
    }
    for b in 0..rows {
        for k in 0..cols {
            // Reverse capacity on a row->col edge marks a unit of flow.
            if cap[1 + rows + k][1 + b] > 0 {
                out[b][k] += 1;
            }
        }
    }
    out
}

/// Splits `train` across sites. Uniform sizes differ by at most one; Skewed
/// shares decay geometrically. IID sites reproduce the global target
/// histogram over [`QUANTILE_BINS`] bins to within one sample per bin;
/// Non-IID sites receive contiguous target bands, site 0 lowest.
pub fn partition(train: &LabeledDataset, plan: &PartitionPlan, seed: u64) -> Result<Vec<LabeledDataset>> {
    let sizes = plan.site_sizes(train.len())?;
    let mut rng = substream(seed, "partition", &[]);
    let ranked = rank_order(train, &mut rng);
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); plan.sites];
    match plan.distribution {
        DistributionMode::NonIid => {
            let mut start = 0;
            for (site, &size) in sizes.iter().enumerate() {
                assignment[site].extend_from_slice(&ranked[start..start + size]);
                start += size;
            }
        }
        DistributionMode::Iid => {
            let n = train.len();
            let bins = balanced_sizes(n, QUANTILE_BINS.min(n));
            let expected: Vec<Vec<f64>> = bins
                .iter()
                .map(|&b| sizes.iter().map(|&s| b as f64 * s as f64 / n as f64).collect())
                .collect();
            let counts = round_matrix(&expected, &bins, &sizes);
            let mut start = 0;
            for (b, &size) in bins.iter().enumerate() {
                let mut stratum = ranked[start..start + size].to_vec();
                stratum.shuffle(&mut rng);
                let mut offset = 0;
                for (site, c) in counts[b].iter().enumerate() {
                    assignment[site].extend_from_slice(&stratum[offset..offset + c]);
                    offset += c;
                }
                start += size;
            }
        }
    }
    Ok(assignment
        .into_iter()
        .map(|mut idx| {
            idx.shuffle(&mut rng);
            train.subset(&idx)
        })
        .collect())
}

/// Builds a centralized baseline holding `floor(fraction * total)` samples,
/// taking whole silos from the largest (ties: highest index) downward and a
/// prefix of the next silo to hit the count exactly.
pub fn centralized_fraction(partitions: &[LabeledDataset], fraction: f64) -> Result<LabeledDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return input(format!("centralized fraction {fraction} outside (0, 1]"));
    }
    let first = partitions.first().ok_or_else(|| Error::Input("no partitions".into()))?;
    let total: usize = partitions.iter().map(LabeledDataset::len).sum();
    let target = (fraction * total as f64 + 1e-9).floor() as usize;
    if target == 0 {
        return input("centralized fraction selects no samples");
    }
    let mut order: Vec<usize> = (0..partitions.len()).collect();
    order.sort_by(|&a, &b| partitions[b].len().cmp(&partitions[a].len()).then(b.cmp(&a)));
    let mut samples = Vec::with_capacity(target);
    for i in order {
        let need = target - samples.len();
        if need == 0 {
            break;
        }
        let take = need.min(partitions[i].len());
        samples.extend_from_slice(&partitions[i].samples[..take]);
    }
    LabeledDataset::new(samples, first.kind)
}

/// Per-bin counts of `data` targets against precomputed bin edges.
pub fn quantile_histogram(data: &LabeledDataset, edges: &[f64]) -> Vec<usize> {
    let mut hist = vec![0usize; edges.len() + 1];
    for s in &data.samples {
        let b = edges.partition_point(|&e| e <= s.target);
        hist[b] += 1;
    }
    hist
}

/// Upper edges separating `bins` equal-count groups of `data`'s targets.
pub fn quantile_edges(data: &LabeledDataset, bins: usize) -> Vec<f64> {
    let mut t = data.targets();
    t.sort_by(f64::total_cmp);
    let sizes = balanced_sizes(t.len(), bins);
    let mut edges = Vec::with_capacity(bins - 1);
    let mut acc = 0;
    for s in &sizes[..bins - 1] {
        acc += s;
        edges.push(0.5 * (t[acc - 1] + t[acc]));
    }
    edges
}
