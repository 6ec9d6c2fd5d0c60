//! Experiment configuration, stored as TOML.
//!
//! ```toml
//! run_id = "uniform-iid-sync"
//! seed = 7
//! output_dir = "runs"
//! # centralized_fraction = 0.2   # train one learner on the largest silos
//! execution = "reference"        # or "parallel"
//!
//! [model]
//! kind = "linear-regression"     # or "mlp" (needs hidden_dim)
//! input_dim = 32
//! loss = "mean-squared-error"    # or "binary-cross-entropy"
//!
//! [data]
//! samples = 5000
//! test_fraction = 0.2
//! target_kind = "continuous"     # or "binary"
//!
//! [partition]
//! sites = 8
//! amount = "uniform"             # or "skewed" (skew_ratio, default 0.75)
//! distribution = "iid"           # or "non-iid"
//!
//! [policy]
//! kind = "sync"                  # "semi-sync" (lambda_epochs) or "async" (update_budget)
//! rounds = 20
//!
//! [sgd]
//! learning_rate = 0.01
//! batch_size = 8
//! epochs_per_round = 4
//! ```
//!
//! Optional tables: `[learners] speed_factors`, `[privacy]`, `[encryption]`
//! and `[attack]`; see the field docs below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{PartitionPlan, SyntheticConfig, TargetKind};
use crate::error::{input, Error, Result};
use crate::federation::ExecutionMode;
use crate::param::{ModelSpec, SgdConfig};
use crate::privacy::PrivacyConfig;
use fedsim_ckks::SchemeParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Sync,
    SemiSync,
    Async,
}

fn default_lambda() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Federation rounds (sync, semi-sync). Async runs use it to derive the
    /// default update budget and the metrics cadence.
    pub rounds: usize,
    /// Synchronization period in epochs of the slowest learner.
    #[serde(default = "default_lambda")]
    pub lambda_epochs: usize,
    /// Async only; defaults to `rounds * learners`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_budget: Option<u64>,
}

impl PolicyConfig {
    pub fn sync(rounds: usize) -> Self {
        Self {
            kind: PolicyKind::Sync,
            rounds,
            lambda_epochs: default_lambda(),
            update_budget: None,
        }
    }

    pub fn semisync(rounds: usize, lambda_epochs: usize) -> Self {
        Self {
            kind: PolicyKind::SemiSync,
            lambda_epochs,
            ..Self::sync(rounds)
        }
    }

    pub fn asynchronous(rounds: usize) -> Self {
        Self {
            kind: PolicyKind::Async,
            ..Self::sync(rounds)
        }
    }

    /// Short label used in grid tables, e.g. `semi-sync-4`.
    pub fn label(&self) -> String {
        match self.kind {
            PolicyKind::Sync => "sync".into(),
            PolicyKind::SemiSync => format!("semi-sync-{}", self.lambda_epochs),
            PolicyKind::Async => "async".into(),
        }
    }
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_range() -> (f64, f64) {
    (45.0, 80.0)
}

fn default_signal() -> f64 {
    5.0
}

fn default_noise() -> f64 {
    2.5
}

fn default_feature_std() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Total synthetic samples before the train/test split.
    pub samples: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub target_kind: TargetKind,
    #[serde(default = "default_range")]
    pub target_range: (f64, f64),
    #[serde(default = "default_signal")]
    pub signal_std: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default = "default_feature_std")]
    pub feature_std: f64,
}

impl DataConfig {
    pub fn synthetic(&self, input_dim: usize) -> SyntheticConfig {
        SyntheticConfig {
            input_dim,
            target_kind: self.target_kind,
            target_range: self.target_range,
            signal_std: self.signal_std,
            noise_std: self.noise_std,
            feature_std: self.feature_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// Simulated seconds per batch, one per site. Defaults to 2.0 for the
    /// first half of the sites and 1.0 for the rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_factors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemePreset {
    /// N = 1024, no security claim; for tests.
    #[default]
    Toy,
    /// N = 8192, 52-bit scale, depth 1, 128-bit security.
    Standard,
}

impl SchemePreset {
    pub fn params(self) -> SchemeParams {
        match self {
            SchemePreset::Toy => SchemeParams::toy(),
            SchemePreset::Standard => SchemeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncryptionConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub preset: SchemePreset,
}

fn default_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Measure vulnerability every this many rounds (and at round 0).
    #[serde(default = "default_every")]
    pub every: usize,
    /// Cap on members (and non-members) per learner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples_per_learner: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            every: default_every(),
            max_samples_per_learner: None,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Scalars come before tables so the TOML serializer can emit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Train a single learner on this fraction of the data, taken from the
    /// largest silos of the partition, instead of federating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centralized_fraction: Option<f64>,
    #[serde(default)]
    pub execution: ExecutionMode,
    pub model: ModelSpec,
    pub data: DataConfig,
    pub partition: PartitionPlan,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub sgd: SgdConfig,
    #[serde(default)]
    pub learners: LearnerConfig,
    #[serde(default)]
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub encryption: EncryptionConfig,
    #[serde(default)]
    pub attack: AttackConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 8 learners, 4,000 train / 1,000 test samples,
    /// linear regression, synchronous averaging for 20 rounds.
    pub fn desk_default(run_id: &str) -> Self {
        Self {
            run_id: run_id.into(),
            seed: 7,
            output_dir: default_output_dir(),
            centralized_fraction: None,
            execution: ExecutionMode::Reference,
            model: ModelSpec::linear(32, crate::param::Loss::MeanSquaredError),
            data: DataConfig {
                samples: 5000,
                test_fraction: default_test_fraction(),
                target_kind: TargetKind::Continuous,
                target_range: default_range(),
                signal_std: default_signal(),
                noise_std: default_noise(),
                feature_std: default_feature_std(),
            },
            partition: PartitionPlan::new(
                8,
                crate::data::AmountMode::Uniform,
                crate::data::DistributionMode::Iid,
            ),
            policy: PolicyConfig::sync(20),
            sgd: SgdConfig::default(),
            learners: LearnerConfig::default(),
            privacy: PrivacyConfig::default(),
            encryption: EncryptionConfig::default(),
            attack: AttackConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn speed_factors(&self) -> Vec<f64> {
        self.learners
            .speed_factors
            .clone()
            .unwrap_or_else(|| crate::federation::default_speed_factors(self.partition.sites))
    }

    pub fn update_budget(&self) -> u64 {
        self.policy
            .update_budget
            .unwrap_or((self.policy.rounds * self.partition.sites) as u64)
    }

    /// Checks every section and their cross-references.
    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return input(format!("run_id {:?} must be a non-empty file name", self.run_id));
        }
        self.model.validate()?;
        if self.model.is_classifier() != (self.data.target_kind == TargetKind::Binary) {
            return input("binary-cross-entropy goes with binary targets, mean-squared-error with continuous ones");
        }
        self.sgd.validate()?;
        self.partition.validate()?;
        self.privacy.validate()?;
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return input("data.test_fraction must lie in (0, 1)");
        }
        if self.policy.rounds == 0 {
            return input("policy.rounds must be positive");
        }
        if self.policy.kind == PolicyKind::SemiSync && !matches!(self.policy.lambda_epochs, 2 | 4) {
            return input("policy.lambda_epochs must be 2 or 4");
        }
        if self.policy.kind == PolicyKind::Async && self.update_budget() < self.partition.sites as u64 {
            return input("policy.update_budget must be at least the number of sites");
        }
        if let Some(s) = &self.learners.speed_factors {
            if s.len() != self.partition.sites {
                return input(format!("{} speed factors for {} sites", s.len(), self.partition.sites));
            }
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return input("speed factors must be positive");
            }
        }
        if let Some(f) = self.centralized_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return input("centralized_fraction must lie in (0, 1]");
            }
            if self.encryption.enabled {
                return input("centralized runs cannot be encrypted");
            }
            if self.attack.enabled {
                return input("vulnerability needs a federation of at least 2 learners");
            }
        }
        if self.encryption.enabled && self.policy.kind != PolicyKind::Sync {
            return input("encrypted training is implemented for the sync policy only");
        }
        if self.attack.every == 0 {
            return input("attack.every must be positive");
        }
        self.encryption.preset.params().validate()?;
        Ok(())
    }
}
