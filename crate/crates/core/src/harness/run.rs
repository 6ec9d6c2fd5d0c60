//! Single experiment runs: data generation, partitioning, federated or
//! centralized training, per-round evaluation and artifact output.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use fedsim_ckks::{keygen, KeyPair};

use crate::data::{centralized_fraction, generate, partition, split_train_test, LabeledDataset};
use crate::error::{Result, StageExt};
use crate::federation::{Federation, FederationState, Learner, learners_from_sites};
use crate::harness::config::{ExperimentConfig, PolicyKind};
use crate::harness::metrics::{write_metrics, MetricsRecord};
use crate::harness::model_io::write_model;
use crate::param::{evaluate, init_model, ParameterVector};
use crate::privacy::{vulnerability, AttackDataset, VulnerabilityReport};
use crate::rng::{substream, subseed};
use crate::secure::{decrypt_model, run_encrypted_sync_round, EncryptedController};

/// Plaintext parameters cost 32 bits each on the wire.
pub const PLAINTEXT_BITS_PER_PARAMETER: u32 = 32;

/// Everything derived from a config before training starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Site datasets of the partition (before any centralized selection).
    pub sites: Vec<LabeledDataset>,
    pub federation: Federation,
    pub initial: ParameterVector,
    /// One balanced membership set per learner, when attacks are enabled.
    pub attack_sets: Option<Vec<AttackDataset>>,
}

/// Builds per-learner membership sets: each learner's first `n_k` training
/// samples against a private slice of the test set of the same size.
pub fn attack_sets(sites: &[LabeledDataset], test: &LabeledDataset, cap: Option<usize>) -> Result<Vec<AttackDataset>> {
    let pool = test.len() / sites.len();
    let held_out = test.samples();
    sites
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let mut n = d.len().min(pool);
            if let Some(c) = cap {
                n = n.min(c);
            }
            AttackDataset::new(d.samples()[..n].to_vec(), held_out[k * pool..k * pool + n].to_vec())
        })
        .collect()
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate().stage("config")?;
    let seed = config.seed;
    let full = generate(subseed(seed, "data", &[]), config.data.samples, &config.data.synthetic(config.model.input_dim)).stage("data")?;
    let (train, test) = split_train_test(&full, config.data.test_fraction, subseed(seed, "split", &[])).stage("data")?;
    let sites = partition(&train, &config.partition, subseed(seed, "partition", &[])).stage("partition")?;

    let learners: Vec<Learner> = match config.centralized_fraction {
        Some(f) => {
            let central = centralized_fraction(&sites, f).stage("partition")?;
            vec![Learner::new(0, Arc::new(central), 1.0).stage("partition")?]
        }
        None => learners_from_sites(sites.clone(), &config.speed_factors()).stage("partition")?,
    };
    let federation = Federation::new(config.model.clone(), config.sgd, learners, subseed(seed, "training", &[]))
        .and_then(|f| f.with_privacy(config.privacy.is_active().then_some(config.privacy)))
        .stage("setup")?
        .with_mode(config.execution);
    let initial = init_model(&config.model, &mut substream(seed, "init", &[])).stage("setup")?;
    let attack_sets = if config.attack.enabled {
        Some(attack_sets(&sites, &test, config.attack.max_samples_per_learner).stage("attack")?)
    } else {
        None
    };
    Ok(Prepared {
        train,
        test,
        sites,
        federation,
        initial,
        attack_sets,
    })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub records: Vec<MetricsRecord>,
    pub final_model: ParameterVector,
    pub last_vulnerability: Option<VulnerabilityReport>,
}

impl RunResult {
    pub fn final_metric(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.test_metric)
    }
}

struct Recorder<'a> {
    config: &'a ExperimentConfig,
    prepared: &'a Prepared,
    started: Instant,
    records: Vec<MetricsRecord>,
    last_vulnerability: Option<VulnerabilityReport>,
    centralized: bool,
}

impl Recorder<'_> {
    fn record(&mut self, round: usize, clock: f64, params: u64, bits: u64, model: &ParameterVector, last: bool) -> Result<()> {
        let spec = &self.config.model;
        let metric = evaluate(model, spec, &self.prepared.test).stage("evaluation")?;
        let attack_due = round.is_multiple_of(self.config.attack.every) || last;
        let vuln = match (&self.prepared.attack_sets, attack_due) {
            (Some(sets), true) => {
                let report = vulnerability(model, spec, sets, round, subseed(self.config.seed, "attack", &[])).stage("attack")?;
                let mean = report.mean;
                self.last_vulnerability = Some(report);
                Some(mean)
            }
            _ => None,
        };
        let (params, bits) = if self.centralized { (0, 0) } else { (params, bits) };
        self.records.push(MetricsRecord {
            run_id: self.config.run_id.clone(),
            round,
            virtual_time_s: clock,
            comm_parameters: params,
            comm_bits: bits,
            metric: metric.name().into(),
            test_metric: metric.headline(),
            vulnerability: vuln,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

/// Runs the experiment in memory. Centralized runs report zero
/// communication.
pub fn execute(config: &ExperimentConfig) -> Result<RunResult> {
    let prepared = prepare(config)?;
    let fed = &prepared.federation;
    let rounds = config.policy.rounds;
    let mut rec = Recorder {
        config,
        prepared: &prepared,
        started: Instant::now(),
        records: Vec::new(),
        last_vulnerability: None,
        centralized: config.centralized_fraction.is_some(),
    };

    let final_model = if config.encryption.enabled {
        let keys: KeyPair = keygen(&config.encryption.preset.params(), subseed(config.seed, "he-keys", &[]))
            .map_err(crate::error::Error::from)
            .stage("keygen")?;
        let mut ctl = EncryptedController::new(fed, &prepared.initial, &keys).stage("encryption")?;
        let layout = config.model.layout();
        rec.record(0, 0.0, 0, 0, &prepared.initial, false)?;
        for r in 1..=rounds {
            run_encrypted_sync_round(fed, &mut ctl, &keys).stage("training")?;
            // Evaluation happens on the learner side, after decryption.
            let model = decrypt_model(&ctl.global, &keys.secret, &layout).stage("decryption")?;
            rec.record(r, ctl.clock, ctl.ledger.exchanged_parameters, ctl.ledger.exchanged_bits, &model, r == rounds)?;
        }
        decrypt_model(&ctl.global, &keys.secret, &layout).stage("decryption")?
    } else {
        let mut state = fed
            .initial_state(prepared.initial.clone(), PLAINTEXT_BITS_PER_PARAMETER)
            .stage("setup")?;
        rec.record(0, 0.0, 0, 0, &state.global, false)?;
        let kind = if rec.centralized { PolicyKind::Sync } else { config.policy.kind };
        match kind {
            PolicyKind::Sync | PolicyKind::SemiSync => {
                for r in 1..=rounds {
                    if kind == PolicyKind::Sync {
                        fed.run_sync_round(&mut state).stage("training")?;
                    } else {
                        fed.run_semisync_round(&mut state, config.policy.lambda_epochs).stage("training")?;
                    }
                    record_state(&mut rec, &state, r == rounds)?;
                }
            }
            PolicyKind::Async => {
                let n = fed.learners.len() as u64;
                let budget = config.update_budget();
                fed.run_async(&mut state, budget, |s| {
                    let u = s.ledger.update_requests;
                    if u % n == 0 || u == budget {
                        record_state(&mut rec, s, u == budget)?;
                    }
                    Ok(())
                })
                .stage("training")?;
            }
        }
        state.global
    };
    Ok(RunResult {
        config: config.clone(),
        records: rec.records,
        final_model,
        last_vulnerability: rec.last_vulnerability,
    })
}

fn record_state(rec: &mut Recorder<'_>, state: &FederationState, last: bool) -> Result<()> {
    let round = if rec.config.policy.kind == PolicyKind::Async && !rec.centralized {
        (state.ledger.update_requests as usize).div_ceil(rec.prepared.federation.learners.len())
    } else {
        state.round
    };
    rec.record(
        round,
        state.clock,
        state.ledger.exchanged_parameters,
        state.ledger.exchanged_bits,
        &state.global,
        last,
    )
}

/// Run directory of a config: `<output_dir>/<run_id>`.
pub fn run_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join(&config.run_id)
}

/// Writes `config.toml`, `metrics.csv`, `model.bin` and, when an attack
/// was measured, `vulnerability.csv` into `dir`.
pub fn write_run(dir: &Path, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), result.config.to_toml()?)?;
    write_metrics(&result.records, BufWriter::new(fs::File::create(dir.join("metrics.csv"))?))?;
    write_model(&result.final_model, BufWriter::new(fs::File::create(dir.join("model.bin"))?))?;
    if let Some(report) = &result.last_vulnerability {
        report.write_csv(BufWriter::new(fs::File::create(dir.join("vulnerability.csv"))?))?;
    }
    Ok(())
}

/// Executes the config and writes its artifacts; returns the run directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(PathBuf, RunResult)> {
    let result = execute(config)?;
    let dir = run_dir(config);
    write_run(&dir, &result).stage("output")?;
    Ok((dir, result))
}
