//! Federation controller: weighted averaging of learner models under
//! synchronous, semi-synchronous and asynchronous (cached) policies, driven
//! by a virtual clock, with communication accounting.
//!
//! Time is simulated: a learner with speed factor `s` needs `s` seconds per
//! mini-batch. Nothing sleeps; the clock only orders events.

use std::borrow::Borrow;
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{input, Result};
use crate::param::{train_steps, LocalTraining, ModelSpec, ParameterVector, SgdConfig};
use crate::privacy::PrivacyConfig;
use crate::rng::substream;

/// `sum_k (p_k / P) w_k` with `P = sum_k p_k`.
pub fn weighted_aggregate<M: Borrow<ParameterVector>>(models: &[M], weights: &[f64]) -> Result<ParameterVector> {
    if models.len() != weights.len() {
        return input(format!("{} models but {} weights", models.len(), weights.len()));
    }
    let Some(first) = models.first() else {
        return input("no models to aggregate");
    };
    let first = first.borrow();
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return input(format!("aggregation weight {w} must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return input("aggregation weights sum to zero");
    }
    let mut acc = vec![0.0; first.len()];
    for (m, w) in models.iter().zip(weights) {
        let m = m.borrow();
        first.check_layout(m)?;
        let p = w / total;
        acc.iter_mut().zip(m.values()).for_each(|(a, v)| *a += p * v);
    }
    Ok(ParameterVector::from_parts_unchecked(acc, first.layout().clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerProfile {
    pub id: usize,
    /// Simulated seconds per mini-batch.
    pub speed_factor: f64,
    /// Aggregation weight `p_k`, by default the local dataset size.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Learner {
    pub profile: LearnerProfile,
    pub dataset: Arc<LabeledDataset>,
}

impl Learner {
    pub fn new(id: usize, dataset: Arc<LabeledDataset>, speed_factor: f64) -> Result<Self> {
        if !(speed_factor > 0.0 && speed_factor.is_finite()) {
            return input(format!("learner {id}: speed factor {speed_factor} must be positive"));
        }
        if dataset.is_empty() {
            return input(format!("learner {id}: dataset is empty"));
        }
        Ok(Self {
            profile: LearnerProfile {
                id,
                speed_factor,
                weight: dataset.len() as f64,
            },
            dataset,
        })
    }

    /// Simulated duration of `steps` mini-batches.
    pub fn duration(&self, steps: usize) -> f64 {
        steps as f64 * self.profile.speed_factor
    }
}

/// Slow first half (2 s/batch), fast second half (1 s/batch).
pub fn default_speed_factors(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i < n / 2 { 2.0 } else { 1.0 }).collect()
}

/// Builds learners `0..n` from site datasets and speed factors.
pub fn learners_from_sites(sites: Vec<LabeledDataset>, speed_factors: &[f64]) -> Result<Vec<Learner>> {
    if sites.len() != speed_factors.len() {
        return input(format!("{} sites but {} speed factors", sites.len(), speed_factors.len()));
    }
    sites
        .into_iter()
        .zip(speed_factors)
        .enumerate()
        .map(|(i, (d, &s))| Learner::new(i, Arc::new(d), s))
        .collect()
}

/// Running communication totals. The controller-level count follows the
/// convention of `2 * M` per synchronous round or per asynchronous update
/// request; per-learner traffic is kept separately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub exchanged_parameters: u64,
    pub exchanged_bits: u64,
    pub update_requests: u64,
    pub rounds: u64,
    /// Parameters each learner downloaded plus uploaded.
    pub per_learner_parameters: Vec<u64>,
    pub bits_per_parameter: u32,
}

impl CommLedger {
    pub fn new(learners: usize, bits_per_parameter: u32) -> Result<Self> {
        check_bits(bits_per_parameter)?;
        Ok(Self {
            exchanged_parameters: 0,
            exchanged_bits: 0,
            update_requests: 0,
            rounds: 0,
            per_learner_parameters: vec![0; learners],
            bits_per_parameter,
        })
    }

    fn charge(&mut self, m: usize) {
        let p = 2 * m as u64;
        self.exchanged_parameters += p;
        self.exchanged_bits += p * u64::from(self.bits_per_parameter);
    }

    pub fn record_round(&mut self, m: usize) {
        self.charge(m);
        self.rounds += 1;
        for c in &mut self.per_learner_parameters {
            *c += 2 * m as u64;
        }
    }

    pub fn record_update(&mut self, m: usize, learner: usize) {
        self.charge(m);
        self.update_requests += 1;
        self.per_learner_parameters[learner] += 2 * m as u64;
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if bits != 32 && bits != 64 {
        return input(format!("bits per parameter must be 32 or 64, got {bits}"));
    }
    Ok(())
}

/// Exchanged parameters priced at `bits_per_parameter`.
pub fn ledger_bits(ledger: &CommLedger, bits_per_parameter: u32) -> Result<u64> {
    check_bits(bits_per_parameter)?;
    Ok(ledger.exchanged_parameters * u64::from(bits_per_parameter))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationState {
    pub round: usize,
    /// Most recently committed model per learner (asynchronous policy).
    pub cache: BTreeMap<usize, ParameterVector>,
    pub global: ParameterVector,
    pub ledger: CommLedger,
    /// Simulated seconds.
    pub clock: f64,
    /// Local training runs started per learner; keys their RNG streams.
    pub train_runs: Vec<u64>,
}

impl FederationState {
    pub fn new(initial: ParameterVector, learners: usize, bits_per_parameter: u32) -> Result<Self> {
        Ok(Self {
            round: 0,
            cache: BTreeMap::new(),
            global: initial,
            ledger: CommLedger::new(learners, bits_per_parameter)?,
            clock: 0.0,
            train_runs: vec![0; learners],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutionMode {
    /// Learners train one after another.
    #[default]
    Reference,
    /// Independent local trainings run on the rayon pool; commits are still
    /// applied in virtual-time order, so results match `Reference` exactly.
    Parallel,
}

/// Everything fixed for the lifetime of a federated run.
#[derive(Debug, Clone)]
pub struct Federation {
    pub spec: ModelSpec,
    pub sgd: SgdConfig,
    pub privacy: Option<PrivacyConfig>,
    pub learners: Vec<Learner>,
    pub seed: u64,
    pub mode: ExecutionMode,
}

/// A pending local training job: learner index and step count.
pub(crate) type Job = (usize, usize);

impl Federation {
    pub fn new(spec: ModelSpec, sgd: SgdConfig, learners: Vec<Learner>, seed: u64) -> Result<Self> {
        spec.validate()?;
        sgd.validate()?;
        if learners.is_empty() {
            return input("a federation needs at least one learner");
        }
        for (i, l) in learners.iter().enumerate() {
            if l.profile.id != i {
                return input(format!("learner ids must be 0..n in order, found {} at {i}", l.profile.id));
            }
        }
        Ok(Self {
            spec,
            sgd,
            privacy: None,
            learners,
            seed,
            mode: ExecutionMode::Reference,
        })
    }

    pub fn with_privacy(mut self, privacy: Option<PrivacyConfig>) -> Result<Self> {
        if let Some(p) = &privacy {
            p.validate()?;
        }
        self.privacy = privacy;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: ExecutionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn weights(&self) -> Vec<f64> {
        self.learners.iter().map(|l| l.profile.weight).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.spec.parameter_count()
    }

    pub fn initial_state(&self, initial: ParameterVector, bits_per_parameter: u32) -> Result<FederationState> {
        if initial.layout() != &self.spec.layout() {
            return Err(crate::error::Error::LayoutMismatch);
        }
        FederationState::new(initial, self.learners.len(), bits_per_parameter)
    }

    /// Full-epoch step count for one local round.
    pub fn epoch_steps(&self, learner: usize) -> usize {
        self.sgd.epochs_per_round * self.sgd.batches_per_epoch(self.learners[learner].dataset.len())
    }

    /// Trains `learner` for `steps` batches from `start`, using the RNG
    /// stream of its `run`-th local training.
    pub fn local_update(&self, learner: usize, start: &ParameterVector, steps: usize, run: u64) -> Result<LocalTraining> {
        let mut rng = substream(self.seed, "local", &[learner as u64, run]);
        train_steps(
            start,
            &self.spec,
            &self.learners[learner].dataset,
            &self.sgd,
            self.privacy.as_ref(),
            steps,
            &mut rng,
        )
    }

    /// Runs independent jobs from the same start model, in the configured
    /// execution mode. Output order follows `jobs`.
    pub(crate) fn run_jobs(&self, train_runs: &mut [u64], start: &ParameterVector, jobs: &[Job]) -> Result<Vec<LocalTraining>> {
        let runs: Vec<u64> = jobs.iter().map(|&(k, _)| train_runs[k]).collect();
        let work = |(&(k, steps), &run): (&Job, &u64)| self.local_update(k, start, steps, run);
        let out: Vec<LocalTraining> = match self.mode {
            ExecutionMode::Reference => jobs.iter().zip(&runs).map(work).collect::<Result<_>>()?,
            ExecutionMode::Parallel => jobs.par_iter().zip(&runs).map(work).collect::<Result<_>>()?,
        };
        for &(k, _) in jobs {
            train_runs[k] += 1;
        }
        Ok(out)
    }

    fn aggregate_round(&self, state: &mut FederationState, trained: Vec<LocalTraining>, elapsed: f64) -> Result<()> {
        let models: Vec<ParameterVector> = trained.into_iter().map(|t| t.model).collect();
        state.global = weighted_aggregate(&models, &self.weights())?;
        state.ledger.record_round(self.parameter_count());
        state.round += 1;
        state.clock += elapsed;
        Ok(())
    }

    /// Every learner trains `epochs_per_round` epochs from the global model;
    /// the clock advances by the slowest learner's training time.
    pub fn run_sync_round(&self, state: &mut FederationState) -> Result<()> {
        let jobs: Vec<Job> = (0..self.learners.len()).map(|k| (k, self.epoch_steps(k))).collect();
        let elapsed = jobs
            .iter()
            .map(|&(k, s)| self.learners[k].duration(s))
            .fold(0.0, f64::max);
        let start = state.global.clone();
        let trained = self.run_jobs(&mut state.train_runs, &start, &jobs)?;
        self.aggregate_round(state, trained, elapsed)
    }

    /// Synchronization period: `lambda_epochs` epochs of the slowest learner.
    pub fn semisync_period(&self, lambda_epochs: usize) -> f64 {
        (0..self.learners.len())
            .map(|k| self.learners[k].duration(lambda_epochs * self.sgd.batches_per_epoch(self.learners[k].dataset.len())))
            .fold(0.0, f64::max)
    }

    /// Whole batches learner `k` completes within `period`.
    pub fn semisync_steps(&self, k: usize, period: f64) -> usize {
        (period / self.learners[k].profile.speed_factor + 1e-9).floor() as usize
    }

    /// Each learner trains for as many whole batches as fit in the period,
    /// then the controller aggregates as in the synchronous policy.
    pub fn run_semisync_round(&self, state: &mut FederationState, lambda_epochs: usize) -> Result<()> {
        if lambda_epochs == 0 {
            return input("lambda epochs must be positive");
        }
        let period = self.semisync_period(lambda_epochs);
        let jobs: Vec<Job> = (0..self.learners.len()).map(|k| (k, self.semisync_steps(k, period))).collect();
        let start = state.global.clone();
        let trained = self.run_jobs(&mut state.train_runs, &start, &jobs)?;
        self.aggregate_round(state, trained, period)
    }

    /// Event-driven asynchronous training until `budget` update requests
    /// have been committed. Each commit replaces the learner's cache entry,
    /// recomputes the global model over the whole cache, and hands the new
    /// global model back to that learner. `on_commit` sees the state after
    /// every commit.
    pub fn run_async<F>(&self, state: &mut FederationState, budget: u64, mut on_commit: F) -> Result<()>
    where
        F: FnMut(&FederationState) -> Result<()>,
    {
        let n = self.learners.len();
        if budget < n as u64 {
            return input(format!("update budget {budget} is below the number of learners {n}"));
        }
        for k in 0..n {
            state.cache.entry(k).or_insert_with(|| state.global.clone());
        }
        let weights = self.weights();
        let start = state.global.clone();
        let first_jobs: Vec<Job> = (0..n).map(|k| (k, self.epoch_steps(k))).collect();
        let first = self.run_jobs(&mut state.train_runs, &start, &first_jobs)?;
        let mut pending: Vec<Option<ParameterVector>> = first.into_iter().map(|t| Some(t.model)).collect();
        let mut events: BinaryHeap<Reverse<Event>> = (0..n)
            .map(|k| {
                Reverse(Event {
                    time: state.clock + self.learners[k].duration(first_jobs[k].1),
                    learner: k,
                })
            })
            .collect();
        let mut committed = 0u64;
        while committed < budget {
            let Reverse(ev) = events.pop().expect("every learner always has a pending event");
            let k = ev.learner;
            state.clock = ev.time;
            let model = pending[k].take().expect("pending model for scheduled learner");
            state.cache.insert(k, model);
            let cached: Vec<&ParameterVector> = state.cache.values().collect();
            state.global = weighted_aggregate(&cached, &weights)?;
            state.ledger.record_update(self.parameter_count(), k);
            committed += 1;
            state.round = (state.ledger.update_requests / n as u64) as usize;
            on_commit(state)?;
            if committed == budget {
                break;
            }
            let steps = self.epoch_steps(k);
            let run = state.train_runs[k];
            state.train_runs[k] += 1;
            pending[k] = Some(self.local_update(k, &state.global, steps, run)?.model);
            events.push(Reverse(Event {
                time: ev.time + self.learners[k].duration(steps),
                learner: k,
            }));
        }
        Ok(())
    }
}

/// A learner finishing local training; ties break by learner id.
#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    learner: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.learner.cmp(&other.learner))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{LayerShape, Layout};

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec(), Layout::new(vec![LayerShape::new("w", &[v.len()])])).unwrap()
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(weighted_aggregate(&[pv(&[3.5])], &[7.0]).unwrap().values(), &[3.5]);
        assert_eq!(weighted_aggregate(&[pv(&[2.0]), pv(&[6.0])], &[1.0, 3.0]).unwrap().values(), &[5.0]);
        let m = pv(&[1.25, -3.0]);
        let same = weighted_aggregate(&[m.clone(), m.clone(), m.clone()], &[1.0, 2.0, 5.0]).unwrap();
        assert_eq!(same, m);
    }

    #[test]
    fn aggregate_errors() {
        assert!(weighted_aggregate(&[pv(&[1.0])], &[0.0]).is_err());
        assert!(weighted_aggregate(&[pv(&[1.0]), pv(&[1.0, 2.0])], &[1.0, 1.0]).is_err());
        assert!(weighted_aggregate(&[pv(&[1.0])], &[1.0, 2.0]).is_err());
        assert!(weighted_aggregate(&[pv(&[1.0])], &[-1.0]).is_err());
    }

    #[test]
    fn ledger_arithmetic() {
        let mut l = CommLedger::new(8, 32).unwrap();
        assert_eq!(ledger_bits(&l, 32).unwrap(), 0);
        for _ in 0..20 {
            l.record_round(2_950_401);
        }
        assert_eq!(l.exchanged_parameters, 20 * 2 * 2_950_401);
        assert_eq!(ledger_bits(&l, 32).unwrap(), 3_776_513_280);
        assert_eq!(ledger_bits(&l, 64).unwrap(), 2 * 3_776_513_280);
        assert_eq!(l.exchanged_bits, 3_776_513_280);
        assert!(ledger_bits(&l, 16).is_err());
        assert!(CommLedger::new(8, 8).is_err());
    }

    #[test]
    fn default_speeds() {
        assert_eq!(default_speed_factors(8), vec![2.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn events_order_by_time_then_id() {
        let mut heap = BinaryHeap::new();
        for (t, l) in [(2.0, 0), (1.0, 3), (1.0, 1)] {
            heap.push(Reverse(Event { time: t, learner: l }));
        }
        let order: Vec<usize> = std::iter::from_fn(|| heap.pop().map(|Reverse(e)| e.learner)).collect();
        assert_eq!(order, vec![1, 3, 0]);
    }
}
