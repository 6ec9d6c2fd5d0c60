#![allow(dead_code)]

use fedsim::harness::run::{prepare, Prepared};
use fedsim::harness::ExperimentConfig;
use fedsim::param::ParameterVector;

/// Small linear-regression experiment: 8 sites of 100 training samples.
pub fn small_config(seed: u64, dim: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default("test");
    cfg.seed = seed;
    cfg.model.input_dim = dim;
    cfg.data.samples = 1000;
    cfg.policy.rounds = 5;
    cfg
}

pub fn prepared(cfg: &ExperimentConfig) -> Prepared {
    prepare(cfg).expect("test config prepares")
}

pub fn max_abs_diff(a: &ParameterVector, b: &ParameterVector) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Max abs difference relative to the larger max-abs entry.
pub fn max_rel_diff(a: &ParameterVector, b: &ParameterVector) -> f64 {
    let scale = a
        .values()
        .iter()
        .chain(b.values())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    max_abs_diff(a, b) / scale
}
