use std::fs;

use fedsim::harness::metrics::{read_metrics, strip_wall_clock};
use fedsim::harness::model_io::read_model;
use fedsim::harness::run::{execute, run_experiment};
use fedsim::harness::{ExperimentConfig, PolicyConfig};

fn config(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default("h");
    cfg.output_dir = dir.to_path_buf();
    cfg.data.samples = 800;
    cfg.model.input_dim = 12;
    cfg.policy.rounds = 4;
    cfg
}

#[test]
fn config_toml_roundtrip() {
    let mut cfg = ExperimentConfig::desk_default("roundtrip");
    cfg.policy = PolicyConfig::semisync(6, 4);
    cfg.learners.speed_factors = Some(vec![1.0, 2.0, 1.5, 1.0, 1.0, 1.0, 3.0, 1.0]);
    cfg.attack.enabled = true;
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
}

#[test]
fn invalid_configs_are_rejected() {
    let base = ExperimentConfig::desk_default("bad").to_toml().unwrap();
    assert!(ExperimentConfig::from_toml(&base.replace("sites = 8", "sites = 1")).is_err());
    assert!(ExperimentConfig::from_toml(&format!("{base}\nunknown_key = 3\n")).is_err());
    let mut cfg = ExperimentConfig::desk_default("bad");
    cfg.learners.speed_factors = Some(vec![1.0; 3]);
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::desk_default("bad");
    cfg.encryption.enabled = true;
    cfg.policy = PolicyConfig::asynchronous(5);
    assert!(cfg.validate().is_err());
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}

#[test]
fn run_writes_artifacts_and_repeats_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.attack.enabled = true;
    cfg.attack.every = 2;
    let (dir, result) = run_experiment(&cfg).unwrap();
    for f in ["config.toml", "metrics.csv", "model.bin", "vulnerability.csv"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let first = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let records = read_metrics(first.as_bytes()).unwrap();
    assert_eq!(records.len(), 5);
    assert_eq!(records.iter().map(|r| r.round).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    // Attacks on rounds 0, 2 and the final round.
    let attacked: Vec<usize> = records.iter().filter(|r| r.vulnerability.is_some()).map(|r| r.round).collect();
    assert_eq!(attacked, vec![0, 2, 4]);
    let model = read_model(fs::File::open(dir.join("model.bin")).unwrap(), &cfg.model.layout()).unwrap();
    assert_eq!(model, result.final_model);
    let stored = ExperimentConfig::load(&dir.join("config.toml")).unwrap();
    assert_eq!(stored, cfg);

    run_experiment(&cfg).unwrap();
    let second = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(strip_wall_clock(&first), strip_wall_clock(&second));
}

#[test]
fn every_policy_runs_and_reports_cumulative_traffic() {
    let tmp = tempfile::tempdir().unwrap();
    let base = config(tmp.path());
    let m = base.model.parameter_count() as u64;
    for policy in [PolicyConfig::sync(4), PolicyConfig::semisync(4, 2), PolicyConfig::asynchronous(4)] {
        let mut cfg = base.clone();
        cfg.policy = policy;
        let r = execute(&cfg).unwrap();
        let last = r.records.last().unwrap();
        assert_eq!(last.round, 4);
        let expected = if cfg.policy.kind == fedsim::harness::PolicyKind::Async { 2 * 32 * m } else { 2 * 4 * m };
        assert_eq!(last.comm_parameters, expected, "{}", cfg.policy.label());
        assert!(r.records.windows(2).all(|w| w[0].comm_parameters <= w[1].comm_parameters));
        assert!(r.final_metric() < r.records[0].test_metric);
    }
}

#[test]
fn centralized_runs_use_one_learner_and_no_traffic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.centralized_fraction = Some(0.5);
    let r = execute(&cfg).unwrap();
    assert!(r.records.iter().all(|x| x.comm_parameters == 0 && x.comm_bits == 0));
    assert!(r.final_metric() < r.records[0].test_metric);
}

#[test]
fn encrypted_run_doubles_bits() {
    let tmp = tempfile::tempdir().unwrap();
    let plain = config(tmp.path());
    let mut enc = plain.clone();
    enc.encryption.enabled = true;
    let (a, b) = (execute(&plain).unwrap(), execute(&enc).unwrap());
    let (la, lb) = (a.records.last().unwrap(), b.records.last().unwrap());
    assert_eq!(la.comm_parameters, lb.comm_parameters);
    assert_eq!(2 * la.comm_bits, lb.comm_bits);
    assert!((la.test_metric - lb.test_metric).abs() < 1e-3);
}

#[test]
fn failing_stage_is_named() {
    let mut cfg = ExperimentConfig::desk_default("fail");
    cfg.data.samples = 5;
    let err = execute(&cfg).unwrap_err().to_string();
    assert!(err.contains("data"), "{err}");
}
