use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsim")).args(args).output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        format!(
            r#"run_id = "small"
seed = 3
output_dir = "{}"

[model]
kind = "linear-regression"
input_dim = 6
loss = "mean-squared-error"

[data]
samples = 800
target_kind = "continuous"

[partition]
sites = 4
amount = "uniform"
distribution = "iid"

[policy]
kind = "sync"
rounds = 3

[attack]
enabled = true
"#,
            dir.join("runs").display()
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_attack_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = fedsim(&["run", &cfg, "--rounds", "2", "--parallel"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = tmp.path().join("runs/small");
    let metrics = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);

    let report = tmp.path().join("vuln.csv");
    let out = fedsim(&["attack", "--run-dir", run_dir.to_str().unwrap(), "--round", "2", "--output", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // 4 * 3 ordered pairs plus the summary row and header.
    assert_eq!(fs::read_to_string(&report).unwrap().lines().count(), 14);

    let out = fedsim(&["report", "--run-dir", run_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("run_id,round,virtual_time_s,comm_gigabits"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn ciphertext_size_report() {
    let out = fedsim(&["report", "--kind", "ciphertext-size"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("4096,721,"), "{last}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.toml");
    assert_eq!(fedsim(&["run", missing.to_str().unwrap()]).status.code(), Some(1));
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "run_id = 3").unwrap();
    assert_eq!(fedsim(&["run", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(fedsim(&["frobnicate"]).status.code(), Some(1));
    let cfg = write_config(tmp.path());
    // Valid config, but no model file to attack.
    let out = fedsim(&["attack", "--run-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    fs::copy(&cfg, tmp.path().join("config.toml")).unwrap();
    let out = fedsim(&["attack", "--run-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
