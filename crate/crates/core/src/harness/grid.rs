//! Experiment grids: the four federated environments under every policy
//! against centralized baselines, and the privacy-defense sweep.

use std::io::Write;

use rayon::prelude::*;

use crate::data::{AmountMode, DistributionMode};
use crate::error::Result;
use crate::harness::config::{ExperimentConfig, PolicyConfig};
use crate::harness::run::{execute, RunResult};
use crate::privacy::{csv_err, PrivacyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Environment {
    pub amount: AmountMode,
    pub distribution: DistributionMode,
}

impl Environment {
    pub fn label(&self) -> String {
        let a = match self.amount {
            AmountMode::Uniform => "uniform",
            AmountMode::Skewed => "skewed",
        };
        let d = match self.distribution {
            DistributionMode::Iid => "iid",
            DistributionMode::NonIid => "non-iid",
        };
        format!("{a}-{d}")
    }

    pub fn apply(&self, config: &mut ExperimentConfig) {
        config.partition.amount = self.amount;
        config.partition.distribution = self.distribution;
    }
}

pub fn environments() -> [Environment; 4] {
    let mut out = [Environment {
        amount: AmountMode::Uniform,
        distribution: DistributionMode::Iid,
    }; 4];
    let mut i = 0;
    for amount in [AmountMode::Uniform, AmountMode::Skewed] {
        for distribution in [DistributionMode::Iid, DistributionMode::NonIid] {
            out[i] = Environment { amount, distribution };
            i += 1;
        }
    }
    out
}

/// Sync, semi-sync with 2 and 4 epoch periods, and async with a budget of
/// `rounds * learners` updates.
pub fn grid_policies(rounds: usize) -> Vec<PolicyConfig> {
    vec![
        PolicyConfig::sync(rounds),
        PolicyConfig::semisync(rounds, 2),
        PolicyConfig::semisync(rounds, 4),
        PolicyConfig::asynchronous(rounds),
    ]
}

pub const CENTRALIZED_FRACTIONS: [f64; 3] = [0.2, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GridOptions {
    /// Run the centralized baselines on every environment's partition
    /// instead of only on the base config's partition.
    pub centralized_per_environment: bool,
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub environment: String,
    pub policy: String,
    pub config: ExperimentConfig,
}

pub fn centralized_label(fraction: f64) -> String {
    format!("centralized-{}", (fraction * 100.0).round() as u32)
}

/// Cells of the grid, federated cells first.
pub fn grid_cells(base: &ExperimentConfig, options: GridOptions) -> Vec<GridCell> {
    let mut cells = Vec::new();
    for env in environments() {
        for policy in grid_policies(base.policy.rounds) {
            let mut config = base.clone();
            env.apply(&mut config);
            config.policy = PolicyConfig {
                update_budget: None,
                ..policy
            };
            config.centralized_fraction = None;
            config.run_id = format!("{}-{}", env.label(), policy.label());
            cells.push(GridCell {
                environment: env.label(),
                policy: policy.label(),
                config,
            });
        }
    }
    let baseline_envs: Vec<Environment> = if options.centralized_per_environment {
        environments().to_vec()
    } else {
        vec![Environment {
            amount: base.partition.amount,
            distribution: base.partition.distribution,
        }]
    };
    for env in baseline_envs {
        for f in CENTRALIZED_FRACTIONS {
            let mut config = base.clone();
            env.apply(&mut config);
            config.policy = PolicyConfig::sync(base.policy.rounds);
            config.centralized_fraction = Some(f);
            config.encryption.enabled = false;
            config.attack.enabled = false;
            config.run_id = format!("{}-{}", env.label(), centralized_label(f));
            cells.push(GridCell {
                environment: env.label(),
                policy: centralized_label(f),
                config,
            });
        }
    }
    cells
}

#[derive(Debug)]
pub struct GridOutcome {
    pub cell: GridCell,
    /// Per-cell failures are kept as messages; the grid carries on.
    pub result: std::result::Result<RunResult, String>,
}

impl GridOutcome {
    pub fn final_metric(&self) -> Option<f64> {
        self.result.as_ref().ok().map(RunResult::final_metric)
    }
}

/// Runs every cell, in parallel.
pub fn run_grid(base: &ExperimentConfig, options: GridOptions) -> Vec<GridOutcome> {
    grid_cells(base, options)
        .into_par_iter()
        .map(|cell| {
            let result = execute(&cell.config).map_err(|e| e.to_string());
            GridOutcome { cell, result }
        })
        .collect()
}

/// Finds the outcome for an (environment, policy) pair.
pub fn lookup<'a>(outcomes: &'a [GridOutcome], environment: &str, policy: &str) -> Option<&'a GridOutcome> {
    outcomes
        .iter()
        .find(|o| o.cell.environment == environment && o.cell.policy == policy)
}

/// One row per (run, round):
/// `environment,policy,run_id,round,virtual_time_s,comm_parameters,comm_bits,metric,test_metric,vulnerability,wall_clock_s`.
/// Failed cells get a single row with `error` in the metric column and the
/// message in place of the value.
pub fn write_grid_csv<W: Write>(outcomes: &[GridOutcome], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "environment",
        "policy",
        "run_id",
        "round",
        "virtual_time_s",
        "comm_parameters",
        "comm_bits",
        "metric",
        "test_metric",
        "vulnerability",
        "wall_clock_s",
    ])
    .map_err(csv_err)?;
    for o in outcomes {
        match &o.result {
            Ok(run) => {
                for r in &run.records {
                    out.write_record([
                        o.cell.environment.clone(),
                        o.cell.policy.clone(),
                        r.run_id.clone(),
                        r.round.to_string(),
                        r.virtual_time_s.to_string(),
                        r.comm_parameters.to_string(),
                        r.comm_bits.to_string(),
                        r.metric.clone(),
                        r.test_metric.to_string(),
                        r.vulnerability.map(|v| v.to_string()).unwrap_or_default(),
                        r.wall_clock_s.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            Err(msg) => {
                out.write_record([
                    o.cell.environment.as_str(),
                    o.cell.policy.as_str(),
                    o.cell.config.run_id.as_str(),
                    "",
                    "",
                    "",
                    "",
                    "error",
                    msg.as_str(),
                    "",
                    "",
                ])
                .map_err(csv_err)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Noise multipliers of the Gaussian defense (clip norm 1).
pub const SIGMA_SWEEP: [f64; 3] = [0.001, 0.01, 0.1];
/// Unique-component weights of the non-unique defense.
pub const ALPHA_SWEEP: [f64; 3] = [0.1, 0.3, 0.5];
pub const GAUSSIAN_ROUNDS: usize = 40;
pub const NON_UNIQUE_ROUNDS: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseRow {
    pub mode: String,
    pub parameter: f64,
    pub round: usize,
    pub vulnerability: f64,
    pub test_mae: f64,
}

/// Undefended baseline (run for the longer budget, so it covers both
/// comparison rounds), Gaussian noise for each sigma over 40 rounds and
/// non-unique gradients for each alpha over 25 rounds. Vulnerability is
/// measured every round.
pub fn defense_configs(base: &ExperimentConfig) -> Vec<(String, f64, ExperimentConfig)> {
    let mut out = Vec::new();
    let mut with = |mode: &str, parameter: f64, privacy: PrivacyConfig, rounds: usize| {
        let mut c = base.clone();
        c.privacy = privacy;
        c.policy = PolicyConfig::sync(rounds);
        c.attack.enabled = true;
        c.attack.every = 1;
        c.encryption.enabled = false;
        c.centralized_fraction = None;
        c.run_id = format!("{}-{mode}-{parameter}", base.run_id);
        out.push((mode.to_string(), parameter, c));
    };
    with("none", 0.0, PrivacyConfig::default(), GAUSSIAN_ROUNDS.max(NON_UNIQUE_ROUNDS));
    for s in SIGMA_SWEEP {
        with("gaussian-noise", s, PrivacyConfig::gaussian(base.privacy.clip_norm, s), GAUSSIAN_ROUNDS);
    }
    for a in ALPHA_SWEEP {
        with("non-unique", a, PrivacyConfig::non_unique(a), NON_UNIQUE_ROUNDS);
    }
    out
}

pub fn run_defense_sweep(base: &ExperimentConfig) -> Result<Vec<DefenseRow>> {
    let runs: Vec<(String, f64, RunResult)> = defense_configs(base)
        .into_par_iter()
        .map(|(mode, p, c)| execute(&c).map(|r| (mode, p, r)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (mode, parameter, run) in runs {
        for r in &run.records {
            if let Some(v) = r.vulnerability {
                rows.push(DefenseRow {
                    mode: mode.clone(),
                    parameter,
                    round: r.round,
                    vulnerability: v,
                    test_mae: r.test_metric,
                });
            }
        }
    }
    Ok(rows)
}

/// Columns `mode,parameter,round,vulnerability,test_mae`.
pub fn write_defense_csv<W: Write>(rows: &[DefenseRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mode", "parameter", "round", "vulnerability", "test_mae"])
        .map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.mode.clone(),
            r.parameter.to_string(),
            r.round.to_string(),
            r.vulnerability.to_string(),
            r.test_mae.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Vulnerability of `mode`/`parameter` at `round`.
pub fn defense_at<'a>(rows: &'a [DefenseRow], mode: &str, parameter: f64, round: usize) -> Option<&'a DefenseRow> {
    rows.iter()
        .find(|r| r.mode == mode && r.parameter == parameter && r.round == round)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_nineteen_cells() {
        let base = ExperimentConfig::desk_default("g");
        let cells = grid_cells(&base, GridOptions::default());
        assert_eq!(cells.len(), 19);
        let ids: std::collections::BTreeSet<_> = cells.iter().map(|c| c.config.run_id.clone()).collect();
        assert_eq!(ids.len(), 19);
        assert!(cells.iter().all(|c| c.config.validate().is_ok()));
        let per_env = grid_cells(
            &base,
            GridOptions {
                centralized_per_environment: true,
            },
        );
        assert_eq!(per_env.len(), 28);
    }

    #[test]
    fn defense_configs_cover_sweep() {
        let base = ExperimentConfig::desk_default("d");
        let cfgs = defense_configs(&base);
        assert_eq!(cfgs.len(), 7);
        assert!(cfgs.iter().all(|(_, _, c)| c.validate().is_ok()));
    }
}
