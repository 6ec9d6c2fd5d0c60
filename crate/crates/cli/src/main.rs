//! `fedsim` command line.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 when a
//! run fails.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fedsim::harness::grid::{run_defense_sweep, run_grid, write_defense_csv, write_grid_csv, GridOptions};
use fedsim::harness::metrics::read_metrics;
use fedsim::harness::model_io::read_model;
use fedsim::harness::run::{prepare, run_experiment};
use fedsim::harness::ExperimentConfig;
use fedsim::privacy::vulnerability;
use fedsim::rng::subseed;
use fedsim_ckks::{ciphertext_size_for_batch, SchemeParams};

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Secure federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its run directory.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the environment grid or the privacy-defense sweep.
    Grid {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = GridKind::Environments)]
        kind: GridKind,
        /// Centralized baselines on every environment, not just the config's.
        #[arg(long)]
        per_environment_baselines: bool,
        /// Output CSV; defaults to `<output_dir>/<run_id>-<kind>.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Measure membership-inference vulnerability of a stored run's model.
    Attack {
        #[arg(long)]
        run_dir: PathBuf,
        /// Round number written to the report.
        #[arg(long, default_value_t = 0)]
        round: usize,
        /// Output CSV; defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Emit plot-ready CSV data.
    Report {
        #[arg(long, value_enum, default_value_t = ReportKind::Runs)]
        kind: ReportKind,
        /// Run directories to combine (`runs` report).
        #[arg(long = "run-dir")]
        run_dirs: Vec<PathBuf>,
        /// Model size for the `ciphertext-size` report.
        #[arg(long, default_value_t = 2_950_401)]
        parameters: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKind {
    Environments,
    Defense,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    /// Per-round metrics of several runs with communication in gigabits.
    Runs,
    /// Encrypted model size against ciphertext batch size.
    CiphertextSize,
}

/// Flags that override config fields.
#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    /// Train learners on the rayon pool.
    #[arg(long)]
    parallel: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.rounds {
            cfg.policy.rounds = r;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(id) = &self.run_id {
            cfg.run_id = id.clone();
        }
        if self.parallel {
            cfg.execution = fedsim::federation::ExecutionMode::Parallel;
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(path: &Path, overrides: Option<&Overrides>) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_toml(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(o) = overrides {
        o.apply(&mut cfg);
        cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load_config(&config, Some(&overrides))?;
            let (dir, result) = run_experiment(&cfg)?;
            let last = result.records.last().expect("round 0 is always recorded");
            println!(
                "{}: {} rounds, {} = {:.4}, {} parameters exchanged -> {}",
                cfg.run_id,
                last.round,
                last.metric,
                last.test_metric,
                last.comm_parameters,
                dir.display()
            );
        }
        Command::Grid {
            config,
            kind,
            per_environment_baselines,
            output,
            overrides,
        } => {
            let cfg = load_config(&config, Some(&overrides))?;
            let suffix = match kind {
                GridKind::Environments => "grid",
                GridKind::Defense => "defense",
            };
            let path = output.unwrap_or_else(|| cfg.output_dir.join(format!("{}-{suffix}.csv", cfg.run_id)));
            match kind {
                GridKind::Environments => {
                    let outcomes = run_grid(
                        &cfg,
                        GridOptions {
                            centralized_per_environment: per_environment_baselines,
                        },
                    );
                    write_grid_csv(&outcomes, output_writer(Some(&path))?)?;
                    let failed: Vec<_> = outcomes.iter().filter(|o| o.result.is_err()).collect();
                    for o in &outcomes {
                        match &o.result {
                            Ok(r) => println!("{:<16} {:<16} final {:.4}", o.cell.environment, o.cell.policy, r.final_metric()),
                            Err(e) => println!("{:<16} {:<16} FAILED: {e}", o.cell.environment, o.cell.policy),
                        }
                    }
                    println!("wrote {}", path.display());
                    if !failed.is_empty() {
                        return Err(Failure::Runtime(format!("{} grid cells failed", failed.len())));
                    }
                }
                GridKind::Defense => {
                    let rows = run_defense_sweep(&cfg)?;
                    write_defense_csv(&rows, output_writer(Some(&path))?)?;
                    println!("wrote {} rows to {}", rows.len(), path.display());
                }
            }
        }
        Command::Attack { run_dir, round, output } => {
            let cfg = load_config(&run_dir.join("config.toml"), None)?;
            let prepared = prepare(&cfg)?;
            let model = read_model(BufReader::new(File::open(run_dir.join("model.bin"))?), &cfg.model.layout())?;
            let sets = match prepared.attack_sets {
                Some(s) => s,
                None => fedsim::harness::run::attack_sets(&prepared.sites, &prepared.test, cfg.attack.max_samples_per_learner)?,
            };
            let report = vulnerability(&model, &cfg.model, &sets, round, subseed(cfg.seed, "attack", &[]))?;
            report.write_csv(output_writer(output.as_deref())?)?;
            eprintln!("mean vulnerability over {} pairs: {:.4}", report.entries.len(), report.mean);
        }
        Command::Report {
            kind,
            run_dirs,
            parameters,
            output,
        } => {
            let mut out = csv::Writer::from_writer(output_writer(output.as_deref())?);
            match kind {
                ReportKind::Runs => {
                    if run_dirs.is_empty() {
                        return Err(Failure::Config("report needs at least one --run-dir".into()));
                    }
                    out.write_record(["run_id", "round", "virtual_time_s", "comm_gigabits", "metric", "test_metric", "vulnerability"])?;
                    for dir in &run_dirs {
                        for r in read_metrics(BufReader::new(File::open(dir.join("metrics.csv"))?))? {
                            out.write_record([
                                r.run_id,
                                r.round.to_string(),
                                r.virtual_time_s.to_string(),
                                (r.comm_bits as f64 / 1e9).to_string(),
                                r.metric,
                                r.test_metric.to_string(),
                                r.vulnerability.map(|v| v.to_string()).unwrap_or_default(),
                            ])?;
                        }
                    }
                }
                ReportKind::CiphertextSize => {
                    out.write_record(["batch_size", "chunks", "ciphertext_bits", "plaintext_bits", "encrypted_convention_bits"])?;
                    let params = SchemeParams::default();
                    for batch in [256usize, 512, 1024, 2048, 4096] {
                        let r = ciphertext_size_for_batch(parameters, &params, batch)?;
                        out.write_record([
                            batch.to_string(),
                            r.chunk_count.to_string(),
                            r.ciphertext_bits.to_string(),
                            r.plaintext_bits.to_string(),
                            r.encrypted_convention_bits.to_string(),
                        ])?;
                    }
                }
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
