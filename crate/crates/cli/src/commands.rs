//! Subcommand implementations: train, verify, compare, sweep.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use ccpo_core::oracles::battery::{
    run_baseline_suite, run_kl_suite, run_pivotality_suite, run_trust_region_suite,
    run_unbiasedness_suite, run_variance_suite, SuiteCheck,
};
use ccpo_core::trainer::{CreditMode, Trainer, TrainerState};

use crate::config::{load_config, ConfigError, RunConfig};
use crate::output::{write_outputs, FinalMetrics, RunRecord};

/// Seed override honored by every subcommand that runs an experiment.
pub const SEED_ENV_VAR: &str = "CCPO_SEED";

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Usage(String),
    Core(ccpo_core::Error),
    Io(std::io::Error),
    VerificationFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o failure: {e}"),
            CliError::VerificationFailed { failed, total } => {
                write!(f, "{failed} of {total} verification checks failed")
            }
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<ccpo_core::Error> for CliError {
    fn from(e: ccpo_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn apply_seed_override(config: &mut RunConfig) -> Result<(), CliError> {
    if let Ok(value) = std::env::var(SEED_ENV_VAR) {
        let seed = value.parse::<u64>().map_err(|_| {
            CliError::Usage(format!(
                "{SEED_ENV_VAR} must be a 64-bit unsigned integer, got `{value}`"
            ))
        })?;
        config.trainer.seed = seed;
    }
    Ok(())
}

fn run_id(seed: u64) -> String {
    let seconds = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("run-{seconds}-seed{seed}")
}

fn execute_run(config: &RunConfig) -> Result<RunRecord, CliError> {
    let state = config.build_state()?;
    let mut trainer = Trainer::new(config.trainer.clone(), state)?;
    let step_reports = trainer.run()?;
    let solo = match trainer.state {
        TrainerState::Sequential(_) => Some(trainer.solo_evaluate()?),
        TrainerState::Voting(_) => None,
    };
    let final_metrics = FinalMetrics {
        train_accuracy: step_reports.last().map(|r| r.train_accuracy).unwrap_or(0.0),
        evaluate: trainer.evaluate()?,
        solo_evaluate: solo,
    };
    Ok(RunRecord {
        run_id: run_id(config.trainer.seed),
        trainer: config.trainer.clone(),
        env: config.env.clone(),
        step_reports,
        final_metrics,
        verification: Vec::new(),
    })
}

/// `train --config <path> [--out <dir>]`
pub fn cmd_train(config_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    apply_seed_override(&mut config)?;
    let record = execute_run(&config)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("runs").join(&record.run_id));
    let paths = write_outputs(&record, &dir)?;
    println!("{}", record.run_id);
    println!(
        "final: train_acc={:.4} evaluate={:.4}{}",
        record.final_metrics.train_accuracy,
        record.final_metrics.evaluate,
        record
            .final_metrics
            .solo_evaluate
            .map(|s| format!(" solo={s:.4}"))
            .unwrap_or_default()
    );
    for path in paths {
        println!("wrote {}", path.display());
    }
    Ok(())
}

const SUITES: &[&str] = &[
    "unbiasedness",
    "variance",
    "baseline",
    "kl",
    "trust-region",
    "pivotality",
];

fn run_suite(name: &str, seed: u64) -> Result<Vec<SuiteCheck>, CliError> {
    let checks = match name {
        "unbiasedness" => run_unbiasedness_suite(seed, 100_000)?,
        "variance" => run_variance_suite(seed, 100_000, 100)?,
        "baseline" => run_baseline_suite(seed, 50_000)?,
        "kl" => run_kl_suite(seed, 10_000)?,
        "trust-region" => run_trust_region_suite(seed, 500)?,
        "pivotality" => run_pivotality_suite(seed)?,
        _ => unreachable!("suite names are validated before dispatch"),
    };
    Ok(checks)
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    suite: &'a str,
    seed: u64,
    checks: &'a [SuiteCheck],
}

/// `verify --suite <name|all> [--seed S] [--out <path>]`
pub fn cmd_verify(suite: &str, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let selected: Vec<&str> = if suite == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&suite) {
        vec![suite]
    } else {
        return Err(CliError::Usage(format!(
            "unknown suite `{suite}` (expected one of all, {})",
            SUITES.join(", ")
        )));
    };

    let mut checks = Vec::new();
    for name in selected {
        checks.extend(run_suite(name, seed)?);
    }
    let mut failed = 0usize;
    for check in &checks {
        let status = if check.passed {
            "[ok]  "
        } else {
            failed += 1;
            "[FAIL]"
        };
        println!(
            "{status} {} measured={:.6e} bound={:.6e} — {}",
            check.name, check.measured, check.bound, check.detail
        );
    }
    println!("{} checks, {failed} failed", checks.len());
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let summary = VerifySummary {
            suite,
            seed,
            checks: &checks,
        };
        let json = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?;
        std::fs::write(path, format!("{json}\n"))?;
        println!("wrote {}", path.display());
    }
    if failed > 0 {
        return Err(CliError::VerificationFailed {
            failed,
            total: checks.len(),
        });
    }
    Ok(())
}

/// `compare --config <path> [--out <dir>]` — runs counterfactual and shared
/// credit on the same task and seed and writes paired curves.
pub fn cmd_compare(config_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let mut base = load_config(config_path)?;
    apply_seed_override(&mut base)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-compare", run_id(base.trainer.seed))));

    let mut records = Vec::new();
    for (label, mode) in [("ccpo", CreditMode::Ccpo), ("shared", CreditMode::Shared)] {
        let mut config = base.clone();
        config.trainer.credit_mode = mode;
        let record = execute_run(&config)?;
        write_outputs(&record, &dir.join(label))?;
        println!(
            "{label}: train_acc={:.4} evaluate={:.4}",
            record.final_metrics.train_accuracy, record.final_metrics.evaluate
        );
        records.push(record);
    }

    let mut paired = String::from("step,train_acc_ccpo,train_acc_shared\n");
    for (a, b) in records[0].step_reports.iter().zip(&records[1].step_reports) {
        paired.push_str(&format!(
            "{},{:.9},{:.9}\n",
            a.step, a.train_accuracy, b.train_accuracy
        ));
    }
    std::fs::write(dir.join("compare.csv"), paired)?;
    println!("wrote {}", dir.join("compare.csv").display());
    Ok(())
}

/// `sweep --config <path> --param <key> --values v1,v2,...`
pub fn cmd_sweep(
    config_path: &Path,
    param: &str,
    values: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut base = load_config(config_path)?;
    apply_seed_override(&mut base)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-sweep", run_id(base.trainer.seed))));
    let values: Vec<&str> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".to_string()));
    }

    let mut summary = String::from("param,value,evaluate,solo_evaluate\n");
    for value in &values {
        let mut config = base.clone();
        config.apply_key(param, value)?;
        let record = execute_run(&config)?;
        write_outputs(&record, &dir.join(format!("{param}={value}")))?;
        summary.push_str(&format!(
            "{param},{value},{:.9},{}\n",
            record.final_metrics.evaluate,
            record
                .final_metrics
                .solo_evaluate
                .map(|s| format!("{s:.9}"))
                .unwrap_or_default()
        ));
        println!(
            "{param}={value}: evaluate={:.4}",
            record.final_metrics.evaluate
        );
    }
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("sweep.csv"), summary)?;
    println!("wrote {}", dir.join("sweep.csv").display());
    Ok(())
}
