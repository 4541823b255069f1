//! Persistent run outputs: the per-step CSV, the summary document, and the
//! plot-ready curve files.
//!
//! Every recorded decimal is written with fixed 9-place formatting and LF
//! line endings, so a rerun with the same configuration and seed produces
//! byte-identical files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ccpo_core::oracles::SuiteCheck;
use ccpo_core::report::StepReport;
use ccpo_core::trainer::TrainerConfig;

use crate::config::EnvSpec;

/// Final greedy evaluation metrics of a training run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FinalMetrics {
    /// Mean team reward of the last training step's rollouts.
    pub train_accuracy: f64,
    /// Greedy team accuracy over the prompt set.
    pub evaluate: f64,
    /// Greedy solver-alone accuracy (sequential topology only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solo_evaluate: Option<f64>,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// Wall-clock id (`run-<unix-seconds>-seed<seed>`); printed, and used for
    /// default output directories, but kept out of the files themselves so
    /// that reruns stay byte-identical.
    pub run_id: String,
    pub trainer: TrainerConfig,
    pub env: EnvSpec,
    pub step_reports: Vec<StepReport>,
    pub final_metrics: FinalMetrics,
    pub verification: Vec<SuiteCheck>,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a TrainerConfig,
    env: &'a EnvSpec,
    final_metrics: &'a FinalMetrics,
    verification: &'a [SuiteCheck],
}

fn fixed(v: f64) -> String {
    format!("{v:.9}")
}

/// One row per (step, agent):
/// `step,agent,mean_delta,mean_advantage,gate,train_acc,max_kl,grad_norm`.
/// The gate column is empty for topologies without a gate.
pub fn steps_csv(reports: &[StepReport]) -> String {
    let mut out = String::from("step,agent,mean_delta,mean_advantage,gate,train_acc,max_kl,grad_norm\n");
    for report in reports {
        let gate = report.gate.map(fixed).unwrap_or_default();
        for agent in 0..report.grad_norms.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                report.step,
                agent,
                fixed(report.per_agent_mean_delta[agent]),
                fixed(report.per_agent_mean_advantage[agent]),
                gate,
                fixed(report.train_accuracy),
                fixed(report.max_kl),
                fixed(report.grad_norms[agent]),
            ));
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> io::Result<PathBuf> {
    fs::write(path, contents.as_bytes())?;
    Ok(path.to_path_buf())
}

/// Writes `steps.csv`, `summary.json`, and the `plotdata/` curve files into
/// `dir`, returning the created paths.
pub fn write_outputs(record: &RunRecord, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();

    paths.push(write_file(&dir.join("steps.csv"), &steps_csv(&record.step_reports))?);

    let summary = Summary {
        config: &record.trainer,
        env: &record.env,
        final_metrics: &record.final_metrics,
        verification: &record.verification,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(io::Error::other)?;
    paths.push(write_file(&dir.join("summary.json"), &format!("{json}\n"))?);

    let plot = dir.join("plotdata");
    fs::create_dir_all(&plot)?;

    let mut accuracy = String::from("step,train_acc\n");
    let mut kl = String::from("step,max_kl\n");
    for report in &record.step_reports {
        accuracy.push_str(&format!("{},{}\n", report.step, fixed(report.train_accuracy)));
        kl.push_str(&format!("{},{}\n", report.step, fixed(report.max_kl)));
    }
    paths.push(write_file(&plot.join("accuracy.csv"), &accuracy)?);
    paths.push(write_file(&plot.join("max_kl.csv"), &kl)?);

    let agents = record
        .step_reports
        .first()
        .map(|r| r.grad_norms.len())
        .unwrap_or(0);
    let mut norms = String::from("step");
    for agent in 0..agents {
        norms.push_str(&format!(",agent{agent}"));
    }
    norms.push('\n');
    for report in &record.step_reports {
        norms.push_str(&report.step.to_string());
        for agent in 0..agents {
            norms.push(',');
            norms.push_str(&fixed(report.grad_norms[agent]));
        }
        norms.push('\n');
    }
    paths.push(write_file(&plot.join("grad_norms.csv"), &norms)?);

    if record.step_reports.iter().any(|r| r.gate.is_some()) {
        let mut gate = String::from("step,gate\n");
        for report in &record.step_reports {
            if let Some(g) = report.gate {
                gate.push_str(&format!("{},{}\n", report.step, fixed(g)));
            }
        }
        paths.push(write_file(&plot.join("gate.csv"), &gate)?);
    }

    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(step: u64, agents: usize, gate: Option<f64>) -> StepReport {
        StepReport {
            step,
            per_agent_mean_delta: vec![0.25; agents],
            per_agent_mean_advantage: vec![-0.5; agents],
            gate,
            train_accuracy: 0.75,
            max_kl: 0.001,
            grad_norms: vec![0.1; agents],
        }
    }

    #[test]
    fn csv_has_one_row_per_step_and_agent() {
        let reports: Vec<StepReport> = (0..3).map(|s| report(s, 2, Some(0.5))).collect();
        let csv = steps_csv(&reports);
        assert_eq!(csv.lines().count(), 1 + 6);
        assert!(csv.starts_with("step,agent,mean_delta,"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn fixed_formatting_is_nine_decimals() {
        let csv = steps_csv(&[report(0, 1, None)]);
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row, "0,0,0.250000000,-0.500000000,,0.750000000,0.001000000,0.100000000");
    }
}
