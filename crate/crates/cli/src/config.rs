//! Flat key/value run configuration with dotted sections.
//!
//! The format is one `key = value` pair per line; `#` starts a comment and
//! blank lines are ignored. Keys live under `trainer.` (optimization and
//! shaping hyperparameters) and `env.` (task construction). Every key is
//! optional and defaults are documented in the README; unknown keys and
//! out-of-range values are hard errors that name the offending key.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ccpo_core::env::{
    make_freerider_env, strong_solver, SequentialTaskEnv, VotingTaskEnv,
};
use ccpo_core::trainer::{
    CreditMode, Schedule, SequentialState, TrainerConfig, TrainerState, VotingScheme, VotingState,
};

#[derive(Debug)]
pub enum ConfigError {
    MissingFile { path: PathBuf, source: io::Error },
    Parse { line: usize, message: String },
    UnknownKey { key: String },
    Value { key: String, value: String, expected: String },
    Range { key: String, value: String, bound: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::MissingFile { path, source } => {
                write!(f, "cannot read config file {}: {source}", path.display())
            }
            ConfigError::Parse { line, message } => {
                write!(f, "config parse error on line {line}: {message}")
            }
            ConfigError::UnknownKey { key } => write!(f, "unknown config key `{key}`"),
            ConfigError::Value { key, value, expected } => {
                write!(f, "config key `{key}` has invalid value `{value}` (expected {expected})")
            }
            ConfigError::Range { key, value, bound } => {
                write!(f, "config key `{key}` = {value} out of range (must be {bound})")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Sequential,
    Voting,
}

/// Task construction presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvScenario {
    /// Hint-channel task: the truth reaches the solver only through the
    /// message alphabet.
    Hint,
    /// Message-ignoring task with a frozen strong solver.
    Freerider,
    /// Independent voters on a small binary task.
    Pivotal,
}

/// Environment portion of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvSpec {
    pub topology: Topology,
    pub scenario: EnvScenario,
    pub prompts: usize,
    pub messages: usize,
    pub answers: usize,
    pub voters: usize,
    pub hint_informativeness: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<usize>>,
    pub freeze_solver: bool,
    pub solver_accuracy: f64,
}

impl EnvSpec {
    fn default_sequential() -> Self {
        Self {
            topology: Topology::Sequential,
            scenario: EnvScenario::Hint,
            prompts: 4,
            messages: 4,
            answers: 2,
            voters: 3,
            hint_informativeness: 1.0,
            truth: None,
            freeze_solver: false,
            solver_accuracy: 0.9,
        }
    }
}

/// A full run configuration: optimization hyperparameters plus the task.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub trainer: TrainerConfig,
    pub env: EnvSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trainer: TrainerConfig::default(),
            env: EnvSpec::default_sequential(),
        }
    }
}

struct Pairs {
    entries: Vec<(String, String)>,
}

impl Pairs {
    fn take(&mut self, key: &str) -> Option<String> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(pos).1)
    }
}

fn parse_pairs(text: &str) -> Result<Pairs, ConfigError> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Parse {
                line: line_no,
                message: "empty key or value".to_string(),
            });
        }
        if entries.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::Parse {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
        entries.push((key, value));
    }
    Ok(Pairs { entries })
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse::<f64>().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        expected: "a real number".to_string(),
    })
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse::<usize>().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        expected: "a non-negative integer".to_string(),
    })
}

fn parse_u64(key: &str, value: &str) -> Result<u64, ConfigError> {
    value.parse::<u64>().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        expected: "a 64-bit unsigned integer".to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
            expected: "true or false".to_string(),
        }),
    }
}

fn range_err(key: &str, value: impl fmt::Display, bound: &str) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        value: value.to_string(),
        bound: bound.to_string(),
    }
}

fn check_open_unit(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(range_err(key, v, "in (0, 1)"))
    }
}

fn check_positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(range_err(key, v, "> 0"))
    }
}

impl RunConfig {
    /// Applies one `key = value` pair. Used both by the file parser and by
    /// sweep overrides.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "trainer.learning_rate" => {
                self.trainer.learning_rate = check_positive(key, parse_f64(key, value)?)?;
            }
            "trainer.batch_size" => {
                let v = parse_usize(key, value)?;
                if v == 0 {
                    return Err(range_err(key, v, ">= 1"));
                }
                self.trainer.batch_size = v;
            }
            "trainer.samples_per_prompt" => {
                let v = parse_usize(key, value)?;
                if v < 2 {
                    return Err(range_err(key, v, ">= 2 (group normalization needs N >= 2)"));
                }
                self.trainer.samples_per_prompt = v;
            }
            "trainer.clip_eps" => {
                self.trainer.clip_eps = check_open_unit(key, parse_f64(key, value)?)?;
            }
            "trainer.grad_clip" => {
                self.trainer.grad_clip = check_positive(key, parse_f64(key, value)?)?;
            }
            "trainer.alpha" => {
                self.trainer.alpha = check_positive(key, parse_f64(key, value)?)?;
            }
            "trainer.eta" => {
                self.trainer.eta = check_positive(key, parse_f64(key, value)?)?;
            }
            "trainer.ema_decay" => {
                self.trainer.ema_decay = check_open_unit(key, parse_f64(key, value)?)?;
            }
            "trainer.min_samples" => {
                let v = parse_u64(key, value)?;
                if v == 0 {
                    return Err(range_err(key, v, ">= 1"));
                }
                self.trainer.min_samples = v;
            }
            "trainer.epsilon" => {
                self.trainer.epsilon = check_positive(key, parse_f64(key, value)?)?;
            }
            "trainer.schedule" => {
                self.trainer.schedule = match value {
                    "synchronous" => Schedule::Synchronous,
                    "alternating" => Schedule::Alternating,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "synchronous or alternating".to_string(),
                        })
                    }
                };
            }
            "trainer.credit_mode" => {
                self.trainer.credit_mode = match value {
                    "ccpo" => CreditMode::Ccpo,
                    "shared" => CreditMode::Shared,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "ccpo or shared".to_string(),
                        })
                    }
                };
            }
            "trainer.voting_scheme" => {
                self.trainer.voting_scheme = match value {
                    "direct" => VotingScheme::Direct,
                    "allocated" => VotingScheme::Allocated,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "direct or allocated".to_string(),
                        })
                    }
                };
            }
            "trainer.steps" => {
                let v = parse_u64(key, value)?;
                if v == 0 {
                    return Err(range_err(key, v, ">= 1"));
                }
                self.trainer.steps = v;
            }
            "trainer.seed" => {
                self.trainer.seed = parse_u64(key, value)?;
            }
            "env.topology" => {
                self.env.topology = match value {
                    "sequential" => Topology::Sequential,
                    "voting" => Topology::Voting,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "sequential or voting".to_string(),
                        })
                    }
                };
            }
            "env.scenario" => {
                self.env.scenario = match value {
                    "hint" => EnvScenario::Hint,
                    "freerider" => EnvScenario::Freerider,
                    "pivotal" => EnvScenario::Pivotal,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "hint, freerider, or pivotal".to_string(),
                        })
                    }
                };
            }
            "env.prompts" => {
                let v = parse_usize(key, value)?;
                if !(1..=32).contains(&v) {
                    return Err(range_err(key, v, "in 1..=32"));
                }
                self.env.prompts = v;
            }
            "env.messages" => {
                let v = parse_usize(key, value)?;
                if !(1..=8).contains(&v) {
                    return Err(range_err(key, v, "in 1..=8"));
                }
                self.env.messages = v;
            }
            "env.answers" => {
                let v = parse_usize(key, value)?;
                if !(1..=8).contains(&v) {
                    return Err(range_err(key, v, "in 1..=8"));
                }
                self.env.answers = v;
            }
            "env.voters" => {
                let v = parse_usize(key, value)?;
                if !(1..=5).contains(&v) {
                    return Err(range_err(key, v, "in 1..=5"));
                }
                self.env.voters = v;
            }
            "env.hint_informativeness" => {
                let v = parse_f64(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(range_err(key, v, "in [0, 1]"));
                }
                self.env.hint_informativeness = v;
            }
            "env.truth" => {
                let mut truth = Vec::new();
                for part in value.split(',') {
                    truth.push(parse_usize(key, part.trim())?);
                }
                self.env.truth = Some(truth);
            }
            "env.freeze_solver" => {
                self.env.freeze_solver = parse_bool(key, value)?;
            }
            "env.solver_accuracy" => {
                self.env.solver_accuracy = check_open_unit(key, parse_f64(key, value)?)?;
            }
            _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    fn finish(mut self, explicit: &[String]) -> Result<Self, ConfigError> {
        let had = |k: &str| explicit.iter().any(|e| e == k);

        // scenario defaults follow the topology when not given explicitly
        if !had("env.scenario") {
            self.env.scenario = match self.env.topology {
                Topology::Sequential => EnvScenario::Hint,
                Topology::Voting => EnvScenario::Pivotal,
            };
        }
        let scenario_topology = match self.env.scenario {
            EnvScenario::Hint | EnvScenario::Freerider => Topology::Sequential,
            EnvScenario::Pivotal => Topology::Voting,
        };
        if !had("env.topology") {
            self.env.topology = scenario_topology;
        } else if self.env.topology != scenario_topology {
            return Err(range_err(
                "env.scenario",
                format!("{:?}", self.env.scenario).to_lowercase(),
                "consistent with env.topology",
            ));
        }

        match self.env.topology {
            Topology::Sequential => {
                if had("env.voters") {
                    return Err(range_err(
                        "env.voters",
                        self.env.voters,
                        "unset for the sequential topology",
                    ));
                }
                if self.env.scenario == EnvScenario::Freerider {
                    if had("env.hint_informativeness") && self.env.hint_informativeness != 0.0 {
                        return Err(range_err(
                            "env.hint_informativeness",
                            self.env.hint_informativeness,
                            "0 for the freerider scenario (the solver ignores messages)",
                        ));
                    }
                    self.env.hint_informativeness = 0.0;
                    if !had("env.freeze_solver") {
                        self.env.freeze_solver = true;
                    }
                }
            }
            Topology::Voting => {
                for key in [
                    "env.messages",
                    "env.hint_informativeness",
                    "env.freeze_solver",
                    "env.solver_accuracy",
                ] {
                    if had(key) {
                        return Err(range_err(
                            key,
                            "set",
                            "unset for the voting topology",
                        ));
                    }
                }
                if self.trainer.credit_mode == CreditMode::Ccpo && self.env.voters < 2 {
                    return Err(range_err(
                        "env.voters",
                        self.env.voters,
                        ">= 2 for credit_mode = ccpo (removal counterfactuals)",
                    ));
                }
            }
        }

        if let Some(truth) = &self.env.truth {
            if truth.len() != self.env.prompts {
                return Err(range_err(
                    "env.truth",
                    truth.len(),
                    &format!("a list of exactly env.prompts = {} entries", self.env.prompts),
                ));
            }
            if let Some(bad) = truth.iter().find(|t| **t >= self.env.answers) {
                return Err(range_err(
                    "env.truth",
                    bad,
                    &format!("entries < env.answers = {}", self.env.answers),
                ));
            }
        }
        Ok(self)
    }

    /// Builds the training state described by the environment section.
    pub fn build_state(&self) -> Result<TrainerState, ConfigError> {
        let core_err = |e: ccpo_core::Error| ConfigError::Range {
            key: "env".to_string(),
            value: String::new(),
            bound: e.to_string(),
        };
        match self.env.topology {
            Topology::Sequential => {
                let env = match self.env.scenario {
                    EnvScenario::Hint => SequentialTaskEnv::hint_channel(
                        self.env.prompts,
                        self.env.messages,
                        self.env.answers,
                        self.env.hint_informativeness,
                        self.env.truth.clone(),
                    )
                    .map_err(core_err)?,
                    EnvScenario::Freerider => {
                        if self.env.truth.is_none()
                            && self.env.prompts == 4
                            && self.env.messages == 4
                            && self.env.answers == 2
                        {
                            make_freerider_env()
                        } else {
                            SequentialTaskEnv::message_ignoring(
                                self.env.prompts,
                                self.env.messages,
                                self.env.answers,
                                self.env.truth.clone(),
                            )
                            .map_err(core_err)?
                        }
                    }
                    EnvScenario::Pivotal => unreachable!("validated in finish()"),
                };
                let mut state = SequentialState::fresh(env.clone(), &self.trainer).map_err(core_err)?;
                if self.env.freeze_solver {
                    state.solver =
                        strong_solver(&env, Some(self.env.solver_accuracy)).map_err(core_err)?;
                    state.frozen = [false, true];
                }
                Ok(TrainerState::Sequential(state))
            }
            Topology::Voting => {
                let env = VotingTaskEnv::new(
                    self.env.prompts,
                    self.env.answers,
                    self.env.voters,
                    self.env.truth.clone(),
                )
                .map_err(core_err)?;
                let state = VotingState::fresh(env, &self.trainer).map_err(core_err)?;
                Ok(TrainerState::Voting(state))
            }
        }
    }

    /// Canonical flat serialization; parsing it back yields an identical
    /// configuration.
    pub fn serialize_flat(&self) -> String {
        let mut out = String::new();
        let t = &self.trainer;
        out.push_str(&format!("trainer.learning_rate = {}\n", t.learning_rate));
        out.push_str(&format!("trainer.batch_size = {}\n", t.batch_size));
        out.push_str(&format!("trainer.samples_per_prompt = {}\n", t.samples_per_prompt));
        out.push_str(&format!("trainer.clip_eps = {}\n", t.clip_eps));
        out.push_str(&format!("trainer.grad_clip = {}\n", t.grad_clip));
        out.push_str(&format!("trainer.alpha = {}\n", t.alpha));
        out.push_str(&format!("trainer.eta = {}\n", t.eta));
        out.push_str(&format!("trainer.ema_decay = {}\n", t.ema_decay));
        out.push_str(&format!("trainer.min_samples = {}\n", t.min_samples));
        out.push_str(&format!("trainer.epsilon = {}\n", t.epsilon));
        out.push_str(&format!(
            "trainer.schedule = {}\n",
            match t.schedule {
                Schedule::Synchronous => "synchronous",
                Schedule::Alternating => "alternating",
            }
        ));
        out.push_str(&format!(
            "trainer.credit_mode = {}\n",
            match t.credit_mode {
                CreditMode::Ccpo => "ccpo",
                CreditMode::Shared => "shared",
            }
        ));
        out.push_str(&format!(
            "trainer.voting_scheme = {}\n",
            match t.voting_scheme {
                VotingScheme::Direct => "direct",
                VotingScheme::Allocated => "allocated",
            }
        ));
        out.push_str(&format!("trainer.steps = {}\n", t.steps));
        out.push_str(&format!("trainer.seed = {}\n", t.seed));

        let e = &self.env;
        out.push_str(&format!(
            "env.topology = {}\n",
            match e.topology {
                Topology::Sequential => "sequential",
                Topology::Voting => "voting",
            }
        ));
        out.push_str(&format!(
            "env.scenario = {}\n",
            match e.scenario {
                EnvScenario::Hint => "hint",
                EnvScenario::Freerider => "freerider",
                EnvScenario::Pivotal => "pivotal",
            }
        ));
        out.push_str(&format!("env.prompts = {}\n", e.prompts));
        out.push_str(&format!("env.answers = {}\n", e.answers));
        match e.topology {
            Topology::Sequential => {
                out.push_str(&format!("env.messages = {}\n", e.messages));
                if e.scenario != EnvScenario::Freerider {
                    out.push_str(&format!(
                        "env.hint_informativeness = {}\n",
                        e.hint_informativeness
                    ));
                }
                if e.freeze_solver != (e.scenario == EnvScenario::Freerider) {
                    out.push_str(&format!("env.freeze_solver = {}\n", e.freeze_solver));
                }
                if e.freeze_solver {
                    out.push_str(&format!("env.solver_accuracy = {}\n", e.solver_accuracy));
                }
            }
            Topology::Voting => {
                out.push_str(&format!("env.voters = {}\n", e.voters));
            }
        }
        if let Some(truth) = &e.truth {
            let parts: Vec<String> = truth.iter().map(|t| t.to_string()).collect();
            out.push_str(&format!("env.truth = {}\n", parts.join(",")));
        }
        out
    }
}

/// Parses a configuration from text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut pairs = parse_pairs(text)?;
    let explicit: Vec<String> = pairs.entries.iter().map(|(k, _)| k.clone()).collect();
    let mut config = RunConfig::default();
    // topology first so later values validate in context
    for key in ["env.topology", "env.scenario"] {
        if let Some(value) = pairs.take(key) {
            config.apply_key(key, &value)?;
        }
    }
    let remaining: Vec<(String, String)> = pairs.entries.drain(..).collect();
    for (key, value) in remaining {
        config.apply_key(&key, &value)?;
    }
    config.finish(&explicit)
}

/// Loads a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config.trainer, TrainerConfig::default());
        assert_eq!(config.trainer.learning_rate, 1e-6);
        assert_eq!(config.trainer.batch_size, 64);
        assert_eq!(config.trainer.samples_per_prompt, 4);
        assert_eq!(config.trainer.clip_eps, 0.2);
        assert_eq!(config.trainer.grad_clip, 1.0);
        assert_eq!(config.trainer.alpha, 1.0);
        assert_eq!(config.trainer.eta, 1.0);
        assert_eq!(config.trainer.ema_decay, 0.99);
        assert_eq!(config.trainer.min_samples, 50);
        assert_eq!(config.env.topology, Topology::Sequential);
        assert_eq!(config.env.scenario, EnvScenario::Hint);
    }

    #[test]
    fn out_of_range_decay_names_key_and_bound() {
        let err = parse_config("trainer.ema_decay = 1.5").unwrap_err();
        let message = err.to_string();
        assert!(message.contains("trainer.ema_decay"), "{message}");
        assert!(message.contains("(0, 1)"), "{message}");
    }

    #[test]
    fn tiny_group_size_rejected() {
        let err = parse_config("trainer.samples_per_prompt = 1").unwrap_err();
        assert!(matches!(err, ConfigError::Range { .. }));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config("trainer.momentum = 0.9").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { .. }));
        assert!(err.to_string().contains("trainer.momentum"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_config("trainer.steps 100").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = parse_config("trainer.seed = 1\ntrainer.seed = 2").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "\
# voting run
env.topology = voting
env.voters = 3
env.prompts = 8
env.answers = 4
env.truth = 0,1,2,3,0,1,2,3
trainer.learning_rate = 0.5
trainer.steps = 250
trainer.voting_scheme = allocated
trainer.seed = 99
";
        let config = parse_config(text).unwrap();
        let reparsed = parse_config(&config.serialize_flat()).unwrap();
        assert_eq!(config, reparsed);

        let config = parse_config("env.scenario = freerider").unwrap();
        assert!(config.env.freeze_solver);
        assert_eq!(config.env.hint_informativeness, 0.0);
        let reparsed = parse_config(&config.serialize_flat()).unwrap();
        assert_eq!(config, reparsed);
    }

    #[test]
    fn scenario_topology_consistency_enforced() {
        assert!(parse_config("env.topology = voting\nenv.scenario = hint").is_err());
        assert!(parse_config("env.topology = sequential\nenv.voters = 3").is_err());
        assert!(parse_config("env.topology = voting\nenv.messages = 4").is_err());
    }

    #[test]
    fn ccpo_voting_needs_two_voters() {
        let err = parse_config("env.topology = voting\nenv.voters = 1").unwrap_err();
        assert!(err.to_string().contains("env.voters"));
        // shared mode accepts a single voter
        parse_config("env.topology = voting\nenv.voters = 1\ntrainer.credit_mode = shared")
            .unwrap();
    }

    #[test]
    fn truth_table_cross_checked() {
        assert!(parse_config("env.truth = 0,1").is_err()); // wrong length for 4 prompts
        assert!(parse_config("env.prompts = 2\nenv.truth = 0,5").is_err());
        parse_config("env.prompts = 2\nenv.truth = 0,1").unwrap();
    }

    #[test]
    fn freerider_scenario_forces_zero_informativeness() {
        let err =
            parse_config("env.scenario = freerider\nenv.hint_informativeness = 0.5").unwrap_err();
        assert!(err.to_string().contains("env.hint_informativeness"));
        let config =
            parse_config("env.scenario = freerider\nenv.hint_informativeness = 0.0").unwrap();
        assert_eq!(config.env.hint_informativeness, 0.0);
    }

    #[test]
    fn build_state_produces_requested_topology() {
        let config = parse_config("env.topology = voting").unwrap();
        assert!(matches!(
            config.build_state().unwrap(),
            TrainerState::Voting(_)
        ));
        let config = parse_config("env.scenario = freerider").unwrap();
        match config.build_state().unwrap() {
            TrainerState::Sequential(s) => {
                assert!(s.frozen[1]);
            }
            _ => panic!("expected sequential state"),
        }
    }
}
