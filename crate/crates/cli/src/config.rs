//! JSON experiment configuration.

use std::path::PathBuf;

use byzsgd::training::{DataConfig, ModelSpec, TrainingConfig};
use byzsgd::{AggregationRule, AttackSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub data: DataConfig,
    pub rule: AggregationRule,
    #[serde(default)]
    pub attack: AttackSpec,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eval_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub shuffle_workers: bool,
    #[serde(default)]
    pub record_timing: bool,
}

fn default_workers() -> usize {
    20
}

fn default_rounds() -> usize {
    500
}

fn default_gamma() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The simulator configuration, with the run seed replaced by `seed`
    /// when given.
    pub fn training(&self, seed: Option<u64>) -> TrainingConfig {
        TrainingConfig {
            workers: self.run.workers,
            rounds: self.run.rounds,
            gamma: self.run.gamma,
            seed: seed.unwrap_or(self.run.seed),
            eval_every: self.run.eval_every,
            rule: self.rule,
            attack: self.attack.clone(),
            model: self.model.clone(),
            data: self.data.clone(),
            shuffle_workers: self.run.shuffle_workers,
            record_timing: self.run.record_timing,
        }
    }
}
