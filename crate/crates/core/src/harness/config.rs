//! Experiment configuration: one TOML document with `[task]`, `[algorithm]`,
//! `[algorithm.local]`, `[secure_aggregation]` and `[output]` sections. Any
//! field can be overridden by its dotted path, e.g.
//! `algorithm.local.learning_rate=0.05`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::client::LocalSgdConfig;
use crate::error::{Error, Result};
use crate::server::{Algorithm, AlgorithmConfig, LambdaUpdate, ScalingMode, SecAggConfig};
use crate::tasks::TaskConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_metrics_file")]
    pub metrics_file: String,
    #[serde(default = "default_plots")]
    pub plots: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_metrics_file() -> String {
    "metrics.csv".into()
}
fn default_plots() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            out_dir: default_out_dir(),
            metrics_file: default_metrics_file(),
            plots: default_plots(),
        }
    }
}

impl OutputConfig {
    pub fn metrics_path(&self) -> PathBuf {
        self.out_dir.join(&self.metrics_file)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub task: TaskConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub secure_aggregation: SecAggConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Toy min-max regression with AFA and exponentiated-gradient weights.
    pub fn toy() -> Self {
        Self {
            seed: 0,
            task: TaskConfig::toy_regression(),
            algorithm: AlgorithmConfig {
                algorithm: Algorithm::Afa,
                lambda_update: LambdaUpdate::Eg,
                scaling_mode: ScalingMode::TwoPhaseExact,
                clients_per_round: 10,
                rounds: 1000,
                lambda_lr: 0.1,
                window_len: 10,
                init_param: 1.5,
                parallel: false,
                local: LocalSgdConfig {
                    epochs: 1,
                    batch_size: 5,
                    learning_rate: 0.1,
                },
            },
            secure_aggregation: SecAggConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Two-domain classification with a small, harder minority domain.
    pub fn classification() -> Self {
        Self {
            seed: 0,
            task: TaskConfig::synthetic_classification(),
            algorithm: AlgorithmConfig {
                algorithm: Algorithm::Afa,
                lambda_update: LambdaUpdate::Eg,
                scaling_mode: ScalingMode::TwoPhaseExact,
                clients_per_round: 10,
                rounds: 300,
                lambda_lr: 0.5,
                window_len: 10,
                init_param: 0.0,
                parallel: false,
                local: LocalSgdConfig {
                    epochs: 1,
                    batch_size: 10,
                    learning_rate: 0.1,
                },
            },
            secure_aggregation: SecAggConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides, then validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every section and their agreement; runs before any round.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        self.task.validate().map_err(wrap)?;
        self.algorithm.validate().map_err(wrap)?;
        if self.algorithm.clients_per_round > self.task.num_clients {
            return Err(Error::Config(format!(
                "clients_per_round = {} exceeds the {} clients of the task",
                self.algorithm.clients_per_round, self.task.num_clients
            )));
        }
        if self.secure_aggregation.scale_bits > 52 {
            return Err(Error::Config("secure_aggregation.scale_bits must be at most 52".into()));
        }
        if self.output.metrics_file.is_empty() {
            return Err(Error::Config("output.metrics_file must not be empty".into()));
        }
        Ok(())
    }
}

/// Sets `section.sub.key = value` in a TOML table. The value is read as a
/// TOML literal when possible and as a bare string otherwise.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("non-empty key");
    let mut table = doc;
    for part in parts {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    table.insert(leaf.to_string(), value);
    Ok(())
}
