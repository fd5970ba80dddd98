//! Flat run configuration: a JSON file merged with command-line
//! overrides, echoed verbatim before any work starts.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Invalid { path: String, message: String },
}

/// Every tunable in one flat bag. Unknown keys in a config file are
/// fatal so silent typos cannot change a run.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // Paths.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub kernel: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub categories: Option<PathBuf>,

    // Training.
    pub objective: Option<String>,
    pub sampler: Option<String>,
    pub kernel_mode: Option<String>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub lr: Option<f64>,
    pub l2: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub eval_interval: Option<usize>,
    pub patience: Option<usize>,

    // Ingestion.
    pub threshold: Option<f64>,

    // Diversity kernel pretraining.
    pub rank: Option<usize>,
    pub set_size: Option<usize>,
    pub min_categories: Option<usize>,
    pub kernel_epochs: Option<usize>,
    pub kernel_lr: Option<f64>,

    // Synthetic data.
    pub synth_users: Option<usize>,
    pub synth_items: Option<usize>,
    pub synth_categories: Option<usize>,

    // Evaluation, sweeps, diagnostics.
    pub eval_cutoffs: Option<Vec<usize>>,
    pub sweep_param: Option<String>,
    pub sweep_values: Option<Vec<usize>>,
    pub trend_epochs: Option<Vec<usize>>,
    pub trend_instances: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file = File::open(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| ConfigError::Invalid {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Field-wise merge: values in `overrides` win.
    pub fn merged_with(mut self, overrides: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($field:ident),* $(,)?) => {
                $(if overrides.$field.is_some() {
                    self.$field = overrides.$field;
                })*
            };
        }
        take!(
            data,
            out,
            kernel,
            model,
            ratings,
            categories,
            objective,
            sampler,
            kernel_mode,
            k,
            n,
            lr,
            l2,
            epochs,
            seed,
            threads,
            embedding_dim,
            batch_size,
            eval_interval,
            patience,
            threshold,
            rank,
            set_size,
            min_categories,
            kernel_epochs,
            kernel_lr,
            synth_users,
            synth_items,
            synth_categories,
            eval_cutoffs,
            sweep_param,
            sweep_values,
            trend_epochs,
            trend_instances,
        );
        self
    }

    /// Write the effective configuration into the output directory.
    pub fn echo_to(&self, out_dir: &Path) -> Result<PathBuf, ConfigError> {
        let path = out_dir.join("config-echo.json");
        let file = File::create(&path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::to_writer_pretty(file, self).map_err(|e| ConfigError::Invalid {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn unknown_keys_are_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let mut f = File::create(&path).unwrap();
        f.write_all(br#"{"k": 5, "typo_key": 1}"#).unwrap();
        drop(f);
        match RunConfig::load(&path) {
            Err(ConfigError::Invalid { message, .. }) => {
                assert!(message.contains("typo_key"), "message: {message}")
            }
            other => panic!("expected invalid config, got {other:?}"),
        }
    }

    #[test]
    fn overrides_win_in_merge() {
        let base = RunConfig {
            k: Some(5),
            n: Some(5),
            seed: Some(1),
            ..RunConfig::default()
        };
        let over = RunConfig {
            k: Some(7),
            ..RunConfig::default()
        };
        let merged = base.merged_with(over);
        assert_eq!(merged.k, Some(7));
        assert_eq!(merged.n, Some(5));
        assert_eq!(merged.seed, Some(1));
    }

    #[test]
    fn echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            k: Some(5),
            objective: Some("lkp_nps".into()),
            ..RunConfig::default()
        };
        let path = config.echo_to(dir.path()).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(config, loaded);
    }
}
