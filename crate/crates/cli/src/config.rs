//! Run configuration, loaded from a JSON file.

use std::fs;
use std::path::{Path, PathBuf};

use ptd_core::baseline::FeaturizerConfig;
use ptd_core::evaluate::ThresholdGrid;
use ptd_core::preprocess::PreprocessConfig;
use serde::Deserialize;

use crate::CliError;

/// One language the experiment knows about, with its data files.
#[derive(Debug, Clone, Deserialize)]
pub struct LanguageEntry {
    pub code: String,
    pub template: PathBuf,
    #[serde(default)]
    pub gold: Option<PathBuf>,
}

/// Trainer hyperparameters, all optional in the file.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default)]
pub struct TrainerSection {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        TrainerSection {
            epochs: 20,
            learning_rate: 0.1,
            batch_size: 16,
        }
    }
}

/// Top-level configuration for the `ptd` pipeline.
#[derive(Debug, Clone, Deserialize)]
pub struct RunConfig {
    pub vocabulary: PathBuf,
    #[serde(default)]
    pub languages: Vec<LanguageEntry>,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub featurizer: FeaturizerConfig,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub grid: ThresholdGrid,
    /// Decoding threshold for languages present in `languages`.
    #[serde(default = "default_seen_threshold")]
    pub seen_threshold: f64,
    /// Decoding threshold for surprise languages.
    #[serde(default = "default_unseen_threshold")]
    pub unseen_threshold: f64,
    /// Delta added to a calibrated threshold before submission.
    #[serde(default = "default_threshold_adjust")]
    pub threshold_adjust: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seen_threshold() -> f64 {
    0.30
}
fn default_unseen_threshold() -> f64 {
    0.28
}
fn default_threshold_adjust() -> f64 {
    0.01
}
fn default_seed() -> u64 {
    42
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let content = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&content)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        for threshold in [self.seen_threshold, self.unseen_threshold] {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(CliError::Config(format!("threshold {threshold} outside [0, 1]")));
            }
        }
        if !self.threshold_adjust.is_finite() {
            return Err(CliError::Config("threshold_adjust must be finite".into()));
        }
        self.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.featurizer.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.trainer.learning_rate.is_finite() && self.trainer.learning_rate > 0.0) {
            return Err(CliError::Config("learning_rate must be positive".into()));
        }
        if self.trainer.batch_size == 0 {
            return Err(CliError::Config("batch_size must be at least 1".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for lang in &self.languages {
            if !seen.insert(&lang.code) {
                return Err(CliError::Config(format!("language {:?} listed twice", lang.code)));
            }
        }
        Ok(())
    }

    /// Languages that must carry gold annotations, or a config error.
    pub fn annotated_languages(&self) -> Result<Vec<(&LanguageEntry, &PathBuf)>, CliError> {
        if self.languages.is_empty() {
            return Err(CliError::Config("config lists no languages".into()));
        }
        self.languages
            .iter()
            .map(|lang| {
                lang.gold
                    .as_ref()
                    .map(|g| (lang, g))
                    .ok_or_else(|| CliError::Config(format!("language {:?} has no gold path", lang.code)))
            })
            .collect()
    }

    pub fn is_seen_language(&self, code: &str) -> bool {
        self.languages.iter().any(|l| l.code == code)
    }
}
