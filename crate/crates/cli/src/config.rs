//! TOML run configuration. Keys map one-to-one onto [`RunConfig`] fields and
//! unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use shiftlearn_core::cluster::DEFAULT_RESTARTS;
use shiftlearn_core::data::DEFAULT_TARGET;
use shiftlearn_core::nn::{TrainConfig, DEFAULT_WIDTHS};
use shiftlearn_core::pipeline::{
    DEFAULT_BATCH_SIZE, DEFAULT_FINETUNE_EPOCHS, DEFAULT_K_MAX, DEFAULT_PRETRAIN_EPOCHS,
    DEFAULT_TRAIN_FRACTION,
};
use shiftlearn_core::ExperimentPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[serde(alias = "markdown")]
    Md,
    Svg,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Self::Csv),
            "md" | "markdown" => Some(Self::Md),
            "svg" => Some(Self::Svg),
            _ => None,
        }
    }
}

/// A config problem, tied to the offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Relative paths resolve against the config file's directory.
    pub dataset: PathBuf,
    /// Defaults to the dataset file stem.
    pub dataset_id: Option<String>,
    pub target: String,
    pub drop_g1_g2: bool,
    pub k_max: usize,
    pub restarts: usize,
    pub seeds: Vec<u64>,
    pub widths: Vec<usize>,
    pub train_fraction: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub frozen_counts: Vec<usize>,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
    pub emit_pca_scatter: bool,
    pub emit_loss_curves: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            dataset_id: None,
            target: DEFAULT_TARGET.into(),
            drop_g1_g2: false,
            k_max: DEFAULT_K_MAX,
            restarts: DEFAULT_RESTARTS,
            seeds: vec![0],
            widths: DEFAULT_WIDTHS.to_vec(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            pretrain_epochs: DEFAULT_PRETRAIN_EPOCHS,
            finetune_epochs: DEFAULT_FINETUNE_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: 1e-3,
            frozen_counts: vec![1, 2, 3],
            output_dir: PathBuf::from("report"),
            formats: vec![Format::Csv, Format::Md, Format::Svg],
            emit_pca_scatter: true,
            emit_loss_curves: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            // toml reports unknown keys and type errors with the key in backticks.
            let field = message
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".into());
            ConfigError { field, message }
        })
    }

    /// Reads and validates a config file. Relative paths inside it are
    /// anchored at the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let mut cfg =
            Self::from_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if !cfg.dataset.as_os_str().is_empty() && cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dataset.as_os_str().is_empty() {
            return Err(invalid("dataset", "missing dataset path"));
        }
        if self.target.is_empty() {
            return Err(invalid("target", "must not be empty"));
        }
        if self.k_max < 3 {
            return Err(invalid(
                "k_max",
                format!("must be at least 3, got {}", self.k_max),
            ));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must list at least one seed"));
        }
        if self.widths.is_empty() || self.widths.contains(&0) || self.widths.last() != Some(&1) {
            return Err(invalid(
                "widths",
                format!("must be positive and end with 1, got {:?}", self.widths),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid(
                "train_fraction",
                format!("must lie in (0, 1), got {}", self.train_fraction),
            ));
        }
        if self.pretrain_epochs == 0 {
            return Err(invalid("pretrain_epochs", "must be at least 1"));
        }
        if self.finetune_epochs == 0 {
            return Err(invalid("finetune_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        let depth = self.widths.len();
        if let Some(n) = self.frozen_counts.iter().find(|&&n| n == 0 || n >= depth) {
            return Err(invalid(
                "frozen_counts",
                format!("entry {n} must lie in [1, {}]", depth.saturating_sub(1)),
            ));
        }
        if self.formats.is_empty() {
            return Err(invalid("formats", "must list at least one of csv, md, svg"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(invalid("output_dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn dataset_id(&self) -> String {
        self.dataset_id.clone().unwrap_or_else(|| {
            self.dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    pub fn to_plan(&self) -> ExperimentPlan {
        let train = |epochs| TrainConfig {
            epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            ..TrainConfig::default()
        };
        ExperimentPlan {
            dataset_path: self.dataset.clone(),
            dataset_id: self.dataset_id(),
            target: self.target.clone(),
            drop_g1_g2: self.drop_g1_g2,
            k_max: self.k_max,
            restarts: self.restarts,
            seeds: self.seeds.clone(),
            widths: self.widths.clone(),
            train_fraction: self.train_fraction,
            pretrain: train(self.pretrain_epochs),
            finetune: train(self.finetune_epochs),
            frozen_counts: self.frozen_counts.clone(),
        }
    }
}
