//! Flag, config-file and default merging. Flags win over the file, the
//! file wins over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use higru::{ModelConfig, SelectMetric, TrainConfig, Variant};
use serde::Deserialize;

use crate::args::{ModelArgs, OptimArgs, PathArgs};
use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub scheme: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub d0: Option<usize>,
    pub d1: Option<usize>,
    pub d2: Option<usize>,
    pub fc: Option<Vec<usize>>,
    pub dropout: Option<f64>,
    pub freeze_embeddings: Option<bool>,
    pub lr: Option<f64>,
    pub alpha: Option<f64>,
    pub patience: Option<usize>,
    pub clip_norm: Option<f64>,
    pub anneal_every: Option<usize>,
    pub select_metric: Option<SelectMetric>,
    pub seed: Option<u64>,
    pub max_epochs: Option<usize>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| CliError::ConfigFile {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Paths after merging; each command checks the ones it needs.
#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub scheme: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Paths {
    pub fn merge(flags: &PathArgs, file: &FileConfig) -> Self {
        let pick = |a: &Option<PathBuf>, b: &Option<PathBuf>| a.clone().or_else(|| b.clone());
        Paths {
            train: pick(&flags.train, &file.train),
            val: pick(&flags.val, &file.val),
            test: pick(&flags.test, &file.test),
            scheme: pick(&flags.scheme, &file.scheme),
            embeddings: pick(&flags.embeddings, &file.embeddings),
            checkpoint: pick(&flags.checkpoint, &file.checkpoint),
            out: pick(&flags.out, &file.out),
        }
    }

    pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
        path.as_deref()
            .ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
    }
}

pub fn parse_fc(text: &str) -> CliResult<Vec<usize>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|w| {
            w.trim().parse::<usize>().map_err(|_| {
                CliError::Usage(format!("--fc expects comma-separated widths, got {text:?}"))
            })
        })
        .collect()
}

/// Model architecture minus the corpus-dependent sizes.
pub fn model_config(flags: &ModelArgs, file: &FileConfig) -> CliResult<ModelConfig> {
    let d = ModelConfig::default();
    let fc = match &flags.fc {
        Some(text) => parse_fc(text)?,
        None => file.fc.clone().unwrap_or(d.fc_hidden),
    };
    let frozen = flags.freeze_embeddings || file.freeze_embeddings.unwrap_or(false);
    Ok(ModelConfig {
        variant: flags
            .variant
            .map(Variant::from)
            .or(file.variant)
            .unwrap_or(d.variant),
        d0: flags.d0.or(file.d0).unwrap_or(d.d0),
        d1: flags.d1.or(file.d1).unwrap_or(d.d1),
        d2: flags.d2.or(file.d2).unwrap_or(d.d2),
        fc_hidden: fc,
        dropout: flags.dropout.or(file.dropout).unwrap_or(d.dropout),
        num_classes: d.num_classes,
        vocab_size: d.vocab_size,
        trainable_embeddings: !frozen,
    })
}

pub fn train_config(flags: &OptimArgs, file: &FileConfig) -> CliResult<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        lr: flags.lr.or(file.lr).unwrap_or(d.lr),
        anneal_every: flags
            .anneal_every
            .or(file.anneal_every)
            .unwrap_or(d.anneal_every),
        anneal_factor: d.anneal_factor,
        patience: flags.patience.or(file.patience).unwrap_or(d.patience),
        clip_norm: flags.clip_norm.or(file.clip_norm).unwrap_or(d.clip_norm),
        alpha: flags.alpha.or(file.alpha).unwrap_or(d.alpha),
        max_epochs: flags.max_epochs.or(file.max_epochs).unwrap_or(d.max_epochs),
        seed: flags.seed.or(file.seed).unwrap_or(d.seed),
        select_metric: flags
            .select_metric
            .map(SelectMetric::from)
            .or(file.select_metric)
            .unwrap_or(d.select_metric),
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}
