//! The JSON run configuration.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{GraphMode, KnowledgeGraph};
use crate::error::{KgcError, Result};
use crate::model::{EncoderConfig, ModelConfig, ScorerConfig};
use crate::train::{LossConfig, TrainConfig};

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

/// One experiment. Relative `dataset` and `out` paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dataset: PathBuf,
    pub encoder: EncoderConfig,
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub graph_mode: GraphMode,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| KgcError::config(format!("run config: {e}")))?;
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                KgcError::config(format!("run config {} not found", path.display()))
            }
            _ => KgcError::io(path, e),
        })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new("."))).map_err(|e| match e {
            KgcError::Config(m) => KgcError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder.clone(),
            scorer: self.scorer.clone(),
            graph_mode: self.graph_mode,
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.model_config().label())
    }

    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(KgcError::config("seeds: at least one seed is required"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(KgcError::config("seeds: duplicate seed"));
        }
        Ok(())
    }

    /// Checks the preconditions that depend on the dataset size.
    pub fn validate_for(&self, kg: &KnowledgeGraph) -> Result<()> {
        self.loss.negatives(kg.num_entities())?;
        Ok(())
    }
}

/// SHA-256 over the dataset name and the model, loss and training settings.
pub fn config_hash(cfg: &RunConfig, kg: &KnowledgeGraph) -> String {
    let key = (&kg.name, &kg.content_hash, cfg.model_config(), cfg.loss, cfg.train);
    let bytes = serde_json::to_vec(&key).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}
