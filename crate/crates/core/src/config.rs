//! Run configuration. One JSON document fixes everything a run depends on.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::model::ModelConfig;
use crate::optim::{AdamConfig, LrSchedule};

/// Architecture hyperparameters; the vocabulary size comes from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelHyper {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
    pub label_smoothing: f64,
    pub init_scale: f64,
}

impl Default for ModelHyper {
    fn default() -> Self {
        let m = ModelConfig::new(0);
        Self {
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            max_len: m.max_len,
            label_smoothing: m.label_smoothing,
            init_scale: m.init_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub model: ModelHyper,
    pub adam: AdamConfig,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    /// Optimizer steps between dev evaluations.
    pub eval_interval: u64,
    /// Steps without a new within-phase best before a phase converges.
    pub patience: u64,
    pub max_steps: u64,
    pub max_cycles: u32,
    /// A cycle must lift the best-ever dev BLEU by more than this to continue.
    pub outer_delta: f64,
    pub reset_optimizer_on_phase: bool,
    /// Stop after this many phases regardless of convergence.
    pub max_phases: Option<u32>,
    /// Dev decoding beam; `None` means greedy.
    pub dev_beam: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelHyper::default(),
            adam: AdamConfig::default(),
            schedule: LrSchedule::default(),
            batch_size: 32,
            eval_interval: 50,
            patience: 500,
            max_steps: 5000,
            max_cycles: 8,
            outer_delta: 0.1,
            reset_optimizer_on_phase: true,
            max_phases: None,
            dev_beam: None,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.model.embed_dim,
            hidden_dim: self.model.hidden_dim,
            max_len: self.model.max_len,
            label_smoothing: self.model.label_smoothing,
            init_scale: self.model.init_scale,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.max_cycles == 0 {
            return bad("max_cycles must be positive");
        }
        if self.max_phases == Some(0) {
            return bad("max_phases must be positive");
        }
        if self.dev_beam == Some(0) {
            return bad("dev_beam must be positive");
        }
        if !(self.schedule.peak_lr > 0.0) {
            return bad("peak learning rate must be positive");
        }
        self.model_config(crate::text::NUM_RESERVED + 1).validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_path(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_path(path)
    }
}
