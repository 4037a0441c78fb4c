use std::path::Path;

use alterbt_core::experiment::SweepConfig;
use alterbt_core::landscape::GridSpec;
use alterbt_core::taskgen::TaskSpec;
use alterbt_core::{TrainConfig, TrainingMode};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSizes {
    pub train_pairs: usize,
    pub dev_pairs: usize,
    pub mono_sentences: usize,
}

impl Default for CorpusSizes {
    fn default() -> Self {
        Self {
            train_pairs: 2000,
            dev_pairs: 200,
            mono_sentences: 16000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub ratios: Vec<usize>,
    pub modes: Vec<TrainingMode>,
    pub seeds: Vec<u64>,
    pub backward_pairs: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            ratios: d.ratios,
            modes: d.modes,
            seeds: d.seeds,
            backward_pairs: d.backward_pairs,
        }
    }
}

/// Everything the CLI reads from `--config`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub task: TaskSpec,
    pub corpus: CorpusSizes,
    pub train: TrainConfig,
    pub sweep: SweepSettings,
    pub landscape: GridSpec,
}

impl Settings {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut s = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Settings::default(),
        };
        if let Some(seed) = seed {
            s.task.seed = seed;
            s.train.seed = seed;
        }
        s.task.validate()?;
        s.train.validate()?;
        Ok(s)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            task: self.task,
            authentic_pairs: self.corpus.train_pairs,
            dev_pairs: self.corpus.dev_pairs,
            backward_pairs: self.sweep.backward_pairs,
            ratios: self.sweep.ratios.clone(),
            modes: self.sweep.modes.clone(),
            seeds: self.sweep.seeds.clone(),
            train: self.train.clone(),
        }
    }
}
