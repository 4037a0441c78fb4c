//! Synthetic-data scale sweep on the toy task: for each seed a noisy backward
//! model back-translates one monolingual pool, and each mode is trained with
//! growing prefixes of the resulting synthetic corpus.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backtranslation::{build_synthetic_corpus, synthesize, train_backward};
use crate::config::TrainConfig;
use crate::error::{Error, IoContext, Result};
use crate::model::Model;
use crate::scheduler::{run_alternated, BleuEvaluator, TrainingMode};
use crate::taskgen::{Task, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub task: TaskSpec,
    pub authentic_pairs: usize,
    pub dev_pairs: usize,
    /// Authentic pairs the backward model sees; fewer pairs give noisier sources.
    pub backward_pairs: usize,
    /// Synthetic-to-authentic size ratios.
    pub ratios: Vec<usize>,
    pub modes: Vec<TrainingMode>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            task: TaskSpec::default(),
            authentic_pairs: 2000,
            dev_pairs: 200,
            backward_pairs: 500,
            ratios: vec![1, 2, 4, 8],
            modes: vec![TrainingMode::Bt, TrainingMode::Alter],
            seeds: vec![1, 2, 3],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: usize,
    pub mode: TrainingMode,
    pub seed: u64,
    pub final_bleu: f64,
    pub steps: u64,
    pub phase_log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeedInfo {
    pub seed: u64,
    pub backward_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub seeds: Vec<SweepSeedInfo>,
}

impl SweepOutcome {
    pub fn mean_bleu(&self, mode: TrainingMode, ratio: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.mode == mode && r.ratio == ratio)
            .map(|r| r.final_bleu)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("ratio,mode,seed,final_dev_bleu\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{:.4}", r.ratio, r.mode, r.seed, r.final_bleu).unwrap();
        }
        s
    }

    /// Mean final BLEU per ratio (rows) and mode (columns).
    pub fn summary_table(&self, ratios: &[usize], modes: &[TrainingMode]) -> String {
        let mut s = String::from("ratio");
        for m in modes {
            write!(s, "\t{m}").unwrap();
        }
        s.push('\n');
        for &r in ratios {
            write!(s, "{r}").unwrap();
            for &m in modes {
                match self.mean_bleu(m, r) {
                    Some(b) => write!(s, "\t{b:.2}").unwrap(),
                    None => s.push_str("\t-"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path, ratios: &[usize], modes: &[TrainingMode]) -> Result<()> {
        std::fs::create_dir_all(dir).with_path(dir)?;
        let csv = dir.join("sweep.csv");
        std::fs::write(&csv, self.to_csv()).with_path(&csv)?;
        let table = dir.join("summary.txt");
        std::fs::write(&table, self.summary_table(ratios, modes)).with_path(&table)?;
        let json = dir.join("sweep.json");
        std::fs::write(&json, serde_json::to_string_pretty(self)?).with_path(&json)
    }
}

pub fn run_sweep(cfg: &SweepConfig, mut progress: impl FnMut(&str)) -> Result<SweepOutcome> {
    if cfg.ratios.is_empty() || cfg.modes.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one ratio, mode and seed".into()));
    }
    if cfg.backward_pairs == 0 || cfg.backward_pairs > cfg.authentic_pairs {
        return Err(Error::InvalidConfig("backward_pairs must lie in 1..=authentic_pairs".into()));
    }
    let max_ratio = *cfg.ratios.iter().max().unwrap();
    let mut outcome = SweepOutcome {
        rows: Vec::new(),
        seeds: Vec::new(),
    };
    for &seed in &cfg.seeds {
        let task = Task::new(TaskSpec { seed, ..cfg.task })?;
        let vocab = task.vocabulary();
        let train = TrainConfig { seed, ..cfg.train.clone() };
        let model = Model::new(train.model_config(vocab.len()))?;
        let authentic = task.sample_parallel(cfg.authentic_pairs)?;
        let dev = task.sample_dev(cfg.dev_pairs)?;
        let mono = task.sample_monolingual(max_ratio * cfg.authentic_pairs)?;

        let (backward, backward_bleu) = train_backward(&model, &authentic.head(cfg.backward_pairs)?, &dev, &train, &mut ())?;
        progress(&format!("seed {seed}: backward model dev BLEU {backward_bleu:.2}"));
        outcome.seeds.push(SweepSeedInfo { seed, backward_bleu });
        let sources = synthesize(&model, &backward, &mono, None)?;
        let pool = build_synthetic_corpus(sources, &mono, false)?;

        for &ratio in &cfg.ratios {
            let synthetic = pool.head(ratio * cfg.authentic_pairs)?;
            for &mode in &cfg.modes {
                let mut eval = BleuEvaluator { dev: &dev, beam: train.dev_beam };
                let run = run_alternated(mode, &model, &authentic, Some(&synthetic), &train, &mut eval, &mut ())?;
                progress(&format!(
                    "seed {seed} ratio {ratio} {mode}: BLEU {:.2} after {} steps ({})",
                    run.final_bleu,
                    run.global_step,
                    run.phase_log()
                ));
                outcome.rows.push(SweepRow {
                    ratio,
                    mode,
                    seed,
                    final_bleu: run.final_bleu,
                    steps: run.global_step,
                    phase_log: run.phase_log(),
                });
            }
        }
    }
    Ok(outcome)
}
