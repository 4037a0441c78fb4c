//! Convergence-driven alternation between synthetic+authentic (S) and
//! authentic-only (A) training phases, and the single-phase baselines.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bleu::{corpus_bleu, corpus_stats};
use crate::checkpoint::{self, Checkpoint, CheckpointMeta};
use crate::config::TrainConfig;
use crate::error::{Error, IoContext, Result};
use crate::model::{Model, ParameterVector};
use crate::optim::{train_steps, AdamState};
use crate::rng::derive_seed;
use crate::text::{prepend_tag, ParallelCorpus, Sentence, Token, TAG};

const PHASE_STREAM: u64 = 0x9A5E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    S,
    A,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::S => "S",
            Phase::A => "A",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    Base,
    Bt,
    BtTagged,
    Alter,
    AlterTagged,
}

impl TrainingMode {
    pub const ALL: [TrainingMode; 5] = [Self::Base, Self::Bt, Self::BtTagged, Self::Alter, Self::AlterTagged];

    pub fn name(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::Bt => "bt",
            Self::BtTagged => "bt-tagged",
            Self::Alter => "alter",
            Self::AlterTagged => "alter-tagged",
        }
    }

    pub fn is_tagged(self) -> bool {
        matches!(self, Self::BtTagged | Self::AlterTagged)
    }

    pub fn needs_synthetic(self) -> bool {
        self != Self::Base
    }
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {s:?}")))
    }
}

/// Patience rule on dev BLEU, counted in optimizer steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceMonitor {
    pub eval_interval: u64,
    pub patience: u64,
    best: f64,
    steps_since_best: u64,
}

impl ConvergenceMonitor {
    pub fn new(eval_interval: u64, patience: u64) -> Self {
        Self {
            eval_interval,
            patience,
            best: f64::NEG_INFINITY,
            steps_since_best: 0,
        }
    }

    pub fn reset(&mut self) {
        self.best = f64::NEG_INFINITY;
        self.steps_since_best = 0;
    }

    /// Records an evaluation taken `steps` steps after the previous one and
    /// reports whether it is a strict new best.
    pub fn observe(&mut self, bleu: f64, steps: u64) -> bool {
        if bleu > self.best {
            self.best = bleu;
            self.steps_since_best = 0;
            true
        } else {
            self.steps_since_best += steps;
            false
        }
    }

    pub fn converged(&self) -> bool {
        self.steps_since_best >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn steps_since_best(&self) -> u64 {
        self.steps_since_best
    }
}

/// Scores parameters on held-out data.
pub trait DevEvaluator {
    fn evaluate(&mut self, model: &Model, params: &ParameterVector) -> Result<f64>;
}

/// Decodes every source in order, in parallel. `beam = None` is greedy.
pub fn decode_all(model: &Model, params: &[f64], sources: &[Sentence], beam: Option<usize>) -> Result<Vec<Sentence>> {
    let max_steps = model.config().max_len;
    sources
        .par_iter()
        .map(|s| match beam {
            None => model.greedy_decode(params, s, max_steps),
            Some(k) => model.beam_decode(params, s, k, max_steps),
        })
        .collect()
}

pub fn evaluate_dev_with(model: &Model, params: &[f64], dev: &ParallelCorpus, beam: Option<usize>) -> Result<f64> {
    let sources: Vec<Sentence> = dev.sources().cloned().collect();
    let hyps = decode_all(model, params, &sources, beam)?;
    let refs: Vec<&[Token]> = dev.targets().map(|t| t.as_slice()).collect();
    Ok(corpus_bleu(&corpus_stats(&hyps, &refs)?))
}

/// Greedy-decoded corpus BLEU of `params` on `dev`.
pub fn evaluate_dev(model: &Model, params: &[f64], dev: &ParallelCorpus) -> Result<f64> {
    evaluate_dev_with(model, params, dev, None)
}

pub struct BleuEvaluator<'a> {
    pub dev: &'a ParallelCorpus,
    pub beam: Option<usize>,
}

impl DevEvaluator for BleuEvaluator<'_> {
    fn evaluate(&mut self, model: &Model, params: &ParameterVector) -> Result<f64> {
        evaluate_dev_with(model, params, self.dev, self.beam)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLogLine {
    pub step: u64,
    pub phase: Phase,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub global_step: u64,
    pub cycle: u32,
    pub phase: Phase,
    pub phase_index: u32,
    pub dev_bleu: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub cycle: u32,
    pub phase_index: u32,
    pub start_step: u64,
    pub end_step: u64,
    pub best_step: u64,
    pub best_bleu: f64,
    /// False when the step budget ended the phase.
    pub converged: bool,
    pub seconds: f64,
}

/// Receives the step log, every evaluated checkpoint and phase boundaries.
pub trait TrainObserver {
    fn on_steps(&mut self, _lines: &[StepLogLine]) -> Result<()> {
        Ok(())
    }

    fn on_eval(&mut self, _record: &EvalRecord, _params: &ParameterVector) -> Result<()> {
        Ok(())
    }

    fn on_phase_end(&mut self, _summary: &PhaseSummary) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Keeps every evaluated checkpoint in memory.
#[derive(Debug, Default)]
pub struct MemoryTrajectory {
    pub config_hash: String,
    pub checkpoints: Vec<Checkpoint>,
    pub steps: Vec<StepLogLine>,
}

impl TrainObserver for MemoryTrajectory {
    fn on_steps(&mut self, lines: &[StepLogLine]) -> Result<()> {
        self.steps.extend_from_slice(lines);
        Ok(())
    }

    fn on_eval(&mut self, r: &EvalRecord, params: &ParameterVector) -> Result<()> {
        self.checkpoints.push(Checkpoint {
            meta: CheckpointMeta::new(r.global_step, r.cycle, r.phase, r.dev_bleu, &self.config_hash, params.len()),
            params: params.clone(),
        });
        Ok(())
    }
}

/// Writes checkpoints, `train_log.jsonl` and `evals.jsonl` into a run directory.
pub struct RunDirRecorder {
    dir: PathBuf,
    config_hash: String,
    log: BufWriter<File>,
    evals: BufWriter<File>,
}

impl RunDirRecorder {
    pub fn create(dir: &Path, config_hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_path(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            let p = dir.join(name);
            Ok(BufWriter::new(File::create(&p).with_path(&p)?))
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            config_hash: config_hash.to_string(),
            log: open("train_log.jsonl")?,
            evals: open("evals.jsonl")?,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.log.flush().with_path(&self.dir)?;
        self.evals.flush().with_path(&self.dir)
    }
}

impl TrainObserver for RunDirRecorder {
    fn on_steps(&mut self, lines: &[StepLogLine]) -> Result<()> {
        for l in lines {
            serde_json::to_writer(&mut self.log, l)?;
            self.log.write_all(b"\n").with_path(&self.dir)?;
        }
        Ok(())
    }

    fn on_eval(&mut self, r: &EvalRecord, params: &ParameterVector) -> Result<()> {
        let meta = CheckpointMeta::new(r.global_step, r.cycle, r.phase, r.dev_bleu, &self.config_hash, params.len());
        let path = self.dir.join(meta.file_name());
        checkpoint::save(
            &Checkpoint {
                params: params.clone(),
                meta,
            },
            &path,
        )?;
        serde_json::to_writer(&mut self.evals, r)?;
        self.evals.write_all(b"\n").with_path(&self.dir)
    }
}

/// Mutable state threaded through the phases of one run.
pub struct TrainState {
    pub cycle: u32,
    pub global_step: u64,
    pub phase_index: u32,
    pub params: ParameterVector,
    pub adam: AdamState,
    pub best_ever: f64,
}

impl TrainState {
    pub fn new(model: &Model, cfg: &TrainConfig) -> Self {
        Self {
            cycle: 1,
            global_step: 0,
            phase_index: 0,
            params: model.init_params(),
            adam: AdamState::new(model.num_params(), cfg.adam),
            best_ever: f64::NEG_INFINITY,
        }
    }
}

pub struct Trainer<'a> {
    pub model: &'a Model,
    pub config: &'a TrainConfig,
    pub evaluator: &'a mut dyn DevEvaluator,
    pub observer: &'a mut dyn TrainObserver,
}

impl Trainer<'_> {
    /// Trains on `data` in chunks of the eval interval until the monitor
    /// converges or the step budget runs out. On return `state.params` holds
    /// the best-scoring parameters seen during this phase.
    pub fn run_phase(&mut self, state: &mut TrainState, phase: Phase, data: &ParallelCorpus) -> Result<PhaseSummary> {
        let cfg = self.config;
        let start = Instant::now();
        if cfg.reset_optimizer_on_phase || state.phase_index == 0 {
            state.adam = AdamState::new(self.model.num_params(), cfg.adam);
        }
        let seed = derive_seed(cfg.seed, PHASE_STREAM, state.phase_index as u64);
        let mut monitor = ConvergenceMonitor::new(cfg.eval_interval, cfg.patience);
        let start_step = state.global_step;
        let mut best: Option<(ParameterVector, u64, f64)> = None;
        let mut converged = false;
        while state.global_step < cfg.max_steps {
            let n = cfg.eval_interval.min(cfg.max_steps - state.global_step);
            let recs = train_steps(
                self.model,
                &mut state.params,
                &mut state.adam,
                &cfg.schedule,
                data,
                cfg.batch_size,
                n as usize,
                seed,
            )?;
            let lines: Vec<StepLogLine> = recs
                .iter()
                .enumerate()
                .map(|(i, r)| StepLogLine {
                    step: state.global_step + 1 + i as u64,
                    phase,
                    loss: r.loss,
                    lr: r.lr,
                })
                .collect();
            state.global_step += n;
            self.observer.on_steps(&lines)?;

            let bleu = self.evaluator.evaluate(self.model, &state.params)?;
            let improved = monitor.observe(bleu, n);
            let record = EvalRecord {
                global_step: state.global_step,
                cycle: state.cycle,
                phase,
                phase_index: state.phase_index,
                dev_bleu: bleu,
                improved,
            };
            self.observer.on_eval(&record, &state.params)?;
            if improved {
                best = Some((state.params.clone(), state.global_step, bleu));
            }
            state.best_ever = state.best_ever.max(bleu);
            if monitor.converged() {
                converged = true;
                break;
            }
        }
        let (best_step, best_bleu) = match best {
            Some((params, step, bleu)) => {
                state.params = params;
                (step, bleu)
            }
            None => (start_step, f64::NAN),
        };
        let summary = PhaseSummary {
            phase,
            cycle: state.cycle,
            phase_index: state.phase_index,
            start_step,
            end_step: state.global_step,
            best_step,
            best_bleu,
            converged,
            seconds: start.elapsed().as_secs_f64(),
        };
        state.phase_index += 1;
        self.observer.on_phase_end(&summary)?;
        Ok(summary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: TrainingMode,
    #[serde(skip)]
    pub params: ParameterVector,
    /// Dev BLEU recorded for the returned parameters.
    pub final_bleu: f64,
    pub global_step: u64,
    pub phases: Vec<PhaseSummary>,
    pub s_time_fraction: f64,
    pub a_time_fraction: f64,
}

impl RunResult {
    /// Phase letters in execution order, e.g. `"SASA"`.
    pub fn phase_log(&self) -> String {
        self.phases.iter().map(|p| p.phase.to_string()).collect()
    }
}

/// Synthetic sources carry the tag exactly once in tagged modes.
pub fn prepare_synthetic(synthetic: &ParallelCorpus, tagged: bool) -> Result<ParallelCorpus> {
    if !tagged {
        return Ok(synthetic.clone());
    }
    let pairs = synthetic
        .pairs()
        .iter()
        .map(|(s, t)| {
            let src = if s.first() == Some(&TAG) { s.clone() } else { prepend_tag(s) };
            (src, t.clone())
        })
        .collect();
    ParallelCorpus::new(pairs)
}

fn check_untagged(authentic: &ParallelCorpus) -> Result<()> {
    if authentic.sources().any(|s| s.contains(&TAG)) {
        return Err(Error::Corpus("authentic corpus contains the tag token".into()));
    }
    Ok(())
}

/// Runs one training mode from random initialization.
///
/// `base` is a single A-phase, `bt`/`bt-tagged` a single S-phase on the
/// concatenation of synthetic and authentic data, and the alternated modes
/// loop S then A until a full cycle stops improving the best dev BLEU by more
/// than `outer_delta`, or a cycle, phase or step cap is hit. Alternated runs
/// return the best parameters of the last A-phase.
pub fn run_alternated(
    mode: TrainingMode,
    model: &Model,
    authentic: &ParallelCorpus,
    synthetic: Option<&ParallelCorpus>,
    config: &TrainConfig,
    evaluator: &mut dyn DevEvaluator,
    observer: &mut dyn TrainObserver,
) -> Result<RunResult> {
    config.validate()?;
    check_untagged(authentic)?;
    let mixed = match (mode.needs_synthetic(), synthetic) {
        (false, _) => None,
        (true, None) => return Err(Error::InvalidConfig(format!("mode {mode} requires a synthetic corpus"))),
        (true, Some(syn)) => Some(prepare_synthetic(syn, mode.is_tagged())?.concat(authentic)),
    };
    let mut trainer = Trainer {
        model,
        config,
        evaluator,
        observer,
    };
    let mut state = TrainState::new(model, config);
    let mut phases: Vec<PhaseSummary> = Vec::new();
    let mut last_a: Option<(ParameterVector, f64)> = None;
    let plan: &[Phase] = match mode {
        TrainingMode::Base => &[Phase::A],
        TrainingMode::Bt | TrainingMode::BtTagged => &[Phase::S],
        TrainingMode::Alter | TrainingMode::AlterTagged => &[Phase::S, Phase::A],
    };
    let cycles = if plan.len() == 1 { 1 } else { config.max_cycles };
    let phase_cap = config.max_phases.unwrap_or(u32::MAX);
    'outer: for cycle in 1..=cycles {
        state.cycle = cycle;
        let before = state.best_ever;
        for &phase in plan {
            if state.global_step >= config.max_steps || state.phase_index >= phase_cap {
                break 'outer;
            }
            let data = match phase {
                Phase::S => mixed.as_ref().expect("synthetic corpus checked above"),
                Phase::A => authentic,
            };
            let summary = trainer.run_phase(&mut state, phase, data)?;
            if phase == Phase::A {
                last_a = Some((state.params.clone(), summary.best_bleu));
            }
            phases.push(summary);
        }
        if !(state.best_ever - before > config.outer_delta) {
            break;
        }
    }
    let (params, final_bleu) = match last_a {
        Some(x) => x,
        None => (state.params.clone(), phases.last().map_or(f64::NAN, |p| p.best_bleu)),
    };
    let time = |ph: Phase| phases.iter().filter(|p| p.phase == ph).fold(0.0, |acc, p| acc + p.seconds);
    let (s, a) = (time(Phase::S), time(Phase::A));
    let total = if s + a > 0.0 { s + a } else { 1.0 };
    Ok(RunResult {
        mode,
        params,
        final_bleu,
        global_step: state.global_step,
        phases,
        s_time_fraction: s / total,
        a_time_fraction: a / total,
    })
}
