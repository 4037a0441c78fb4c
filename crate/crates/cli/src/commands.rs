use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use alterbt_core::backtranslation::{build_synthetic_corpus, synthesize};
use alterbt_core::bleu::{corpus_stats, format_report};
use alterbt_core::checkpoint::{self, Checkpoint, CheckpointMeta, TrajectoryEntry};
use alterbt_core::experiment::run_sweep;
use alterbt_core::landscape::{
    default_levels, eval_grid, extract_contours, project_trajectory, GridSpec, Landscape, PlaneBasis,
};
use alterbt_core::scheduler::{run_alternated, BleuEvaluator, RunDirRecorder};
use alterbt_core::taskgen::Task;
use alterbt_core::text::{load_monolingual, load_parallel, write_lines, write_parallel};
use alterbt_core::{Model, ParallelCorpus, Phase, TrainingMode, Vocabulary};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::settings::Settings;
use crate::{
    BacktranslateArgs, BleuArgs, Cli, Command, LandscapeArgs, SweepArgs, TaskgenArgs, TrainArgs, UsageError,
};

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Taskgen(a) => taskgen(&settings, a),
        Command::Train(a) => train(settings, a),
        Command::Backtranslate(a) => backtranslate(a),
        Command::Bleu(a) => bleu(a),
        Command::Landscape(a) => landscape(&settings, a),
        Command::Sweep(a) => sweep(settings, a),
    }
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_pair(prefix: &Path, vocab: &Vocabulary) -> Result<ParallelCorpus> {
    Ok(load_parallel(&with_ext(prefix, "src"), &with_ext(prefix, "tgt"), vocab)?)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn taskgen(settings: &Settings, a: TaskgenArgs) -> Result<()> {
    let task = Task::new(settings.task)?;
    let sizes = &settings.corpus;
    let train = task.sample_parallel(a.train_pairs.unwrap_or(sizes.train_pairs))?;
    let dev = task.sample_dev(a.dev_pairs.unwrap_or(sizes.dev_pairs))?;
    let mono = task.sample_monolingual(a.mono.unwrap_or(sizes.mono_sentences))?;
    let vocab = task.vocabulary();
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_parallel(&a.out.join("train.src"), &a.out.join("train.tgt"), &train, &vocab)?;
    write_parallel(&a.out.join("dev.src"), &a.out.join("dev.tgt"), &dev, &vocab)?;
    let mono_lines = mono
        .sentences()
        .iter()
        .map(|s| vocab.decode_ids(s))
        .collect::<alterbt_core::Result<Vec<_>>>()?;
    write_lines(&a.out.join("mono.tgt"), &mono_lines)?;
    write_json(&a.out.join("vocab.json"), &vocab)?;
    write_json(&a.out.join("task.json"), &settings.task)?;
    eprintln!(
        "wrote {} train, {} dev and {} monolingual sentences to {}",
        train.len(),
        dev.len(),
        mono.len(),
        a.out.display()
    );
    Ok(())
}

/// Snapshot written to `config.json` in every run directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub mode: TrainingMode,
    pub authentic: PathBuf,
    pub synthetic: Option<PathBuf>,
    pub dev: PathBuf,
    pub reverse: bool,
    pub vocab_size: usize,
    pub settings: Settings,
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    mode: TrainingMode,
    final_bleu: f64,
    global_step: u64,
    phase_log: String,
    s_time_fraction: f64,
    a_time_fraction: f64,
    phases: &'a [alterbt_core::scheduler::PhaseSummary],
}

fn train(mut settings: Settings, a: TrainArgs) -> Result<()> {
    if a.mode.needs_synthetic() && a.synthetic.is_none() {
        return Err(UsageError(format!("--synthetic is required for mode {}", a.mode)).into());
    }
    if let Some(n) = a.max_steps {
        settings.train.max_steps = n;
        settings.train.validate()?;
    }
    let vocab_path = a.vocab.clone().unwrap_or_else(|| sibling(&a.authentic, "vocab.json"));
    let vocab: Vocabulary = read_json(&vocab_path)?;
    let orient = |c: ParallelCorpus| if a.reverse { c.swapped() } else { c };
    let authentic = orient(load_pair(&a.authentic, &vocab)?);
    let dev = orient(load_pair(&a.dev, &vocab)?);
    let synthetic = match (&a.synthetic, a.mode.needs_synthetic()) {
        (Some(p), true) => Some(orient(load_pair(p, &vocab)?)),
        _ => None,
    };

    let model_cfg = settings.train.model_config(vocab.len());
    let model = Model::new(model_cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_json(&a.out.join("vocab.json"), &vocab)?;
    write_json(
        &a.out.join("config.json"),
        &RunSnapshot {
            mode: a.mode,
            authentic: a.authentic.clone(),
            synthetic: a.synthetic.clone(),
            dev: a.dev.clone(),
            reverse: a.reverse,
            vocab_size: vocab.len(),
            settings: settings.clone(),
        },
    )?;

    let hash = model_cfg.layout_hash();
    let mut recorder = RunDirRecorder::create(&a.out, &hash)?;
    let mut eval = BleuEvaluator {
        dev: &dev,
        beam: settings.train.dev_beam,
    };
    let result = run_alternated(
        a.mode,
        &model,
        &authentic,
        synthetic.as_ref(),
        &settings.train,
        &mut eval,
        &mut recorder,
    )?;
    recorder.finish()?;

    let last = result.phases.last().expect("a run has at least one phase");
    let final_phase = if result.phases.iter().any(|p| p.phase == Phase::A) { Phase::A } else { last.phase };
    let meta = CheckpointMeta::new(
        result.global_step,
        last.cycle,
        final_phase,
        result.final_bleu,
        &hash,
        result.params.len(),
    );
    checkpoint::save(
        &Checkpoint {
            params: result.params.clone(),
            meta,
        },
        &a.out.join("final.bin"),
    )?;
    write_json(
        &a.out.join("summary.json"),
        &RunSummary {
            mode: a.mode,
            final_bleu: result.final_bleu,
            global_step: result.global_step,
            phase_log: result.phase_log(),
            s_time_fraction: result.s_time_fraction,
            a_time_fraction: result.a_time_fraction,
            phases: &result.phases,
        },
    )?;
    eprintln!(
        "{}: final dev BLEU {:.2} after {} steps, phases {} (S {:.0}% / A {:.0}% of time)",
        a.mode,
        result.final_bleu,
        result.global_step,
        result.phase_log(),
        100.0 * result.s_time_fraction,
        100.0 * result.a_time_fraction
    );
    Ok(())
}

fn run_model(dir: &Path) -> Result<(Model, Vocabulary, RunSnapshot)> {
    let snap: RunSnapshot = read_json(&dir.join("config.json"))?;
    let vocab: Vocabulary = read_json(&dir.join("vocab.json"))?;
    if vocab.len() != snap.vocab_size {
        bail!("vocabulary in {} does not match its config", dir.display());
    }
    let model = Model::new(snap.settings.train.model_config(vocab.len()))?;
    Ok((model, vocab, snap))
}

#[derive(Debug, Serialize)]
struct BacktranslateManifest {
    checkpoint: PathBuf,
    checkpoint_sha256: String,
    decoder: String,
    beam: Option<usize>,
    tagged: bool,
    sentences: usize,
}

fn backtranslate(a: BacktranslateArgs) -> Result<()> {
    let dir = a.checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf();
    let (model, run_vocab, _) = run_model(&dir)?;
    let vocab: Vocabulary = match &a.vocab {
        Some(p) => read_json(p)?,
        None => run_vocab,
    };
    let bytes = std::fs::read(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let ckpt = checkpoint::decode(&bytes)?;
    let mono = load_monolingual(&a.mono, &vocab)?;
    let sources = synthesize(&model, &ckpt.params, &mono, a.beam)?;
    let corpus = build_synthetic_corpus(sources, &mono, a.tagged)?;
    write_parallel(&with_ext(&a.out, "src"), &with_ext(&a.out, "tgt"), &corpus, &vocab)?;
    let digest = Sha256::digest(&bytes);
    write_json(
        &with_ext(&a.out, "manifest.json"),
        &BacktranslateManifest {
            checkpoint: a.checkpoint.clone(),
            checkpoint_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            decoder: if a.beam.is_some() { "beam" } else { "greedy" }.into(),
            beam: a.beam,
            tagged: a.tagged,
            sentences: corpus.len(),
        },
    )?;
    eprintln!("back-translated {} sentences", corpus.len());
    Ok(())
}

fn bleu(a: BleuArgs) -> Result<()> {
    let read = |p: &Path| -> Result<Vec<Vec<String>>> {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect())
    };
    let hyps = read(&a.hyp)?;
    let refs = read(&a.reference)?;
    if hyps.len() != refs.len() {
        bail!("{} hypothesis lines vs {} reference lines", hyps.len(), refs.len());
    }
    let stats = corpus_stats(&hyps, &refs)?;
    println!("{}", format_report(&stats));
    Ok(())
}

/// First highest-scoring checkpoint of each (cycle, phase).
fn phase_bests(entries: &[TrajectoryEntry]) -> BTreeMap<(u32, Phase), &TrajectoryEntry> {
    let mut best: BTreeMap<(u32, Phase), &TrajectoryEntry> = BTreeMap::new();
    for e in entries {
        let key = (e.meta.cycle, e.meta.phase);
        match best.get(&key) {
            Some(b) if b.meta.dev_bleu >= e.meta.dev_bleu => {}
            _ => {
                best.insert(key, e);
            }
        }
    }
    best
}

fn landscape(settings: &Settings, a: LandscapeArgs) -> Result<()> {
    let (model, vocab, snap) = run_model(&a.run)?;
    let dev = load_pair(&a.dev, &vocab)?;
    let dev = if snap.reverse { dev.swapped() } else { dev };
    let entries = checkpoint::list_trajectory(&a.run)?;
    let bests = phase_bests(&entries);
    let t = a.cycle;
    let anchor = |cycle: u32, phase: Phase| {
        bests
            .get(&(cycle, phase))
            .copied()
            .ok_or_else(|| anyhow!("run has no {phase}-phase checkpoint for cycle {cycle}"))
    };
    let s_t = anchor(t, Phase::S)?.load()?;
    let a_t = anchor(t, Phase::A)?.load()?;
    let s_next = anchor(t + 1, Phase::S)?.load()?;
    let plane = PlaneBasis::new(&s_t, &a_t, &s_next)?;

    let mut spec: GridSpec = settings.landscape;
    if let Some(r) = &a.range {
        if r.len() != 4 {
            return Err(UsageError("--range takes x0,x1,y0,y1".into()).into());
        }
        spec.x_range = [r[0], r[1]];
        spec.y_range = [r[2], r[3]];
    }
    if let Some(r) = &a.res {
        if r.len() != 2 {
            return Err(UsageError("--res takes nx,ny".into()).into());
        }
        spec.nx = r[0];
        spec.ny = r[1];
    }
    eprintln!("evaluating {}x{} grid", spec.nx, spec.ny);
    let grid = eval_grid(&plane, &model, &dev, &spec, snap.settings.train.dev_beam)?;
    let levels = if a.levels == "auto" {
        default_levels(&grid, 6)
    } else {
        a.levels
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| UsageError(format!("--levels: {e}")))?
    };
    let regions = extract_contours(&grid, &levels)?;

    let mut trajectory = vec![s_t];
    for e in &entries {
        let key = (e.meta.cycle, e.meta.phase);
        if key == (t, Phase::A) || key == (t + 1, Phase::S) || key == (t + 1, Phase::A) {
            trajectory.push(e.load()?);
        }
    }
    let points = project_trajectory(&plane, &regions, &trajectory)?;
    let land = Landscape { grid, regions, points };
    land.write_json(&a.out)?;
    if let Some(svg) = &a.svg {
        land.write_svg(svg)?;
    }
    eprintln!(
        "{} regions, {} projected checkpoints ({} snapped)",
        land.regions.regions.len(),
        land.points.len(),
        land.points.iter().filter(|p| p.snapped).count()
    );
    Ok(())
}

fn sweep(mut settings: Settings, a: SweepArgs) -> Result<()> {
    if let Some(r) = a.ratios {
        settings.sweep.ratios = r;
    }
    if let Some(s) = a.seeds {
        settings.sweep.seeds = s;
    }
    let cfg = settings.sweep_config();
    let outcome = run_sweep(&cfg, |m| eprintln!("{m}"))?;
    outcome.write(&a.out, &cfg.ratios, &cfg.modes)?;
    write_json(&a.out.join("config.json"), &settings)?;
    print!("{}", outcome.summary_table(&cfg.ratios, &cfg.modes));
    Ok(())
}
