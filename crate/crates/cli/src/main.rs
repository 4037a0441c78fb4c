mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "alterbt", version, about = "Alternated back-translation training on a toy translation task")]
pub struct Cli {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the toy task corpora.
    Taskgen(TaskgenArgs),
    /// Train a model in one of the five modes.
    Train(TrainArgs),
    /// Back-translate a monolingual corpus with a backward checkpoint.
    Backtranslate(BacktranslateArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu(BleuArgs),
    /// BLEU landscape around one alternation cycle of a run.
    Landscape(LandscapeArgs),
    /// Synthetic-data scale sweep over modes, ratios and seeds.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct TaskgenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub train_pairs: Option<usize>,
    #[arg(long)]
    pub dev_pairs: Option<usize>,
    #[arg(long)]
    pub mono: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub mode: alterbt_core::TrainingMode,
    /// Prefix of the authentic corpus (`<prefix>.src`, `<prefix>.tgt`).
    #[arg(long)]
    pub authentic: PathBuf,
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary file; defaults to `vocab.json` beside the authentic corpus.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Train the target-to-source direction (for a backward model).
    #[arg(long)]
    pub reverse: bool,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Args, Debug)]
pub struct BacktranslateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Target-side monolingual text, one sentence per line.
    #[arg(long)]
    pub mono: PathBuf,
    /// Output prefix for `<prefix>.src`, `<prefix>.tgt` and `<prefix>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `vocab.json` beside the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub tagged: bool,
    #[arg(long)]
    pub beam: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BleuArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
}

#[derive(Args, Debug)]
pub struct LandscapeArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub cycle: u32,
    #[arg(long)]
    pub dev: PathBuf,
    /// `x0,x1,y0,y1`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub range: Option<Vec<f64>>,
    /// `nx,ny`
    #[arg(long, value_delimiter = ',')]
    pub res: Option<Vec<usize>>,
    /// `auto` or comma-separated levels.
    #[arg(long, default_value = "auto")]
    pub levels: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

/// Raised for flag combinations clap cannot express; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
