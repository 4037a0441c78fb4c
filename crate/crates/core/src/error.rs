use std::path::PathBuf;

/// Errors raised across the training, evaluation and landscape pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("empty sentence")]
    EmptySentence,
    #[error("unknown id {0}")]
    UnknownId(u32),
    #[error("unaligned corpus: {src} source lines vs {tgt} target lines")]
    UnalignedCorpus { src: usize, tgt: usize },
    #[error("blank line {line} in {}", path.display())]
    BlankLine { path: PathBuf, line: usize },
    #[error("count must be positive")]
    NonPositiveCount,
    #[error("token {0} outside task vocabulary")]
    OutsideTaskVocab(u32),
    #[error("empty reference")]
    EmptyReference,
    #[error("sentence of {len} tokens exceeds maxLen {max_len}")]
    ExceedsMaxLen { len: usize, max_len: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("step must be at least 1")]
    ZeroStep,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("not a checkpoint")]
    NotACheckpoint,
    #[error("non-finite parameters")]
    NonFiniteParameters,
    #[error("config hash mismatch: {0} vs {1}")]
    ConfigMismatch(String, String),
    #[error("degenerate plane (collinear checkpoints)")]
    DegeneratePlane,
    #[error("band not represented on grid")]
    BandNotRepresented,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Corpus(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn with_path(self, path: &std::path::Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn with_path(self, path: &std::path::Path) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
