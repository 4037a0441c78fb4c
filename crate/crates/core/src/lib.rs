//! Alternated training with synthetic and authentic data for a micro neural
//! machine translation model, together with BLEU evaluation and the BLEU
//! landscape projection of training checkpoints.

pub mod backtranslation;
pub mod bleu;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod landscape;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scheduler;
pub mod taskgen;
pub mod text;

pub use config::TrainConfig;
pub use error::{Error, Result};
pub use model::{Model, ModelConfig, ParameterVector};
pub use scheduler::{Phase, TrainingMode};
pub use text::{MonolingualCorpus, ParallelCorpus, Sentence, Token, Vocabulary};
