//! Seeded toy translation task with a known ground-truth translator.
//!
//! Source tokens `s0..sS` occupy ids `5..5+S`, target tokens `t0..tT` the ids
//! right after. Translation maps every token through a seed-derived injective
//! dictionary and then reverses each disjoint window of `reorder_window`
//! positions whose smallest mapped id is even. Keying the swap on an
//! order-free property of the window keeps the translator injective.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::text::{MonolingualCorpus, ParallelCorpus, Sentence, Token, Vocabulary, NUM_RESERVED};

const DICT_STREAM: u64 = 0x0D1C;
const TRAIN_STREAM: u64 = 0x7A1A;
const MONO_STREAM: u64 = 0x7A1A + 0x1_0000;
const DEV_STREAM: u64 = 0x7A1A + 0x2_0000;
const CORRUPT_STREAM: u64 = 0xC0FF;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub seed: u64,
    pub source_vocab_size: usize,
    pub target_vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub zipf_exponent: f64,
    pub reorder_window: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            source_vocab_size: 60,
            target_vocab_size: 60,
            min_len: 3,
            max_len: 12,
            zipf_exponent: 1.1,
            reorder_window: 2,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.min_len < 1 || self.max_len < self.min_len {
            return bad("length range must satisfy 1 <= min_len <= max_len");
        }
        if self.source_vocab_size < 1 || self.target_vocab_size < 1 {
            return bad("vocabulary sizes must be positive");
        }
        if self.target_vocab_size < self.source_vocab_size {
            return bad("target vocabulary must be at least as large as the source vocabulary");
        }
        if !(self.zipf_exponent > 0.0) {
            return bad("zipf exponent must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub substitution_prob: f64,
    pub deletion_prob: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let p = |x: f64| (0.0..=1.0).contains(&x);
        if !p(self.substitution_prob) || !p(self.deletion_prob) || self.substitution_prob + self.deletion_prob > 1.0 {
            return Err(Error::InvalidConfig("noise probabilities must lie in [0,1] and sum to at most 1".into()));
        }
        Ok(())
    }
}

/// A task instance with its dictionary materialized.
#[derive(Debug, Clone)]
pub struct Task {
    spec: TaskSpec,
    dictionary: Vec<Token>,
    zipf: Zipf<f64>,
}

impl Task {
    pub fn new(spec: TaskSpec) -> Result<Self> {
        spec.validate()?;
        let mut perm: Vec<usize> = (0..spec.target_vocab_size).collect();
        perm.shuffle(&mut stream_rng(spec.seed, DICT_STREAM, 0));
        let tgt_base = NUM_RESERVED + spec.source_vocab_size;
        let dictionary = perm[..spec.source_vocab_size]
            .iter()
            .map(|&k| (tgt_base + k) as Token)
            .collect();
        let zipf = Zipf::new(spec.source_vocab_size as f64, spec.zipf_exponent)
            .map_err(|e| Error::InvalidConfig(format!("zipf: {e}")))?;
        Ok(Self { spec, dictionary, zipf })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    /// Vocabulary covering every source and target token of the task.
    pub fn vocabulary(&self) -> Vocabulary {
        let src = (0..self.spec.source_vocab_size).map(|k| format!("s{k}"));
        let tgt = (0..self.spec.target_vocab_size).map(|k| format!("t{k}"));
        Vocabulary::from_tokens(src.chain(tgt)).expect("task tokens are distinct")
    }

    pub fn source_ids(&self) -> std::ops::Range<Token> {
        NUM_RESERVED as Token..(NUM_RESERVED + self.spec.source_vocab_size) as Token
    }

    pub fn target_ids(&self) -> std::ops::Range<Token> {
        let lo = NUM_RESERVED + self.spec.source_vocab_size;
        lo as Token..(lo + self.spec.target_vocab_size) as Token
    }

    pub fn map_token(&self, tok: Token) -> Result<Token> {
        if !self.source_ids().contains(&tok) {
            return Err(Error::OutsideTaskVocab(tok));
        }
        Ok(self.dictionary[tok as usize - NUM_RESERVED])
    }

    /// Inverse dictionary lookup for a target token.
    pub fn unmap_token(&self, tok: Token) -> Option<Token> {
        self.dictionary
            .iter()
            .position(|&t| t == tok)
            .map(|k| (k + NUM_RESERVED) as Token)
    }

    pub fn translate(&self, src: &[Token]) -> Result<Sentence> {
        let mut out = src.iter().map(|&t| self.map_token(t)).collect::<Result<Sentence>>()?;
        let w = self.spec.reorder_window;
        if w >= 2 {
            for block in out.chunks_mut(w) {
                if block.len() >= 2 && block.iter().min().is_some_and(|m| m % 2 == 0) {
                    block.reverse();
                }
            }
        }
        Ok(out)
    }

    fn sample_source(&self, stream: u64, index: u64) -> Sentence {
        let mut rng = stream_rng(self.spec.seed, stream, index);
        let len = rng.random_range(self.spec.min_len..=self.spec.max_len);
        (0..len)
            .map(|_| {
                let rank = self.zipf.sample(&mut rng) as usize;
                (NUM_RESERVED + rank.clamp(1, self.spec.source_vocab_size) - 1) as Token
            })
            .collect()
    }

    fn sample_stream(&self, stream: u64, n: usize) -> Result<ParallelCorpus> {
        if n == 0 {
            return Err(Error::NonPositiveCount);
        }
        let pairs = (0..n as u64)
            .map(|i| {
                let src = self.sample_source(stream, i);
                let tgt = self.translate(&src)?;
                Ok((src, tgt))
            })
            .collect::<Result<Vec<_>>>()?;
        ParallelCorpus::new(pairs)
    }

    pub fn sample_parallel(&self, n: usize) -> Result<ParallelCorpus> {
        self.sample_stream(TRAIN_STREAM, n)
    }

    /// Held-out pairs from a stream disjoint from training and monolingual data.
    pub fn sample_dev(&self, n: usize) -> Result<ParallelCorpus> {
        self.sample_stream(DEV_STREAM, n)
    }

    pub fn sample_monolingual(&self, m: usize) -> Result<MonolingualCorpus> {
        let pairs = self.sample_stream(MONO_STREAM, m)?;
        MonolingualCorpus::new(pairs.targets().cloned().collect())
    }

    /// Applies token substitution/deletion noise; at least the first token survives.
    pub fn corrupt_source(&self, s: &[Token], noise: &NoiseSpec, index: u64) -> Result<Sentence> {
        noise.validate()?;
        if s.is_empty() {
            return Err(Error::EmptySentence);
        }
        let mut rng = stream_rng(noise.seed, CORRUPT_STREAM, index);
        let ids = self.source_ids();
        let mut out = Vec::with_capacity(s.len());
        for &tok in s {
            let u: f64 = rng.random();
            if u < noise.substitution_prob {
                out.push(rng.random_range(ids.clone()));
            } else if u < noise.substitution_prob + noise.deletion_prob {
                continue;
            } else {
                out.push(tok);
            }
        }
        if out.is_empty() {
            out.push(s[0]);
        }
        Ok(out)
    }
}

pub fn ground_truth_translate(src: &[Token], spec: &TaskSpec) -> Result<Sentence> {
    Task::new(*spec)?.translate(src)
}

pub fn sample_parallel(n: usize, spec: &TaskSpec) -> Result<ParallelCorpus> {
    Task::new(*spec)?.sample_parallel(n)
}

pub fn sample_monolingual(m: usize, spec: &TaskSpec) -> Result<MonolingualCorpus> {
    Task::new(*spec)?.sample_monolingual(m)
}
