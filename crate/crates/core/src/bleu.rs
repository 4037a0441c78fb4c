//! Corpus-level BLEU-4 with brevity penalty, following multi-bleu.perl:
//! single reference, no smoothing, any zero precision gives 0.

use std::collections::HashMap;
use std::hash::Hash;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl AddAssign for NgramStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

impl Add for NgramStats {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for NgramStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

impl NgramStats {
    pub fn precisions(&self) -> [f64; MAX_ORDER] {
        std::array::from_fn(|n| {
            if self.totals[n] == 0 {
                0.0
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            }
        })
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    pub fn bleu(&self) -> f64 {
        corpus_bleu(self)
    }
}

fn ngram_counts<T: Hash + Eq>(toks: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    for g in toks.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

pub fn sentence_stats<T: Hash + Eq>(hyp: &[T], reference: &[T]) -> Result<NgramStats> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let mut stats = NgramStats {
        hyp_len: hyp.len() as u64,
        ref_len: reference.len() as u64,
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        stats.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        if hyp.len() < n {
            continue;
        }
        let ref_counts = ngram_counts(reference, n);
        stats.matches[n - 1] = ngram_counts(hyp, n)
            .into_iter()
            .map(|(g, c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
    }
    Ok(stats)
}

pub fn corpus_bleu(stats: &NgramStats) -> f64 {
    if stats.hyp_len == 0 || (0..MAX_ORDER).any(|n| stats.totals[n] == 0 || stats.matches[n] == 0) {
        return 0.0;
    }
    let log_mean = stats
        .precisions()
        .iter()
        .map(|p| p.ln() / MAX_ORDER as f64)
        .sum::<f64>();
    (stats.brevity_penalty() * log_mean.exp() * 100.0).clamp(0.0, 100.0)
}

/// Aggregated statistics over aligned hypothesis/reference lists.
pub fn corpus_stats<T: Hash + Eq, H: AsRef<[T]>, R: AsRef<[T]>>(hyps: &[H], refs: &[R]) -> Result<NgramStats> {
    if hyps.len() != refs.len() {
        return Err(Error::UnalignedCorpus {
            src: hyps.len(),
            tgt: refs.len(),
        });
    }
    hyps.iter()
        .zip(refs)
        .map(|(h, r)| sentence_stats(h.as_ref(), r.as_ref()))
        .sum()
}

/// The summary line printed by multi-bleu.perl.
pub fn format_report(stats: &NgramStats) -> String {
    let p = stats.precisions();
    let ratio = if stats.ref_len == 0 {
        0.0
    } else {
        stats.hyp_len as f64 / stats.ref_len as f64
    };
    format!(
        "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
        corpus_bleu(stats),
        100.0 * p[0],
        100.0 * p[1],
        100.0 * p[2],
        100.0 * p[3],
        stats.brevity_penalty(),
        ratio,
        stats.hyp_len,
        stats.ref_len
    )
}
