//! Synthetic parallel data from target-side monolingual text.

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ParameterVector};
use crate::scheduler::{decode_all, run_alternated, BleuEvaluator, TrainObserver, TrainingMode};
use crate::text::{prepend_tag, MonolingualCorpus, ParallelCorpus, Sentence, BOS, PAD, TAG, UNK};

/// Trains a target-to-source model on the swapped authentic corpus with the
/// scheduler's early stopping against the swapped dev set. Returns the
/// parameters and their dev BLEU.
pub fn train_backward(
    model: &Model,
    authentic: &ParallelCorpus,
    dev: &ParallelCorpus,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(ParameterVector, f64)> {
    let reversed = authentic.swapped();
    let reversed_dev = dev.swapped();
    let mut eval = BleuEvaluator {
        dev: &reversed_dev,
        beam: config.dev_beam,
    };
    let run = run_alternated(TrainingMode::Base, model, &reversed, None, config, &mut eval, observer)?;
    Ok((run.params, run.final_bleu))
}

/// Back-translates every monolingual sentence, preserving order. Control
/// tokens are stripped from the output and empty results become `[UNK]`.
pub fn synthesize(model: &Model, backward: &[f64], mono: &MonolingualCorpus, beam: Option<usize>) -> Result<Vec<Sentence>> {
    let decoded = decode_all(model, backward, mono.sentences(), beam)?;
    Ok(decoded
        .into_iter()
        .map(|s| {
            let s: Sentence = s.into_iter().filter(|t| ![PAD, BOS, TAG].contains(t)).collect();
            if s.is_empty() {
                vec![UNK]
            } else {
                s
            }
        })
        .collect())
}

pub fn build_synthetic_corpus(sources: Vec<Sentence>, mono: &MonolingualCorpus, tagged: bool) -> Result<ParallelCorpus> {
    if sources.len() != mono.len() {
        return Err(Error::UnalignedCorpus {
            src: sources.len(),
            tgt: mono.len(),
        });
    }
    let pairs = sources
        .into_iter()
        .zip(mono.sentences())
        .map(|(s, t)| (if tagged { prepend_tag(&s) } else { s }, t.clone()))
        .collect();
    ParallelCorpus::new(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn mono() -> MonolingualCorpus {
        MonolingualCorpus::new(vec![vec![7, 8], vec![9], vec![10, 11, 12]]).unwrap()
    }

    #[test]
    fn synthesis_keeps_count_and_order() {
        let model = Model::new(ModelConfig { max_len: 8, ..ModelConfig::new(15) }).unwrap();
        let p = model.init_params();
        let m = mono();
        let out = synthesize(&model, &p, &m, None).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|s| !s.is_empty() && !s.contains(&TAG)));
        assert_eq!(synthesize(&model, &p, &m, None).unwrap(), out);
        let first = MonolingualCorpus::new(m.sentences()[..1].to_vec()).unwrap();
        let rest = MonolingualCorpus::new(m.sentences()[1..].to_vec()).unwrap();
        let mut joined = synthesize(&model, &p, &first, None).unwrap();
        joined.extend(synthesize(&model, &p, &rest, None).unwrap());
        assert_eq!(joined, out);
    }

    #[test]
    fn zero_model_decodes_to_unk_placeholder() {
        // uniform logits: argmax picks id 0 (PAD), which is stripped
        let model = Model::new(ModelConfig { init_scale: 0.0, max_len: 6, ..ModelConfig::new(15) }).unwrap();
        let out = synthesize(&model, &model.init_params(), &mono(), None).unwrap();
        assert!(out.iter().all(|s| s == &vec![UNK]));
    }

    #[test]
    fn synthetic_corpus_pairs_and_tags() {
        let m = mono();
        let src = vec![vec![5], vec![6, 6], vec![5, 6]];
        let plain = build_synthetic_corpus(src.clone(), &m, false).unwrap();
        let tagged = build_synthetic_corpus(src.clone(), &m, true).unwrap();
        assert_eq!(plain.len(), 3);
        for ((p, t), y) in plain.pairs().iter().zip(tagged.pairs()).zip(m.sentences()) {
            assert_eq!(&p.1, y);
            assert_eq!(&t.1, y);
            assert_eq!(t.0[0], TAG);
            assert_eq!(t.0.iter().filter(|&&x| x == TAG).count(), 1);
            assert_eq!(&t.0[1..], p.0.as_slice());
        }
        assert!(build_synthetic_corpus(src[..2].to_vec(), &m, false).is_err());
    }
}
