//! Incremental decoding: the encoder runs once, the decoder caches its
//! self-attention keys/values and processes one position per step.

use super::math::*;
use super::{Model, Weights};
use crate::error::Result;
use crate::text::{Sentence, Token, BOS, EOS};

/// Encoder output with the cross-attention keys and values precomputed.
#[derive(Debug, Clone)]
pub struct Encoded {
    n: usize,
    kc: Vec<f64>,
    vc: Vec<f64>,
}

/// Self-attention cache of one partial hypothesis.
#[derive(Debug, Clone)]
pub struct DecoderState {
    len: usize,
    keys: Vec<f64>,
    values: Vec<f64>,
}

impl DecoderState {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl Model {
    pub(crate) fn encode_with(&self, w: &Weights, src: &[Token]) -> Encoded {
        let d = self.cfg.embed_dim;
        let src_ext: Vec<Token> = src.iter().copied().chain([EOS]).collect();
        let n = src_ext.len();
        let enc = self.encoder_forward(w, &src_ext).8;
        let mut kc = vec![0.0; n * d];
        let mut vc = vec![0.0; n * d];
        matmul(&enc, w.dec_cross_wk, n, d, d, &mut kc);
        matmul(&enc, w.dec_cross_wv, n, d, d, &mut vc);
        Encoded { n, kc, vc }
    }

    pub fn encode_source(&self, params: &[f64], src: &[Token]) -> Result<Encoded> {
        self.check_len(params)?;
        self.check_sentence(src)?;
        Ok(self.encode_with(&self.weights(params), src))
    }

    pub fn start_state(&self) -> DecoderState {
        DecoderState {
            len: 0,
            keys: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Feeds `token` at the next decoder position and returns the log-probability
    /// row of the following token.
    pub(crate) fn step_with(&self, w: &Weights, enc: &Encoded, state: &mut DecoderState, token: Token) -> Vec<f64> {
        let (d, h, vs) = (self.cfg.embed_dim, self.cfg.hidden_dim, self.cfg.vocab_size);
        let inv = 1.0 / (d as f64).sqrt();
        let pos = state.len;
        let y = self.embed_at(w.tgt_embed, token, pos);

        let mut q = vec![0.0; d];
        let mut k = vec![0.0; d];
        let mut v = vec![0.0; d];
        vecmat(&y, w.dec_self_wq, d, &mut q);
        vecmat(&y, w.dec_self_wk, d, &mut k);
        vecmat(&y, w.dec_self_wv, d, &mut v);
        state.keys.extend_from_slice(&k);
        state.values.extend_from_slice(&v);
        state.len += 1;
        let t = state.len;
        let mut scores = vec![0.0; t];
        matmul_bt(&q, &state.keys, 1, d, t, &mut scores);
        scores.iter_mut().for_each(|s| *s *= inv);
        softmax_prefix(&mut scores, t);
        let mut g1 = y;
        let mut att = vec![0.0; d];
        matmul(&scores, &state.values, 1, t, d, &mut att);
        add_assign(&mut g1, &att);

        let mut qc = vec![0.0; d];
        vecmat(&g1, w.dec_cross_wq, d, &mut qc);
        let mut cs = vec![0.0; enc.n];
        matmul_bt(&qc, &enc.kc, 1, d, enc.n, &mut cs);
        cs.iter_mut().for_each(|s| *s *= inv);
        softmax_prefix(&mut cs, enc.n);
        let mut g2 = g1;
        matmul(&cs, &enc.vc, 1, enc.n, d, &mut att);
        add_assign(&mut g2, &att);

        let mut z = vec![0.0; h];
        vecmat(&g2, w.dec_w1, h, &mut z);
        add_assign(&mut z, w.dec_b1);
        z.iter_mut().for_each(|x| *x = x.max(0.0));
        let mut g3 = vec![0.0; d];
        vecmat(&z, w.dec_w2, d, &mut g3);
        add_assign(&mut g3, w.dec_b2);
        add_assign(&mut g3, &g2);

        let mut logits = vec![0.0; vs];
        matmul_bt(&g3, w.tgt_embed, 1, d, vs, &mut logits);
        add_assign(&mut logits, w.out_bias);
        let mut logp = vec![0.0; vs];
        log_softmax(&logits, &mut logp);
        logp
    }

    fn embed_at(&self, table: &[f64], token: Token, pos: usize) -> Vec<f64> {
        let d = self.cfg.embed_dim;
        table[token as usize * d..(token as usize + 1) * d]
            .iter()
            .zip(self.position(pos))
            .map(|(&e, &p)| self.emb_scale * e + p)
            .collect()
    }

    /// Public single-step interface; returns the next-token log-probabilities.
    pub fn step(&self, params: &[f64], enc: &Encoded, state: &mut DecoderState, token: Token) -> Vec<f64> {
        self.step_with(&self.weights(params), enc, state, token)
    }

    /// Outputs stay short enough to be fed back as (tagged) sources.
    fn clamp_steps(&self, max_steps: usize) -> usize {
        max_steps.min(self.cfg.max_len - 3)
    }

    /// Argmax decoding (lowest id wins ties), returning the hypothesis and its
    /// summed log-probability (including EOS when emitted).
    pub fn greedy_decode_scored(&self, params: &[f64], src: &[Token], max_steps: usize) -> Result<(Sentence, f64)> {
        let enc = self.encode_source(params, src)?;
        let w = self.weights(params);
        let mut state = self.start_state();
        let mut out = Vec::new();
        let mut score = 0.0;
        let mut token = BOS;
        for _ in 0..self.clamp_steps(max_steps) {
            let logp = self.step_with(&w, &enc, &mut state, token);
            let best = argmax(&logp);
            score += logp[best as usize];
            if best == EOS {
                break;
            }
            out.push(best);
            token = best;
        }
        Ok((out, score))
    }

    pub fn greedy_decode(&self, params: &[f64], src: &[Token], max_steps: usize) -> Result<Sentence> {
        Ok(self.greedy_decode_scored(params, src, max_steps)?.0)
    }

    /// Length-unnormalized beam search. Each hypothesis proposes its `beam`
    /// best next tokens (by log-probability, lowest id on ties) and the
    /// global top `beam` survive, so a beam of one is exactly greedy search.
    pub fn beam_decode_scored(
        &self,
        params: &[f64],
        src: &[Token],
        beam: usize,
        max_steps: usize,
    ) -> Result<(Sentence, f64)> {
        let beam = beam.max(1);
        let enc = self.encode_source(params, src)?;
        let w = self.weights(params);
        struct Hyp {
            tokens: Sentence,
            score: f64,
            state: DecoderState,
        }
        let mut alive = vec![Hyp {
            tokens: Vec::new(),
            score: 0.0,
            state: self.start_state(),
        }];
        let mut finished: Vec<(Sentence, f64)> = Vec::new();
        for _ in 0..self.clamp_steps(max_steps) {
            // (score, hyp index, rank within hyp, token, logp row owner)
            let mut cands: Vec<(f64, usize, usize, Token)> = Vec::new();
            let mut states = Vec::with_capacity(alive.len());
            for (hi, hyp) in alive.iter_mut().enumerate() {
                let last = hyp.tokens.last().copied().unwrap_or(BOS);
                let mut st = hyp.state.clone();
                let logp = self.step_with(&w, &enc, &mut st, last);
                for (rank, tok) in top_k(&logp, beam).into_iter().enumerate() {
                    cands.push((hyp.score + logp[tok as usize], hi, rank, tok));
                }
                states.push(st);
            }
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut next = Vec::new();
            for &(score, hi, _, tok) in cands.iter().take(beam) {
                let mut tokens = alive[hi].tokens.clone();
                if tok == EOS {
                    finished.push((tokens, score));
                } else {
                    tokens.push(tok);
                    next.push(Hyp {
                        tokens,
                        score,
                        state: states[hi].clone(),
                    });
                }
            }
            alive = next;
            let best_finished = finished.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
            let best_alive = alive.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            if alive.is_empty() || best_finished >= best_alive {
                break;
            }
        }
        finished.extend(alive.into_iter().map(|h| (h.tokens, h.score)));
        let mut best = 0;
        for (i, f) in finished.iter().enumerate() {
            if f.1 > finished[best].1 {
                best = i;
            }
        }
        Ok(finished.swap_remove(best))
    }

    pub fn beam_decode(&self, params: &[f64], src: &[Token], beam: usize, max_steps: usize) -> Result<Sentence> {
        Ok(self.beam_decode_scored(params, src, beam, max_steps)?.0)
    }
}

fn argmax(row: &[f64]) -> Token {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best as Token
}

/// Indices of the `k` largest entries, descending, lowest index first on ties.
fn top_k(row: &[f64], k: usize) -> Vec<Token> {
    let mut idx: Vec<Token> = (0..row.len() as Token).collect();
    idx.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
