use rayon::prelude::*;

use super::math::*;
use super::{Grads, Model, ParameterVector, Weights};
use crate::error::Result;
use crate::text::{Sentence, Token, BOS, EOS};

/// Sentences per gradient shard. Shards are reduced in index order so the
/// summed gradient does not depend on the thread schedule.
const SHARD: usize = 8;

/// Activations of one teacher-forced sentence.
pub(crate) struct ForwardCache {
    n: usize,
    m: usize,
    src: Vec<Token>,
    dec_in: Vec<Token>,
    targets: Vec<Token>,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    h1: Vec<f64>,
    z1: Vec<f64>,
    r1: Vec<f64>,
    enc: Vec<f64>,
    y: Vec<f64>,
    qd: Vec<f64>,
    kd: Vec<f64>,
    vd: Vec<f64>,
    pd: Vec<f64>,
    g1: Vec<f64>,
    qc: Vec<f64>,
    kc: Vec<f64>,
    vc: Vec<f64>,
    pc: Vec<f64>,
    g2: Vec<f64>,
    z2: Vec<f64>,
    r2: Vec<f64>,
    g3: Vec<f64>,
    logp: Vec<f64>,
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&x| x.max(0.0)).collect()
}

impl Model {
    pub(crate) fn embed(&self, table: &[f64], tokens: &[Token]) -> Vec<f64> {
        let d = self.cfg.embed_dim;
        let mut out = vec![0.0; tokens.len() * d];
        for (i, &t) in tokens.iter().enumerate() {
            let e = &table[t as usize * d..(t as usize + 1) * d];
            for ((o, &ev), &pv) in out[i * d..(i + 1) * d].iter_mut().zip(e).zip(self.position(i)) {
                *o = self.emb_scale * ev + pv;
            }
        }
        out
    }

    /// Encoder block over `src ++ EOS`; returns `(x, q, k, v, p, h1, z1, r1, enc)`.
    #[allow(clippy::type_complexity)]
    pub(crate) fn encoder_forward(
        &self,
        w: &Weights,
        src_ext: &[Token],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (d, h) = (self.cfg.embed_dim, self.cfg.hidden_dim);
        let n = src_ext.len();
        let inv = 1.0 / (d as f64).sqrt();
        let x = self.embed(w.src_embed, src_ext);
        let mut q = vec![0.0; n * d];
        let mut k = vec![0.0; n * d];
        let mut v = vec![0.0; n * d];
        matmul(&x, w.enc_wq, n, d, d, &mut q);
        matmul(&x, w.enc_wk, n, d, d, &mut k);
        matmul(&x, w.enc_wv, n, d, d, &mut v);
        let mut p = vec![0.0; n * n];
        matmul_bt(&q, &k, n, d, n, &mut p);
        for row in p.chunks_mut(n) {
            row.iter_mut().for_each(|s| *s *= inv);
            softmax_prefix(row, n);
        }
        let mut h1 = x.clone();
        let mut att = vec![0.0; n * d];
        matmul(&p, &v, n, n, d, &mut att);
        add_assign(&mut h1, &att);
        let mut z1 = vec![0.0; n * h];
        matmul(&h1, w.enc_w1, n, d, h, &mut z1);
        add_bias(&mut z1, w.enc_b1);
        let r1 = relu(&z1);
        let mut enc = vec![0.0; n * d];
        matmul(&r1, w.enc_w2, n, h, d, &mut enc);
        add_bias(&mut enc, w.enc_b2);
        add_assign(&mut enc, &h1);
        (x, q, k, v, p, h1, z1, r1, enc)
    }

    pub(crate) fn forward(&self, w: &Weights, src: &[Token], tgt: &[Token]) -> ForwardCache {
        let (d, h, vs) = (self.cfg.embed_dim, self.cfg.hidden_dim, self.cfg.vocab_size);
        let inv = 1.0 / (d as f64).sqrt();
        let src_ext: Vec<Token> = src.iter().copied().chain([EOS]).collect();
        let dec_in: Vec<Token> = [BOS].into_iter().chain(tgt.iter().copied()).collect();
        let targets: Vec<Token> = tgt.iter().copied().chain([EOS]).collect();
        let (n, m) = (src_ext.len(), dec_in.len());

        let (x, q, k, v, p, h1, z1, r1, enc) = self.encoder_forward(w, &src_ext);

        let y = self.embed(w.tgt_embed, &dec_in);
        let mut qd = vec![0.0; m * d];
        let mut kd = vec![0.0; m * d];
        let mut vd = vec![0.0; m * d];
        matmul(&y, w.dec_self_wq, m, d, d, &mut qd);
        matmul(&y, w.dec_self_wk, m, d, d, &mut kd);
        matmul(&y, w.dec_self_wv, m, d, d, &mut vd);
        let mut pd = vec![0.0; m * m];
        matmul_bt(&qd, &kd, m, d, m, &mut pd);
        for (j, row) in pd.chunks_mut(m).enumerate() {
            row.iter_mut().for_each(|s| *s *= inv);
            softmax_prefix(row, j + 1);
        }
        let mut g1 = y.clone();
        let mut att = vec![0.0; m * d];
        matmul(&pd, &vd, m, m, d, &mut att);
        add_assign(&mut g1, &att);

        let mut qc = vec![0.0; m * d];
        let mut kc = vec![0.0; n * d];
        let mut vc = vec![0.0; n * d];
        matmul(&g1, w.dec_cross_wq, m, d, d, &mut qc);
        matmul(&enc, w.dec_cross_wk, n, d, d, &mut kc);
        matmul(&enc, w.dec_cross_wv, n, d, d, &mut vc);
        let mut pc = vec![0.0; m * n];
        matmul_bt(&qc, &kc, m, d, n, &mut pc);
        for row in pc.chunks_mut(n) {
            row.iter_mut().for_each(|s| *s *= inv);
            softmax_prefix(row, n);
        }
        let mut g2 = g1.clone();
        matmul(&pc, &vc, m, n, d, &mut att);
        add_assign(&mut g2, &att);

        let mut z2 = vec![0.0; m * h];
        matmul(&g2, w.dec_w1, m, d, h, &mut z2);
        add_bias(&mut z2, w.dec_b1);
        let r2 = relu(&z2);
        let mut g3 = vec![0.0; m * d];
        matmul(&r2, w.dec_w2, m, h, d, &mut g3);
        add_bias(&mut g3, w.dec_b2);
        add_assign(&mut g3, &g2);

        let mut logits = vec![0.0; m * vs];
        matmul_bt(&g3, w.tgt_embed, m, d, vs, &mut logits);
        add_bias(&mut logits, w.out_bias);
        let mut logp = vec![0.0; m * vs];
        for (lr, or) in logits.chunks(vs).zip(logp.chunks_mut(vs)) {
            log_softmax(lr, or);
        }

        ForwardCache {
            n,
            m,
            src: src_ext,
            dec_in,
            targets,
            x,
            q,
            k,
            v,
            p,
            h1,
            z1,
            r1,
            enc,
            y,
            qd,
            kd,
            vd,
            pd,
            g1,
            qc,
            kc,
            vc,
            pc,
            g2,
            z2,
            r2,
            g3,
            logp,
        }
    }

    fn cache_log_likelihood(&self, c: &ForwardCache) -> f64 {
        let vs = self.cfg.vocab_size;
        c.targets
            .iter()
            .enumerate()
            .map(|(j, &t)| c.logp[j * vs + t as usize])
            .sum()
    }

    fn cache_smoothed_loss(&self, c: &ForwardCache) -> f64 {
        let vs = self.cfg.vocab_size;
        let eps = self.cfg.label_smoothing;
        let mut loss = 0.0;
        for (j, &t) in c.targets.iter().enumerate() {
            let row = &c.logp[j * vs..(j + 1) * vs];
            loss -= (1.0 - eps) * row[t as usize];
            if eps > 0.0 {
                loss -= eps / vs as f64 * row.iter().sum::<f64>();
            }
        }
        loss
    }

    /// Accumulates `scale · ∂(smoothed sentence loss)/∂θ` into `g`.
    fn backward(&self, w: &Weights, c: &ForwardCache, scale: f64, g: &mut Grads) {
        let (d, h, vs) = (self.cfg.embed_dim, self.cfg.hidden_dim, self.cfg.vocab_size);
        let (n, m) = (c.n, c.m);
        let inv = 1.0 / (d as f64).sqrt();
        let eps = self.cfg.label_smoothing;

        // output layer
        let mut dlogits: Vec<f64> = c.logp.iter().map(|&lp| scale * lp.exp()).collect();
        for (j, &t) in c.targets.iter().enumerate() {
            let row = &mut dlogits[j * vs..(j + 1) * vs];
            if eps > 0.0 {
                let u = scale * eps / vs as f64;
                row.iter_mut().for_each(|x| *x -= u);
            }
            row[t as usize] -= scale * (1.0 - eps);
        }
        col_sum_acc(&dlogits, vs, g.out_bias);
        matmul_at_acc(&dlogits, &c.g3, m, vs, d, g.tgt_embed);
        let mut dg3 = vec![0.0; m * d];
        matmul(&dlogits, w.tgt_embed, m, vs, d, &mut dg3);

        // decoder feed-forward
        col_sum_acc(&dg3, d, g.dec_b2);
        matmul_at_acc(&c.r2, &dg3, m, h, d, g.dec_w2);
        let mut dz2 = vec![0.0; m * h];
        matmul_bt(&dg3, w.dec_w2, m, d, h, &mut dz2);
        for (dz, &z) in dz2.iter_mut().zip(&c.z2) {
            if z <= 0.0 {
                *dz = 0.0;
            }
        }
        col_sum_acc(&dz2, h, g.dec_b1);
        matmul_at_acc(&c.g2, &dz2, m, d, h, g.dec_w1);
        let mut dg2 = dg3;
        matmul_bt_acc(&dz2, w.dec_w1, m, h, d, &mut dg2);

        // cross-attention
        let mut dpc = vec![0.0; m * n];
        matmul_bt(&dg2, &c.vc, m, d, n, &mut dpc);
        let mut dvc = vec![0.0; n * d];
        matmul_at_acc(&c.pc, &dg2, m, n, d, &mut dvc);
        softmax_backward_rows(&c.pc, &mut dpc, n);
        dpc.iter_mut().for_each(|x| *x *= inv);
        let mut dqc = vec![0.0; m * d];
        matmul(&dpc, &c.kc, m, n, d, &mut dqc);
        let mut dkc = vec![0.0; n * d];
        matmul_at_acc(&dpc, &c.qc, m, n, d, &mut dkc);
        matmul_at_acc(&c.g1, &dqc, m, d, d, g.dec_cross_wq);
        let mut dg1 = dg2;
        matmul_bt_acc(&dqc, w.dec_cross_wq, m, d, d, &mut dg1);
        let mut denc = vec![0.0; n * d];
        matmul_at_acc(&c.enc, &dkc, n, d, d, g.dec_cross_wk);
        matmul_bt_acc(&dkc, w.dec_cross_wk, n, d, d, &mut denc);
        matmul_at_acc(&c.enc, &dvc, n, d, d, g.dec_cross_wv);
        matmul_bt_acc(&dvc, w.dec_cross_wv, n, d, d, &mut denc);

        // decoder self-attention
        let mut dpd = vec![0.0; m * m];
        matmul_bt(&dg1, &c.vd, m, d, m, &mut dpd);
        let mut dvd = vec![0.0; m * d];
        matmul_at_acc(&c.pd, &dg1, m, m, d, &mut dvd);
        softmax_backward_rows(&c.pd, &mut dpd, m);
        dpd.iter_mut().for_each(|x| *x *= inv);
        let mut dqd = vec![0.0; m * d];
        matmul(&dpd, &c.kd, m, m, d, &mut dqd);
        let mut dkd = vec![0.0; m * d];
        matmul_at_acc(&dpd, &c.qd, m, m, d, &mut dkd);
        matmul_at_acc(&c.y, &dqd, m, d, d, g.dec_self_wq);
        matmul_at_acc(&c.y, &dkd, m, d, d, g.dec_self_wk);
        matmul_at_acc(&c.y, &dvd, m, d, d, g.dec_self_wv);
        let mut dy = dg1;
        matmul_bt_acc(&dqd, w.dec_self_wq, m, d, d, &mut dy);
        matmul_bt_acc(&dkd, w.dec_self_wk, m, d, d, &mut dy);
        matmul_bt_acc(&dvd, w.dec_self_wv, m, d, d, &mut dy);
        for (j, &t) in c.dec_in.iter().enumerate() {
            let row = &mut g.tgt_embed[t as usize * d..(t as usize + 1) * d];
            for (o, &x) in row.iter_mut().zip(&dy[j * d..(j + 1) * d]) {
                *o += self.emb_scale * x;
            }
        }

        // encoder feed-forward
        col_sum_acc(&denc, d, g.enc_b2);
        matmul_at_acc(&c.r1, &denc, n, h, d, g.enc_w2);
        let mut dz1 = vec![0.0; n * h];
        matmul_bt(&denc, w.enc_w2, n, d, h, &mut dz1);
        for (dz, &z) in dz1.iter_mut().zip(&c.z1) {
            if z <= 0.0 {
                *dz = 0.0;
            }
        }
        col_sum_acc(&dz1, h, g.enc_b1);
        matmul_at_acc(&c.h1, &dz1, n, d, h, g.enc_w1);
        let mut dh1 = denc;
        matmul_bt_acc(&dz1, w.enc_w1, n, h, d, &mut dh1);

        // encoder self-attention
        let mut dp = vec![0.0; n * n];
        matmul_bt(&dh1, &c.v, n, d, n, &mut dp);
        let mut dv = vec![0.0; n * d];
        matmul_at_acc(&c.p, &dh1, n, n, d, &mut dv);
        softmax_backward_rows(&c.p, &mut dp, n);
        dp.iter_mut().for_each(|x| *x *= inv);
        let mut dq = vec![0.0; n * d];
        matmul(&dp, &c.k, n, n, d, &mut dq);
        let mut dk = vec![0.0; n * d];
        matmul_at_acc(&dp, &c.q, n, n, d, &mut dk);
        matmul_at_acc(&c.x, &dq, n, d, d, g.enc_wq);
        matmul_at_acc(&c.x, &dk, n, d, d, g.enc_wk);
        matmul_at_acc(&c.x, &dv, n, d, d, g.enc_wv);
        let mut dx = dh1;
        matmul_bt_acc(&dq, w.enc_wq, n, d, d, &mut dx);
        matmul_bt_acc(&dk, w.enc_wk, n, d, d, &mut dx);
        matmul_bt_acc(&dv, w.enc_wv, n, d, d, &mut dx);
        for (i, &t) in c.src.iter().enumerate() {
            let row = &mut g.src_embed[t as usize * d..(t as usize + 1) * d];
            for (o, &x) in row.iter_mut().zip(&dx[i * d..(i + 1) * d]) {
                *o += self.emb_scale * x;
            }
        }
    }

    /// `log P(tgt | src; θ)`: summed log-probabilities of `tgt ++ EOS`.
    pub fn log_likelihood(&self, params: &[f64], src: &[Token], tgt: &[Token]) -> Result<f64> {
        self.check_len(params)?;
        self.check_sentence(src)?;
        self.check_sentence(tgt)?;
        let c = self.forward(&self.weights(params), src, tgt);
        Ok(self.cache_log_likelihood(&c))
    }

    /// Per-pair log-likelihoods, evaluated in parallel.
    pub fn log_likelihood_batch(&self, params: &[f64], batch: &[(Sentence, Sentence)]) -> Result<Vec<f64>> {
        batch
            .par_iter()
            .map(|(s, t)| self.log_likelihood(params, s, t))
            .collect()
    }

    /// Label-smoothed negative log-likelihood averaged over sentences, with its
    /// exact gradient.
    pub fn loss_and_gradient(&self, params: &[f64], batch: &[(Sentence, Sentence)]) -> Result<(f64, ParameterVector)> {
        self.check_len(params)?;
        if batch.is_empty() {
            return Err(crate::error::Error::EmptyInput);
        }
        for (s, t) in batch {
            self.check_sentence(s)?;
            self.check_sentence(t)?;
        }
        let w = self.weights(params);
        let scale = 1.0 / batch.len() as f64;
        let shards: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(SHARD)
            .map(|shard| {
                let mut grad = vec![0.0; self.layout.total];
                let mut loss = 0.0;
                {
                    let mut g = self.grads(&mut grad);
                    for (s, t) in shard {
                        let c = self.forward(&w, s, t);
                        loss += self.cache_smoothed_loss(&c);
                        self.backward(&w, &c, scale, &mut g);
                    }
                }
                (loss, grad)
            })
            .collect();
        let mut total = 0.0;
        let mut grad = vec![0.0; self.layout.total];
        for (l, g) in shards {
            total += l;
            add_assign(&mut grad, &g);
        }
        Ok((total * scale, ParameterVector::from_vec(grad)))
    }
}
