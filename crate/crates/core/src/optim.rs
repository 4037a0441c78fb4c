//! Adam with bias correction, the warmup/inverse-square-root learning-rate
//! schedule, and the seeded minibatch loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ParameterVector};
use crate::rng::stream_rng;
use crate::text::{ParallelCorpus, Sentence};

const SHUFFLE_STREAM: u64 = 0x5EF1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            config,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                expected: self.m.len(),
                got: params.len().min(grad.len()),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Linear warmup to `peak_lr` over `warmup_steps`, then `peak_lr·√(W/τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub warmup_steps: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            peak_lr: 7e-4,
            warmup_steps: 200,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, step: u64) -> Result<f64> {
        if step == 0 {
            return Err(Error::ZeroStep);
        }
        let w = self.warmup_steps.max(1) as f64;
        let t = step as f64;
        Ok(self.peak_lr * (t / w).min((w / t).sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Optimizer step after the update (1-based).
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
}

/// Deterministic minibatch stream: the corpus is reshuffled every epoch with
/// a seed derived from `(seed, epoch)`, and batch `i` covers positions
/// `i·B .. (i+1)·B` of the concatenated epochs.
pub struct BatchStream<'a> {
    corpus: &'a ParallelCorpus,
    seed: u64,
    epoch: Option<u64>,
    order: Vec<usize>,
}

impl<'a> BatchStream<'a> {
    pub fn new(corpus: &'a ParallelCorpus, seed: u64) -> Self {
        Self {
            corpus,
            seed,
            epoch: None,
            order: Vec::new(),
        }
    }

    fn index_at(&mut self, pos: u64) -> usize {
        let n = self.corpus.len() as u64;
        let epoch = pos / n;
        if self.epoch != Some(epoch) {
            self.order = (0..self.corpus.len()).collect();
            self.order.shuffle(&mut stream_rng(self.seed, SHUFFLE_STREAM, epoch));
            self.epoch = Some(epoch);
        }
        self.order[(pos % n) as usize]
    }

    pub fn batch(&mut self, index: u64, batch_size: usize) -> Vec<(Sentence, Sentence)> {
        let start = index * batch_size as u64;
        (start..start + batch_size as u64)
            .map(|pos| self.corpus.pairs()[self.index_at(pos)].clone())
            .collect()
    }
}

/// Runs `num_steps` optimizer steps. The batch position is taken from the
/// optimizer step counter, so consecutive calls continue the same stream.
#[allow(clippy::too_many_arguments)]
pub fn train_steps(
    model: &Model,
    params: &mut ParameterVector,
    state: &mut AdamState,
    schedule: &LrSchedule,
    corpus: &ParallelCorpus,
    batch_size: usize,
    num_steps: usize,
    seed: u64,
) -> Result<Vec<StepRecord>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut stream = BatchStream::new(corpus, seed);
    let mut log = Vec::with_capacity(num_steps);
    for _ in 0..num_steps {
        let batch = stream.batch(state.step, batch_size);
        let (loss, grad) = model.loss_and_gradient(params, &batch)?;
        let lr = schedule.lr_at(state.step + 1)?;
        state.step(params, &grad, lr)?;
        if !params.is_finite() {
            return Err(Error::NonFiniteParameters);
        }
        log.push(StepRecord {
            step: state.step,
            loss,
            lr,
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    /// Scalar transcription of the Adam recurrence, one coordinate at a time.
    fn oracle_step(p: f64, m: f64, v: f64, g: f64, t: u64, lr: f64) -> (f64, f64, f64) {
        let (b1, b2, eps) = (0.9f64, 0.98f64, 1e-9f64);
        let m2 = b1 * m + (1.0 - b1) * g;
        let v2 = b2 * v + (1.0 - b2) * g * g;
        let mut bc1 = 1.0;
        let mut bc2 = 1.0;
        for _ in 0..t {
            bc1 *= b1;
            bc2 *= b2;
        }
        let mh = m2 / (1.0 - bc1);
        let vh = v2 / (1.0 - bc2);
        (p - lr * mh / (vh.sqrt() + eps), m2, v2)
    }

    #[test]
    fn single_step_by_hand() {
        let mut st = AdamState::new(1, AdamConfig::default());
        let mut p = [0.0];
        st.step(&mut p, &[1.0], 0.1).unwrap();
        assert!((p[0] + 0.1 / (1.0 + 1e-9)).abs() < 1e-12);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn agrees_with_scalar_oracle() {
        let mut rng = stream_rng(3, 0, 0);
        let mut st = AdamState::new(10, AdamConfig::default());
        let mut p: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut op = p.clone();
        let mut om = vec![0.0; 10];
        let mut ov = vec![0.0; 10];
        for t in 1..=5u64 {
            let g: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            st.step(&mut p, &g, 0.01).unwrap();
            for i in 0..10 {
                (op[i], om[i], ov[i]) = oracle_step(op[i], om[i], ov[i], g[i], t, 0.01);
            }
            for i in 0..10 {
                assert!((p[i] - op[i]).abs() <= 1e-15, "{} vs {}", p[i], op[i]);
                assert!(st.v[i] >= 0.0);
            }
        }
    }

    #[test]
    fn zero_gradient_and_symmetry() {
        let mut st = AdamState::new(3, AdamConfig::default());
        let mut p = [0.5, -0.25, 1.0];
        st.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, [0.5, -0.25, 1.0]);
        let mut st = AdamState::new(2, AdamConfig::default());
        let mut q = [0.0, 0.0];
        st.step(&mut q, &[0.3, -0.3], 0.1).unwrap();
        assert_eq!(q[0], -q[1]);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut st = AdamState::new(2, AdamConfig::default());
        let err = st.step(&mut [0.0, 0.0], &[f64::NAN, 0.0], 0.1).unwrap_err();
        assert_eq!(err.to_string(), "non-finite gradient");
    }

    #[test]
    fn schedule_shape() {
        let s = LrSchedule::default();
        assert!(s.lr_at(0).is_err());
        assert_eq!(s.lr_at(200).unwrap(), 7e-4);
        assert!((s.lr_at(100).unwrap() - 3.5e-4).abs() < 1e-18);
        assert!((s.lr_at(800).unwrap() - 3.5e-4).abs() < 1e-18);
        let mut prev = f64::INFINITY;
        for t in 200..2000 {
            let lr = s.lr_at(t).unwrap();
            assert!(lr > 0.0 && lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn batch_stream_covers_each_epoch_once() {
        let pairs = (0..10u32).map(|i| (vec![5 + i], vec![5 + i])).collect();
        let c = ParallelCorpus::new(pairs).unwrap();
        let mut s = BatchStream::new(&c, 4);
        let mut seen: Vec<u32> = (0..5).flat_map(|i| s.batch(i, 2)).map(|p| p.0[0]).collect();
        seen.sort();
        assert_eq!(seen, (5..15).collect::<Vec<_>>());
        // crossing an epoch boundary with an odd batch size
        let a = BatchStream::new(&c, 4).batch(3, 3);
        assert_eq!(a.len(), 3);
        assert_eq!(BatchStream::new(&c, 4).batch(3, 3), a);
    }
}
