//! Autoregressive decoding with repetition penalty, temperature, top-k and
//! nucleus filtering, plus teacher-forced divergence measures.

use std::collections::BTreeSet;

use rand::Rng;
use tensorlab::kernels;

use super::model::{KvCache, PolicyModel};
use super::tokenizer::{Tokenizer, EOS};
use crate::datamodel::Explanation;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    pub temperature: f32,
    pub top_p: f32,
    pub top_k: usize,
    pub repetition_penalty: f32,
    pub max_new_tokens: usize,
    /// Argmax decoding after the repetition penalty; the zero-temperature
    /// limit.
    pub greedy: bool,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.9,
            top_k: 50,
            repetition_penalty: 1.1,
            max_new_tokens: 80,
            greedy: false,
            seed: 42,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config("top_p must lie in (0, 1]".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !(self.repetition_penalty > 0.0) {
            return Err(Error::Config("repetition_penalty must be positive".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// One sampled response with per-token statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Sampled tokens, including a final EOS when one was produced.
    pub tokens: Vec<u32>,
    /// Log-probs under the unadjusted model distribution.
    pub log_probs: Vec<f32>,
    /// Log-probs under the distribution actually sampled from.
    pub sample_log_probs: Vec<f32>,
    /// Value-head outputs at the positions that produced each token.
    pub values: Vec<f32>,
}

impl Generation {
    pub fn explanation(&self, tok: &Tokenizer) -> Explanation {
        Explanation::with_tokens(self.tokens.clone(), tok.decode(&self.tokens))
    }
}

/// Divides positive logits of already generated tokens by `penalty` and
/// multiplies negative ones.
pub fn apply_repetition_penalty(logits: &mut [f32], seen: &BTreeSet<u32>, penalty: f32) {
    for &t in seen {
        let l = &mut logits[t as usize];
        if *l > 0.0 {
            *l /= penalty;
        } else {
            *l *= penalty;
        }
    }
}

/// Indices sorted by descending value, ties to the lower index.
fn ranked(values: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Keeps the `k` largest entries.
pub fn top_k_mask(logits: &[f32], k: usize) -> Vec<bool> {
    let mut keep = vec![false; logits.len()];
    for &i in ranked(logits).iter().take(k) {
        keep[i] = true;
    }
    keep
}

/// Keeps the smallest prefix of the probabilities sorted in descending
/// order whose cumulative mass reaches `top_p`.
pub fn nucleus_mask(probs: &[f32], top_p: f32) -> Vec<bool> {
    let mut keep = vec![false; probs.len()];
    let mut cum = 0.0f64;
    for i in ranked(probs) {
        if probs[i] <= 0.0 && cum > 0.0 {
            break;
        }
        keep[i] = true;
        cum += f64::from(probs[i]);
        if cum >= f64::from(top_p) {
            break;
        }
    }
    keep
}

fn argmax(values: &[f32]) -> usize {
    ranked(values)[0]
}

/// The sampling distribution for one step, given raw next-token logits.
pub fn adjusted_probs(raw: &[f32], seen: &BTreeSet<u32>, cfg: &SamplingConfig) -> Vec<f32> {
    let mut l = raw.to_vec();
    apply_repetition_penalty(&mut l, seen, cfg.repetition_penalty);
    if cfg.greedy {
        let mut p = vec![0.0; l.len()];
        p[argmax(&l)] = 1.0;
        return p;
    }
    l.iter_mut().for_each(|v| *v /= cfg.temperature);
    let keep = top_k_mask(&l, cfg.top_k);
    for (v, k) in l.iter_mut().zip(&keep) {
        if !k {
            *v = f32::NEG_INFINITY;
        }
    }
    kernels::softmax_in_place(&mut l);
    let keep = nucleus_mask(&l, cfg.top_p);
    let mut total = 0.0f32;
    for (v, k) in l.iter_mut().zip(&keep) {
        if !k {
            *v = 0.0;
        }
        total += *v;
    }
    l.iter_mut().for_each(|v| *v /= total);
    l
}

fn sample_index(probs: &[f32], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0f64;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += f64::from(p);
            last = i;
            if u < cum {
                return i;
            }
        }
    }
    last
}

/// Samples a response to `prompt`, stopping at EOS, after
/// `max_new_tokens`, or when the context window is full.
pub fn generate(
    model: &PolicyModel,
    prompt: &[u32],
    cfg: &SamplingConfig,
    rng: &mut impl Rng,
) -> Result<Generation> {
    let max_seq = model.config().max_seq;
    if prompt.is_empty() {
        return Err(Error::Empty("prompt"));
    }
    if prompt.len() >= max_seq {
        return Err(Error::SequenceTooLong {
            len: prompt.len(),
            max_seq,
        });
    }
    let d = model.config().d_model;
    let mut cache = KvCache::new(model.config());
    let hidden = model.forward_cached(prompt, &mut cache)?;
    let mut last = hidden[hidden.len() - d..].to_vec();
    let mut out = Generation {
        tokens: Vec::new(),
        log_probs: Vec::new(),
        sample_log_probs: Vec::new(),
        values: Vec::new(),
    };
    let mut seen = BTreeSet::new();
    loop {
        let raw = model.logits_cached(&last, &mut cache);
        let probs = adjusted_probs(&raw, &seen, cfg);
        let a = if cfg.greedy {
            argmax(&probs)
        } else {
            sample_index(&probs, rng)
        };
        let mut lsm = raw;
        kernels::log_softmax_in_place(&mut lsm);
        out.tokens.push(a as u32);
        out.log_probs.push(lsm[a]);
        out.sample_log_probs.push(probs[a].ln());
        out.values.push(model.values(&last)[0]);
        seen.insert(a as u32);
        if a as u32 == EOS || out.tokens.len() >= cfg.max_new_tokens || cache.len() >= max_seq {
            break;
        }
        last = model.forward_cached(&[a as u32], &mut cache)?;
    }
    Ok(out)
}

/// `Σ p (ln p − ln q)` over one pair of log-probability rows.
pub fn categorical_kl(log_p: &[f32], log_q: &[f32]) -> f64 {
    log_p
        .iter()
        .zip(log_q)
        .map(|(&lp, &lq)| {
            let p = f64::from(lp).exp();
            if p == 0.0 {
                0.0
            } else {
                p * (f64::from(lp) - f64::from(lq))
            }
        })
        .sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Divergence {
    /// Mean full-vocabulary KL(π ∥ π_init) over all response positions.
    pub kl_proper: f64,
    /// Mean over responses of Σ_t [log π_init(a_t) − log π(a_t)].
    pub drift_signed: f64,
}

/// Divergence of `model` from `init` on (prompt, response) pairs.
pub fn kl_to_init(
    model: &PolicyModel,
    init: &PolicyModel,
    samples: &[(Vec<u32>, Vec<u32>)],
) -> Result<Divergence> {
    let v = model.config().vocab_size;
    if init.config().vocab_size != v {
        return Err(Error::VocabMismatch(v, init.config().vocab_size));
    }
    if samples.is_empty() {
        return Ok(Divergence::default());
    }
    let (mut kl, mut positions, mut drift) = (0.0, 0usize, 0.0);
    for (prompt, response) in samples {
        let p = model.response_log_softmax(prompt, response)?;
        let q = init.response_log_softmax(prompt, response)?;
        for (t, &a) in response.iter().enumerate() {
            let (pr, qr) = (&p[t * v..(t + 1) * v], &q[t * v..(t + 1) * v]);
            kl += categorical_kl(pr, qr);
            drift += f64::from(qr[a as usize]) - f64::from(pr[a as usize]);
        }
        positions += response.len();
    }
    Ok(Divergence {
        kl_proper: kl / positions as f64,
        drift_signed: drift / samples.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nucleus_keeps_smallest_prefix() {
        let keep = nucleus_mask(&[0.1, 0.5, 0.3, 0.1], 0.75);
        assert_eq!(keep, vec![false, true, true, false]);
        let keep = nucleus_mask(&[0.1, 0.5, 0.3, 0.1], 0.8);
        assert_eq!(keep, vec![false, true, true, false]);
        assert_eq!(nucleus_mask(&[0.2, 0.8], 1.0), vec![true, true]);
    }

    #[test]
    fn penalty_direction() {
        let mut l = vec![2.2, -1.0, 3.0];
        apply_repetition_penalty(&mut l, &BTreeSet::from([0, 1]), 1.1);
        assert!((l[0] - 2.0).abs() < 1e-6);
        assert!((l[1] + 1.1).abs() < 1e-6);
        assert_eq!(l[2], 3.0);
    }

    #[test]
    fn hand_kl() {
        let p = [0.5f32, 0.25, 0.25];
        let q = [0.25f32, 0.5, 0.25];
        let lp: Vec<f32> = p.iter().map(|v| v.ln()).collect();
        let lq: Vec<f32> = q.iter().map(|v| v.ln()).collect();
        let want = 0.5 * (2.0f64).ln() + 0.25 * (0.5f64).ln();
        assert!((categorical_kl(&lp, &lq) - want).abs() < 1e-6);
        assert!(categorical_kl(&lp, &lp).abs() < 1e-12);
    }

    #[test]
    fn top_k_ties_prefer_lower_index() {
        assert_eq!(top_k_mask(&[1.0, 2.0, 2.0, 0.0], 1), vec![false, true, false, false]);
    }
}
