//! Small pre-norm causal transformer with optional low-rank adapters and a
//! scalar value head.
//!
//! Two forward paths share every kernel and every operation order: a taped
//! one for training and a cached one for generation and scoring. Their
//! outputs agree bit for bit.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tensorlab::kernels::{self, layer_norm, matmul_nn, matmul_nt};
use tensorlab::{checkpoint, checksum, Gradients, Tape, Tensor, Var};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq: usize,
    pub lora_rank: usize,
    pub lora_alpha: f32,
    /// Recorded for completeness; adapter dropout is not applied because
    /// it would break the equality of sampling and update-time log-probs.
    pub lora_dropout: f32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_seq: 128,
            lora_rank: 8,
            lora_alpha: 16.0,
            lora_dropout: 0.1,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.d_model == 0 || self.n_layers == 0 || self.max_seq == 0 {
            return Err(Error::Config("policy sizes must be positive".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.lora_rank == 0 || !(self.lora_alpha > 0.0) {
            return Err(Error::Config("lora rank and alpha must be positive".into()));
        }
        Ok(())
    }

    pub fn lora_scale(&self) -> f32 {
        self.lora_alpha / self.lora_rank as f32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Base,
    Adapter,
    Value,
}

#[derive(Clone, Debug)]
struct Linear {
    w: usize,
    /// (A [r, in], B [out, r])
    lora: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
struct Block {
    ln1: (usize, usize),
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: (usize, usize),
    gate: Linear,
    up: Linear,
    down: Linear,
}

impl Block {
    fn linears_mut(&mut self) -> [&mut Linear; 7] {
        [
            &mut self.q,
            &mut self.k,
            &mut self.v,
            &mut self.o,
            &mut self.gate,
            &mut self.up,
            &mut self.down,
        ]
    }
}

const LINEAR_NAMES: [&str; 7] = ["q", "k", "v", "o", "gate", "up", "down"];

#[derive(Clone, Debug)]
pub struct PolicyModel {
    cfg: PolicyConfig,
    names: Vec<String>,
    kinds: Vec<ParamKind>,
    params: Vec<Tensor>,
    tok_emb: usize,
    pos_emb: usize,
    blocks: Vec<Block>,
    lnf: (usize, usize),
    lm_head: usize,
    value_w: usize,
    value_b: usize,
}

/// Taped outputs for rows `first_row..` of a sequence.
pub struct TapeOutput {
    /// `[n, vocab]`
    pub logits: Var,
    /// `[n, 1]`
    pub values: Var,
    bound: Vec<Var>,
}

/// Keys and values of every processed position, per layer and head, plus
/// transposed copies of the weight matrices read so far. A cache belongs to
/// one model state: reusing it after the weights change is a logic error.
#[derive(Clone, Debug)]
pub struct KvCache {
    k: Vec<Vec<Vec<f32>>>,
    v: Vec<Vec<Vec<f32>>>,
    len: usize,
    transposed: Vec<Option<Vec<f32>>>,
}

impl KvCache {
    pub fn new(cfg: &PolicyConfig) -> Self {
        let per_layer = vec![Vec::new(); cfg.n_heads];
        Self {
            k: vec![per_layer.clone(); cfg.n_layers],
            v: vec![per_layer; cfg.n_layers],
            len: 0,
            transposed: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn gaussian(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let normal = Normal::new(0.0, std).unwrap();
    Tensor::from_fn(shape, |_| normal.sample(rng) as f32)
}

impl PolicyModel {
    pub fn new(cfg: PolicyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self {
            names: Vec::new(),
            kinds: Vec::new(),
            params: Vec::new(),
            tok_emb: 0,
            pos_emb: 0,
            blocks: Vec::new(),
            lnf: (0, 0),
            lm_head: 0,
            value_w: 0,
            value_b: 0,
            cfg,
        };
        let (d, f, v) = (m.cfg.d_model, m.cfg.d_ff, m.cfg.vocab_size);
        let resid = 1.0 / (2.0 * m.cfg.n_layers as f64).sqrt();
        m.tok_emb = m.push("tok_emb", ParamKind::Base, gaussian(&mut rng, &[v, d], 0.1));
        m.pos_emb = m.push("pos_emb", ParamKind::Base, gaussian(&mut rng, &[m.cfg.max_seq, d], 0.1));
        for l in 0..m.cfg.n_layers {
            let mut lin = |m: &mut Self, name: &str, out: usize, inp: usize, scale: f64| Linear {
                w: m.push(
                    &format!("blocks.{l}.{name}.w"),
                    ParamKind::Base,
                    gaussian(&mut rng, &[out, inp], scale / (inp as f64).sqrt()),
                ),
                lora: None,
            };
            let ln1 = m.push_ln(&format!("blocks.{l}.ln1"), d);
            let q = lin(&mut m, "q", d, d, 1.0);
            let k = lin(&mut m, "k", d, d, 1.0);
            let vv = lin(&mut m, "v", d, d, 1.0);
            let o = lin(&mut m, "o", d, d, resid);
            let ln2 = m.push_ln(&format!("blocks.{l}.ln2"), d);
            let gate = lin(&mut m, "gate", f, d, 1.0);
            let up = lin(&mut m, "up", f, d, 1.0);
            let down = lin(&mut m, "down", d, f, resid);
            m.blocks.push(Block {
                ln1,
                q,
                k,
                v: vv,
                o,
                ln2,
                gate,
                up,
                down,
            });
        }
        m.lnf = m.push_ln("lnf", d);
        m.lm_head = m.push(
            "lm_head",
            ParamKind::Base,
            gaussian(&mut rng, &[v, d], 1.0 / (d as f64).sqrt()),
        );
        m.value_w = m.push("value.w", ParamKind::Value, Tensor::zeros(&[1, d]));
        m.value_b = m.push("value.b", ParamKind::Value, Tensor::zeros(&[1]));
        m.set_base_trainable(true);
        Ok(m)
    }

    fn push(&mut self, name: &str, kind: ParamKind, t: Tensor) -> usize {
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.params.push(t);
        self.params.len() - 1
    }

    fn push_ln(&mut self, name: &str, d: usize) -> (usize, usize) {
        let g = self.push(&format!("{name}.g"), ParamKind::Base, Tensor::from_fn(&[d], |_| 1.0));
        let b = self.push(&format!("{name}.b"), ParamKind::Base, Tensor::zeros(&[d]));
        (g, b)
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn has_adapters(&self) -> bool {
        self.blocks.first().is_some_and(|b| b.q.lora.is_some())
    }

    /// Adds a low-rank pair to every projection: A Gaussian, B zero, so the
    /// adapted model initially computes exactly what the base model does.
    /// Freezes the base weights and makes adapters and value head trainable.
    pub fn attach_adapters(&mut self, seed: u64) -> Result<()> {
        if self.has_adapters() {
            return Err(Error::Config("adapters already attached".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.cfg.lora_rank;
        let mut blocks = std::mem::take(&mut self.blocks);
        for (l, blk) in blocks.iter_mut().enumerate() {
            for (lin, name) in blk.linears_mut().into_iter().zip(LINEAR_NAMES) {
                let shape = self.params[lin.w].shape().to_vec();
                let (out, inp) = (shape[0], shape[1]);
                let a = self.push(
                    &format!("blocks.{l}.{name}.lora_a"),
                    ParamKind::Adapter,
                    gaussian(&mut rng, &[r, inp], 1.0 / (inp as f64).sqrt()),
                );
                let b = self.push(
                    &format!("blocks.{l}.{name}.lora_b"),
                    ParamKind::Adapter,
                    Tensor::zeros(&[out, r]),
                );
                lin.lora = Some((a, b));
            }
        }
        self.blocks = blocks;
        self.set_base_trainable(false);
        Ok(())
    }

    /// Toggles which parameter group receives gradients: the base weights
    /// (pretraining) or the adapters and value head (fine-tuning).
    pub fn set_base_trainable(&mut self, base: bool) {
        for (t, k) in self.params.iter_mut().zip(&self.kinds) {
            t.set_requires_grad((*k == ParamKind::Base) == base);
            t.zero_grad();
        }
    }

    pub fn kinds(&self) -> &[ParamKind] {
        &self.kinds
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.params[i])
    }

    /// Sets the value head's bias, its prediction before any training.
    pub fn set_value_bias(&mut self, b: f32) {
        self.params[self.value_b].data_mut()[0] = b;
    }

    /// Parameters currently receiving gradients, in a fixed order.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.iter_mut().filter(|t| t.requires_grad()).collect()
    }

    pub fn checksum_of(&self, kind: ParamKind) -> u64 {
        checksum(
            self.params
                .iter()
                .zip(&self.kinds)
                .filter(|(_, k)| **k == kind)
                .map(|(t, _)| t),
        )
    }

    pub fn base_checksum(&self) -> u64 {
        self.checksum_of(ParamKind::Base)
    }

    pub fn count(&self, kind: ParamKind) -> usize {
        self.params
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == kind)
            .map(|(t, _)| t.numel())
            .sum()
    }

    /// Adapter plus value-head parameters as a fraction of all parameters.
    pub fn trainable_fraction(&self) -> f64 {
        let total: usize = self.params.iter().map(Tensor::numel).sum();
        (self.count(ParamKind::Adapter) + self.count(ParamKind::Value)) as f64 / total as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, self.named_tensors())?;
        Ok(())
    }

    /// Restores tensors saved by [`PolicyModel::save`] into a model built
    /// with the same configuration; attaches adapters first if the file
    /// holds them.
    pub fn load(cfg: PolicyConfig, path: impl AsRef<Path>) -> Result<Self> {
        let saved: HashMap<String, Tensor> = checkpoint::load(path)?.into_iter().collect();
        let mut m = Self::new(cfg, 0)?;
        if saved.contains_key("blocks.0.q.lora_a") {
            m.attach_adapters(0)?;
        }
        if saved.len() != m.params.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} tensors, model expects {}",
                saved.len(),
                m.params.len()
            )));
        }
        for (name, t) in m.names.iter().zip(m.params.iter_mut()) {
            let s = saved
                .get(name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks {name}")))?;
            if s.shape() != t.shape() {
                return Err(Error::Data(format!("shape mismatch for {name}")));
            }
            t.data_mut().copy_from_slice(s.data());
        }
        m.set_base_trainable(!m.has_adapters());
        Ok(m)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.cfg.max_seq {
            return Err(Error::SequenceTooLong {
                len: n,
                max_seq: self.cfg.max_seq,
            });
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= self.cfg.vocab_size) {
            return Err(Error::VocabMismatch(bad as usize, self.cfg.vocab_size));
        }
        Ok(())
    }

    fn tape_linear(&self, tape: &mut Tape, b: &[Var], x: Var, lin: &Linear) -> Result<Var> {
        let y = tape.matmul_nt(x, b[lin.w])?;
        match lin.lora {
            None => Ok(y),
            Some((a, bb)) => {
                let t = tape.matmul_nt(x, b[a])?;
                let u = tape.matmul_nt(t, b[bb])?;
                let u = tape.scale(u, self.cfg.lora_scale());
                Ok(tape.add(y, u)?)
            }
        }
    }

    /// Records a full forward pass over `ids` and returns logits and values
    /// for positions `first_row..ids.len()`.
    pub fn forward_tape(&self, tape: &mut Tape, ids: &[u32], first_row: usize) -> Result<TapeOutput> {
        let t_len = ids.len();
        self.check_len(t_len)?;
        self.check_ids(ids)?;
        if first_row >= t_len {
            return Err(Error::Config(format!("first row {first_row} beyond length {t_len}")));
        }
        let b: Vec<Var> = self.params.iter().map(|p| tape.leaf(p)).collect();
        let (d, nh) = (self.cfg.d_model, self.cfg.n_heads);
        let dh = d / nh;
        let att_scale = 1.0 / (dh as f32).sqrt();
        let tok_ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let positions: Vec<usize> = (0..t_len).collect();
        let tok = tape.embedding(b[self.tok_emb], &tok_ids)?;
        let pos = tape.embedding(b[self.pos_emb], &positions)?;
        let mut x = tape.add(tok, pos)?;
        for blk in &self.blocks {
            let h = tape.layer_norm(x, b[blk.ln1.0], b[blk.ln1.1])?;
            let q = self.tape_linear(tape, &b, h, &blk.q)?;
            let k = self.tape_linear(tape, &b, h, &blk.k)?;
            let v = self.tape_linear(tape, &b, h, &blk.v)?;
            let mut heads = Vec::with_capacity(nh);
            for hd in 0..nh {
                let qh = tape.slice_cols(q, hd * dh, dh)?;
                let kh = tape.slice_cols(k, hd * dh, dh)?;
                let vh = tape.slice_cols(v, hd * dh, dh)?;
                let s = tape.matmul_nt(qh, kh)?;
                let s = tape.scale(s, att_scale);
                let a = tape.causal_softmax(s);
                heads.push(tape.matmul(a, vh)?);
            }
            let cat = tape.concat_cols(&heads)?;
            let attn = self.tape_linear(tape, &b, cat, &blk.o)?;
            x = tape.add(x, attn)?;
            let h2 = tape.layer_norm(x, b[blk.ln2.0], b[blk.ln2.1])?;
            let g = self.tape_linear(tape, &b, h2, &blk.gate)?;
            let u = self.tape_linear(tape, &b, h2, &blk.up)?;
            let g = tape.silu(g);
            let m = tape.mul(g, u)?;
            let dn = self.tape_linear(tape, &b, m, &blk.down)?;
            x = tape.add(x, dn)?;
        }
        let hf = tape.layer_norm(x, b[self.lnf.0], b[self.lnf.1])?;
        let rows = tape.slice_rows(hf, first_row, t_len - first_row)?;
        let logits = tape.matmul_nt(rows, b[self.lm_head])?;
        let vw = tape.matmul_nt(rows, b[self.value_w])?;
        let values = tape.add_row(vw, b[self.value_b])?;
        Ok(TapeOutput {
            logits,
            values,
            bound: b,
        })
    }

    /// Adds the gradients of every trainable parameter from a backward pass
    /// over a tape produced by [`PolicyModel::forward_tape`].
    pub fn accumulate_grads(&mut self, grads: &Gradients, out: &TapeOutput) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(&out.bound) {
            if p.requires_grad() {
                grads.accumulate_into(v, p)?;
            }
        }
        Ok(())
    }

    /// `x · Wᵀ` for parameter `w`, through a transposed copy kept in
    /// `cache`. Each element is the same ordered sum `matmul_nt` computes.
    fn times_transposed(&self, x: &[f32], rows: usize, w: usize, cache: &mut [Option<Vec<f32>>]) -> Vec<f32> {
        let t = &self.params[w];
        let (out, inp) = (t.shape()[0], t.shape()[1]);
        let wt = cache[w].get_or_insert_with(|| kernels::transpose(t.data(), out, inp));
        matmul_nn(x, wt, rows, inp, out)
    }

    fn take_transposed(&self, cache: &mut KvCache) -> Vec<Option<Vec<f32>>> {
        let t = std::mem::take(&mut cache.transposed);
        if t.len() == self.params.len() {
            t
        } else {
            vec![None; self.params.len()]
        }
    }

    fn linear(&self, x: &[f32], rows: usize, lin: &Linear, cache: &mut [Option<Vec<f32>>]) -> Vec<f32> {
        let mut y = self.times_transposed(x, rows, lin.w, cache);
        if let Some((a, b)) = lin.lora {
            let t = self.times_transposed(x, rows, a, cache);
            let u = self.times_transposed(&t, rows, b, cache);
            let s = self.cfg.lora_scale();
            for (yi, ui) in y.iter_mut().zip(&u) {
                *yi += ui * s;
            }
        }
        y
    }

    /// Processes `ids` as the next positions after those already in
    /// `cache` and returns their final hidden states `[ids.len(), d]`.
    pub fn forward_cached(&self, ids: &[u32], cache: &mut KvCache) -> Result<Vec<f32>> {
        let n = ids.len();
        let start = cache.len;
        self.check_len(start + n)?;
        self.check_ids(ids)?;
        let (d, nh) = (self.cfg.d_model, self.cfg.n_heads);
        let dh = d / nh;
        let att_scale = 1.0 / (dh as f32).sqrt();
        let total = start + n;
        let mut wt = self.take_transposed(cache);
        let tok = self.params[self.tok_emb].data();
        let pos = self.params[self.pos_emb].data();
        let mut x = Vec::with_capacity(n * d);
        for (r, &id) in ids.iter().enumerate() {
            let (ti, pi) = (id as usize * d, (start + r) * d);
            x.extend(tok[ti..ti + d].iter().zip(&pos[pi..pi + d]).map(|(a, b)| a + b));
        }
        for (l, blk) in self.blocks.iter().enumerate() {
            let (h, _, _) = layer_norm(
                &x,
                self.params[blk.ln1.0].data(),
                self.params[blk.ln1.1].data(),
                n,
                d,
            );
            let q = self.linear(&h, n, &blk.q, &mut wt);
            let k = self.linear(&h, n, &blk.k, &mut wt);
            let v = self.linear(&h, n, &blk.v, &mut wt);
            let mut cat = vec![0.0f32; n * d];
            for hd in 0..nh {
                let cols = |m: &[f32]| -> Vec<f32> {
                    m.chunks_exact(d)
                        .flat_map(|r| r[hd * dh..(hd + 1) * dh].iter().copied())
                        .collect()
                };
                let qh = cols(&q);
                cache.k[l][hd].extend(cols(&k));
                cache.v[l][hd].extend(cols(&v));
                let mut s = matmul_nt(&qh, &cache.k[l][hd], n, dh, total);
                s.iter_mut().for_each(|v| *v *= att_scale);
                for (i, r) in s.chunks_exact_mut(total).enumerate() {
                    let visible = start + i + 1;
                    kernels::softmax_in_place(&mut r[..visible]);
                    r[visible..].iter_mut().for_each(|v| *v = 0.0);
                }
                let o = matmul_nn(&s, &cache.v[l][hd], n, total, dh);
                for i in 0..n {
                    cat[i * d + hd * dh..i * d + (hd + 1) * dh]
                        .copy_from_slice(&o[i * dh..(i + 1) * dh]);
                }
            }
            let attn = self.linear(&cat, n, &blk.o, &mut wt);
            x.iter_mut().zip(&attn).for_each(|(a, b)| *a += b);
            let (h2, _, _) = layer_norm(
                &x,
                self.params[blk.ln2.0].data(),
                self.params[blk.ln2.1].data(),
                n,
                d,
            );
            let g = self.linear(&h2, n, &blk.gate, &mut wt);
            let u = self.linear(&h2, n, &blk.up, &mut wt);
            let m: Vec<f32> = g
                .iter()
                .map(|&v| v * kernels::sigmoid(v))
                .zip(&u)
                .map(|(a, b)| a * b)
                .collect();
            let dn = self.linear(&m, n, &blk.down, &mut wt);
            x.iter_mut().zip(&dn).for_each(|(a, b)| *a += b);
        }
        cache.len = total;
        cache.transposed = wt;
        let (hf, _, _) = layer_norm(
            &x,
            self.params[self.lnf.0].data(),
            self.params[self.lnf.1].data(),
            n,
            d,
        );
        Ok(hf)
    }

    /// Next-token logits `[rows, vocab]` from final hidden states.
    pub fn logits(&self, hidden: &[f32]) -> Vec<f32> {
        let d = self.cfg.d_model;
        matmul_nt(hidden, self.params[self.lm_head].data(), hidden.len() / d, d, self.cfg.vocab_size)
    }

    /// [`PolicyModel::logits`] through the transposed weights kept in
    /// `cache`; same bits, faster for single rows.
    pub fn logits_cached(&self, hidden: &[f32], cache: &mut KvCache) -> Vec<f32> {
        let mut wt = self.take_transposed(cache);
        let y = self.times_transposed(hidden, hidden.len() / self.cfg.d_model, self.lm_head, &mut wt);
        cache.transposed = wt;
        y
    }

    pub fn values(&self, hidden: &[f32]) -> Vec<f32> {
        let d = self.cfg.d_model;
        let b = self.params[self.value_b].data()[0];
        matmul_nt(hidden, self.params[self.value_w].data(), hidden.len() / d, d, 1)
            .into_iter()
            .map(|v| v + b)
            .collect()
    }

    /// Log-softmax rows predicting each response token: row `t` is the
    /// distribution over `response[t]` given the prompt and `response[..t]`.
    pub fn response_log_softmax(&self, prompt: &[u32], response: &[u32]) -> Result<Vec<f32>> {
        let (hidden, _) = self.response_hidden(prompt, response)?;
        let mut rows = self.logits(&hidden);
        rows.chunks_exact_mut(self.cfg.vocab_size)
            .for_each(kernels::log_softmax_in_place);
        Ok(rows)
    }

    /// Final hidden states at the positions that predict each response
    /// token, plus the sequence length.
    fn response_hidden(&self, prompt: &[u32], response: &[u32]) -> Result<(Vec<f32>, usize)> {
        if prompt.is_empty() || response.is_empty() {
            return Err(Error::Empty("prompt or response"));
        }
        let mut seq = prompt.to_vec();
        seq.extend_from_slice(&response[..response.len() - 1]);
        let mut cache = KvCache::new(&self.cfg);
        let hidden = self.forward_cached(&seq, &mut cache)?;
        let d = self.cfg.d_model;
        let first = prompt.len() - 1;
        Ok((hidden[first * d..].to_vec(), seq.len()))
    }

    /// Teacher-forced `log π(response_t | prompt, response_<t)`.
    pub fn log_prob(&self, prompt: &[u32], response: &[u32]) -> Result<Vec<f32>> {
        let v = self.cfg.vocab_size;
        let rows = self.response_log_softmax(prompt, response)?;
        Ok(response
            .iter()
            .enumerate()
            .map(|(t, &a)| rows[t * v + a as usize])
            .collect())
    }

    /// Value-head outputs at the positions that predict each response token.
    pub fn response_values(&self, prompt: &[u32], response: &[u32]) -> Result<Vec<f32>> {
        let (hidden, _) = self.response_hidden(prompt, response)?;
        Ok(self.values(&hidden))
    }
}
