//! Maximum-likelihood pretraining of the base weights on template
//! explanations, producing the reference policy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorlab::{AdamW, AdamWConfig, Tape};

use super::context::{encode_context, prompt_keywords};
use super::model::PolicyModel;
use super::tokenizer::{Tokenizer, EOS};
use crate::datamodel::{build_context, ExplanationContext};
use crate::evalsim::template_explain;
use crate::ingest::InteractionDataset;
use crate::{Error, Result};

/// Follow-up sentences appended to template explanations; `{}` slots take
/// keywords from the prompt.
pub const ELABORATIONS: [&str; 4] = [
    "It blends {} and {} in a way that stays with you.",
    "Readers who love {} stories will find a lot here.",
    "The {} thread gives the whole book a strong pull.",
    "Expect {} moments and {} twists from the very first page.",
];
pub const MAX_ELABORATIONS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusExample {
    pub prompt: Vec<u32>,
    /// Explanation tokens followed by EOS.
    pub target: Vec<u32>,
}

/// Every piece of text the policy can read or is trained to write.
pub fn build_vocabulary(dataset: &InteractionDataset) -> Tokenizer {
    let mut texts: Vec<String> = Vec::new();
    for it in dataset.items.values() {
        texts.push(it.title.clone());
        texts.push(it.author.clone());
        texts.extend(it.genres.iter().cloned());
        texts.extend(it.domain_keywords.iter().cloned());
    }
    for u in dataset.users.values() {
        texts.extend(u.preference_keywords.iter().cloned());
        texts.extend(u.genre_weights.keys().cloned());
    }
    texts.push("Since you enjoyed books, you might like this novel featuring".into());
    texts.push(crate::evalsim::FALLBACK_EXPLANATION.into());
    texts.extend(ELABORATIONS.iter().map(|s| s.replace("{}", "")));
    Tokenizer::build(texts)
}

/// Template explanation plus `n` follow-up sentences built from prompt
/// keywords, favouring the user's own preference keywords.
pub fn pretraining_text(ctx: &ExplanationContext, n: usize, rng: &mut impl Rng) -> String {
    let mut text = template_explain(ctx).text;
    let shown = prompt_keywords(ctx);
    let mut pool: Vec<&str> = shown
        .iter()
        .copied()
        .filter(|k| ctx.user.preference_keywords.contains(*k))
        .collect();
    if pool.len() < 2 {
        pool = shown;
    }
    if pool.is_empty() {
        return text;
    }
    let mut order: Vec<usize> = (0..ELABORATIONS.len()).collect();
    order.shuffle(rng);
    for &s in order.iter().take(n) {
        let mut sentence = ELABORATIONS[s].to_string();
        while sentence.contains("{}") {
            let k = pool[rng.gen_range(0..pool.len())];
            sentence = sentence.replacen("{}", k, 1);
        }
        text.push(' ');
        text.push_str(&sentence);
    }
    text
}

/// One example per distinct (user, item) pair in the training split, in
/// split order, each with 0 to [`MAX_ELABORATIONS`] follow-up sentences.
pub fn build_corpus(
    dataset: &InteractionDataset,
    tok: &Tokenizer,
    prompt_budget: usize,
    seed: u64,
) -> Result<Vec<CorpusExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for it in &dataset.train {
        if !seen.insert((it.user_id.as_str(), it.item_id.as_str())) {
            continue;
        }
        let user = dataset
            .users
            .get(&it.user_id)
            .ok_or_else(|| Error::UnknownUser(it.user_id.clone()))?;
        let item = dataset
            .items
            .get(&it.item_id)
            .ok_or_else(|| Error::UnknownItem(it.item_id.clone()))?;
        let ctx = build_context(user, item, &dataset.items);
        let n = rng.gen_range(0..=MAX_ELABORATIONS);
        let text = pretraining_text(&ctx, n, &mut rng);
        let mut target = tok.encode(&text);
        target.push(EOS);
        out.push(CorpusExample {
            prompt: encode_context(&ctx, tok, prompt_budget),
            target,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    /// Share of the corpus held out for evaluation; corpora under ten
    /// examples are evaluated on themselves.
    pub holdout_fraction: f64,
    pub max_grad_norm: f32,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            learning_rate: 2e-3,
            batch_size: 8,
            holdout_fraction: 0.1,
            max_grad_norm: 1.0,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PretrainReport {
    /// Mean per-token training loss of each epoch.
    pub train_loss: Vec<f64>,
    pub holdout_before: f64,
    pub holdout_after: f64,
}

/// Mean negative log-likelihood per target token.
pub fn corpus_nll(model: &PolicyModel, examples: &[&CorpusExample]) -> Result<f64> {
    let (mut nll, mut n) = (0.0, 0usize);
    for ex in examples {
        for lp in model.log_prob(&ex.prompt, &ex.target)? {
            nll -= f64::from(lp);
        }
        n += ex.target.len();
    }
    if n == 0 {
        return Err(Error::Empty("pretraining corpus"));
    }
    Ok(nll / n as f64)
}

/// Teacher-forced cross-entropy training of the base weights. Leaves the
/// base frozen on return.
pub fn pretrain(
    model: &mut PolicyModel,
    corpus: &[CorpusExample],
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    if corpus.is_empty() {
        return Err(Error::Empty("pretraining corpus"));
    }
    if model.has_adapters() {
        return Err(Error::Config("pretraining must run before adapters are attached".into()));
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::Config("invalid pretraining batch size or holdout fraction".into()));
    }
    if let Some(ex) = corpus.iter().find(|e| e.prompt.is_empty() || e.target.is_empty()) {
        let _ = ex;
        return Err(Error::Empty("corpus example"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = (corpus.len() as f64 * cfg.holdout_fraction).ceil() as usize;
    let (train_idx, hold_idx) = if corpus.len() < 10 || n_hold == 0 {
        (order.clone(), order)
    } else {
        let (h, t) = order.split_at(n_hold);
        (t.to_vec(), h.to_vec())
    };
    let holdout: Vec<&CorpusExample> = hold_idx.iter().map(|&i| &corpus[i]).collect();
    let mut report = PretrainReport {
        holdout_before: corpus_nll(model, &holdout)?,
        ..PretrainReport::default()
    };
    model.set_base_trainable(true);
    let mut opt = AdamW::new(AdamWConfig {
        learning_rate: cfg.learning_rate,
        ..AdamWConfig::default()
    });
    let mut train_idx = train_idx;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let (mut total, mut tokens) = (0.0, 0usize);
        for batch in train_idx.chunks(cfg.batch_size) {
            let batch_tokens: usize = batch.iter().map(|&i| corpus[i].target.len()).sum();
            for &i in batch {
                let ex = &corpus[i];
                let mut seq = ex.prompt.clone();
                seq.extend_from_slice(&ex.target[..ex.target.len() - 1]);
                let mut tape = Tape::new();
                let out = model.forward_tape(&mut tape, &seq, ex.prompt.len() - 1)?;
                let targets: Vec<usize> = ex.target.iter().map(|&t| t as usize).collect();
                let ce = tape.cross_entropy(out.logits, &targets)?;
                let share = ex.target.len() as f32 / batch_tokens as f32;
                total += f64::from(tape.scalar(ce)) * ex.target.len() as f64;
                let loss = tape.scale(ce, share);
                let grads = tape.backward(loss)?;
                model.accumulate_grads(&grads, &out)?;
            }
            tokens += batch_tokens;
            opt.clip_and_step(&mut model.trainable_mut(), cfg.max_grad_norm)?;
        }
        let mean = total / tokens as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("pretraining loss in epoch {epoch}")));
        }
        log::info!("pretrain epoch {} loss {:.4}", epoch + 1, mean);
        report.train_loss.push(mean);
    }
    model.set_base_trainable(false);
    report.holdout_after = corpus_nll(model, &holdout)?;
    Ok(report)
}
