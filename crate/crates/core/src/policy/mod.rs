//! The explanation policy: tokenizer, prompt encoding, a small causal
//! transformer with low-rank adapters, decoding, and pretraining.

mod context;
mod model;
mod pretrain;
mod sampling;
mod tokenizer;

pub use context::{encode_context, prompt_keywords, PROMPT_GENRES, PROMPT_KEYWORDS};
pub use model::{KvCache, ParamKind, PolicyConfig, PolicyModel, TapeOutput};
pub use pretrain::{
    build_corpus, build_vocabulary, corpus_nll, pretrain, pretraining_text, CorpusExample,
    PretrainConfig, PretrainReport, ELABORATIONS, MAX_ELABORATIONS,
};
pub use sampling::{
    adjusted_probs, apply_repetition_penalty, categorical_kl, generate, kl_to_init, nucleus_mask,
    top_k_mask, Divergence, Generation, SamplingConfig,
};
pub use tokenizer::{split_words, Tokenizer, BOS, EOS, GENRE, HIST, ITEM, KEYWORD, PAD, SEP, UNK, USER};
