//! Explanation generation on top of a frozen recommender.
//!
//! A matrix-factorization tower ranks items and is frozen after BPR training.
//! A small causal transformer, pretrained on template explanations and then
//! adapted through low-rank adapters only, writes an explanation for each
//! recommended item. The adapters are tuned with KL-regularized PPO against a
//! heuristic reward (length, keyword relevance, coherence), and a
//! click-through simulator measures whether explanations help. Parameter
//! checksums on the tower and on the policy's base weights are checked every
//! epoch.

pub mod datamodel;
mod error;
pub mod evalsim;
pub mod experiment;
pub mod ingest;
pub mod policy;
pub mod ppo;
pub mod rectower;
pub mod reward;

pub use error::{Error, Result};
