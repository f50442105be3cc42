//! Shared test fixtures: a small experiment that runs in seconds, and
//! independent oracles for advantage estimation and the PPO loss.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldrec::experiment::ExperimentConfig;
use shieldrec::ingest::SyntheticConfig;
use shieldrec::policy::{ParamKind, PolicyConfig, PolicyModel};
use shieldrec::ppo::{trajectory_loss, PpoConfig, Trajectory};
use shieldrec::reward::RewardBreakdown;
use tensorlab::Tape;

pub fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.synthetic = Some(SyntheticConfig {
        n_users: 30,
        n_items: 60,
        n_interactions: 600,
        n_genres: 4,
        seed: 3,
    });
    cfg.bpr.embedding_dim = 16;
    cfg.bpr.epochs = 10;
    cfg.policy.d_model = 16;
    cfg.policy.n_layers = 1;
    cfg.policy.n_heads = 2;
    cfg.policy.d_ff = 32;
    cfg.policy.max_seq = 128;
    cfg.sampling.max_new_tokens = 20;
    cfg.pretrain.epochs = 1;
    cfg.ppo.batch_size = 4;
    cfg.ppo.mini_batch_size = 2;
    cfg.ppo.ppo_epochs_per_update = 2;
    cfg.ppo.update_steps_per_epoch = 2;
    cfg.ppo.train_epochs = 1;
    cfg.ppo.eval_users = 6;
    cfg
}

/// GAE as the explicit discounted sum of TD residuals.
pub fn direct_gae(rewards: &[f64], values: &[f64], lambda: f64, gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    let v = |t: usize| if t < n { values[t] } else { 0.0 };
    (0..n)
        .map(|t| {
            (t..n)
                .map(|k| {
                    let delta = rewards[k] + gamma * v(k + 1) - values[k];
                    (gamma * lambda).powi((k - t) as i32) * delta
                })
                .sum()
        })
        .collect()
}

pub fn tiny_policy(seed: u64) -> (PolicyModel, PolicyModel) {
    let cfg = PolicyConfig {
        vocab_size: 13,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 12,
        max_seq: 24,
        lora_rank: 2,
        lora_alpha: 4.0,
        ..PolicyConfig::default()
    };
    let mut init = PolicyModel::new(cfg, seed).unwrap();
    init.attach_adapters(seed + 100).unwrap();
    let mut policy = init.clone();
    perturb_trainables(&mut policy, seed + 200, 0.3);
    (init, policy)
}

pub fn perturb_trainables(m: &mut PolicyModel, seed: u64, scale: f32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = m
        .named_tensors()
        .zip(m.kinds().to_vec())
        .filter(|(_, k)| *k != ParamKind::Base)
        .map(|((n, _), _)| n.to_string())
        .collect();
    for n in names {
        for v in m.tensor_mut(&n).unwrap().data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

pub struct Case {
    pub traj: Trajectory,
    pub adv: Vec<f32>,
    pub ret: Vec<f32>,
}

pub fn synthetic_case(init: &PolicyModel, policy: &PolicyModel, rng: &mut ChaCha8Rng) -> Case {
    let vocab = init.config().vocab_size as u32;
    let prompt: Vec<u32> = (0..rng.gen_range(2..8)).map(|_| rng.gen_range(0..vocab)).collect();
    let response: Vec<u32> = (0..rng.gen_range(1..8)).map(|_| rng.gen_range(0..vocab)).collect();
    let current = policy.log_prob(&prompt, &response).unwrap();
    // Most tokens sit well inside the trust region; some are pushed far
    // enough out that the clipped branch is active.
    let old_log_probs = current
        .iter()
        .map(|lp| {
            let off = match rng.gen_range(0..4) {
                0 => 0.4,
                1 => -0.4,
                _ => rng.gen_range(-0.05..0.05),
            };
            lp + off
        })
        .collect();
    let t = response.len();
    let init_rows = init.response_log_softmax(&prompt, &response).unwrap();
    let traj = Trajectory {
        user_id: "u".into(),
        item_id: "i".into(),
        prompt,
        response,
        old_log_probs,
        values: vec![0.0; t],
        reward: RewardBreakdown::default(),
        text: String::new(),
        init_log_probs: Vec::new(),
        init_rows,
    };
    Case {
        traj,
        adv: (0..t).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        ret: (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// The PPO loss written out directly in f64 from the model's logits.
pub fn oracle_loss(policy: &PolicyModel, case: &Case, cfg: &PpoConfig, weight: f64) -> f64 {
    let traj = &case.traj;
    let t_len = traj.response.len();
    let vocab = policy.config().vocab_size;
    let mut seq = traj.prompt.clone();
    seq.extend_from_slice(&traj.response[..t_len - 1]);
    let mut tape = Tape::new();
    let out = policy.forward_tape(&mut tape, &seq, traj.prompt.len() - 1).unwrap();
    let logits = tape.value(out.logits);
    let values = tape.value(out.values);
    let eps = f64::from(cfg.clip_ratio);
    let mut total = 0.0;
    for t in 0..t_len {
        let row: Vec<f64> = logits[t * vocab..(t + 1) * vocab].iter().map(|&v| f64::from(v)).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let lsm: Vec<f64> = row.iter().map(|v| v - lse).collect();
        let a = f64::from(case.adv[t]);
        let ratio = (lsm[traj.response[t] as usize] - f64::from(traj.old_log_probs[t])).exp();
        let surrogate = (ratio * a).min(ratio.clamp(1.0 - eps, 1.0 + eps) * a);
        let verr = f64::from(values[t]) - f64::from(case.ret[t]);
        let mut kl = 0.0;
        let mut neg_entropy = 0.0;
        for (v, &l) in lsm.iter().enumerate() {
            let p = l.exp();
            kl += p * (l - f64::from(traj.init_rows[t * vocab + v]));
            neg_entropy += p * l;
        }
        total += -surrogate
            + f64::from(cfg.value_coeff) * verr * verr
            + f64::from(cfg.kl_coeff) * kl
            + f64::from(cfg.entropy_coeff) * neg_entropy;
    }
    total * weight
}

pub fn zero_grads(m: &mut PolicyModel) {
    for t in m.trainable_mut() {
        t.zero_grad();
    }
}

/// Norm-wise relative error between the tape gradient of the per-trajectory
/// PPO loss and central differences of [`oracle_loss`], over every
/// trainable parameter of a tiny policy built from `seed`.
pub fn policy_loss_fd_error(seed: u64) -> f64 {
    const STEP: f64 = 1e-3;
    let cfg = PpoConfig::default();
    let (init, mut policy) = tiny_policy(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = synthetic_case(&init, &policy, &mut rng);
    let weight = 1.0 / case.traj.response.len() as f64;

    zero_grads(&mut policy);
    trajectory_loss(&mut policy, &case.traj, &case.adv, &case.ret, &cfg, weight as f32).unwrap();
    let names: Vec<String> = policy
        .named_tensors()
        .filter(|(_, t)| t.requires_grad())
        .map(|(n, _)| n.to_string())
        .collect();
    assert!(!names.is_empty());

    let (mut diff2, mut an2, mut num2) = (0.0f64, 0.0f64, 0.0f64);
    for name in &names {
        let analytic: Vec<f32> = policy.tensor(name).unwrap().grad().unwrap().to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let orig = policy.tensor(name).unwrap().data()[j];
            policy.tensor_mut(name).unwrap().data_mut()[j] = orig + STEP as f32;
            let plus = oracle_loss(&policy, &case, &cfg, weight);
            policy.tensor_mut(name).unwrap().data_mut()[j] = orig - STEP as f32;
            let minus = oracle_loss(&policy, &case, &cfg, weight);
            policy.tensor_mut(name).unwrap().data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            diff2 += (f64::from(a) - numeric).powi(2);
            an2 += f64::from(a).powi(2);
            num2 += numeric.powi(2);
        }
    }
    diff2.sqrt() / an2.sqrt().max(num2.sqrt()).max(1e-6)
}
