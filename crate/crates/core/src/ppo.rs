//! KL-regularized PPO over the policy's adapters: rollouts against the
//! frozen tower's recommendations, GAE, clipped updates, and the epoch loop
//! with evaluation and shield checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorlab::{AdamW, AdamWConfig, Tape};

use crate::datamodel::build_context;
use crate::evalsim::{self, EvalReport};
use crate::ingest::InteractionDataset;
use crate::policy::{encode_context, generate, kl_to_init, PolicyModel, SamplingConfig, Tokenizer};
use crate::rectower::RecTower;
use crate::reward::{total_reward, RewardBreakdown, RewardConfig};
use crate::{Error, Result};

/// Candidate pool per user: the tower's top recommendations.
pub const CANDIDATES: usize = 10;
const MAX_RESAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub mini_batch_size: usize,
    pub ppo_epochs_per_update: usize,
    pub clip_ratio: f32,
    pub value_coeff: f32,
    pub entropy_coeff: f32,
    pub kl_coeff: f32,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub max_grad_norm: f32,
    pub update_steps_per_epoch: usize,
    pub train_epochs: usize,
    /// Eval users whose recommendations are explained in the per-epoch
    /// click-through simulation.
    pub eval_users: usize,
    pub eval_seed: u64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-5,
            batch_size: 16,
            mini_batch_size: 4,
            ppo_epochs_per_update: 4,
            clip_ratio: 0.2,
            value_coeff: 0.5,
            entropy_coeff: 0.01,
            kl_coeff: 0.05,
            gae_lambda: 0.95,
            gamma: 1.0,
            max_grad_norm: 1.0,
            update_steps_per_epoch: 20,
            train_epochs: 8,
            eval_users: 24,
            eval_seed: 2023,
            seed: 42,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad("clip_ratio must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.mini_batch_size == 0 || self.ppo_epochs_per_update == 0 {
            return bad("mini_batch_size and ppo_epochs_per_update must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate and max_grad_norm must be positive");
        }
        if self.kl_coeff < 0.0 || self.value_coeff < 0.0 || self.entropy_coeff < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        if self.eval_users == 0 {
            return bad("eval_users must be positive");
        }
        Ok(())
    }
}

/// Frozen pieces shared by every rollout and evaluation of a run.
#[derive(Clone, Copy)]
pub struct Environment<'a> {
    pub dataset: &'a InteractionDataset,
    pub tower: &'a RecTower,
    pub tokenizer: &'a Tokenizer,
    pub init: &'a PolicyModel,
    pub sampling: &'a SamplingConfig,
    pub reward: &'a RewardConfig,
}

impl Environment<'_> {
    fn prompt_budget(&self) -> usize {
        self.init
            .config()
            .max_seq
            .saturating_sub(self.sampling.max_new_tokens)
            .max(1)
    }

    /// Tagged prompt for one (user, item) pair.
    pub fn prompt(&self, user_id: &str, item_id: &str) -> Result<Vec<u32>> {
        let user = self
            .dataset
            .users
            .get(user_id)
            .ok_or_else(|| Error::UnknownUser(user_id.to_string()))?;
        let item = self
            .dataset
            .items
            .get(item_id)
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))?;
        let ctx = build_context(user, item, &self.dataset.items);
        Ok(encode_context(&ctx, self.tokenizer, self.prompt_budget()))
    }

    /// Samples an explanation from `policy` and scores it.
    pub fn explain(
        &self,
        policy: &PolicyModel,
        user_id: &str,
        item_id: &str,
        rng: &mut impl Rng,
    ) -> Result<Trajectory> {
        let prompt = self.prompt(user_id, item_id)?;
        let g = generate(policy, &prompt, self.sampling, rng)?;
        let explanation = g.explanation(self.tokenizer);
        let ctx = build_context(&self.dataset.users[user_id], &self.dataset.items[item_id], &self.dataset.items);
        let reward = total_reward(&ctx, &explanation, self.reward);
        Ok(Trajectory {
            user_id: user_id.to_string(),
            item_id: item_id.to_string(),
            prompt,
            response: g.tokens,
            old_log_probs: g.log_probs,
            values: g.values,
            reward,
            text: explanation.text,
            init_log_probs: Vec::new(),
            init_rows: Vec::new(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub user_id: String,
    pub item_id: String,
    pub prompt: Vec<u32>,
    pub response: Vec<u32>,
    /// Unadjusted log-probs of the response under the sampling policy.
    pub old_log_probs: Vec<f32>,
    pub values: Vec<f32>,
    /// Attached at the final response token; every other token earns 0.
    pub reward: RewardBreakdown,
    pub text: String,
    pub init_log_probs: Vec<f32>,
    /// Reference log-softmax rows, `[response.len(), vocab]`.
    pub init_rows: Vec<f32>,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.response.len()];
        if let Some(last) = r.last_mut() {
            *last = self.reward.r_total;
        }
        r
    }
}

/// Samples `n` (user, item) pairs with the item drawn from the user's
/// current top recommendations, generates and scores an explanation for
/// each, and records reference log-probs.
pub fn collect_rollouts(
    policy: &PolicyModel,
    env: &Environment,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Trajectory>> {
    if !env.tower.is_frozen() {
        return Err(Error::Config("rollouts need a frozen tower".into()));
    }
    let users: Vec<&str> = env.dataset.users.keys().map(String::as_str).collect();
    if n > 0 && users.is_empty() {
        return Err(Error::Empty("rollout users"));
    }
    let vocab = env.init.config().vocab_size;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut picked = None;
        for _ in 0..MAX_RESAMPLES {
            let u = users[rng.gen_range(0..users.len())];
            let recs = env.tower.recommend(u, CANDIDATES)?;
            if !recs.is_empty() {
                picked = Some((u, recs[rng.gen_range(0..recs.len())].0.clone()));
                break;
            }
        }
        let (u, item) = picked.ok_or(Error::Empty("every sampled user has an empty candidate pool"))?;
        let mut t = env.explain(policy, u, &item, rng)?;
        t.init_rows = env.init.response_log_softmax(&t.prompt, &t.response)?;
        t.init_log_probs = t
            .response
            .iter()
            .enumerate()
            .map(|(i, &a)| t.init_rows[i * vocab + a as usize])
            .collect();
        out.push(t);
    }
    Ok(out)
}

/// Generalized advantage estimates and returns for one trajectory, with
/// the value past the last token taken as 0.
pub fn compute_gae(rewards: &[f64], values: &[f64], lambda: f64, gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.is_empty() {
        return Err(Error::Empty("response"));
    }
    if rewards.len() != values.len() {
        return Err(Error::Data(format!(
            "{} rewards but {} values",
            rewards.len(),
            values.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_v - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales all advantages of a batch to zero mean and unit
/// variance.
pub fn normalize_advantages(batch: &mut [Vec<f64>]) {
    let n: usize = batch.iter().map(Vec::len).sum();
    if n == 0 {
        return;
    }
    let mean = batch.iter().flatten().sum::<f64>() / n as f64;
    let var = batch.iter().flatten().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for a in batch.iter_mut().flatten() {
        *a = (*a - mean) * scale;
    }
}

/// The clipped surrogate for one token, to be maximized.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Token-summed loss terms of one trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub policy: f64,
    pub value: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clipped: usize,
    pub tokens: usize,
    pub ratios: Vec<f32>,
}

/// Records the PPO loss of one trajectory on a fresh tape, scaled by
/// `weight`, and accumulates its gradients into the trainable parameters.
pub fn trajectory_loss(
    policy: &mut PolicyModel,
    traj: &Trajectory,
    advantages: &[f32],
    returns: &[f32],
    cfg: &PpoConfig,
    weight: f32,
) -> Result<LossTerms> {
    let t_len = traj.response.len();
    let vocab = policy.config().vocab_size;
    if t_len == 0 || advantages.len() != t_len || returns.len() != t_len || traj.init_rows.len() != t_len * vocab {
        return Err(Error::Data("trajectory arrays are misaligned".into()));
    }
    let mut seq = traj.prompt.clone();
    seq.extend_from_slice(&traj.response[..t_len - 1]);
    let actions: Vec<usize> = traj.response.iter().map(|&a| a as usize).collect();

    let mut tape = Tape::new();
    let out = policy.forward_tape(&mut tape, &seq, traj.prompt.len() - 1)?;
    let lsm = tape.log_softmax(out.logits);
    let logp = tape.gather(lsm, &actions)?;
    let old = tape.constant(&[t_len], traj.old_log_probs.clone())?;
    let diff = tape.sub(logp, old)?;
    let ratio = tape.exp(diff);
    let adv = tape.constant(&[t_len], advantages.to_vec())?;
    let s1 = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
    let s2 = tape.mul(clipped, adv)?;
    let surrogate = tape.minimum(s1, s2)?;
    let policy_sum = tape.sum(surrogate);

    let values = tape.reshape(out.values, &[t_len])?;
    let ret = tape.constant(&[t_len], returns.to_vec())?;
    let verr = tape.sub(values, ret)?;
    let vsq = tape.square(verr);
    let value_sum = tape.sum(vsq);

    let probs = tape.exp(lsm);
    let init = tape.constant(&[t_len, vocab], traj.init_rows.clone())?;
    let log_ratio = tape.sub(lsm, init)?;
    let kl_terms = tape.mul(probs, log_ratio)?;
    let kl_sum = tape.sum(kl_terms);
    let plogp = tape.mul(probs, lsm)?;
    let neg_entropy_sum = tape.sum(plogp);

    let terms = LossTerms {
        policy: -f64::from(tape.scalar(policy_sum)),
        value: f64::from(tape.scalar(value_sum)),
        kl: f64::from(tape.scalar(kl_sum)),
        entropy: -f64::from(tape.scalar(neg_entropy_sum)),
        clipped: tape
            .value(ratio)
            .iter()
            .filter(|r| (**r - 1.0).abs() > cfg.clip_ratio)
            .count(),
        tokens: t_len,
        ratios: tape.value(ratio).to_vec(),
    };

    let p = tape.scale(policy_sum, -weight);
    let v = tape.scale(value_sum, cfg.value_coeff * weight);
    let k = tape.scale(kl_sum, cfg.kl_coeff * weight);
    let e = tape.scale(neg_entropy_sum, cfg.entropy_coeff * weight);
    let pv = tape.add(p, v)?;
    let pvk = tape.add(pv, k)?;
    let loss = tape.add(pvk, e)?;
    let grads = tape.backward(loss)?;
    policy.accumulate_grads(&grads, &out)?;
    Ok(terms)
}

/// Averages of one update call.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Largest |r − 1| on the first minibatch, before any optimizer step.
    pub first_pass_max_ratio_deviation: f64,
    /// Clip fraction on the first minibatch, before any optimizer step.
    pub first_pass_clip_fraction: f64,
}

/// Multi-epoch mini-batched clipped updates on one rollout batch.
pub fn ppo_update(
    policy: &mut PolicyModel,
    optimizer: &mut AdamW,
    trajectories: &[Trajectory],
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    if trajectories.is_empty() {
        return Err(Error::Empty("trajectories"));
    }
    let mut advantages = Vec::with_capacity(trajectories.len());
    let mut returns = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let values: Vec<f64> = t.values.iter().map(|&v| f64::from(v)).collect();
        let (a, r) = compute_gae(&t.rewards(), &values, cfg.gae_lambda, cfg.gamma)?;
        advantages.push(a);
        returns.push(r);
    }
    normalize_advantages(&mut advantages);
    let to32 = |v: &Vec<f64>| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    let advantages: Vec<Vec<f32>> = advantages.iter().map(to32).collect();
    let returns: Vec<Vec<f32>> = returns.iter().map(to32).collect();

    let mut stats = UpdateStats::default();
    let (mut tokens, mut clipped, mut steps) = (0usize, 0usize, 0usize);
    let (mut first_tokens, mut first_clipped) = (0usize, 0usize);
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    for _ in 0..cfg.ppo_epochs_per_update {
        order.shuffle(rng);
        for mb in order.chunks(cfg.mini_batch_size) {
            let mb_tokens: usize = mb.iter().map(|&i| trajectories[i].response.len()).sum();
            let weight = 1.0 / mb_tokens as f32;
            for &i in mb {
                let terms = trajectory_loss(policy, &trajectories[i], &advantages[i], &returns[i], cfg, weight)?;
                stats.policy_loss += terms.policy;
                stats.value_loss += terms.value;
                stats.kl += terms.kl;
                stats.entropy += terms.entropy;
                clipped += terms.clipped;
                tokens += terms.tokens;
                if steps == 0 {
                    first_tokens += terms.tokens;
                    first_clipped += terms.clipped;
                    for r in &terms.ratios {
                        let dev = f64::from((r - 1.0).abs());
                        stats.first_pass_max_ratio_deviation = stats.first_pass_max_ratio_deviation.max(dev);
                    }
                }
            }
            let norm = optimizer.clip_and_step(&mut policy.trainable_mut(), cfg.max_grad_norm)?;
            stats.grad_norm += f64::from(norm);
            if steps == 0 {
                stats.first_pass_clip_fraction = first_clipped as f64 / first_tokens as f64;
            }
            steps += 1;
        }
    }
    let nt = tokens as f64;
    stats.policy_loss /= nt;
    stats.value_loss /= nt;
    stats.kl /= nt;
    stats.entropy /= nt;
    stats.clip_fraction = clipped as f64 / nt;
    stats.grad_norm /= steps as f64;
    if ![stats.policy_loss, stats.value_loss, stats.kl, stats.entropy]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite(format!("PPO losses {stats:?}")));
    }
    Ok(stats)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochMetrics {
    pub mean_reward: f64,
    pub kl_proper: f64,
    pub drift_signed: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// One row of the run trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub step: usize,
    pub metrics: EpochMetrics,
    pub rel_ctr: f64,
    pub ndcg10: f64,
    pub recall20: f64,
    pub spearman: f64,
    pub shield_ok: bool,
}

pub const TRACE_HEADER: &str = "epoch,step,mean_reward,kl_proper,drift_signed,policy_loss,value_loss,entropy,clip_fraction,rel_ctr,ndcg10,recall20,spearman,shield_ok";

impl TraceRow {
    pub fn csv_line(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.epoch,
            self.step,
            m.mean_reward,
            m.kl_proper,
            m.drift_signed,
            m.policy_loss,
            m.value_loss,
            m.entropy,
            m.clip_fraction,
            self.rel_ctr,
            self.ndcg10,
            self.recall20,
            self.spearman,
            self.shield_ok
        )
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRun {
    pub trace: Vec<TraceRow>,
    /// Trained epoch (≥ 1) with the highest relative CTR; 0 when no
    /// training epoch ran.
    pub best_epoch: usize,
    /// Evaluation of the best epoch's policy.
    pub best_report: EvalReport,
    pub final_report: EvalReport,
    pub base_checksum: u64,
    pub tower_checksum: u64,
}

/// Fixed-seed evaluation of a policy on a user sample: relative CTR
/// against no explanation, mean reward, engagement and diversity.
pub fn evaluate_policy(
    policy: &PolicyModel,
    env: &Environment,
    users: &[&str],
    no_expl_ctr: f64,
    seed: u64,
) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scored = Vec::new();
    let ctr = evalsim::simulate_ctr(env.tower, env.dataset, users, |u, it| {
        let t = env.explain(policy, &u.user_id, &it.item_id, &mut rng)?;
        let e = crate::datamodel::Explanation::from_text(t.text);
        scored.push((e.clone(), t.reward));
        Ok(Some(e))
    })?;
    report_from(ctr, no_expl_ctr, &scored, env.reward)
}

/// Summarizes a set of scored explanations shown in a simulation whose
/// mean CTR was `ctr`.
pub fn report_from(
    ctr: f64,
    no_expl_ctr: f64,
    scored: &[(crate::datamodel::Explanation, RewardBreakdown)],
    reward: &RewardConfig,
) -> Result<EvalReport> {
    let rel_ctr = evalsim::relative_ctr(ctr, no_expl_ctr)?;
    let eng = evalsim::dwell_and_satisfaction(scored, rel_ctr, reward);
    let texts: Vec<&str> = scored.iter().map(|(e, _)| e.text.as_str()).collect();
    let diversity = if texts.len() >= 2 {
        evalsim::diversity(&texts)?
    } else {
        0.0
    };
    let mean_reward = if scored.is_empty() {
        0.0
    } else {
        scored.iter().map(|(_, r)| r.r_total).sum::<f64>() / scored.len() as f64
    };
    Ok(EvalReport {
        rel_ctr,
        dwell_time: eng.dwell_time,
        satisfaction: eng.satisfaction,
        diversity,
        mean_reward,
        baselines: BTreeMap::new(),
    })
}

/// Deterministic sample of up to `n` eval users.
pub fn sample_eval_users<'a>(dataset: &'a InteractionDataset, n: usize, seed: u64) -> Vec<&'a str> {
    let mut users = dataset.eval_users();
    users.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    users.truncate(n);
    users.sort_unstable();
    users
}

/// Drift of `policy` from the reference on fresh samples for a fixed set
/// of probe pairs.
fn probe_divergence(
    policy: &PolicyModel,
    env: &Environment,
    probes: &[(String, String)],
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(probes.len());
    for (u, i) in probes {
        let prompt = env.prompt(u, i)?;
        let g = generate(policy, &prompt, env.sampling, &mut rng)?;
        samples.push((prompt, g.tokens));
    }
    let d = kl_to_init(policy, env.init, &samples)?;
    Ok((d.kl_proper, d.drift_signed))
}

fn mean_reward(trajs: &[Trajectory]) -> f64 {
    trajs.iter().map(|t| t.reward.r_total).sum::<f64>() / trajs.len().max(1) as f64
}

/// The full PPO schedule. `policy` must carry adapters and start equal to
/// the reference `env.init`; it is left at the final epoch's weights.
/// Checkpoints and the trace are written under `out_dir` when given.
pub fn train(
    policy: &mut PolicyModel,
    env: &Environment,
    cfg: &PpoConfig,
    out_dir: Option<&Path>,
) -> Result<TrainRun> {
    cfg.validate()?;
    env.sampling.validate()?;
    env.reward.validate()?;
    if !policy.has_adapters() {
        return Err(Error::Config("PPO needs a policy with adapters attached".into()));
    }
    env.tower.verify_shield()?;
    let tower_checksum = env
        .tower
        .frozen_checksum()
        .ok_or_else(|| Error::Config("rollouts need a frozen tower".into()))?;
    let base_checksum = policy.base_checksum();
    if base_checksum != env.init.base_checksum() {
        return Err(Error::Config("policy base weights differ from the reference".into()));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }

    let all_eval = env.dataset.eval_users();
    let reference = env.tower.snapshot(all_eval.iter().copied(), 20)?;
    let ranks_before = env.tower.rank_metrics(env.dataset, 10, 20)?;
    let sim_users = sample_eval_users(env.dataset, cfg.eval_users, cfg.eval_seed);
    let no_expl = evalsim::simulate_ctr(env.tower, env.dataset, &sim_users, |_, _| Ok(None))?;

    let mut probe_rng = ChaCha8Rng::seed_from_u64(cfg.eval_seed ^ 0x9e37_79b9);
    let mut probes = Vec::new();
    for _ in 0..cfg.batch_size.max(8) {
        let u = sim_users[probe_rng.gen_range(0..sim_users.len())];
        let recs = env.tower.recommend(u, CANDIDATES)?;
        if let Some((i, _)) = recs.get(probe_rng.gen_range(0..recs.len().max(1))) {
            probes.push((u.to_string(), i.clone()));
        }
    }

    let mut rollout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut optimizer = AdamW::new(AdamWConfig {
        learning_rate: cfg.learning_rate,
        ..AdamWConfig::default()
    });

    // Rollouts of the untrained policy give the epoch-0 reward. The value
    // head starts at that expected return: at the default learning rate it
    // would take thousands of steps to climb there from zero, and until it
    // does every advantage carries the sign of the raw reward.
    let initial_reward = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut r = 0.0;
        for _ in 0..cfg.update_steps_per_epoch.max(1) {
            r += mean_reward(&collect_rollouts(policy, env, cfg.batch_size, &mut rng)?);
        }
        r / cfg.update_steps_per_epoch.max(1) as f64
    };
    policy.set_value_bias(initial_reward as f32);

    let mut trace = Vec::with_capacity(cfg.train_epochs + 1);
    let mut best: Option<(usize, EvalReport)> = None;
    let mut final_report = EvalReport::default();
    let mut step = 0usize;
    for epoch in 0..=cfg.train_epochs {
        let mut metrics = EpochMetrics::default();
        if epoch > 0 {
            let (mut rewards, mut n) = (0.0, 0usize);
            for _ in 0..cfg.update_steps_per_epoch {
                let trajs = collect_rollouts(policy, env, cfg.batch_size, &mut rollout_rng)?;
                if trajs.is_empty() {
                    continue;
                }
                rewards += mean_reward(&trajs);
                let s = ppo_update(policy, &mut optimizer, &trajs, cfg, &mut shuffle_rng)?;
                metrics.policy_loss += s.policy_loss;
                metrics.value_loss += s.value_loss;
                metrics.entropy += s.entropy;
                metrics.clip_fraction += s.clip_fraction;
                metrics.grad_norm += s.grad_norm;
                n += 1;
                step += 1;
            }
            let k = n.max(1) as f64;
            metrics.mean_reward = rewards / k;
            metrics.policy_loss /= k;
            metrics.value_loss /= k;
            metrics.entropy /= k;
            metrics.clip_fraction /= k;
            metrics.grad_norm /= k;
        }

        env.tower.verify_shield()?;
        let base_now = policy.base_checksum();
        if base_now != base_checksum {
            return Err(Error::ShieldViolation {
                component: "policy base weights",
                expected: base_checksum,
                actual: base_now,
            });
        }
        let report = evaluate_policy(policy, env, &sim_users, no_expl, cfg.eval_seed)?;
        if epoch == 0 {
            metrics.mean_reward = initial_reward;
        }
        let (kl, drift) = probe_divergence(policy, env, &probes, cfg.eval_seed)?;
        metrics.kl_proper = kl;
        metrics.drift_signed = drift;
        let ranks = env.tower.rank_metrics(env.dataset, 10, 20)?;
        let spearman = env.tower.spearman_preservation(&reference)?;
        let row = TraceRow {
            epoch,
            step,
            metrics,
            rel_ctr: report.rel_ctr,
            ndcg10: ranks.ndcg_at_10,
            recall20: ranks.recall_at_20,
            spearman,
            shield_ok: ranks == ranks_before && env.tower.checksum() == tower_checksum,
        };
        log::info!(
            "epoch {epoch} reward {:.4} rel_ctr {:.4} kl {:.5} drift {:.4}",
            row.metrics.mean_reward,
            row.rel_ctr,
            row.metrics.kl_proper,
            row.metrics.drift_signed
        );
        if let Some(dir) = out_dir {
            policy.save(dir.join(format!("policy_epoch{epoch}.srlk")))?;
            fs::write(dir.join("trace.csv"), trace_csv(&[trace.as_slice(), &[row.clone()]].concat()))?;
        }
        trace.push(row);
        if epoch > 0 && best.as_ref().is_none_or(|(_, b)| report.rel_ctr > b.rel_ctr) {
            best = Some((epoch, report.clone()));
        }
        final_report = report;
    }
    let (best_epoch, best_report) = best.unwrap_or((0, final_report.clone()));
    Ok(TrainRun {
        trace,
        best_epoch,
        best_report,
        final_report,
        base_checksum,
        tower_checksum,
    })
}
