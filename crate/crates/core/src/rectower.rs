//! Matrix-factorization recommender trained with BPR and then frozen.
//!
//! Scores are `<p_u, q_i> + b_u + b_i`. Once [`RecTower::freeze`] has run,
//! every mutating entry point returns [`Error::Frozen`] and the parameter
//! checksum recorded at freeze time can be re-verified at any moment.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tensorlab::{checkpoint, checksum, dot, Tensor};

use crate::ingest::InteractionDataset;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BprConfig {
    pub embedding_dim: usize,
    pub regularization: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BprConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 128,
            regularization: 0.01,
            learning_rate: 0.01,
            epochs: 100,
            seed: 42,
        }
    }
}

impl BprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || !(self.regularization > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "bpr embedding_dim, regularization and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

const INIT_STD: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct RecTower {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    user_embeddings: Tensor,
    item_embeddings: Tensor,
    user_bias: Tensor,
    item_bias: Tensor,
    /// Train-split positives per user, excluded from recommendations.
    positives: Vec<BTreeSet<usize>>,
    frozen: bool,
    params_checksum: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankMetrics {
    pub ndcg_at_10: f64,
    pub recall_at_20: f64,
}

/// One (user, item) entry of a top-K list.
pub type Ranked = (String, f32);

impl RecTower {
    /// Seeded random initialization over the dataset's users and items.
    pub fn init(dataset: &InteractionDataset, dim: usize, seed: u64) -> Self {
        let user_ids: Vec<String> = dataset.users.keys().cloned().collect();
        let item_ids: Vec<String> = dataset.items.keys().cloned().collect();
        let user_index: HashMap<String, usize> =
            user_ids.iter().enumerate().map(|(k, u)| (u.clone(), k)).collect();
        let item_index: HashMap<String, usize> =
            item_ids.iter().enumerate().map(|(k, i)| (i.clone(), k)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        let mut gaussian = |rows: usize| {
            let data = (0..rows * dim).map(|_| normal.sample(&mut rng) as f32).collect();
            Tensor::new(&[rows, dim], data).unwrap()
        };
        let user_embeddings = gaussian(user_ids.len());
        let item_embeddings = gaussian(item_ids.len());
        let mut positives = vec![BTreeSet::new(); user_ids.len()];
        for it in dataset.train.iter().filter(|i| i.is_positive()) {
            if let (Some(&u), Some(&i)) = (user_index.get(&it.user_id), item_index.get(&it.item_id)) {
                positives[u].insert(i);
            }
        }
        Self {
            user_bias: Tensor::zeros(&[user_ids.len()]),
            item_bias: Tensor::zeros(&[item_ids.len()]),
            user_ids,
            item_ids,
            user_index,
            item_index,
            user_embeddings,
            item_embeddings,
            positives,
            frozen: false,
            params_checksum: None,
        }
    }

    /// Tower over the dataset's ids with explicit parameters, for
    /// hand-built cases.
    pub fn with_parameters(
        dataset: &InteractionDataset,
        user_embeddings: Tensor,
        item_embeddings: Tensor,
        user_bias: Tensor,
        item_bias: Tensor,
    ) -> Result<Self> {
        let mut tower = Self::init(dataset, 1, 0);
        let (nu, ni) = (tower.user_ids.len(), tower.item_ids.len());
        let d = user_embeddings.shape().get(1).copied().unwrap_or(0);
        if user_embeddings.shape() != [nu, d]
            || item_embeddings.shape() != [ni, d]
            || user_bias.shape() != [nu]
            || item_bias.shape() != [ni]
        {
            return Err(Error::Data("tower parameter shapes do not match the dataset".into()));
        }
        tower.user_embeddings = user_embeddings;
        tower.item_embeddings = item_embeddings;
        tower.user_bias = user_bias;
        tower.item_bias = item_bias;
        Ok(tower)
    }

    pub fn dim(&self) -> usize {
        self.user_embeddings.shape()[1]
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn checksum(&self) -> u64 {
        checksum([
            &self.user_embeddings,
            &self.item_embeddings,
            &self.user_bias,
            &self.item_bias,
        ])
    }

    /// Checksum stored by [`RecTower::freeze`].
    pub fn frozen_checksum(&self) -> Option<u64> {
        self.params_checksum
    }

    pub fn freeze(mut self) -> Self {
        if !self.frozen {
            self.frozen = true;
            self.params_checksum = Some(self.checksum());
        }
        self
    }

    /// Recomputes the checksum and compares it with the one taken at freeze.
    pub fn verify_shield(&self) -> Result<()> {
        let expected = self.params_checksum.ok_or_else(|| {
            Error::Config("shield check on a tower that was never frozen".into())
        })?;
        let actual = self.checksum();
        if actual != expected {
            return Err(Error::ShieldViolation {
                component: "recommender tower",
                expected,
                actual,
            });
        }
        Ok(())
    }

    fn user(&self, user_id: &str) -> Result<usize> {
        self.user_index
            .get(user_id)
            .copied()
            .ok_or_else(|| Error::UnknownUser(user_id.to_string()))
    }

    fn item(&self, item_id: &str) -> Result<usize> {
        self.item_index
            .get(item_id)
            .copied()
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))
    }

    fn score_idx(&self, u: usize, i: usize) -> f32 {
        dot(self.user_embeddings.row(u), self.item_embeddings.row(i))
            + self.user_bias.data()[u]
            + self.item_bias.data()[i]
    }

    pub fn predict(&self, user_id: &str, item_id: &str) -> Result<f32> {
        Ok(self.score_idx(self.user(user_id)?, self.item(item_id)?))
    }

    /// Top `k` items by score, excluding the user's train positives; ties
    /// go to the lower item id.
    pub fn recommend(&self, user_id: &str, k: usize) -> Result<Vec<Ranked>> {
        let u = self.user(user_id)?;
        let excluded = &self.positives[u];
        let mut scored: Vec<(usize, f32)> = (0..self.item_ids.len())
            .filter(|i| !excluded.contains(i))
            .map(|i| (i, self.score_idx(u, i)))
            .collect();
        // item indices follow sorted item ids, so index order breaks ties
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(i, s)| (self.item_ids[i].clone(), s))
            .collect())
    }

    /// Top-`k` item ids for each listed user.
    pub fn snapshot<'a>(
        &self,
        users: impl IntoIterator<Item = &'a str>,
        k: usize,
    ) -> Result<BTreeMap<String, Vec<String>>> {
        users
            .into_iter()
            .map(|u| {
                let ids = self.recommend(u, k)?.into_iter().map(|(i, _)| i).collect();
                Ok((u.to_string(), ids))
            })
            .collect()
    }

    /// One SGD ascent step on `ln σ(s(u,i) - s(u,j))` with L2 decay.
    /// Returns the loss `-ln σ(x)` before the step.
    pub fn bpr_step(&mut self, u: usize, i: usize, j: usize, lr: f32, reg: f32) -> Result<f64> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let x = self.score_idx(u, i) - self.score_idx(u, j);
        let g = 1.0 / (1.0 + x.exp());
        let d = self.dim();
        let pu: Vec<f32> = self.user_embeddings.row(u).to_vec();
        let qi: Vec<f32> = self.item_embeddings.row(i).to_vec();
        let qj: Vec<f32> = self.item_embeddings.row(j).to_vec();
        {
            let p = &mut self.user_embeddings.data_mut()[u * d..(u + 1) * d];
            for k in 0..d {
                p[k] += lr * (g * (qi[k] - qj[k]) - reg * pu[k]);
            }
        }
        let q = self.item_embeddings.data_mut();
        for k in 0..d {
            q[i * d + k] += lr * (g * pu[k] - reg * qi[k]);
            q[j * d + k] += lr * (-g * pu[k] - reg * qj[k]);
        }
        let b = self.item_bias.data_mut();
        b[i] += lr * (g - reg * b[i]);
        b[j] += lr * (-g - reg * b[j]);
        let loss = (-f64::from(x)).exp().ln_1p();
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("bpr loss at user {u}")));
        }
        Ok(loss)
    }

    /// NDCG@`k_ndcg` and Recall@`k_recall` against eval positives, averaged
    /// over users with at least one eval positive.
    pub fn rank_metrics(
        &self,
        dataset: &InteractionDataset,
        k_ndcg: usize,
        k_recall: usize,
    ) -> Result<RankMetrics> {
        let mut relevant: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for it in dataset.eval.iter().filter(|i| i.is_positive()) {
            relevant
                .entry(it.user_id.as_str())
                .or_default()
                .insert(it.item_id.as_str());
        }
        if relevant.is_empty() {
            return Err(Error::Empty("no user has an eval positive"));
        }
        let (mut ndcg, mut recall) = (0.0, 0.0);
        for (user, rel) in &relevant {
            let ranked = self.recommend(user, k_ndcg.max(k_recall))?;
            ndcg += ndcg_at(&ranked, rel, k_ndcg);
            let hits = ranked
                .iter()
                .take(k_recall)
                .filter(|(i, _)| rel.contains(i.as_str()))
                .count();
            recall += hits as f64 / rel.len() as f64;
        }
        let n = relevant.len() as f64;
        Ok(RankMetrics {
            ndcg_at_10: ndcg / n,
            recall_at_20: recall / n,
        })
    }

    /// Mean Spearman correlation between each reference top-K list and the
    /// current top-K for the same user.
    pub fn spearman_preservation(&self, reference: &BTreeMap<String, Vec<String>>) -> Result<f64> {
        if reference.is_empty() {
            return Err(Error::Empty("reference rankings"));
        }
        let mut total = 0.0;
        for (user, before) in reference {
            let now: Vec<String> = self
                .recommend(user, before.len())?
                .into_iter()
                .map(|(i, _)| i)
                .collect();
            total += spearman(before, &now);
        }
        Ok(total / reference.len() as f64)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        checkpoint::save(
            dir.join("tower.srlk"),
            [
                ("user_embeddings", &self.user_embeddings),
                ("item_embeddings", &self.item_embeddings),
                ("user_bias", &self.user_bias),
                ("item_bias", &self.item_bias),
            ],
        )?;
        let mut ids = String::new();
        for u in &self.user_ids {
            ids.push_str(&format!("user\t{u}\n"));
        }
        for i in &self.item_ids {
            ids.push_str(&format!("item\t{i}\n"));
        }
        fs::write(dir.join("tower_ids.tsv"), ids)?;
        fs::write(dir.join("tower_checksum.txt"), format!("{:016x}\n", self.checksum()))?;
        Ok(())
    }

    /// Loads a saved tower and freezes it. Train positives are rebuilt from
    /// `dataset`.
    pub fn load(dir: impl AsRef<Path>, dataset: &InteractionDataset) -> Result<Self> {
        let dir = dir.as_ref();
        let mut tower = Self::init(dataset, 1, 0);
        let ids = fs::read_to_string(dir.join("tower_ids.tsv"))?;
        let (mut users, mut items) = (Vec::new(), Vec::new());
        for line in ids.lines() {
            match line.split_once('\t') {
                Some(("user", u)) => users.push(u.to_string()),
                Some(("item", i)) => items.push(i.to_string()),
                _ => return Err(Error::Data(format!("bad tower id line {line:?}"))),
            }
        }
        if users != tower.user_ids || items != tower.item_ids {
            return Err(Error::Data("tower ids do not match the dataset".into()));
        }
        let mut tensors: HashMap<String, Tensor> = checkpoint::load(dir.join("tower.srlk"))?
            .into_iter()
            .collect();
        let mut take = |name: &str| {
            tensors
                .remove(name)
                .ok_or_else(|| Error::Data(format!("tower checkpoint lacks {name}")))
        };
        tower.user_embeddings = take("user_embeddings")?;
        tower.item_embeddings = take("item_embeddings")?;
        tower.user_bias = take("user_bias")?;
        tower.item_bias = take("item_bias")?;
        Ok(tower.freeze())
    }
}

fn ndcg_at(ranked: &[Ranked], rel: &BTreeSet<&str>, k: usize) -> f64 {
    let gain = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, (i, _))| rel.contains(i.as_str()))
        .map(|(r, _)| gain(r))
        .sum();
    let idcg: f64 = (0..rel.len().min(k)).map(gain).sum();
    dcg / idcg
}

/// Spearman correlation of two ranked lists over the union of their items.
/// An item absent from a list takes rank `len + 1` there.
pub fn spearman(a: &[String], b: &[String]) -> f64 {
    if a == b {
        return 1.0;
    }
    let union: BTreeSet<&String> = a.iter().chain(b).collect();
    let rank_in = |list: &[String], item: &String| {
        list.iter()
            .position(|x| x == item)
            .map_or(list.len() as f64 + 1.0, |p| p as f64 + 1.0)
    };
    let ra: Vec<f64> = union.iter().map(|i| rank_in(a, i)).collect();
    let rb: Vec<f64> = union.iter().map(|i| rank_in(b, i)).collect();
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0)
}

/// Trains a fresh tower with BPR. Returns the (unfrozen) tower and the mean
/// loss of each epoch.
pub fn train_bpr_traced(
    dataset: &InteractionDataset,
    cfg: &BprConfig,
) -> Result<(RecTower, Vec<f64>)> {
    cfg.validate()?;
    if dataset.train.is_empty() || dataset.items.is_empty() {
        return Err(Error::Empty("bpr training data"));
    }
    let mut tower = RecTower::init(dataset, cfg.embedding_dim, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_b9b);
    let mut pairs: Vec<(usize, usize)> = tower
        .positives
        .iter()
        .enumerate()
        .flat_map(|(u, set)| set.iter().map(move |&i| (u, i)))
        .collect();
    let n_items = tower.n_items();
    let (lr, reg) = (cfg.learning_rate as f32, cfg.regularization as f32);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut steps = 0usize;
        for &(u, i) in &pairs {
            if tower.positives[u].len() >= n_items {
                continue;
            }
            let j = loop {
                let j = rng.gen_range(0..n_items);
                if !tower.positives[u].contains(&j) {
                    break j;
                }
            };
            sum += tower.bpr_step(u, i, j, lr, reg)?;
            steps += 1;
        }
        trace.push(if steps > 0 { sum / steps as f64 } else { 0.0 });
    }
    Ok((tower, trace))
}

pub fn train_bpr(dataset: &InteractionDataset, cfg: &BprConfig) -> Result<RecTower> {
    Ok(train_bpr_traced(dataset, cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        let l: Vec<String> = (0..5).map(|k| format!("i{k}")).collect();
        let rev: Vec<String> = l.iter().rev().cloned().collect();
        assert_eq!(spearman(&l, &l), 1.0);
        assert!((spearman(&l, &rev) + 1.0).abs() < 1e-12);

        let ten: Vec<String> = (0..10).map(|k| format!("i{k}")).collect();
        let mut swapped = ten.clone();
        swapped.swap(3, 4);
        let want = 1.0 - 6.0 * 2.0 / (10.0 * 99.0);
        assert!((spearman(&ten, &swapped) - want).abs() < 1e-12);
    }

    #[test]
    fn ndcg_by_hand() {
        let ranked: Vec<Ranked> = ["a", "b", "c"].iter().map(|s| (s.to_string(), 0.0)).collect();
        let rel: BTreeSet<&str> = ["b", "z"].into_iter().collect();
        let want = (1.0 / 3f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((ndcg_at(&ranked, &rel, 10) - want).abs() < 1e-12);
    }
}
