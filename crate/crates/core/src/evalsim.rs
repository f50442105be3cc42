//! Offline evaluation: a click-through simulator on top of the frozen
//! tower, reading-time and satisfaction proxies, pairwise BLEU diversity,
//! and the baseline explainers.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorlab::kernels::sigmoid;

use crate::datamodel::{Explanation, ExplanationContext, ItemRecord, UserProfile};
use crate::ingest::InteractionDataset;
use crate::rectower::RecTower;
use crate::reward::{keyword_coverage, RewardBreakdown, RewardConfig};
use crate::{Error, Result};

/// Recommendations scored per simulated user.
pub const CTR_TOP_K: usize = 10;
/// Logit boost of a fully appealing explanation.
pub const APPEAL_WEIGHT: f32 = 0.3;
/// Silent reading rate in words per second.
pub const WORDS_PER_SECOND: f64 = 3.5;
pub const TEMPLATE_KEYWORDS: usize = 3;
pub const FALLBACK_EXPLANATION: &str = "You might enjoy this book.";

/// Share of the user's preference keywords that appear in the text.
pub fn explanation_appeal(user: &UserProfile, e: &Explanation) -> f64 {
    keyword_coverage(user.preference_keywords.iter(), &e.text)
}

/// Click probability for one recommendation, with or without explanation.
pub fn click_probability(score: f32, appeal: Option<f64>) -> f64 {
    let boost = appeal.map_or(0.0, |a| APPEAL_WEIGHT * a as f32);
    f64::from(sigmoid(score + boost))
}

/// Per-user mean click probability over each user's top recommendations.
/// `explainer` returns `None` where no explanation is shown.
pub fn simulate_ctr_per_user<F>(
    tower: &RecTower,
    dataset: &InteractionDataset,
    users: &[&str],
    mut explainer: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&UserProfile, &ItemRecord) -> Result<Option<Explanation>>,
{
    if users.is_empty() {
        return Err(Error::Empty("simulation user sample"));
    }
    let mut out = Vec::with_capacity(users.len());
    for &u in users {
        let profile = dataset
            .users
            .get(u)
            .ok_or_else(|| Error::UnknownUser(u.to_string()))?;
        let recs = tower.recommend(u, CTR_TOP_K)?;
        if recs.is_empty() {
            return Err(Error::Empty("recommendation list"));
        }
        let mut total = 0.0;
        for (item_id, score) in &recs {
            let item = dataset
                .items
                .get(item_id)
                .ok_or_else(|| Error::UnknownItem(item_id.clone()))?;
            let appeal = explainer(profile, item)?.map(|e| explanation_appeal(profile, &e));
            total += click_probability(*score, appeal);
        }
        out.push(total / recs.len() as f64);
    }
    Ok(out)
}

/// Mean click probability over every (user, recommended item) cell.
pub fn simulate_ctr<F>(
    tower: &RecTower,
    dataset: &InteractionDataset,
    users: &[&str],
    explainer: F,
) -> Result<f64>
where
    F: FnMut(&UserProfile, &ItemRecord) -> Result<Option<Explanation>>,
{
    let per_user = simulate_ctr_per_user(tower, dataset, users, explainer)?;
    Ok(per_user.iter().sum::<f64>() / per_user.len() as f64)
}

pub fn relative_ctr(with_expl: f64, without: f64) -> Result<f64> {
    if !(without > 0.0) {
        return Err(Error::Data(format!("baseline CTR {without} is not positive")));
    }
    Ok(with_expl / without)
}

/// "Since you enjoyed {genre} books, you might like this {genre} novel
/// featuring {keywords}." from the user's top genre, the item's first
/// genre and up to three non-genre item keywords.
pub fn template_explain(ctx: &ExplanationContext) -> Explanation {
    let item_genre = ctx.item.genres.first().map(String::as_str);
    let user_genre = ctx.user.top_genres(1).first().copied().or(item_genre);
    let (Some(liked), Some(genre)) = (user_genre, item_genre.or(user_genre)) else {
        return Explanation::from_text(FALLBACK_EXPLANATION);
    };
    let keywords: Vec<&str> = ctx
        .item
        .domain_keywords
        .iter()
        .filter(|k| !ctx.item.genres.contains(*k))
        .take(TEMPLATE_KEYWORDS)
        .map(String::as_str)
        .collect();
    let mut text = format!("Since you enjoyed {liked} books, you might like this {genre} novel");
    if !keywords.is_empty() {
        text.push_str(" featuring ");
        text.push_str(&keywords.join(", "));
    }
    text.push('.');
    Explanation::from_text(text)
}

fn bleu_tokens(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(str::to_string).collect()
}

struct NgramCounts {
    len: usize,
    counts: [HashMap<Vec<String>, usize>; 4],
}

impl NgramCounts {
    fn new(text: &str) -> Self {
        let toks = bleu_tokens(text);
        let counts = std::array::from_fn(|n| {
            let mut m = HashMap::new();
            for w in toks.windows(n + 1) {
                *m.entry(w.to_vec()).or_insert(0) += 1;
            }
            m
        });
        Self {
            len: toks.len(),
            counts,
        }
    }
}

fn bleu_counts(cand: &NgramCounts, refr: &NgramCounts) -> f64 {
    if cand.len == 0 {
        return if refr.len == 0 { 1.0 } else { 0.0 };
    }
    let mut log_p = 0.0;
    for n in 0..4 {
        let total: usize = cand.counts[n].values().sum();
        let matched: usize = cand.counts[n]
            .iter()
            .map(|(g, &c)| c.min(refr.counts[n].get(g).copied().unwrap_or(0)))
            .sum();
        // unigram precision unsmoothed, add-one for higher orders
        let (num, den) = if n == 0 {
            (matched as f64, total as f64)
        } else {
            (matched as f64 + 1.0, total as f64 + 1.0)
        };
        if num == 0.0 {
            return 0.0;
        }
        log_p += (num / den).ln() / 4.0;
    }
    let (c, r) = (cand.len as f64, refr.len as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_p.exp()
}

/// Sentence BLEU-4 of `candidate` against one reference, with add-one
/// smoothing of the 2- to 4-gram precisions and a brevity penalty.
pub fn bleu4(candidate: &str, reference: &str) -> f64 {
    bleu_counts(&NgramCounts::new(candidate), &NgramCounts::new(reference))
}

/// Mean over unordered pairs of `1 − BLEU`, BLEU averaged over both
/// directions.
pub fn diversity(texts: &[&str]) -> Result<f64> {
    if texts.len() < 2 {
        return Err(Error::Empty("diversity needs at least two explanations"));
    }
    let counts: Vec<NgramCounts> = texts.iter().map(|t| NgramCounts::new(t)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..counts.len() {
        for j in i + 1..counts.len() {
            let b = 0.5 * (bleu_counts(&counts[i], &counts[j]) + bleu_counts(&counts[j], &counts[i]));
            total += 1.0 - b;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Engagement {
    pub dwell_time: f64,
    pub satisfaction: f64,
}

/// Reading time from mean length; satisfaction from CTR lift and coherence.
pub fn dwell_and_satisfaction(
    scored: &[(Explanation, RewardBreakdown)],
    rel_ctr: f64,
    cfg: &RewardConfig,
) -> Engagement {
    if scored.is_empty() {
        return Engagement {
            dwell_time: 0.0,
            satisfaction: 0.5 * (rel_ctr - 1.0).clamp(0.0, 1.0),
        };
    }
    let n = scored.len() as f64;
    let words: f64 = scored.iter().map(|(e, _)| e.word_count as f64).sum::<f64>() / n;
    let coherence: f64 = scored.iter().map(|(_, r)| r.r_coherence).sum::<f64>() / n;
    let coherence_share = if cfg.w_coherence > 0.0 {
        coherence / cfg.w_coherence
    } else {
        0.0
    };
    Engagement {
        dwell_time: words / WORDS_PER_SECOND,
        satisfaction: 0.5 * (rel_ctr - 1.0).clamp(0.0, 1.0) + 0.5 * coherence_share,
    }
}

/// Percentile interval of the ratio of means, resampling users with
/// replacement. `with_expl` and `without` are per-user CTRs in the same
/// user order.
pub fn bootstrap_relative_ctr(
    with_expl: &[f64],
    without: &[f64],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if with_expl.len() != without.len() || with_expl.is_empty() {
        return Err(Error::Data("bootstrap needs equal, non-empty samples".into()));
    }
    if resamples == 0 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config("bootstrap needs resamples > 0 and confidence in (0, 1)".into()));
    }
    let n = with_expl.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..n {
            let k = rng.gen_range(0..n);
            a += with_expl[k];
            b += without[k];
        }
        stats.push(relative_ctr(a, b)?);
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let at = |q: f64| stats[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Ok((at(tail), at(1.0 - tail)))
}

/// Headline evaluation numbers for one explainer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rel_ctr: f64,
    pub dwell_time: f64,
    pub satisfaction: f64,
    pub diversity: f64,
    pub mean_reward: f64,
    /// Relative CTR of the comparison explainers, by name.
    pub baselines: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use indexmap::IndexSet;

    fn user(keywords: &[&str]) -> UserProfile {
        let prefs: IndexSet<String> = keywords.iter().map(|s| s.to_string()).collect();
        let weights = BTreeMap::from([("fantasy".to_string(), 1.0)]);
        UserProfile::new("u", vec![], weights, prefs).unwrap()
    }

    #[test]
    fn appeal_examples() {
        let u = user(&["a1", "b2", "c3", "d4", "e5"]);
        assert_eq!(explanation_appeal(&u, &Explanation::empty()), 0.0);
        assert_eq!(explanation_appeal(&u, &Explanation::from_text("a1 b2 c3 d4 e5")), 1.0);
        assert_eq!(explanation_appeal(&u, &Explanation::from_text("x b2 y d4")), 0.4);
    }

    #[test]
    fn relative_ctr_arithmetic() {
        assert_eq!(relative_ctr(0.4, 0.4).unwrap(), 1.0);
        assert!((relative_ctr(0.49, 0.40).unwrap() - 1.225).abs() < 1e-12);
        assert!(relative_ctr(0.4, 0.0).is_err());
    }

    #[test]
    fn template_instantiation() {
        let item = ItemRecord::new("i", "Love Castle", "A", ["romance"], "").unwrap();
        let ctx = ExplanationContext {
            user: user(&[]),
            item,
            recent_items: vec![],
            relevant_keywords: IndexSet::new(),
        };
        assert_eq!(
            template_explain(&ctx).text,
            "Since you enjoyed fantasy books, you might like this romance novel featuring love, castle."
        );
        assert_eq!(template_explain(&ctx), template_explain(&ctx));
        let mut bare = ctx.clone();
        bare.user.genre_weights.clear();
        bare.item.genres.clear();
        assert_eq!(template_explain(&bare).text, FALLBACK_EXPLANATION);
    }

    #[test]
    fn bleu_limits() {
        assert!((bleu4("a b c d e f", "a b c d e f") - 1.0).abs() < 1e-12);
        assert_eq!(diversity(&["same words here ok", "same words here ok", "same words here ok"]).unwrap(), 0.0);
        let d = diversity(&["alpha beta gamma delta", "one two three four"]).unwrap();
        assert!(d > 0.95);
        assert!(diversity(&["only one"]).is_err());
    }

    #[test]
    fn diversity_is_permutation_invariant() {
        let a = ["the cat sat on the mat", "a dog sat on a log", "the cat ran far away"];
        let b = [a[2], a[0], a[1]];
        assert!((diversity(&a).unwrap() - diversity(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn engagement_examples() {
        let cfg = RewardConfig::default();
        let words = Explanation::from_text(vec!["w"; 35].join(" "));
        let r = RewardBreakdown::default();
        let e = dwell_and_satisfaction(&[(words.clone(), r)], 1.0, &cfg);
        assert!((e.dwell_time - 10.0).abs() < 1e-12);
        assert_eq!(e.satisfaction, 0.0);
        let full = RewardBreakdown {
            r_coherence: 0.2,
            ..r
        };
        let e = dwell_and_satisfaction(&[(words, full)], 2.5, &cfg);
        assert!((e.satisfaction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn click_probability_forms() {
        assert_eq!(click_probability(0.0, None), 0.5);
        assert!((click_probability(0.2, Some(1.0)) - f64::from(sigmoid(0.5))).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_brackets_point_estimate() {
        let a = [0.5, 0.6, 0.55, 0.7];
        let b = [0.5, 0.5, 0.5, 0.6];
        let (lo, hi) = bootstrap_relative_ctr(&a, &b, 500, 0.9, 1).unwrap();
        let point = relative_ctr(a.iter().sum(), b.iter().sum()).unwrap();
        assert!(lo <= point && point <= hi);
    }
}
