//! Heuristic explanation reward: length, keyword relevance, coherence.

use std::collections::HashSet;

use crate::datamodel::{Explanation, ExplanationContext};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoherenceMode {
    /// Both checks must pass for any credit.
    Product,
    /// Each check earns half the coherence weight.
    Additive,
}

impl std::str::FromStr for CoherenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(Self::Product),
            "additive" => Ok(Self::Additive),
            other => Err(Error::Config(format!("unknown coherence mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for CoherenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Product => "product",
            Self::Additive => "additive",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardConfig {
    /// Word count at which the length reward saturates.
    pub target_length: f64,
    pub w_length: f64,
    pub w_content: f64,
    pub w_coherence: f64,
    pub coherence_mode: CoherenceMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            target_length: 40.0,
            w_length: 0.5,
            w_content: 0.3,
            w_coherence: 0.2,
            coherence_mode: CoherenceMode::Additive,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let sum = self.w_length + self.w_content + self.w_coherence;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("reward weights sum to {sum}, not 1")));
        }
        if [self.w_length, self.w_content, self.w_coherence].iter().any(|w| *w < 0.0) {
            return Err(Error::Config("reward weights must be non-negative".into()));
        }
        if !(self.target_length > 0.0) {
            return Err(Error::Config("target_length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardBreakdown {
    pub r_length: f64,
    pub r_content: f64,
    pub r_coherence: f64,
    pub r_total: f64,
}

pub fn length_reward(e: &Explanation, cfg: &RewardConfig) -> f64 {
    (e.word_count as f64 / cfg.target_length).min(1.0) * cfg.w_length
}

/// Lowercased whitespace tokens; punctuation stays attached.
pub fn text_tokens(text: &str) -> HashSet<String> {
    text.to_lowercase().split_whitespace().map(str::to_string).collect()
}

/// Fraction of `keywords` that occur among the text's tokens; 0 when
/// `keywords` is empty.
pub fn keyword_coverage<'a>(keywords: impl ExactSizeIterator<Item = &'a String>, text: &str) -> f64 {
    let n = keywords.len();
    if n == 0 {
        return 0.0;
    }
    let tokens = text_tokens(text);
    let hits = keywords.filter(|k| tokens.contains(k.as_str())).count();
    hits as f64 / n as f64
}

pub fn content_reward(ctx: &ExplanationContext, e: &Explanation, cfg: &RewardConfig) -> f64 {
    keyword_coverage(ctx.relevant_keywords.iter(), &e.text) * cfg.w_content
}

const TERMINALS: [char; 3] = ['.', '!', '?'];
const MARKS: [char; 6] = ['.', ',', '!', '?', ';', ':'];

/// Non-empty text whose every sentence has at least three words.
pub fn complete_sentences(text: &str) -> bool {
    let sentences: Vec<&str> = text
        .split(TERMINALS)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    !sentences.is_empty() && sentences.iter().all(|s| s.split_whitespace().count() >= 3)
}

/// Ends with a terminal mark and never has two marks in a row.
pub fn proper_punctuation(text: &str) -> bool {
    let compact: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let ends_well = compact.last().is_some_and(|c| TERMINALS.contains(c));
    let doubled = compact
        .windows(2)
        .any(|w| MARKS.contains(&w[0]) && MARKS.contains(&w[1]));
    ends_well && !doubled
}

pub fn coherence_reward(e: &Explanation, cfg: &RewardConfig) -> f64 {
    let complete = complete_sentences(&e.text);
    let punct = proper_punctuation(&e.text);
    let half = cfg.w_coherence / 2.0;
    match cfg.coherence_mode {
        CoherenceMode::Additive => half * f64::from(u8::from(complete)) + half * f64::from(u8::from(punct)),
        CoherenceMode::Product => {
            if complete && punct {
                cfg.w_coherence
            } else {
                0.0
            }
        }
    }
}

pub fn total_reward(ctx: &ExplanationContext, e: &Explanation, cfg: &RewardConfig) -> RewardBreakdown {
    let r_length = length_reward(e, cfg);
    let r_content = content_reward(ctx, e, cfg);
    let r_coherence = coherence_reward(e, cfg);
    RewardBreakdown {
        r_length,
        r_content,
        r_coherence,
        r_total: (r_length + r_content + r_coherence).min(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{ItemRecord, UserProfile};
    use indexmap::IndexSet;
    use std::collections::BTreeMap;

    fn ctx(keywords: &[&str]) -> ExplanationContext {
        let item = ItemRecord::new("i", "T", "A", ["g"], "").unwrap();
        let user = UserProfile::new("u", vec![], BTreeMap::new(), IndexSet::new()).unwrap();
        ExplanationContext {
            user,
            item,
            recent_items: vec![],
            relevant_keywords: keywords.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn words(n: usize) -> Explanation {
        Explanation::from_text(vec!["word"; n].join(" "))
    }

    fn product() -> RewardConfig {
        RewardConfig {
            coherence_mode: CoherenceMode::Product,
            ..RewardConfig::default()
        }
    }

    #[test]
    fn length_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(length_reward(&words(40), &cfg), 0.5);
        assert_eq!(length_reward(&words(20), &cfg), 0.25);
        assert_eq!(length_reward(&words(100), &cfg), 0.5);
    }

    #[test]
    fn content_examples() {
        let cfg = RewardConfig::default();
        let c = ctx(&["love", "castle"]);
        assert_eq!(content_reward(&c, &Explanation::from_text("Love at the castle"), &cfg), 0.3);
        assert_eq!(content_reward(&c, &Explanation::from_text("nothing here"), &cfg), 0.0);

        let eight = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"];
        let c = ctx(&eight);
        let e = Explanation::from_text("an ALPHA tale of delta and golf forces");
        let got = content_reward(&c, &e, &cfg);
        assert!((got - 0.3 * 3.0 / 8.0).abs() < 1e-12);
        assert!((got - 0.1125).abs() < 1e-12);
    }

    #[test]
    fn empty_keyword_set_gives_zero() {
        let cfg = RewardConfig::default();
        assert_eq!(content_reward(&ctx(&[]), &words(5), &cfg), 0.0);
    }

    #[test]
    fn coherence_examples() {
        let add = RewardConfig::default();
        let good = Explanation::from_text("You will enjoy this rich fantasy world.");
        assert_eq!(coherence_reward(&good, &add), 0.2);
        assert_eq!(coherence_reward(&good, &product()), 0.2);

        let bad = Explanation::from_text("great book");
        assert_eq!(coherence_reward(&bad, &add), 0.0);
        assert_eq!(coherence_reward(&bad, &product()), 0.0);

        let split = Explanation::from_text("This is a wonderful story with depth");
        assert_eq!(coherence_reward(&split, &add), 0.1);
        assert_eq!(coherence_reward(&split, &product()), 0.0);
    }

    #[test]
    fn punctuation_rules() {
        assert!(proper_punctuation("Fine, really."));
        assert!(!proper_punctuation("Wait.. what."));
        assert!(!proper_punctuation("Odd , . spacing."));
        assert!(!proper_punctuation(""));
        assert!(!complete_sentences(""));
        assert!(!complete_sentences("..."));
        assert!(complete_sentences("One two three. Four five six!"));
        assert!(!complete_sentences("One two three. Four five."));
    }

    #[test]
    fn total_examples() {
        let cfg = RewardConfig::default();
        let c = ctx(&["love", "castle"]);
        let mut text = vec!["word"; 38].join(" ");
        text.push_str(" love castle.");
        let r = total_reward(&c, &Explanation::from_text(text), &cfg);
        assert_eq!(r.r_length, 0.5);
        assert_eq!(r.r_content, 0.15);
        let text = format!("{} love castle .", vec!["word"; 38].join(" "));
        let e = Explanation::from_text(text.replace(" .", " x."));
        let r = total_reward(&c, &e, &cfg);
        assert_eq!((r.r_length, r.r_content, r.r_coherence), (0.5, 0.3, 0.2));
        assert_eq!(r.r_total, 1.0);

        let r = total_reward(&c, &Explanation::empty(), &cfg);
        assert_eq!(r.r_total, 0.0);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("product".parse::<CoherenceMode>().unwrap(), CoherenceMode::Product);
        assert!("both".parse::<CoherenceMode>().is_err());
    }

    #[test]
    fn weights_must_sum_to_one() {
        let cfg = RewardConfig {
            w_length: 0.6,
            ..RewardConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(RewardConfig::default().validate().is_ok());
    }
}
