//! Shared domain types: users, items, interactions, explanation contexts.

use std::collections::BTreeMap;

use indexmap::IndexSet;

use crate::{Error, Result};

/// Item catalog keyed by item id.
pub type Catalog = BTreeMap<String, ItemRecord>;

/// Descriptions are cut to this many characters.
pub const MAX_DESCRIPTION_CHARS: usize = 100;
/// Number of recent well-rated items placed in a context.
pub const RECENT_ITEMS: usize = 5;
/// Minimum rating counted as positive feedback.
pub const POSITIVE_RATING: u8 = 4;

const MIN_KEYWORD_CHARS: usize = 3;

pub const STOPWORDS: [&str; 50] = [
    "the", "and", "for", "are", "but", "not", "you", "all", "any", "can", "had", "her", "was",
    "one", "our", "out", "has", "him", "his", "how", "its", "who", "did", "yes", "she", "may",
    "this", "that", "with", "from", "they", "will", "would", "there", "their", "what", "about",
    "which", "when", "make", "like", "into", "than", "them", "then", "these", "some", "been",
    "have", "were",
];

/// Keyword extraction: lowercase, drop punctuation, split on whitespace,
/// keep tokens of at least three characters that are not stopwords.
/// Order of first appearance is preserved; duplicates are kept.
pub fn keyword_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| t.chars().count() >= MIN_KEYWORD_CHARS && !STOPWORDS.contains(t))
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryEntry {
    pub item_id: String,
    pub rating: u8,
    pub timestamp: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserProfile {
    pub user_id: String,
    /// Ordered by non-decreasing timestamp.
    pub history: Vec<HistoryEntry>,
    pub genre_weights: BTreeMap<String, f64>,
    /// Ordered by decreasing frequency in the user's well-rated items.
    pub preference_keywords: IndexSet<String>,
}

impl UserProfile {
    pub fn new(
        user_id: impl Into<String>,
        mut history: Vec<HistoryEntry>,
        genre_weights: BTreeMap<String, f64>,
        preference_keywords: IndexSet<String>,
    ) -> Result<Self> {
        if let Some((g, w)) = genre_weights.iter().find(|(_, w)| !(**w >= 0.0)) {
            return Err(Error::Data(format!("genre weight {g} = {w} is negative")));
        }
        history.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.item_id.cmp(&b.item_id))
        });
        Ok(Self {
            user_id: user_id.into(),
            history,
            genre_weights,
            preference_keywords,
        })
    }

    /// Genres by descending weight, ties by name.
    pub fn top_genres(&self, n: usize) -> Vec<&str> {
        let mut g: Vec<(&String, &f64)> = self.genre_weights.iter().collect();
        g.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
        g.into_iter().take(n).map(|(k, _)| k.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemRecord {
    pub item_id: String,
    pub title: String,
    pub author: String,
    pub genres: IndexSet<String>,
    pub description: String,
    /// Derived from genres, then title, then description tokens.
    pub domain_keywords: IndexSet<String>,
}

impl ItemRecord {
    pub fn new(
        item_id: impl Into<String>,
        title: impl Into<String>,
        author: impl Into<String>,
        genres: impl IntoIterator<Item = impl Into<String>>,
        description: &str,
    ) -> Result<Self> {
        let item_id = item_id.into();
        let genres: IndexSet<String> = genres
            .into_iter()
            .map(|g| g.into().trim().to_lowercase())
            .filter(|g| !g.is_empty())
            .collect();
        if genres.is_empty() {
            return Err(Error::Data(format!("item {item_id} has no genres")));
        }
        let title = title.into();
        let description: String = description.chars().take(MAX_DESCRIPTION_CHARS).collect();
        let mut domain_keywords = IndexSet::new();
        for g in &genres {
            domain_keywords.extend(keyword_tokens(g));
        }
        domain_keywords.extend(keyword_tokens(&title));
        domain_keywords.extend(keyword_tokens(&description));
        Ok(Self {
            item_id,
            title,
            author: author.into(),
            genres,
            description,
            domain_keywords,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub rating: u8,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(
        user_id: impl Into<String>,
        item_id: impl Into<String>,
        rating: u8,
        timestamp: i64,
    ) -> Result<Self> {
        if !(1..=5).contains(&rating) {
            return Err(Error::Data(format!("rating {rating} outside 1..=5")));
        }
        Ok(Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            rating,
            timestamp,
        })
    }

    pub fn is_positive(&self) -> bool {
        self.rating >= POSITIVE_RATING
    }
}

/// Everything the explanation policy is conditioned on for one
/// (user, item) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationContext {
    pub user: UserProfile,
    pub item: ItemRecord,
    /// Newest first.
    pub recent_items: Vec<ItemRecord>,
    pub relevant_keywords: IndexSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Explanation {
    /// Policy token ids; empty for explanations not produced by the policy.
    pub tokens: Vec<u32>,
    pub text: String,
    pub word_count: usize,
}

impl Explanation {
    pub fn from_text(text: impl Into<String>) -> Self {
        Self::with_tokens(Vec::new(), text)
    }

    pub fn with_tokens(tokens: Vec<u32>, text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = text.split_whitespace().count();
        Self {
            tokens,
            text,
            word_count,
        }
    }

    pub fn empty() -> Self {
        Self::from_text("")
    }
}

pub fn build_context(
    user: &UserProfile,
    item: &ItemRecord,
    catalog: &Catalog,
) -> ExplanationContext {
    let mut liked: Vec<&HistoryEntry> = user
        .history
        .iter()
        .filter(|h| h.rating >= POSITIVE_RATING)
        .collect();
    liked.sort_by(|a, b| {
        b.timestamp
            .cmp(&a.timestamp)
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    let recent_items = liked
        .into_iter()
        .filter_map(|h| catalog.get(&h.item_id))
        .take(RECENT_ITEMS)
        .cloned()
        .collect();
    let mut relevant_keywords = item.domain_keywords.clone();
    relevant_keywords.extend(user.preference_keywords.iter().cloned());
    ExplanationContext {
        user: user.clone(),
        item: item.clone(),
        recent_items,
        relevant_keywords,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, title: &str, genres: &[&str]) -> ItemRecord {
        ItemRecord::new(id, title, "Ann Author", genres.iter().copied(), "").unwrap()
    }

    fn user(history: Vec<(&str, u8, i64)>, keywords: &[&str]) -> UserProfile {
        UserProfile::new(
            "u1",
            history
                .into_iter()
                .map(|(i, r, t)| HistoryEntry {
                    item_id: i.into(),
                    rating: r,
                    timestamp: t,
                })
                .collect(),
            BTreeMap::new(),
            keywords.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    fn catalog(items: &[ItemRecord]) -> Catalog {
        items.iter().map(|i| (i.item_id.clone(), i.clone())).collect()
    }

    #[test]
    fn stopword_list_has_fifty_entries() {
        let set: std::collections::HashSet<_> = STOPWORDS.iter().collect();
        assert_eq!(set.len(), 50);
    }

    #[test]
    fn keyword_tokens_filter_short_words_stopwords_and_punctuation() {
        assert_eq!(
            keyword_tokens("The Dragon's Fire, and an OLD castle!"),
            vec!["dragons", "fire", "old", "castle"]
        );
    }

    #[test]
    fn description_is_truncated() {
        let long = "x".repeat(150);
        let it = ItemRecord::new("i", "T", "A", ["g"], &long).unwrap();
        assert_eq!(it.description.chars().count(), 100);
    }

    #[test]
    fn item_needs_a_genre() {
        assert!(ItemRecord::new("i", "T", "A", Vec::<String>::new(), "").is_err());
    }

    #[test]
    fn rating_range_is_enforced() {
        assert!(Interaction::new("u", "i", 0, 1).is_err());
        assert!(Interaction::new("u", "i", 6, 1).is_err());
        assert!(Interaction::new("u", "i", 5, 1).is_ok());
    }

    #[test]
    fn no_well_rated_history_gives_no_recent_items() {
        let a = item("a", "Storm", &["fantasy"]);
        let u = user(vec![("a", 3, 10)], &["storm"]);
        let ctx = build_context(&u, &a, &catalog(&[a.clone()]));
        assert!(ctx.recent_items.is_empty());
    }

    #[test]
    fn keyword_union_with_subset_is_item_keywords() {
        let a = item("a", "Storm Castle", &["fantasy"]);
        let kws: Vec<&str> = a.domain_keywords.iter().map(String::as_str).collect();
        let u = user(vec![], &kws);
        let ctx = build_context(&u, &a, &catalog(&[a.clone()]));
        assert_eq!(ctx.relevant_keywords, a.domain_keywords);
    }

    #[test]
    fn seven_liked_entries_keep_five_newest() {
        let items: Vec<ItemRecord> = (0..7)
            .map(|k| item(&format!("i{k}"), "Storm", &["fantasy"]))
            .collect();
        let stamps = [50, 10, 70, 30, 60, 20, 40];
        let hist = (0..7).map(|k| (items[k].item_id.as_str(), 5, stamps[k])).collect();
        let u = user(hist, &[]);
        let ctx = build_context(&u, &items[0], &catalog(&items));

        // oracle: sort stamps descending and cut at five
        let mut order: Vec<usize> = (0..7).collect();
        order.sort_by_key(|&k| std::cmp::Reverse(stamps[k]));
        let want: Vec<String> = order[..5].iter().map(|&k| format!("i{k}")).collect();
        let got: Vec<String> = ctx.recent_items.iter().map(|i| i.item_id.clone()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn equal_timestamps_break_ties_by_item_id() {
        let items = vec![item("b", "X", &["g"]), item("a", "Y", &["g"])];
        let u = user(vec![("b", 4, 5), ("a", 4, 5)], &[]);
        let ctx = build_context(&u, &items[0], &catalog(&items));
        assert_eq!(ctx.recent_items[0].item_id, "a");
    }

    #[test]
    fn unknown_history_items_are_skipped() {
        let a = item("a", "Storm", &["fantasy"]);
        let u = user(vec![("ghost", 5, 9), ("a", 5, 1)], &[]);
        let ctx = build_context(&u, &a, &catalog(&[a.clone()]));
        assert_eq!(ctx.recent_items.len(), 1);
    }

    #[test]
    fn explanation_word_count_is_whitespace_tokens() {
        assert_eq!(Explanation::from_text("  a b  c. ").word_count, 3);
        assert_eq!(Explanation::empty().word_count, 0);
    }
}
