//! Tagged prompt encoding of an explanation context.

use super::tokenizer::{Tokenizer, BOS, GENRE, HIST, ITEM, KEYWORD, SEP, USER};
use crate::datamodel::ExplanationContext;

pub const PROMPT_GENRES: usize = 3;
pub const PROMPT_KEYWORDS: usize = 10;
/// Item keywords placed before the user's own in the keyword section.
pub const PROMPT_ITEM_KEYWORDS: usize = 5;

/// Keywords shown in the prompt: the item's first few domain keywords,
/// then the remaining relevant keywords that match the user's
/// preferences, then anything else that is relevant.
pub fn prompt_keywords(ctx: &ExplanationContext) -> Vec<&str> {
    let mut out: Vec<&str> = ctx
        .item
        .domain_keywords
        .iter()
        .filter(|k| ctx.relevant_keywords.contains(*k))
        .take(PROMPT_ITEM_KEYWORDS)
        .map(String::as_str)
        .collect();
    let user = ctx
        .relevant_keywords
        .iter()
        .filter(|k| ctx.user.preference_keywords.contains(*k));
    let rest = ctx.relevant_keywords.iter();
    for k in user.chain(rest) {
        if out.len() >= PROMPT_KEYWORDS {
            break;
        }
        if !out.contains(&k.as_str()) {
            out.push(k);
        }
    }
    out
}

/// `BOS USER g.. HIST titles.. ITEM title author GENRE g.. KEYWORD k.. SEP`,
/// with history titles oldest first. When longer than `budget`, tokens are
/// dropped from the front of the history, then from the end of the
/// keyword, genre, user and item sections in turn.
pub fn encode_context(ctx: &ExplanationContext, tok: &Tokenizer, budget: usize) -> Vec<u32> {
    let user: Vec<u32> = ctx
        .user
        .top_genres(PROMPT_GENRES)
        .iter()
        .flat_map(|g| tok.encode(g))
        .collect();
    let mut hist: Vec<u32> = ctx
        .recent_items
        .iter()
        .rev()
        .flat_map(|it| tok.encode(&it.title))
        .collect();
    let mut item = tok.encode(&ctx.item.title);
    item.extend(tok.encode(&ctx.item.author));
    let genre: Vec<u32> = ctx.item.genres.iter().flat_map(|g| tok.encode(g)).collect();
    let kw: Vec<u32> = prompt_keywords(ctx)
        .iter()
        .flat_map(|k| tok.encode(k))
        .collect();

    let mut sections = [user, item, genre, kw];
    let len = |s: &[Vec<u32>], h: &[u32]| 7 + h.len() + s.iter().map(Vec::len).sum::<usize>();
    let mut excess = len(&sections, &hist).saturating_sub(budget);
    let cut = excess.min(hist.len());
    hist.drain(..cut);
    excess -= cut;
    for i in [3, 2, 0, 1] {
        let cut = excess.min(sections[i].len());
        let keep = sections[i].len() - cut;
        sections[i].truncate(keep);
        excess -= cut;
    }
    let [user, item, genre, kw] = sections;

    let mut out = vec![BOS, USER];
    out.extend(user);
    out.push(HIST);
    out.extend(hist);
    out.push(ITEM);
    out.extend(item);
    out.push(GENRE);
    out.extend(genre);
    out.push(KEYWORD);
    out.extend(kw);
    out.push(SEP);
    if out.len() > budget {
        out.drain(..out.len() - budget);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{build_context, Catalog, HistoryEntry, ItemRecord, UserProfile};
    use indexmap::IndexSet;
    use std::collections::BTreeMap;

    fn setup(n_hist: usize) -> (ExplanationContext, Tokenizer) {
        let mut catalog = Catalog::new();
        let mut history = Vec::new();
        for i in 0..n_hist {
            let id = format!("h{i}");
            let title = format!("The Long Saga Of Many Words Number{i}");
            catalog.insert(id.clone(), ItemRecord::new(&id, &title, "Ann Lee", ["fantasy"], "dragons").unwrap());
            history.push(HistoryEntry {
                item_id: id,
                rating: 5,
                timestamp: i as i64,
            });
        }
        let item = ItemRecord::new("x", "Castle Love", "Bo Tan", ["romance"], "love in a castle").unwrap();
        let weights = BTreeMap::from([("fantasy".to_string(), 1.0)]);
        let prefs: IndexSet<String> = ["dragons".to_string()].into_iter().collect();
        let user = UserProfile::new("u", history, weights, prefs).unwrap();
        let ctx = build_context(&user, &item, &catalog);
        let mut texts: Vec<String> = catalog.values().map(|i| i.title.clone()).collect();
        texts.extend(["Castle Love Bo Tan romance love castle fantasy dragons Ann Lee".to_string()]);
        (ctx, Tokenizer::build(texts))
    }

    #[test]
    fn empty_history_section() {
        let (ctx, tok) = setup(0);
        let ids = encode_context(&ctx, &tok, 48);
        let h = ids.iter().position(|&t| t == HIST).unwrap();
        assert_eq!(ids[h + 1], ITEM);
        assert_eq!(ids[0], BOS);
        assert_eq!(*ids.last().unwrap(), SEP);
    }

    #[test]
    fn deterministic() {
        let (ctx, tok) = setup(3);
        assert_eq!(encode_context(&ctx, &tok, 48), encode_context(&ctx, &tok, 48));
    }

    #[test]
    fn oversized_context_fills_budget_exactly() {
        let (ctx, tok) = setup(5);
        let full = encode_context(&ctx, &tok, usize::MAX);
        assert!(full.len() > 48);
        let ids = encode_context(&ctx, &tok, 48);
        assert_eq!(ids.len(), 48);
        // exactly the oldest history tokens go; everything else is intact
        let h = full.iter().position(|&t| t == HIST).unwrap();
        let excess = full.len() - 48;
        let mut want = full.clone();
        want.drain(h + 1..h + 1 + excess);
        assert_eq!(ids, want);
        assert!(ids.contains(&tok.id("Number4")));
        let short = encode_context(&ctx, &tok, 30);
        assert!(!short.contains(&tok.id("Number0")));
        assert!(short.contains(&tok.id("Number4")));
        assert_eq!(encode_context(&ctx, &tok, 10).len(), 10);
    }
}
