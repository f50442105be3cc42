//! Word-level tokenizer with a handful of structural tags.

use std::collections::{BTreeSet, HashMap};

use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
pub const UNK: u32 = 4;
pub const USER: u32 = 5;
pub const HIST: u32 = 6;
pub const ITEM: u32 = 7;
pub const GENRE: u32 = 8;
pub const KEYWORD: u32 = 9;

const SPECIALS: [&str; 10] = [
    "<pad>", "<bos>", "<eos>", "<sep>", "<unk>", "<user>", "<hist>", "<item>", "<genre>", "<kw>",
];

/// Marks split off words and re-attached to the preceding word on decode.
pub const PUNCTUATION: [char; 6] = ['.', ',', '!', '?', ';', ':'];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

/// Splits text on whitespace and detaches punctuation marks into their own
/// pieces. Case is preserved.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in text.split_whitespace() {
        let mut cur = String::new();
        for c in w.chars() {
            if PUNCTUATION.contains(&c) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

impl Tokenizer {
    /// Special tokens first, then every distinct piece of `texts` in sorted
    /// order, so the ids do not depend on input order.
    pub fn build<S: AsRef<str>>(texts: impl IntoIterator<Item = S>) -> Self {
        let mut words: BTreeSet<String> = PUNCTUATION.iter().map(|c| c.to_string()).collect();
        for t in texts {
            words.extend(split_words(t.as_ref()));
        }
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().filter(|w| !SPECIALS.contains(&w.as_str())))
            .collect();
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, piece: &str) -> u32 {
        self.index.get(piece).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or("<unk>", String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_words(text).iter().map(|w| self.id(w)).collect()
    }

    /// Joins pieces with single spaces, attaching punctuation to the
    /// preceding piece. Special tokens are skipped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if Self::is_special(id) {
                continue;
            }
            let piece = self.token(id);
            let attach = piece.chars().count() == 1
                && PUNCTUATION.contains(&piece.chars().next().unwrap());
            if !out.is_empty() && !attach {
                out.push(' ');
            }
            out.push_str(piece);
        }
        out
    }

    /// `token<TAB>id` lines in id order.
    pub fn to_tsv(&self) -> String {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t}\t{i}\n"))
            .collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::Data(format!("vocab line {}: missing tab", n + 1)))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::Data(format!("vocab line {}: bad id {id:?}", n + 1)))?;
            if id != tokens.len() {
                return Err(Error::Data(format!("vocab line {}: id {id} out of order", n + 1)));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Data("vocab does not start with the special tokens".into()));
        }
        Ok(Self::from_tokens(tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_is_zero_and_specials_lead() {
        let t = Tokenizer::build(["hello world"]);
        assert_eq!(t.id("<pad>"), PAD);
        assert_eq!(PAD, 0);
        assert_eq!(t.id("<kw>"), KEYWORD);
        assert_eq!(t.id("missing"), UNK);
    }

    #[test]
    fn round_trip_on_in_vocab_text() {
        let text = "Since you enjoyed fantasy books, you might like this. Really!";
        let t = Tokenizer::build([text]);
        let ids = t.encode(text);
        assert!(ids.iter().all(|&i| i != UNK));
        assert_eq!(t.decode(&ids), text);
    }

    #[test]
    fn punctuation_is_split() {
        assert_eq!(split_words("love, castle."), vec!["love", ",", "castle", "."]);
    }

    #[test]
    fn tsv_round_trip() {
        let t = Tokenizer::build(["a b c", "The Dragon"]);
        let back = Tokenizer::from_tsv(&t.to_tsv()).unwrap();
        assert_eq!(back, t);
        assert!(Tokenizer::from_tsv("x\t0\n").is_err());
    }

    #[test]
    fn ids_do_not_depend_on_input_order() {
        assert_eq!(Tokenizer::build(["b a", "c"]), Tokenizer::build(["c", "a b"]));
    }
}
