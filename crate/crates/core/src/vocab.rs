use std::fmt;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Dense index into a [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for TokenId {
    fn from(v: u32) -> Self {
        TokenId(v)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Bijection between token strings and dense ids.
///
/// Every vocabulary built here starts with the three specials in the order
/// `<unk>`, `<s>`, `</s>`, so those always map to ids 0, 1 and 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    ids: FxHashMap<String, TokenId>,
}

impl Vocabulary {
    pub const UNK_ID: TokenId = TokenId(0);
    pub const BOS_ID: TokenId = TokenId(1);
    pub const EOS_ID: TokenId = TokenId(2);

    /// A vocabulary holding only the special tokens.
    pub fn with_specials() -> Self {
        let mut v = Vocabulary { words: Vec::new(), ids: FxHashMap::default() };
        for w in [UNK, BOS, EOS] {
            v.insert(w);
        }
        v
    }

    /// Specials first, then `words` in the given order, skipping repeats.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::with_specials();
        for w in words {
            v.insert(w.as_ref());
        }
        v
    }

    /// Specials, then every distinct corpus token in sorted order.
    pub fn from_corpus<'a, I>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut all: Vec<&str> = sentences.into_iter().flatten().map(String::as_str).collect();
        all.sort_unstable();
        all.dedup();
        Self::from_words(all)
    }

    pub fn insert(&mut self, word: &str) -> TokenId {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = TokenId(self.words.len() as u32);
        self.words.push(word.to_string());
        self.ids.insert(word.to_string(), id);
        id
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.ids.get(word).copied()
    }

    /// Maps unknown words to `<unk>`.
    pub fn id_or_unk(&self, word: &str) -> TokenId {
        self.id(word).unwrap_or(Self::UNK_ID)
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.words.get(id.index()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.words.len() as u32).map(TokenId)
    }

    /// Whitespace-tokenizes `line`; returns the ids and how many were unknown.
    pub fn encode_line(&self, line: &str) -> (Vec<TokenId>, usize) {
        let mut unknown = 0;
        let ids = line
            .split_whitespace()
            .map(|w| match self.id(w) {
                Some(id) => id,
                None => {
                    unknown += 1;
                    Self::UNK_ID
                }
            })
            .collect();
        (ids, unknown)
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<&str>> {
        ids.iter()
            .map(|&id| match self.word(id) {
                Some(w) => Ok(w),
                None => invalid(format!("token id {id} outside vocabulary of size {}", self.len())),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_come_first() {
        let v = Vocabulary::from_words(["b", "a", "b"]);
        assert_eq!(v.id(UNK), Some(Vocabulary::UNK_ID));
        assert_eq!(v.id(BOS), Some(Vocabulary::BOS_ID));
        assert_eq!(v.id(EOS), Some(Vocabulary::EOS_ID));
        assert_eq!(v.id("b"), Some(TokenId(3)));
        assert_eq!(v.id("a"), Some(TokenId(4)));
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn bijection() {
        let corpus = [vec!["x".to_string(), "y".to_string()], vec!["y".to_string(), "z".to_string()]];
        let v = Vocabulary::from_corpus(corpus.iter().map(Vec::as_slice));
        for id in v.ids() {
            assert_eq!(v.id(v.word(id).unwrap()), Some(id));
        }
        assert_eq!(v.decode(&[TokenId(3), TokenId(5)]).unwrap(), vec!["x", "z"]);
        assert!(v.decode(&[TokenId(99)]).is_err());
    }

    #[test]
    fn encode_counts_unknowns() {
        let v = Vocabulary::from_words(["a"]);
        let (ids, unk) = v.encode_line("a  q a r");
        assert_eq!(ids, vec![TokenId(3), Vocabulary::UNK_ID, TokenId(3), Vocabulary::UNK_ID]);
        assert_eq!(unk, 2);
    }
}
