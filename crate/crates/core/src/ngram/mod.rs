//! Backoff n-gram language models.
//!
//! Probabilities are stored as log10 values, the unit of the ARPA format.
//! Every scoring method returns natural-log values; the conversion happens
//! here and nowhere else.

mod arpa;
mod counts;
mod index;
mod katz;

pub use arpa::{read_arpa, write_arpa};
pub use counts::{count, read_binary_corpus, read_text_corpus, CountTable};
pub use katz::{estimate_katz, PruneConfig, GT_MAX_COUNT};

use std::f64::consts::LN_10;
use std::sync::OnceLock;

use rustc_hash::FxHashMap;

use crate::vocab::{TokenId, Vocabulary};

pub(crate) use index::{ContextIndex, Ctx};

/// log10 value standing in for probability zero, as in ARPA files.
pub const LOG10_ZERO: f64 = -99.0;

/// log10 probability given to unigrams added by [`NgramModel::patch_unseen_unigrams`].
pub const PATCHED_UNIGRAM_LOG10: f64 = -1000.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NgramEntry {
    pub log10_prob: f64,
    /// Zero (weight one) when the n-gram has no stored continuations.
    pub log10_bow: f64,
    /// Whether some stored (m+1)-gram has this n-gram as its context.
    pub has_children: bool,
}

pub(crate) type Table = FxHashMap<Box<[u32]>, NgramEntry>;

#[derive(Clone, Debug)]
pub struct NgramModel {
    order: usize,
    vocab: Vocabulary,
    /// `tables[m - 1]` holds the m-grams.
    tables: Vec<Table>,
    warnings: Vec<String>,
    index: OnceLock<ContextIndex>,
}

impl NgramModel {
    pub(crate) fn from_tables(vocab: Vocabulary, mut tables: Vec<Table>, warnings: Vec<String>) -> Self {
        let order = tables.len();
        for m in (1..order).rev() {
            let (lower, upper) = tables.split_at_mut(m);
            let ctx_table = &mut lower[m - 1];
            for e in ctx_table.values_mut() {
                e.has_children = false;
            }
            for key in upper[0].keys() {
                if let Some(e) = ctx_table.get_mut(&key[..m]) {
                    e.has_children = true;
                }
            }
        }
        NgramModel { order, vocab, tables, warnings, index: OnceLock::new() }
    }

    /// Built on first use.
    pub(crate) fn context_index(&self) -> &ContextIndex {
        self.index.get_or_init(|| ContextIndex::build(&self.tables))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Notes left by estimation, such as a discounting fallback.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn num_ngrams(&self, m: usize) -> usize {
        self.tables.get(m.wrapping_sub(1)).map_or(0, |t| t.len())
    }

    pub fn total_ngrams(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }

    pub fn entry(&self, ngram: &[TokenId]) -> Option<&NgramEntry> {
        if ngram.is_empty() || ngram.len() > self.order {
            return None;
        }
        let key: Vec<u32> = ngram.iter().map(|t| t.0).collect();
        self.tables[ngram.len() - 1].get(key.as_slice())
    }

    pub(crate) fn tables(&self) -> &[Table] {
        &self.tables
    }

    /// The context the model actually conditions on: the tokens after the
    /// last `</s>` (re-opened with `<s>`), at most `order - 1` of them.
    pub fn effective_context(&self, context: &[TokenId]) -> Vec<u32> {
        let max = self.order - 1;
        let mut out = Vec::with_capacity(max);
        match context.iter().rposition(|&t| t == Vocabulary::EOS_ID) {
            Some(pos) => {
                let tail = &context[pos + 1..];
                if tail.len() < max {
                    out.push(Vocabulary::BOS_ID.0);
                }
                let take = tail.len().min(max);
                out.extend(tail[tail.len() - take..].iter().map(|t| t.0));
            }
            None => {
                let take = context.len().min(max);
                out.extend(context[context.len() - take..].iter().map(|t| t.0));
            }
        }
        out
    }

    pub(crate) fn word_key(&self, word: TokenId) -> u32 {
        if self.vocab.contains(word) {
            word.0
        } else {
            Vocabulary::UNK_ID.0
        }
    }

    /// Backoff recursion over an already-normalized context, in log10.
    ///
    /// `lp(c, w) = p(c w)` when stored, else `bow(c) + lp(c[1..], w)`. The
    /// global rescorer evaluates the same expression in the same order.
    pub(crate) fn log10_prob_raw(&self, ctx: &[u32], word: u32) -> f64 {
        if ctx.is_empty() {
            return self.tables[0].get(&[word][..]).map_or(LOG10_ZERO, |e| e.log10_prob);
        }
        let mut key = Vec::with_capacity(ctx.len() + 1);
        key.extend_from_slice(ctx);
        key.push(word);
        if let Some(e) = self.tables[ctx.len()].get(key.as_slice()) {
            return e.log10_prob;
        }
        self.context_bow(ctx) + self.log10_prob_raw(&ctx[1..], word)
    }

    pub(crate) fn context_bow(&self, ctx: &[u32]) -> f64 {
        self.tables[ctx.len() - 1].get(ctx).map_or(0.0, |e| e.log10_bow)
    }

    pub fn log10_prob(&self, context: &[TokenId], word: TokenId) -> f64 {
        let ctx = self.effective_context(context);
        self.log10_prob_raw(&ctx, self.word_key(word))
    }

    /// Natural-log conditional probability of `word` after `context`.
    pub fn log_prob(&self, context: &[TokenId], word: TokenId) -> f64 {
        self.log10_prob(context, word) * LN_10
    }

    /// Chain-rule score of `continuation` after `prefix`, natural log.
    pub fn sequence_log_prob(&self, prefix: &[TokenId], continuation: &[TokenId]) -> f64 {
        let mut ctx = prefix.to_vec();
        let mut total = 0.0;
        for &w in continuation {
            total += self.log_prob(&ctx, w);
            ctx.push(w);
        }
        total
    }

    /// Probabilities over the whole vocabulary, indexed by token id.
    pub fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let ctx = self.effective_context(context);
        (0..self.vocab.len() as u32)
            .map(|w| 10f64.powf(self.log10_prob_raw(&ctx, w)))
            .collect()
    }

    /// Adds unigrams for `words` missing from the model, with a negligible
    /// probability, so they stop mapping to `<unk>`. Returns how many were added.
    pub fn patch_unseen_unigrams<I, S>(&mut self, words: I) -> usize
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut added = 0;
        for w in words {
            if self.vocab.id(w.as_ref()).is_some() {
                continue;
            }
            let id = self.vocab.insert(w.as_ref());
            self.tables[0].insert(
                vec![id.0].into_boxed_slice(),
                NgramEntry { log10_prob: PATCHED_UNIGRAM_LOG10, log10_bow: 0.0, has_children: false },
            );
            added += 1;
        }
        if added > 0 {
            self.index = OnceLock::new();
        }
        added
    }
}
