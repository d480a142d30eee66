//! A synthetic language for end-to-end runs.
//!
//! Sentences come from a random second-order Markov grammar: every pair of
//! preceding words has a few possible successors with skewed weights. A
//! 4-gram model trained on enough of it recovers the grammar, while a model
//! that sees only one word of context cannot, which is the gap the
//! rescoring experiments rely on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ngram::{count, estimate_katz, NgramModel, PruneConfig};
use crate::rng::{stream, StreamKey};
use crate::vocab::{TokenId, Vocabulary};

const GRAMMAR_DOMAIN: u64 = 0x6772_616d;
const SENTENCE_DOMAIN: u64 = 0x7365_6e74;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub vocab_size: usize,
    /// Successors per two-word context.
    pub branching: usize,
    /// Weight of the r-th successor is proportional to `(r + 1)^-skew`.
    pub skew: f64,
    pub train_sentences: usize,
    pub heldout_sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Chance of ending the sentence at each position past `min_len`.
    pub end_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            vocab_size: 40,
            branching: 3,
            skew: 1.5,
            train_sentences: 4000,
            heldout_sentences: 100,
            min_len: 6,
            max_len: 24,
            end_prob: 0.08,
            seed: 17,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.branching == 0 || self.branching > self.vocab_size {
            return invalid("need at least 2 words and 1 <= branching <= vocab size");
        }
        if self.train_sentences == 0 {
            return invalid("need at least one training sentence");
        }
        if self.min_len == 0 || self.max_len < self.min_len {
            return invalid("sentence lengths must satisfy 1 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.end_prob) || !self.skew.is_finite() {
            return invalid("end probability must lie in [0, 1] and skew must be finite");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub vocab: Vocabulary,
    pub train: Vec<Vec<TokenId>>,
    pub heldout: Vec<Vec<TokenId>>,
}

struct Grammar<'a> {
    cfg: &'a SyntheticConfig,
    first_word: u32,
    weights: Vec<f64>,
}

impl Grammar<'_> {
    fn successors(&self, a: TokenId, b: TokenId) -> Vec<u32> {
        let key = StreamKey::new(GRAMMAR_DOMAIN).push(u64::from(a.0)).push(u64::from(b.0));
        let mut rng = stream(self.cfg.seed, key);
        let mut picked = Vec::with_capacity(self.cfg.branching);
        while picked.len() < self.cfg.branching {
            let w = self.first_word + rng.random_range(0..self.cfg.vocab_size as u32);
            if !picked.contains(&w) {
                picked.push(w);
            }
        }
        picked
    }

    fn sentence(&self, index: u64) -> Vec<TokenId> {
        let mut rng = stream(self.cfg.seed, StreamKey::new(SENTENCE_DOMAIN).push(index));
        let total: f64 = self.weights.iter().sum();
        let (mut a, mut b) = (Vocabulary::BOS_ID, Vocabulary::BOS_ID);
        let mut out = Vec::new();
        loop {
            let done = out.len() >= self.cfg.max_len
                || (out.len() >= self.cfg.min_len && rng.random::<f64>() < self.cfg.end_prob);
            if done {
                return out;
            }
            let succ = self.successors(a, b);
            let mut u = rng.random::<f64>() * total;
            let mut choice = succ[succ.len() - 1];
            for (w, &s) in self.weights.iter().zip(&succ) {
                if u < *w {
                    choice = s;
                    break;
                }
                u -= w;
            }
            let t = TokenId(choice);
            out.push(t);
            a = b;
            b = t;
        }
    }
}

impl SyntheticTask {
    pub fn generate(cfg: &SyntheticConfig) -> Result<Self> {
        cfg.validate()?;
        let width = (cfg.vocab_size - 1).to_string().len();
        let vocab = Vocabulary::from_words((0..cfg.vocab_size).map(|i| format!("w{i:0width$}")));
        let grammar = Grammar {
            cfg,
            first_word: Vocabulary::with_specials().len() as u32,
            weights: (0..cfg.branching).map(|r| (r as f64 + 1.0).powf(-cfg.skew)).collect(),
        };
        let n = cfg.train_sentences + cfg.heldout_sentences;
        let mut all: Vec<Vec<TokenId>> = (0..n as u64).map(|i| grammar.sentence(i)).collect();
        let heldout = all.split_off(cfg.train_sentences);
        Ok(SyntheticTask { vocab, train: all, heldout })
    }

    /// `<s>` followed by the first `len` words of each held-out sentence.
    pub fn prompts(&self, len: usize) -> Vec<Vec<TokenId>> {
        self.heldout
            .iter()
            .map(|s| std::iter::once(Vocabulary::BOS_ID).chain(s.iter().take(len).copied()).collect())
            .collect()
    }

    pub fn fit(&self, order: usize, prune: &PruneConfig) -> Result<NgramModel> {
        estimate_katz(&count(&self.train, order, &self.vocab)?, prune)
    }

    /// Sentences as whitespace-separated words, one per line.
    pub fn lines<'a>(&'a self, sentences: &'a [Vec<TokenId>]) -> impl Iterator<Item = String> + 'a {
        sentences.iter().map(|s| {
            s.iter().map(|&t| self.vocab.word(t).unwrap_or(crate::vocab::UNK)).collect::<Vec<_>>().join(" ")
        })
    }
}
