//! Katz backoff estimation with Good-Turing discounts and count cutoffs.

use log::warn;
use rustc_hash::FxHashMap;

use super::{CountTable, NgramEntry, NgramModel, Table, LOG10_ZERO};
use crate::error::{invalid, Result};
use crate::vocab::Vocabulary;

/// Counts above this are left undiscounted.
pub const GT_MAX_COUNT: u64 = 5;

/// Discount used when Good-Turing is undefined for an order.
const ABSOLUTE_DISCOUNT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruneConfig {
    /// `min_counts[m - 1]` is the minimum count an m-gram needs to be kept.
    /// Orders past the end of the list use 1. Unigrams are never pruned.
    pub min_counts: Vec<u64>,
    /// Cap on the total number of stored n-grams.
    pub max_ngrams: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { min_counts: Vec::new(), max_ngrams: usize::MAX }
    }
}

impl PruneConfig {
    pub fn min_count(&self, m: usize) -> u64 {
        self.min_counts.get(m - 1).copied().unwrap_or(1)
    }

    /// Sets the threshold for order `m`, growing the list with 1s as needed.
    pub fn with_min_count(mut self, m: usize, threshold: u64) -> Self {
        if self.min_counts.len() < m {
            self.min_counts.resize(m, 1);
        }
        self.min_counts[m - 1] = threshold;
        self
    }

    pub fn with_max_ngrams(mut self, max: usize) -> Self {
        self.max_ngrams = max;
        self
    }

    /// Parses `"3:2,4:4"` into per-order thresholds.
    pub fn parse_min_counts(spec: &str) -> Result<Self> {
        let mut cfg = PruneConfig::default();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let Some((m, c)) = part.split_once(':') else {
                return invalid(format!("min-count entry `{part}` is not ORDER:COUNT"));
            };
            let m: usize = m.trim().parse().map_err(|_| crate::Error::InvalidInput(format!("bad order in `{part}`")))?;
            let c: u64 = c.trim().parse().map_err(|_| crate::Error::InvalidInput(format!("bad count in `{part}`")))?;
            if m == 0 {
                return invalid("orders start at 1");
            }
            cfg = cfg.with_min_count(m, c);
        }
        Ok(cfg)
    }

    fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.min_counts.contains(&0) {
            return invalid("count thresholds must be at least 1");
        }
        if self.max_ngrams < vocab_size {
            return invalid(format!("max n-grams {} is below the vocabulary size {vocab_size}", self.max_ngrams));
        }
        Ok(())
    }
}

/// Discounted-count rule for one order.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Discount {
    /// `d[r - 1]` multiplies counts `r <= d.len()`; larger counts are kept as is.
    GoodTuring(Vec<f64>),
    Absolute(f64),
}

impl Discount {
    pub(crate) fn apply(&self, r: u64) -> f64 {
        match self {
            Discount::GoodTuring(d) => match d.get(r as usize - 1) {
                Some(&f) => f * r as f64,
                None => r as f64,
            },
            Discount::Absolute(d) => r as f64 - d,
        }
    }

    /// Katz's Good-Turing discounts from the count-of-counts `n[r]`.
    ///
    /// The cutoff is lowered below [`GT_MAX_COUNT`] when some `n[r]` it needs
    /// is zero. Returns `None` when no cutoff yields discounts in `(0, 1]`.
    pub(crate) fn good_turing(count_of_counts: &FxHashMap<u64, u64>) -> Option<Discount> {
        let n = |r: u64| count_of_counts.get(&r).copied().unwrap_or(0) as f64;
        let mut cutoff = 0;
        while cutoff < GT_MAX_COUNT && n(cutoff + 1) > 0.0 && n(cutoff + 2) > 0.0 {
            cutoff += 1;
        }
        if cutoff == 0 {
            return None;
        }
        let k = cutoff as f64;
        let common = (k + 1.0) * n(cutoff + 1) / n(1);
        if common >= 1.0 {
            return None;
        }
        let mut d = Vec::with_capacity(cutoff as usize);
        for r in 1..=cutoff {
            let rf = r as f64;
            let r_star = (rf + 1.0) * n(r + 1) / n(r);
            let dr = (r_star / rf - common) / (1.0 - common);
            if !(dr > 0.0 && dr <= 1.0) {
                return None;
            }
            d.push(dr);
        }
        Some(Discount::GoodTuring(d))
    }
}

/// Keeps unigrams, applies per-order thresholds, drops n-grams whose context
/// was dropped, then trims the highest orders (lowest counts first) to the cap.
fn prune(counts: &CountTable, prune: &PruneConfig) -> Vec<FxHashMap<Box<[u32]>, u64>> {
    let order = counts.order();
    let mut kept: Vec<FxHashMap<Box<[u32]>, u64>> = Vec::with_capacity(order);
    for m in 1..=order {
        let threshold = if m == 1 { 1 } else { prune.min_count(m) };
        let mut table = FxHashMap::default();
        for (key, &c) in counts.table(m) {
            if key.last() == Some(&Vocabulary::BOS_ID.0) && m > 1 {
                continue;
            }
            if c < threshold {
                continue;
            }
            if m > 1 && !kept[m - 2].contains_key(&key[..m - 1]) {
                continue;
            }
            table.insert(key.clone(), c);
        }
        kept.push(table);
    }
    // every vocabulary word ends up with a stored unigram, seen or not
    let mut total: usize = counts.vocab().len() + kept[1..].iter().map(|t| t.len()).sum::<usize>();
    let mut m = order;
    while total > prune.max_ngrams && m > 1 {
        let excess = total - prune.max_ngrams;
        let mut entries: Vec<(u64, Box<[u32]>)> = kept[m - 1].iter().map(|(k, &c)| (c, k.clone())).collect();
        // lowest count first; among equal counts the lexicographically largest key goes first
        entries.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)));
        for (_, key) in entries.into_iter().take(excess) {
            kept[m - 1].remove(&key);
            total -= 1;
        }
        m -= 1;
    }
    kept
}

/// Fits a Katz backoff model to `counts`.
///
/// Discounts come from each order's unpruned count-of-counts; orders where
/// Good-Turing is undefined fall back to absolute discounting with D = 0.5
/// and record a warning. The unigram discount mass goes to `<unk>`.
pub fn estimate_katz(counts: &CountTable, prune_cfg: &PruneConfig) -> Result<NgramModel> {
    let vocab = counts.vocab().clone();
    prune_cfg.validate(vocab.len())?;
    let order = counts.order();
    let bos = Vocabulary::BOS_ID.0;
    let unk = Vocabulary::UNK_ID.0;
    let mut warnings = Vec::new();

    let mut discounts = Vec::with_capacity(order);
    for m in 1..=order {
        let mut coc: FxHashMap<u64, u64> = FxHashMap::default();
        for (key, &c) in counts.table(m) {
            if key.last() != Some(&bos) {
                *coc.entry(c).or_insert(0) += 1;
            }
        }
        match Discount::good_turing(&coc) {
            Some(d) => discounts.push(d),
            None => {
                let msg = format!(
                    "Good-Turing discounts undefined for order {m}; using absolute discounting D={ABSOLUTE_DISCOUNT}"
                );
                warn!("{msg}");
                warnings.push(msg);
                discounts.push(Discount::Absolute(ABSOLUTE_DISCOUNT));
            }
        }
    }

    let kept = prune(counts, prune_cfg);
    let mut tables: Vec<Table> = Vec::with_capacity(order);

    // unigrams
    let total: u64 = counts.table(1).iter().filter(|(k, _)| k[0] != bos).map(|(_, &c)| c).sum();
    let mut uni = Table::default();
    let mut mass = 0.0;
    for (key, &c) in &kept[0] {
        if key[0] == bos {
            continue;
        }
        let p = discounts[0].apply(c) / total as f64;
        mass += p;
        uni.insert(key.clone(), entry(p.log10()));
    }
    let leftover = 1.0 - mass;
    let unk_key: Box<[u32]> = vec![unk].into_boxed_slice();
    let unk_prob = uni.get(&unk_key).map_or(0.0, |e| 10f64.powf(e.log10_prob)) + leftover.max(0.0);
    if unk_prob > 0.0 {
        uni.insert(unk_key, entry(unk_prob.log10()));
    } else {
        let msg = "no discount mass left for <unk>".to_string();
        warn!("{msg}");
        warnings.push(msg);
        uni.insert(unk_key, entry(LOG10_ZERO));
    }
    for id in vocab.ids() {
        uni.entry(vec![id.0].into_boxed_slice()).or_insert_with(|| entry(LOG10_ZERO));
    }
    tables.push(uni);

    for m in 2..=order {
        let mut ctx_total: FxHashMap<&[u32], u64> = FxHashMap::default();
        for (key, &c) in counts.table(m) {
            *ctx_total.entry(&key[..m - 1]).or_insert(0) += c;
        }
        let mut table = Table::default();
        let mut children: FxHashMap<Box<[u32]>, Vec<u32>> = FxHashMap::default();
        for (key, &c) in &kept[m - 1] {
            let p = discounts[m - 1].apply(c) / ctx_total[&key[..m - 1]] as f64;
            table.insert(key.clone(), entry(p.log10()));
            children.entry(key[..m - 1].into()).or_default().push(key[m - 1]);
        }
        tables.push(table);

        // Backoff weights for the (m-1)-gram contexts, using the finished lower orders.
        let lower = NgramModel::from_tables(vocab.clone(), tables[..m - 1].to_vec(), Vec::new());
        let mut ctx_keys: Vec<&Box<[u32]>> = children.keys().collect();
        ctx_keys.sort();
        for ctx in ctx_keys {
            let words = &children[ctx];
            let mut seen = 0.0;
            let mut seen_lower = 0.0;
            for &w in words {
                let mut key = ctx.to_vec();
                key.push(w);
                seen += 10f64.powf(tables[m - 1][key.as_slice()].log10_prob);
                seen_lower += 10f64.powf(lower.log10_prob_raw(&ctx[1..], w));
            }
            let num = (1.0 - seen).max(0.0);
            let den = 1.0 - seen_lower;
            let bow = if den > 1e-12 {
                num / den
            } else {
                // Every word with lower-order mass was seen: renormalize instead of backing off.
                for &w in words {
                    let mut key = ctx.to_vec();
                    key.push(w);
                    let e = tables[m - 1].get_mut(key.as_slice()).expect("child present");
                    e.log10_prob -= seen.log10();
                }
                1.0
            };
            let ctx_entry = tables[m - 2].get_mut(ctx.as_ref()).expect("context kept");
            ctx_entry.log10_bow = if bow > 0.0 { bow.log10() } else { LOG10_ZERO };
        }
    }

    Ok(NgramModel::from_tables(vocab, tables, warnings))
}

fn entry(log10_prob: f64) -> NgramEntry {
    NgramEntry { log10_prob, log10_bow: 0.0, has_children: false }
}
