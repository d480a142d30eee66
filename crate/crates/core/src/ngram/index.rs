//! Integer handles for n-gram contexts, used by the global rescorer.
//!
//! A context is *live* when it is a proper prefix of some stored n-gram or
//! carries a non-zero backoff weight. Any other context scores every word
//! exactly as its own suffix does, so a decoder only has to track the
//! longest live suffix of what it has produced. Live contexts are closed
//! under taking prefixes, which is what lets [`ContextIndex::extend`] find
//! the successor of a context by walking suffix links.

use rustc_hash::FxHashMap;

use super::Table;

/// A live context, or the empty context. Ordered and hashed as a single word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct Ctx(u64);

impl Ctx {
    pub(crate) const EMPTY: Ctx = Ctx(0);

    fn new(len: usize, id: u32) -> Self {
        Ctx((len as u64) << 32 | u64::from(id))
    }

    pub(crate) fn len(self) -> usize {
        (self.0 >> 32) as usize
    }

    fn id(self) -> usize {
        self.0 as u32 as usize
    }
}

fn pair(id: usize, word: u32) -> u64 {
    (id as u64) << 32 | u64::from(word)
}

#[derive(Clone, Debug, Default)]
pub(crate) struct ContextIndex {
    /// `ids[m - 1]`: live m-gram contexts.
    ids: Vec<FxHashMap<Box<[u32]>, u32>>,
    /// `bow[m - 1][id]`, log10.
    bow: Vec<Vec<f64>>,
    /// `link[m - 1][id]`: longest live proper suffix.
    link: Vec<Vec<Ctx>>,
    /// `probs[m - 1]`: `(id, word)` to the log10 probability of the stored (m+1)-gram.
    probs: Vec<FxHashMap<u64, f64>>,
    /// `succ[m]`: `(id, word)` to the id of the live (m+1)-gram context; id 0 for the empty context.
    succ: Vec<FxHashMap<u64, u32>>,
}

impl ContextIndex {
    pub(crate) fn build(tables: &[Table]) -> Self {
        let width = tables.len().saturating_sub(1);
        let mut live: Vec<Vec<&[u32]>> = vec![Vec::new(); width];
        for table in tables {
            for (key, e) in table {
                for m in 1..key.len() {
                    live[m - 1].push(&key[..m]);
                }
                if key.len() <= width && e.log10_bow != 0.0 {
                    live[key.len() - 1].push(key);
                }
            }
        }
        let mut index = ContextIndex::default();
        for (m, keys) in live.iter_mut().enumerate() {
            keys.sort_unstable();
            keys.dedup();
            let table = &tables[m];
            index.bow.push(keys.iter().map(|k| table.get(*k).map_or(0.0, |e| e.log10_bow)).collect());
            index.ids.push(keys.iter().enumerate().map(|(i, &k)| (Box::from(k), i as u32)).collect());
        }
        for (m, keys) in live.iter().enumerate() {
            let links = keys.iter().map(|k| index.longest_live(&k[1..])).collect();
            index.link.push(links);
            let mut succ = FxHashMap::default();
            for (i, k) in keys.iter().enumerate() {
                let parent = if m == 0 { 0 } else { index.ids[m - 1][&k[..m]] as usize };
                succ.insert(pair(parent, k[m]), i as u32);
            }
            index.succ.push(succ);
            let mut probs = FxHashMap::default();
            for (key, e) in &tables[m + 1] {
                probs.insert(pair(index.ids[m][&key[..m + 1]] as usize, key[m + 1]), e.log10_prob);
            }
            index.probs.push(probs);
        }
        index
    }

    /// Longest live suffix of `ctx`.
    pub(crate) fn longest_live(&self, ctx: &[u32]) -> Ctx {
        let start = ctx.len().saturating_sub(self.ids.len());
        for s in start..ctx.len() {
            let rest = &ctx[s..];
            if let Some(&id) = self.ids[rest.len() - 1].get(rest) {
                return Ctx::new(rest.len(), id);
            }
        }
        Ctx::EMPTY
    }

    pub(crate) fn link(&self, c: Ctx) -> Ctx {
        match c.len() {
            0 => Ctx::EMPTY,
            m => self.link[m - 1][c.id()],
        }
    }

    pub(crate) fn bow(&self, c: Ctx) -> f64 {
        match c.len() {
            0 => 0.0,
            m => self.bow[m - 1][c.id()],
        }
    }

    /// log10 probability of `word` after a non-empty `c` when that n-gram is stored.
    pub(crate) fn stored_prob(&self, c: Ctx, word: u32) -> Option<f64> {
        self.probs[c.len() - 1].get(&pair(c.id(), word)).copied()
    }

    /// Longest live suffix of `c · word`, where `c` is the longest live
    /// suffix of some context. Result length is at most the model order minus one.
    pub(crate) fn extend(&self, mut c: Ctx, word: u32) -> Ctx {
        loop {
            if c.len() < self.succ.len() {
                if let Some(&id) = self.succ[c.len()].get(&pair(c.id(), word)) {
                    return Ctx::new(c.len() + 1, id);
                }
            }
            if c.len() == 0 {
                return Ctx::EMPTY;
            }
            c = self.link(c);
        }
    }

    #[cfg(test)]
    fn num_live(&self) -> usize {
        self.ids.iter().map(FxHashMap::len).sum()
    }
}
