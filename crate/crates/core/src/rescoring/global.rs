//! Exact p-best rescoring of a sausage lattice with an n-gram model.
//!
//! Layer `i` of the search graph holds one state per distinct n-gram context
//! reachable after choosing `i` tokens, reduced to its longest suffix the
//! model can still distinguish (see [`Ctx`]). An n-gram score depends only on that
//! context, so path scores are additive over edges and the usual Viterbi
//! recursion is exact. A forward pass computes every state's best partial
//! path; further ranks are produced lazily, on demand from the final layer,
//! following the lazy k-best enumeration of Huang and Chiang (2005). Only the
//! states that contribute to the p returned drafts ever hold more than one
//! hypothesis.
//!
//! Candidates are ordered by combined score, then lattice score, then token
//! sequence. The brute-force enumeration in the tests uses the same order.

use std::cmp::Ordering;
use std::f64::consts::LN_10;

use rustc_hash::FxHashMap;

use super::{score_order, DraftCandidate};
use crate::error::{invalid, Result};
use crate::lattice::SausageLattice;
use crate::ngram::{ContextIndex, Ctx, NgramModel, LOG10_ZERO};
use crate::scalar::Scalar;
use crate::vocab::{TokenId, Vocabulary};

/// Work counters for one [`global_rescore_with_stats`] call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GlobalStats {
    /// States summed over all layers.
    pub states: usize,
    /// Largest layer.
    pub max_states: usize,
    /// Edge evaluations: forward pass plus lazily generated candidates.
    pub relaxations: usize,
    /// Partial hypotheses materialized.
    pub derivations: usize,
}

#[derive(Clone, Copy, Debug)]
struct Deriv<S> {
    lat: S,
    lm: S,
    pred: u32,
    arc: u32,
    rank: u32,
}

struct Layer<S> {
    states: Vec<Ctx>,
    /// Every arc from every previous state leads to the single state.
    all: bool,
    /// Incoming edges of state `s` are `sources[src_off[s]..src_off[s + 1]]`,
    /// each `(group, arc)` standing for the arc from every state of the group.
    src_off: Vec<u32>,
    sources: Vec<(u32, u32)>,
    /// Previous-layer states grouped by shared context suffix.
    groups: Vec<Vec<u32>>,
    /// `lm[pred * n_arcs + arc]`, natural log.
    lm: Vec<S>,
    n_arcs: usize,
    best: Vec<Deriv<S>>,
    /// Ranks 1.. of states that were asked for more than their best.
    more: FxHashMap<u32, Vec<Deriv<S>>>,
    pools: FxHashMap<u32, Vec<Deriv<S>>>,
}

impl<S: Scalar> Layer<S> {
    fn len(&self) -> usize {
        self.states.len()
    }

    fn rank(&self, s: usize, r: usize) -> Option<&Deriv<S>> {
        if r == 0 {
            self.best.get(s)
        } else {
            self.more.get(&(s as u32)).and_then(|v| v.get(r - 1))
        }
    }

    fn ranks(&self, s: usize) -> usize {
        1 + self.more.get(&(s as u32)).map_or(0, Vec::len)
    }
}

struct Dp<'a, S> {
    lat: &'a SausageLattice<S>,
    alpha: S,
    layers: Vec<Layer<S>>,
    stats: GlobalStats,
}

/// The `p` best paths of `lat` under `lattice score + alpha * ln P_ngram`,
/// best first. With no model the LM term is zero. Fewer than `p` are
/// returned when the lattice has fewer paths.
pub fn global_rescore<S: Scalar>(
    lat: &SausageLattice<S>,
    model: Option<&NgramModel>,
    alpha: S,
    p: usize,
) -> Result<Vec<DraftCandidate<S>>> {
    global_rescore_with_stats(lat, model, alpha, p).map(|(c, _)| c)
}

pub fn global_rescore_with_stats<S: Scalar>(
    lat: &SausageLattice<S>,
    model: Option<&NgramModel>,
    alpha: S,
    p: usize,
) -> Result<(Vec<DraftCandidate<S>>, GlobalStats)> {
    if p == 0 {
        return invalid("p must be at least 1");
    }
    if !(alpha >= S::zero()) || !alpha.is_finite() {
        return invalid("alpha must be a finite non-negative number");
    }
    let mut dp = Dp::forward(lat, model, alpha);
    let out = dp.extract(p);
    Ok((out, dp.stats))
}

type Memo = FxHashMap<Ctx, Vec<f64>>;

/// Makes sure the memo holds the log10 scores of `words` after `c` and
/// after each of its suffix links, following the model's own backoff
/// recursion term for term.
fn fill_memo(model: &NgramModel, index: &ContextIndex, c: Ctx, words: &[u32], memo: &mut Memo) {
    if memo.contains_key(&c) {
        return;
    }
    let v = if c == Ctx::EMPTY {
        let unigrams = &model.tables()[0];
        words.iter().map(|&w| unigrams.get(&[w][..]).map_or(LOG10_ZERO, |e| e.log10_prob)).collect()
    } else {
        let link = index.link(c);
        fill_memo(model, index, link, words, memo);
        let bow = index.bow(c);
        words
            .iter()
            .zip(&memo[&link])
            .map(|(&w, &l)| index.stored_prob(c, w).unwrap_or(bow + l))
            .collect()
    };
    memo.insert(c, v);
}

impl<'a, S: Scalar> Dp<'a, S> {
    fn forward(lat: &'a SausageLattice<S>, model: Option<&NgramModel>, alpha: S) -> Self {
        let width = model.map_or(0, |m| m.order() - 1);
        let init = match model {
            Some(m) if width > 0 => m.context_index().longest_live(&m.effective_context(lat.prefix())),
            _ => Ctx::EMPTY,
        };
        let zero = S::zero();
        let layer0 = Layer {
            states: vec![init],
            all: true,
            src_off: Vec::new(),
            sources: Vec::new(),
            groups: Vec::new(),
            lm: Vec::new(),
            n_arcs: 0,
            best: vec![Deriv { lat: zero, lm: zero, pred: u32::MAX, arc: u32::MAX, rank: u32::MAX }],
            more: FxHashMap::default(),
            pools: FxHashMap::default(),
        };
        let mut dp = Dp { lat, alpha, layers: vec![layer0], stats: GlobalStats::default() };
        dp.stats.states = 1;
        dp.stats.max_states = 1;
        for i in 1..=lat.len() {
            let layer = dp.build_layer(i, model, width);
            dp.stats.states += layer.len();
            dp.stats.max_states = dp.stats.max_states.max(layer.len());
            dp.layers.push(layer);
            dp.viterbi(i);
        }
        dp
    }

    fn build_layer(&self, i: usize, model: Option<&NgramModel>, width: usize) -> Layer<S> {
        let prev = &self.layers[i - 1];
        let step = self.lat.step(i - 1);
        let n_arcs = step.len();
        let mut layer = Layer {
            states: Vec::new(),
            all: false,
            src_off: Vec::new(),
            sources: Vec::new(),
            groups: Vec::new(),
            lm: Vec::with_capacity(prev.len() * n_arcs),
            n_arcs,
            best: Vec::new(),
            more: FxHashMap::default(),
            pools: FxHashMap::default(),
        };
        let single = |layer: &mut Layer<S>| {
            layer.states.push(Ctx::EMPTY);
            layer.all = true;
        };

        let Some(model) = model else {
            layer.lm.resize(prev.len() * n_arcs, S::zero());
            single(&mut layer);
            return layer;
        };
        let index = model.context_index();

        let words: Vec<u32> = step.iter().map(|a| model.word_key(a.token)).collect();
        let mut memo = Memo::default();
        for &c in &prev.states {
            fill_memo(model, index, c, &words, &mut memo);
            layer.lm.extend(memo[&c].iter().map(|&v| S::from_f64_lossy(v * LN_10)));
        }

        if width == 0 {
            single(&mut layer);
            return layer;
        }

        // A full-width context loses its oldest token on the next step, so
        // states sharing a suffix link have the same successors.
        let mut group_ids: FxHashMap<Ctx, u32> = FxHashMap::default();
        let mut group_ctx: Vec<Ctx> = Vec::new();
        for (s, &c) in prev.states.iter().enumerate() {
            let g = if c.len() == width { index.link(c) } else { c };
            let gid = *group_ids.entry(g).or_insert_with(|| {
                group_ctx.push(g);
                layer.groups.push(Vec::new());
                (group_ctx.len() - 1) as u32
            });
            layer.groups[gid as usize].push(s as u32);
        }

        let restart = index.longest_live(&[Vocabulary::BOS_ID.0]);
        let mut state_ids: FxHashMap<Ctx, u32> = FxHashMap::default();
        let mut sid_of = Vec::with_capacity(group_ctx.len() * n_arcs);
        for &g in &group_ctx {
            for (arc, &w) in step.iter().zip(&words) {
                let next = if arc.token == Vocabulary::EOS_ID { restart } else { index.extend(g, w) };
                let fresh = state_ids.len() as u32;
                let sid = *state_ids.entry(next).or_insert_with(|| {
                    layer.states.push(next);
                    fresh
                });
                sid_of.push(sid);
            }
        }
        let n = layer.states.len();
        layer.src_off = vec![0u32; n + 1];
        for &sid in &sid_of {
            layer.src_off[sid as usize + 1] += 1;
        }
        for s in 0..n {
            layer.src_off[s + 1] += layer.src_off[s];
        }
        let mut fill = layer.src_off.clone();
        layer.sources = vec![(0, 0); sid_of.len()];
        for (j, &sid) in sid_of.iter().enumerate() {
            let slot = &mut fill[sid as usize];
            layer.sources[*slot as usize] = ((j / n_arcs) as u32, (j % n_arcs) as u32);
            *slot += 1;
        }
        layer
    }

    fn for_each_edge(&self, i: usize, s: usize, mut f: impl FnMut(u32, u32)) {
        let layer = &self.layers[i];
        if layer.all {
            for pred in 0..self.layers[i - 1].len() as u32 {
                for a in 0..layer.n_arcs as u32 {
                    f(pred, a);
                }
            }
            return;
        }
        let (lo, hi) = (layer.src_off[s] as usize, layer.src_off[s + 1] as usize);
        for &(g, a) in &layer.sources[lo..hi] {
            for &pred in &layer.groups[g as usize] {
                f(pred, a);
            }
        }
    }

    fn edges(&self, i: usize, s: usize) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        self.for_each_edge(i, s, |p, a| out.push((p, a)));
        out
    }

    fn make(&self, i: usize, pred: u32, arc: u32, rank: u32) -> Deriv<S> {
        let layer = &self.layers[i];
        let pd = self.layers[i - 1].rank(pred as usize, rank as usize).expect("rank ensured");
        let w = self.lat.step(i - 1)[arc as usize].weight;
        let lm = layer.lm[pred as usize * layer.n_arcs + arc as usize];
        Deriv { lat: pd.lat + w, lm: pd.lm + lm, pred, arc, rank }
    }

    fn combined(&self, d: &Deriv<S>) -> S {
        d.lat + self.alpha * d.lm
    }

    fn path_of_deriv(&self, i: usize, d: &Deriv<S>, out: &mut Vec<TokenId>) {
        if i == 0 {
            return;
        }
        let pd = *self.layers[i - 1].rank(d.pred as usize, d.rank as usize).expect("rank present");
        self.path_of_deriv(i - 1, &pd, out);
        out.push(self.lat.step(i - 1)[d.arc as usize].token);
    }

    /// `Less` when `a` ranks ahead of `b`; both derivations end in layer `i`.
    fn compare(&self, i: usize, a: &Deriv<S>, b: &Deriv<S>) -> Ordering {
        score_order(self.combined(a), a.lat, self.combined(b), b.lat).then_with(|| {
            let (mut pa, mut pb) = (Vec::new(), Vec::new());
            self.path_of_deriv(i, a, &mut pa);
            self.path_of_deriv(i, b, &mut pb);
            pa.cmp(&pb)
        })
    }

    fn viterbi(&mut self, i: usize) {
        let n = self.layers[i].len();
        let mut best = Vec::with_capacity(n);
        let mut count = 0usize;
        for s in 0..n {
            let mut cur: Option<Deriv<S>> = None;
            let layer = &self.layers[i];
            let prev = &self.layers[i - 1];
            self.for_each_edge(i, s, |pred, arc| {
                count += 1;
                let pd = &prev.best[pred as usize];
                let d = Deriv {
                    lat: pd.lat + self.lat.step(i - 1)[arc as usize].weight,
                    lm: pd.lm + layer.lm[pred as usize * layer.n_arcs + arc as usize],
                    pred,
                    arc,
                    rank: 0,
                };
                match &cur {
                    Some(c) if self.compare(i, &d, c) != Ordering::Less => {}
                    _ => cur = Some(d),
                }
            });
            best.push(cur.expect("every state has an incoming edge"));
        }
        self.stats.relaxations += count;
        self.stats.derivations += n;
        self.layers[i].best = best;
    }

    /// Makes rank `r` of state `s` in layer `i` available; false if it does not exist.
    fn ensure(&mut self, i: usize, s: usize, r: usize) -> bool {
        if i == 0 {
            return r == 0;
        }
        while self.layers[i].ranks(s) <= r {
            let key = s as u32;
            let mut pool = match self.layers[i].pools.remove(&key) {
                Some(p) => p,
                None => {
                    let first = self.layers[i].best[s];
                    let mut pool = Vec::new();
                    for (pred, arc) in self.edges(i, s) {
                        let rank = u32::from(pred == first.pred && arc == first.arc);
                        if self.ensure(i - 1, pred as usize, rank as usize) {
                            pool.push(self.make(i, pred, arc, rank));
                            self.stats.relaxations += 1;
                        }
                    }
                    pool
                }
            };
            if pool.is_empty() {
                self.layers[i].pools.insert(key, pool);
                return false;
            }
            let mut bi = 0;
            for j in 1..pool.len() {
                if self.compare(i, &pool[j], &pool[bi]) == Ordering::Less {
                    bi = j;
                }
            }
            let d = pool.swap_remove(bi);
            self.layers[i].more.entry(key).or_default().push(d);
            self.stats.derivations += 1;
            if self.ensure(i - 1, d.pred as usize, d.rank as usize + 1) {
                pool.push(self.make(i, d.pred, d.arc, d.rank + 1));
                self.stats.relaxations += 1;
            }
            self.layers[i].pools.insert(key, pool);
        }
        true
    }

    fn extract(&mut self, p: usize) -> Vec<DraftCandidate<S>> {
        let h = self.lat.len();
        let mut pool: Vec<(usize, usize)> = (0..self.layers[h].len()).map(|s| (s, 0)).collect();
        let mut out = Vec::with_capacity(p);
        while out.len() < p && !pool.is_empty() {
            let mut bi = 0;
            for j in 1..pool.len() {
                let a = self.layers[h].rank(pool[j].0, pool[j].1).unwrap();
                let b = self.layers[h].rank(pool[bi].0, pool[bi].1).unwrap();
                if self.compare(h, a, b) == Ordering::Less {
                    bi = j;
                }
            }
            let (s, r) = pool.swap_remove(bi);
            let d = *self.layers[h].rank(s, r).unwrap();
            let mut tokens = Vec::with_capacity(h);
            self.path_of_deriv(h, &d, &mut tokens);
            out.push(DraftCandidate::new(tokens, d.lat, d.lm, self.alpha));
            if self.ensure(h, s, r + 1) {
                pool.push((s, r + 1));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::ngram::{count, estimate_katz, PruneConfig};

    fn t(i: u32) -> TokenId {
        TokenId(i)
    }

    fn toy_model(order: usize) -> NgramModel {
        let corpus = ["c d e", "c e d", "d d c e", "e c d", "c d e c"];
        let sents: Vec<Vec<String>> = corpus.iter().map(|s| s.split_whitespace().map(String::from).collect()).collect();
        let vocab = Vocabulary::from_corpus(sents.iter().map(Vec::as_slice));
        let ids: Vec<Vec<TokenId>> = sents.iter().map(|s| s.iter().map(|w| vocab.id(w).unwrap()).collect()).collect();
        estimate_katz(&count(&ids, order, &vocab).unwrap(), &PruneConfig::default()).unwrap()
    }

    fn brute<S: Scalar>(lat: &SausageLattice<S>, model: Option<&NgramModel>, alpha: S) -> Vec<DraftCandidate<S>> {
        let mut all: Vec<DraftCandidate<S>> = lat
            .enumerate_paths()
            .unwrap()
            .map(|(toks, lat_score)| {
                let mut lm = S::zero();
                if let Some(m) = model {
                    let mut ctx = lat.prefix().to_vec();
                    for &w in &toks {
                        lm = lm + S::from_f64_lossy(m.log_prob(&ctx, w));
                        ctx.push(w);
                    }
                }
                DraftCandidate::new(toks, lat_score, lm, alpha)
            })
            .collect();
        all.sort_by(super::super::candidate_order);
        all
    }

    #[test]
    fn no_ngram_best_is_argmax() {
        let heads = vec![vec![(t(3), 0.1), (t(4), 0.7)], vec![(t(5), 1.0), (t(3), -1.0)], vec![(t(4), 0.0)]];
        let lat = build_lattice(&heads, 2, &[]).unwrap();
        let out = global_rescore(&lat, None, 1.0, 1).unwrap();
        assert_eq!(out[0].tokens, lat.argmax_path());
        assert_eq!(out[0].lm_score, 0.0);
    }

    #[test]
    fn matches_enumeration_small() {
        let m = toy_model(3);
        let heads = vec![
            vec![(t(3), 0.2), (t(4), 0.1), (t(2), -0.3)],
            vec![(t(4), 0.5), (t(5), 0.45)],
            vec![(t(5), 0.0), (t(3), -0.05), (t(2), -0.5)],
        ];
        let lat = build_lattice(&heads, 3, &[Vocabulary::BOS_ID]).unwrap();
        for alpha in [0.0f64, 0.3, 1.0, 4.0] {
            let expected = brute(&lat, Some(&m), alpha);
            let got = global_rescore(&lat, Some(&m), alpha, 100).unwrap();
            assert_eq!(got.len(), expected.len());
            for (g, e) in got.iter().zip(&expected) {
                assert_eq!(g.tokens, e.tokens, "alpha {alpha}");
                assert!((g.combined_score - e.combined_score).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let heads: Vec<Vec<(TokenId, f64)>> = (0..3).map(|_| vec![(t(4), 0.0), (t(3), 0.0)]).collect();
        let lat = build_lattice(&heads, 2, &[]).unwrap();
        let out = global_rescore(&lat, None, 1.0, 8).unwrap();
        let seqs: Vec<Vec<u32>> = out.iter().map(|c| c.tokens.iter().map(|t| t.0).collect()).collect();
        assert_eq!(
            seqs,
            vec![
                vec![3, 3, 3],
                vec![3, 3, 4],
                vec![3, 4, 3],
                vec![3, 4, 4],
                vec![4, 3, 3],
                vec![4, 3, 4],
                vec![4, 4, 3],
                vec![4, 4, 4]
            ]
        );
    }

    #[test]
    fn sentence_end_arcs_reset_context() {
        let m = toy_model(3);
        let v = m.vocab();
        let (c, d, e) = (v.id("c").unwrap(), v.id("d").unwrap(), v.id("e").unwrap());
        let heads = vec![
            vec![(e, 0.0), (Vocabulary::EOS_ID, 0.1)],
            vec![(c, 0.0), (d, 0.0), (Vocabulary::EOS_ID, -0.2)],
            vec![(d, 0.3), (e, 0.1)],
        ];
        let lat = build_lattice(&heads, 3, &[Vocabulary::BOS_ID, c, d]).unwrap();
        let expected = brute(&lat, Some(&m), 1.0);
        let got = global_rescore(&lat, Some(&m), 1.0, 12).unwrap();
        for (g, x) in got.iter().zip(&expected) {
            assert_eq!(g.tokens, x.tokens);
            assert_eq!(g.combined_score, x.combined_score);
        }
    }

    #[test]
    fn p_larger_than_paths_returns_all() {
        let lat = build_lattice(&[vec![(t(3), 0.0), (t(4), 1.0)]], 2, &[]).unwrap();
        assert_eq!(global_rescore(&lat, Some(&toy_model(2)), 0.5, 10).unwrap().len(), 2);
        assert!(global_rescore(&lat, None, 0.5, 0).is_err());
        assert!(global_rescore(&lat, None, -0.5, 1).is_err());
    }

    #[test]
    fn unigram_model_single_state() {
        let m = toy_model(1);
        let heads = vec![vec![(t(3), 0.0), (t(4), 0.0), (t(5), 0.0)], vec![(t(3), 0.0), (t(5), 0.1)]];
        let lat = build_lattice(&heads, 3, &[]).unwrap();
        let expected = brute(&lat, Some(&m), 2.0);
        let (got, stats) = global_rescore_with_stats(&lat, Some(&m), 2.0, 6).unwrap();
        assert_eq!(stats.max_states, 1);
        assert_eq!(got.iter().map(|c| &c.tokens).collect::<Vec<_>>(), expected.iter().map(|c| &c.tokens).collect::<Vec<_>>());
    }
}
