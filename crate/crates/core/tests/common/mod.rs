#![allow(dead_code)]

use std::cmp::Ordering;

use draftlat::lattice::{build_lattice, SausageLattice};
use draftlat::ngram::{count, estimate_katz, NgramModel, PruneConfig};
use draftlat::{TokenId, Vocabulary};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A Katz model of random order in 1..=3 over 3 to 5 words, fit to a small
/// random corpus.
pub fn random_model(rng: &mut ChaCha8Rng) -> NgramModel {
    let order = rng.random_range(1..=3);
    let n_words = rng.random_range(3..=5);
    let words: Vec<String> = (0..n_words).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::from_words(&words);
    let ids: Vec<TokenId> = words.iter().map(|w| vocab.id(w).unwrap()).collect();
    let n_sent = rng.random_range(3..=10);
    let corpus: Vec<Vec<TokenId>> = (0..n_sent)
        .map(|_| {
            let len = rng.random_range(1..=5);
            (0..len).map(|_| *ids.choose(rng).unwrap()).collect()
        })
        .collect();
    estimate_katz(&count(&corpus, order, &vocab).unwrap(), &PruneConfig::default()).unwrap()
}

/// Word ids of `model` plus `</s>`.
pub fn lattice_tokens(model: &NgramModel) -> Vec<TokenId> {
    let first = Vocabulary::with_specials().len() as u32;
    let mut out: Vec<TokenId> = (first..model.vocab().len() as u32).map(TokenId).collect();
    out.push(Vocabulary::EOS_ID);
    out
}

/// A lattice of up to 5 steps and 4 arcs over `tokens`. When `coarse` the
/// weights are multiples of 0.5, so equal scores are common.
pub fn random_lattice(rng: &mut ChaCha8Rng, tokens: &[TokenId], coarse: bool) -> SausageLattice<f64> {
    let h = rng.random_range(1..=5);
    let k = rng.random_range(1..=4.min(tokens.len()));
    let heads: Vec<Vec<(TokenId, f64)>> = (0..h)
        .map(|_| {
            tokens
                .choose_multiple(rng, k)
                .map(|&t| {
                    let w = if coarse { f64::from(rng.random_range(-4..=2)) * 0.5 } else { rng.random_range(-5.0..2.0) };
                    (t, w)
                })
                .collect()
        })
        .collect();
    let plen = rng.random_range(0..=3);
    let mut prefix = vec![Vocabulary::BOS_ID];
    prefix.extend((0..plen).map(|_| *tokens.choose(rng).unwrap()));
    build_lattice(&heads, k, &prefix).unwrap()
}

/// Every path with its lattice score, n-gram score (natural log, scored token
/// by token from the lattice prefix) and combined score, best first: higher
/// combined, then higher lattice score, then smaller token sequence, with scores equal
/// up to rounding counted as ties.
pub fn brute_force(lat: &SausageLattice<f64>, model: Option<&NgramModel>, alpha: f64) -> Vec<(Vec<TokenId>, f64, f64, f64)> {
    let mut paths: Vec<Vec<usize>> = vec![Vec::new()];
    for step in lat.steps() {
        paths = paths.into_iter().flat_map(|p| (0..step.len()).map(move |a| [p.clone(), vec![a]].concat())).collect();
    }
    let mut out: Vec<_> = paths
        .into_iter()
        .map(|p| {
            let mut ctx = lat.prefix().to_vec();
            let (mut ls, mut lm, mut toks) = (0.0, 0.0, Vec::new());
            for (i, &a) in p.iter().enumerate() {
                let arc = &lat.step(i)[a];
                ls += arc.weight;
                if let Some(m) = model {
                    lm += m.log_prob(&ctx, arc.token);
                }
                ctx.push(arc.token);
                toks.push(arc.token);
            }
            (toks, ls, lm, ls + alpha * lm)
        })
        .collect();
    out.sort_by(|a, b| near(b.3, a.3).then(near(b.1, a.1)).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Orders two scores, treating differences at rounding level as ties.
fn near(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= 1e-13 * a.abs().max(b.abs()).max(1.0) {
        Ordering::Equal
    } else {
        a.partial_cmp(&b).unwrap()
    }
}

/// Greedy next token by direct search over the vocabulary; lower id wins ties.
pub fn greedy(model: &NgramModel, ctx: &[TokenId]) -> TokenId {
    let mut best = (TokenId(0), f64::NEG_INFINITY);
    for id in model.vocab().ids() {
        let s = model.log_prob(ctx, id);
        if s.partial_cmp(&best.1) == Some(Ordering::Greater) {
            best = (id, s);
        }
    }
    best.0
}

/// Longest greedy-matching prefix over all lattice paths, by enumeration.
pub fn brute_oracle(lat: &SausageLattice<f64>, model: &NgramModel) -> usize {
    brute_force(lat, None, 0.0)
        .iter()
        .map(|(toks, ..)| {
            let mut ctx = lat.prefix().to_vec();
            let mut n = 0;
            for &t in toks {
                if greedy(model, &ctx) != t {
                    break;
                }
                ctx.push(t);
                n += 1;
            }
            n
        })
        .max()
        .unwrap()
}
