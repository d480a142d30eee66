//! Sausage lattices over the top-k predictions of each head.
//!
//! A lattice has one slot per head. Slot `i` holds the arcs `S_i`, the k
//! highest-logit tokens of head `i`, stored by descending weight with ties
//! going to the lower token id. Any choice of one arc per slot is a draft, so
//! the lattice encodes `|S_1| * ... * |S_h|` drafts.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::engine::BaseLm;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

/// Default cap on the number of paths [`SausageLattice::enumerate_paths`] will walk.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LatticeArc<S> {
    pub token: TokenId,
    pub weight: S,
}

/// Orders arcs by weight descending, then token id ascending.
pub(crate) fn arc_order<S: Scalar>(a: &(TokenId, S), b: &(TokenId, S)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", try_from = "RawLattice<S>")]
pub struct SausageLattice<S> {
    prefix: Vec<TokenId>,
    steps: Vec<Vec<LatticeArc<S>>>,
}

#[derive(Deserialize)]
#[serde(bound = "S: Scalar")]
struct RawLattice<S> {
    prefix: Vec<TokenId>,
    steps: Vec<Vec<LatticeArc<S>>>,
}

impl<S: Scalar> TryFrom<RawLattice<S>> for SausageLattice<S> {
    type Error = Error;

    fn try_from(raw: RawLattice<S>) -> Result<Self> {
        Self::from_steps(raw.steps, raw.prefix)
    }
}

/// Builds the top-`k` lattice from per-head `(token, logit)` lists.
///
/// Heads may list fewer than `k` tokens; the step then keeps all of them.
/// Tokens with an infinite logit carry no mass and are left out.
pub fn build_lattice<S, H>(heads: &[H], k: usize, prefix: &[TokenId]) -> Result<SausageLattice<S>>
where
    S: Scalar,
    H: AsRef<[(TokenId, S)]>,
{
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if heads.is_empty() {
        return invalid("need at least one head");
    }
    let mut steps = Vec::with_capacity(heads.len());
    for (i, head) in heads.iter().enumerate() {
        let mut cands: Vec<(TokenId, S)> = Vec::with_capacity(head.as_ref().len());
        for &(tok, w) in head.as_ref() {
            if w.is_nan() {
                return invalid(format!("head {} has a NaN logit for token {tok}", i + 1));
            }
            if w.is_finite() {
                cands.push((tok, w));
            }
        }
        if cands.is_empty() {
            return invalid(format!("head {} has an empty distribution", i + 1));
        }
        if cands.len() > k {
            cands.select_nth_unstable_by(k - 1, arc_order);
            cands.truncate(k);
        }
        cands.sort_by(arc_order);
        if cands.windows(2).any(|w| w[0].0 == w[1].0) {
            // A duplicate within the top k is a duplicate in the head itself.
            return invalid(format!("head {} lists a token twice", i + 1));
        }
        steps.push(cands.into_iter().map(|(token, weight)| LatticeArc { token, weight }).collect());
    }
    let lat = SausageLattice { prefix: prefix.to_vec(), steps };
    lat.check_distinct()?;
    Ok(lat)
}

/// Builds the lattice from dense per-head logit vectors indexed by token id.
pub fn build_lattice_dense<S: Scalar>(heads: &[Vec<S>], k: usize, prefix: &[TokenId]) -> Result<SausageLattice<S>> {
    let sparse: Vec<Vec<(TokenId, S)>> = heads
        .iter()
        .map(|h| h.iter().enumerate().map(|(i, &w)| (TokenId(i as u32), w)).collect())
        .collect();
    build_lattice(&sparse, k, prefix)
}

impl<S: Scalar> SausageLattice<S> {
    /// Validates and wraps explicit steps.
    pub fn from_steps(steps: Vec<Vec<LatticeArc<S>>>, prefix: Vec<TokenId>) -> Result<Self> {
        if steps.is_empty() {
            return invalid("lattice needs at least one step");
        }
        for (i, step) in steps.iter().enumerate() {
            if step.is_empty() {
                return invalid(format!("step {} is empty", i + 1));
            }
            if step.iter().any(|a| !a.weight.is_finite()) {
                return invalid(format!("step {} has a non-finite weight", i + 1));
            }
            let sorted = step
                .windows(2)
                .all(|w| arc_order(&(w[0].token, w[0].weight), &(w[1].token, w[1].weight)) != Ordering::Greater);
            if !sorted {
                return invalid(format!("step {} is not in descending weight order", i + 1));
            }
        }
        let lat = SausageLattice { prefix, steps };
        lat.check_distinct()?;
        Ok(lat)
    }

    fn check_distinct(&self) -> Result<()> {
        for (i, step) in self.steps.iter().enumerate() {
            let mut toks: Vec<TokenId> = step.iter().map(|a| a.token).collect();
            toks.sort_unstable();
            if toks.windows(2).any(|w| w[0] == w[1]) {
                return invalid(format!("step {} repeats a token", i + 1));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> &[Vec<LatticeArc<S>>] {
        &self.steps
    }

    pub fn step(&self, i: usize) -> &[LatticeArc<S>] {
        &self.steps[i]
    }

    /// Number of slots, `h`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The already-decoded tokens this lattice continues.
    pub fn prefix(&self) -> &[TokenId] {
        &self.prefix
    }

    /// `prod |S_i|`, saturating at `u128::MAX`.
    pub fn path_count(&self) -> u128 {
        self.steps.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
    }

    /// Stepwise argmax: the vanilla draft, which is also the best path.
    pub fn argmax_path(&self) -> Vec<TokenId> {
        self.steps.iter().map(|s| s[0].token).collect()
    }

    /// Sum of arc weights along `tokens`, or `None` if some token is off-lattice.
    pub fn path_score(&self, tokens: &[TokenId]) -> Option<S> {
        if tokens.len() != self.steps.len() {
            return None;
        }
        let mut total = S::zero();
        for (step, tok) in self.steps.iter().zip(tokens) {
            total = total + step.iter().find(|a| a.token == *tok)?.weight;
        }
        Some(total)
    }

    pub fn contains_path(&self, tokens: &[TokenId]) -> bool {
        tokens.len() == self.steps.len()
            && self.steps.iter().zip(tokens).all(|(s, t)| s.iter().any(|a| a.token == *t))
    }

    /// Keeps only the best arc of the first step.
    ///
    /// The first head predicts the base model's own next token, which is
    /// accepted unconditionally, so the decode loop never drafts over it.
    pub fn pin_first_step(mut self) -> Self {
        self.steps[0].truncate(1);
        self
    }

    /// Keeps the first `k` arcs of each step.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return invalid("k must be at least 1");
        }
        Ok(SausageLattice {
            prefix: self.prefix.clone(),
            steps: self.steps.iter().map(|s| s[..s.len().min(k)].to_vec()).collect(),
        })
    }

    /// Every path with its additive score, up to [`DEFAULT_ENUMERATION_CAP`] paths.
    pub fn enumerate_paths(&self) -> Result<PathIter<'_, S>> {
        self.enumerate_paths_capped(DEFAULT_ENUMERATION_CAP)
    }

    pub fn enumerate_paths_capped(&self, cap: u128) -> Result<PathIter<'_, S>> {
        let paths = self.path_count();
        if paths > cap {
            return Err(Error::TooLarge { paths, cap });
        }
        Ok(PathIter { lat: self, odometer: vec![0; self.steps.len()], done: false })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("lattice serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("lattice json: {e}")))
    }
}

/// Lexicographic walk over all paths; the last step varies fastest.
pub struct PathIter<'a, S> {
    lat: &'a SausageLattice<S>,
    odometer: Vec<usize>,
    done: bool,
}

impl<S: Scalar> Iterator for PathIter<'_, S> {
    type Item = (Vec<TokenId>, S);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut tokens = Vec::with_capacity(self.odometer.len());
        let mut score = S::zero();
        for (step, &i) in self.lat.steps.iter().zip(&self.odometer) {
            tokens.push(step[i].token);
            score = score + step[i].weight;
        }
        let mut pos = self.odometer.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.odometer[pos] += 1;
            if self.odometer[pos] < self.lat.steps[pos].len() {
                break;
            }
            self.odometer[pos] = 0;
        }
        Some((tokens, score))
    }
}

/// Length of the longest lattice path prefix that follows `base`'s greedy
/// continuation of `prefix`.
///
/// Greedy continuation is unique, so a single forward walk is exact: at
/// step `i` the only arc that can extend the match is the greedy token.
pub fn oracle_accept_length<S, B>(lat: &SausageLattice<S>, base: &B, prefix: &[TokenId]) -> usize
where
    S: Scalar,
    B: BaseLm + ?Sized,
{
    oracle_path(lat, base, prefix).0
}

/// The oracle draft: greedy tokens while they are on the lattice, then the
/// stepwise argmax. Returns the matched length alongside.
pub fn oracle_path<S, B>(lat: &SausageLattice<S>, base: &B, prefix: &[TokenId]) -> (usize, Vec<TokenId>)
where
    S: Scalar,
    B: BaseLm + ?Sized,
{
    let mut ctx = prefix.to_vec();
    let mut path = Vec::with_capacity(lat.len());
    let mut matched = 0;
    for step in lat.steps() {
        let g = base.greedy_next(&ctx);
        if !step.iter().any(|a| a.token == g) {
            break;
        }
        path.push(g);
        ctx.push(g);
        matched += 1;
    }
    for step in &lat.steps()[matched..] {
        path.push(step[0].token);
    }
    (matched, path)
}
