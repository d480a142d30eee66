//! Choosing drafts from a sausage lattice.
//!
//! [`local_rescore`] walks the lattice left to right, adding an
//! alpha-weighted scorer logit to each arc and taking the argmax.
//! [`global_rescore`] scores every path with an n-gram model and returns the
//! exact p best, using a dynamic program whose state is the n-gram context.

mod global;
mod local;

pub use global::{global_rescore, global_rescore_with_stats, GlobalStats};
pub use local::{local_rescore, local_rescore_with, LocalConditioning, LocalScorer};

use std::cmp::Ordering;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RescoreMode {
    Local,
    Global,
    GlobalNoNgram,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescoreConfig {
    pub alpha: f64,
    pub p: usize,
    pub mode: RescoreMode,
}

impl RescoreConfig {
    pub fn new(mode: RescoreMode, alpha: f64, p: usize) -> Result<Self> {
        let cfg = RescoreConfig { alpha, p, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return invalid(format!("alpha must be a finite non-negative number, got {}", self.alpha));
        }
        if self.p == 0 {
            return invalid("p must be at least 1");
        }
        Ok(())
    }
}

/// One h-token draft with its score split into lattice and LM parts.
///
/// `combined = lattice + alpha * lm`; `lm` is zero when no LM was used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DraftCandidate<S> {
    pub tokens: Vec<TokenId>,
    #[serde(rename = "combined")]
    pub combined_score: S,
    #[serde(rename = "lattice")]
    pub lattice_score: S,
    #[serde(rename = "lm")]
    pub lm_score: S,
}

impl<S: Scalar> DraftCandidate<S> {
    pub fn new(tokens: Vec<TokenId>, lattice_score: S, lm_score: S, alpha: S) -> Self {
        DraftCandidate { tokens, combined_score: lattice_score + alpha * lm_score, lattice_score, lm_score }
    }

    /// The stepwise argmax draft, unscored by any LM.
    pub fn vanilla(lat: &crate::lattice::SausageLattice<S>) -> Self {
        let tokens = lat.argmax_path();
        let score = lat.steps().iter().fold(S::zero(), |acc, s| acc + s[0].weight);
        DraftCandidate { tokens, combined_score: score, lattice_score: score, lm_score: S::zero() }
    }
}

/// Best-first order: combined score, then lattice score, then token ids.
///
/// Scores closer than a few units in the last place count as equal. Paths
/// whose scores agree exactly in real arithmetic can differ by rounding
/// depending on summation order, and would otherwise be ranked arbitrarily.
pub fn candidate_order<S: Scalar>(a: &DraftCandidate<S>, b: &DraftCandidate<S>) -> Ordering {
    score_order(a.combined_score, a.lattice_score, b.combined_score, b.lattice_score).then_with(|| a.tokens.cmp(&b.tokens))
}

pub(crate) fn score_order<S: Scalar>(ca: S, la: S, cb: S, lb: S) -> Ordering {
    approx_cmp(cb, ca).then_with(|| approx_cmp(lb, la))
}

fn approx_cmp<S: Scalar>(a: S, b: S) -> Ordering {
    let scale = S::one().max(a.abs()).max(b.abs());
    let tol = S::epsilon() * S::from_f64_lossy(64.0) * scale;
    if (a - b).abs() <= tol {
        Ordering::Equal
    } else {
        a.partial_cmp(&b).unwrap_or(Ordering::Equal)
    }
}

/// Checks that no two candidates share a token sequence; order is kept.
pub fn dedupe_and_rank<S: Scalar>(cands: Vec<DraftCandidate<S>>) -> Result<Vec<DraftCandidate<S>>> {
    let mut seen: FxHashSet<&[TokenId]> = FxHashSet::default();
    for c in &cands {
        if !seen.insert(c.tokens.as_slice()) {
            return Err(Error::Invariant(format!("duplicate draft {:?}", c.tokens)));
        }
    }
    drop(seen);
    Ok(cands)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(toks: &[u32], s: f64) -> DraftCandidate<f64> {
        DraftCandidate::new(toks.iter().map(|&t| TokenId(t)).collect(), s, 0.0, 1.0)
    }

    #[test]
    fn dedupe_keeps_unique_lists() {
        let list = vec![cand(&[1, 2], 3.0), cand(&[2, 1], 2.0)];
        assert_eq!(dedupe_and_rank(list.clone()).unwrap(), list);
        let one = vec![cand(&[5], 0.0)];
        assert_eq!(dedupe_and_rank(one.clone()).unwrap(), one);
    }

    #[test]
    fn dedupe_rejects_duplicates() {
        let list = vec![cand(&[1, 2], 3.0), cand(&[3, 3], 2.0), cand(&[1, 2], 1.0)];
        assert!(matches!(dedupe_and_rank(list), Err(Error::Invariant(_))));
    }

    #[test]
    fn config_validation() {
        assert!(RescoreConfig::new(RescoreMode::Global, 0.5, 4).is_ok());
        assert!(RescoreConfig::new(RescoreMode::Global, -0.1, 4).is_err());
        assert!(RescoreConfig::new(RescoreMode::Global, f64::NAN, 4).is_err());
        assert!(RescoreConfig::new(RescoreMode::Local, 1.0, 0).is_err());
    }

    #[test]
    fn candidate_json_shape() {
        let c = DraftCandidate::new(vec![TokenId(4), TokenId(2)], 1.5, -2.0, 0.5);
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"tokens":[4,2],"combined":0.5,"lattice":1.5,"lm":-2.0}"#);
    }

    #[test]
    fn ordering_breaks_ties() {
        let a = DraftCandidate::new(vec![TokenId(1)], 2.0, 0.0, 1.0);
        let b = DraftCandidate::new(vec![TokenId(0)], 1.0, 1.0, 1.0);
        // equal combined, a has the larger lattice score
        assert_eq!(candidate_order(&a, &b), Ordering::Less);
        let c = DraftCandidate::new(vec![TokenId(0)], 2.0, 0.0, 1.0);
        assert_eq!(candidate_order(&c, &a), Ordering::Less);
    }
}
