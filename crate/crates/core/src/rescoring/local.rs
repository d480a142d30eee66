use crate::error::{Error, Result};
use crate::lattice::SausageLattice;
use crate::ngram::NgramModel;
use crate::rescoring::DraftCandidate;
use crate::scalar::Scalar;
use crate::vocab::TokenId;

/// An autoregressive scorer queried one position at a time.
pub trait LocalScorer<S: Scalar>: Send + Sync {
    /// Logits for each of `candidates` as the next token after `context`,
    /// in the same order. Must be deterministic.
    fn next_logits(&self, context: &[TokenId], candidates: &[TokenId]) -> Result<Vec<S>>;
}

/// An n-gram model scores with its natural-log probabilities.
impl<S: Scalar> LocalScorer<S> for NgramModel {
    fn next_logits(&self, context: &[TokenId], candidates: &[TokenId]) -> Result<Vec<S>> {
        Ok(candidates.iter().map(|&w| S::from_f64_lossy(self.log_prob(context, w))).collect())
    }
}

impl<S: Scalar, T: LocalScorer<S> + ?Sized> LocalScorer<S> for &T {
    fn next_logits(&self, context: &[TokenId], candidates: &[TokenId]) -> Result<Vec<S>> {
        (**self).next_logits(context, candidates)
    }
}

/// Which tokens the scorer sees for earlier positions of the block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalConditioning {
    /// The tokens already chosen by the rescoring walk.
    #[default]
    Rescored,
    /// The vanilla argmax tokens, as if every position were rescored in parallel.
    Vanilla,
}

/// Greedy left-to-right rescoring conditioned on the rescored tokens.
pub fn local_rescore<S, L>(lat: &SausageLattice<S>, scorer: &L, alpha: S) -> Result<DraftCandidate<S>>
where
    S: Scalar,
    L: LocalScorer<S> + ?Sized,
{
    local_rescore_with(lat, scorer, alpha, LocalConditioning::Rescored)
}

pub fn local_rescore_with<S, L>(
    lat: &SausageLattice<S>,
    scorer: &L,
    alpha: S,
    conditioning: LocalConditioning,
) -> Result<DraftCandidate<S>>
where
    S: Scalar,
    L: LocalScorer<S> + ?Sized,
{
    if !(alpha >= S::zero()) {
        return Err(Error::InvalidInput("alpha must be non-negative".into()));
    }
    let vanilla = lat.argmax_path();
    let mut ctx = lat.prefix().to_vec();
    let base_len = ctx.len();
    let mut chosen = Vec::with_capacity(lat.len());
    let mut lattice_score = S::zero();
    let mut lm_score = S::zero();
    for (j, step) in lat.steps().iter().enumerate() {
        ctx.truncate(base_len);
        match conditioning {
            LocalConditioning::Rescored => ctx.extend_from_slice(&chosen),
            LocalConditioning::Vanilla => ctx.extend_from_slice(&vanilla[..j]),
        }
        let tokens: Vec<TokenId> = step.iter().map(|a| a.token).collect();
        let logits = scorer.next_logits(&ctx, &tokens)?;
        if logits.len() != tokens.len() {
            return Err(Error::Rescore(format!(
                "scorer returned {} logits for {} candidates at step {}",
                logits.len(),
                tokens.len(),
                j + 1
            )));
        }
        if let Some(bad) = logits.iter().position(|r| !r.is_finite()) {
            return Err(Error::Rescore(format!("scorer logit for token {} at step {} is not finite", tokens[bad], j + 1)));
        }
        let mut best = 0;
        let mut best_val = step[0].weight + alpha * logits[0];
        for (i, arc) in step.iter().enumerate().skip(1) {
            let v = arc.weight + alpha * logits[i];
            if v > best_val || (v == best_val && arc.token < step[best].token) {
                best = i;
                best_val = v;
            }
        }
        chosen.push(step[best].token);
        lattice_score = lattice_score + step[best].weight;
        lm_score = lm_score + logits[best];
    }
    Ok(DraftCandidate::new(chosen, lattice_score, lm_score, alpha))
}

#[cfg(test)]
mod tests {
    use rustc_hash::FxHashMap;

    use super::*;
    use crate::lattice::build_lattice;

    fn t(i: u32) -> TokenId {
        TokenId(i)
    }

    /// Scores by (last context token, candidate); unknown pairs score 0.
    struct TableScorer(FxHashMap<(Option<TokenId>, TokenId), f64>);

    impl LocalScorer<f64> for TableScorer {
        fn next_logits(&self, context: &[TokenId], candidates: &[TokenId]) -> Result<Vec<f64>> {
            let last = context.last().copied();
            Ok(candidates.iter().map(|&c| self.0.get(&(last, c)).copied().unwrap_or(0.0)).collect())
        }
    }

    struct Failing;
    impl LocalScorer<f64> for Failing {
        fn next_logits(&self, _: &[TokenId], _: &[TokenId]) -> Result<Vec<f64>> {
            Err(Error::Rescore("offline".into()))
        }
    }

    #[test]
    fn zero_alpha_is_vanilla() {
        let heads = vec![vec![(t(1), 2.0), (t(2), 1.0)], vec![(t(3), 0.5), (t(1), 0.4)]];
        let lat = build_lattice(&heads, 2, &[t(9)]).unwrap();
        let mut table = FxHashMap::default();
        table.insert((Some(t(1)), t(1)), 100.0);
        let d = local_rescore(&lat, &TableScorer(table), 0.0).unwrap();
        assert_eq!(d.tokens, lat.argmax_path());
    }

    #[test]
    fn repetition_penalty_picks_second_token() {
        // head 2's top token repeats head 1's; the scorer punishes the repeat
        let heads = vec![vec![(t(5), 3.0), (t(6), 1.0)], vec![(t(5), 2.0), (t(7), 1.8)]];
        let lat = build_lattice(&heads, 2, &[]).unwrap();
        let mut table = FxHashMap::default();
        table.insert((Some(t(5)), t(5)), -10.0);
        let d = local_rescore(&lat, &TableScorer(table), 1.0).unwrap();
        assert_eq!(d.tokens, vec![t(5), t(7)]);
    }

    #[test]
    fn three_by_three_hand_evaluation() {
        // z values per step (token: logit)
        let heads = vec![
            vec![(t(1), 1.0), (t(2), 0.9), (t(3), 0.1)],
            vec![(t(4), 2.0), (t(5), 1.5), (t(6), 1.4)],
            vec![(t(7), 0.3), (t(8), 0.2), (t(9), 0.0)],
        ];
        let lat = build_lattice(&heads, 3, &[t(0)]).unwrap();
        let mut r = FxHashMap::default();
        // step 1, context ends in 0
        r.insert((Some(t(0)), t(1)), -1.0);
        r.insert((Some(t(0)), t(2)), 0.0);
        r.insert((Some(t(0)), t(3)), 0.5);
        // step 2 after token 2
        r.insert((Some(t(2)), t(4)), -2.0);
        r.insert((Some(t(2)), t(5)), 0.0);
        r.insert((Some(t(2)), t(6)), 0.2);
        // step 3 after token 5
        r.insert((Some(t(5)), t(7)), -0.5);
        r.insert((Some(t(5)), t(8)), 0.0);
        r.insert((Some(t(5)), t(9)), 0.4);
        let alpha = 0.5;
        // step 1: 1.0-0.5=0.5, 0.9+0=0.9, 0.1+0.25=0.35 -> token 2
        // step 2: 2.0-1.0=1.0, 1.5+0=1.5, 1.4+0.1=1.5 -> tie, lower id 5
        // step 3: 0.3-0.25=0.05, 0.2+0=0.2, 0.0+0.2=0.2 -> tie, lower id 8
        let d = local_rescore(&lat, &TableScorer(r), alpha).unwrap();
        assert_eq!(d.tokens, vec![t(2), t(5), t(8)]);
        assert!((d.lattice_score - (0.9 + 1.5 + 0.2)).abs() < 1e-12);
        assert!((d.lm_score - 0.0).abs() < 1e-12);
        assert!((d.combined_score - (d.lattice_score + alpha * d.lm_score)).abs() < 1e-9);
    }

    #[test]
    fn vanilla_conditioning_uses_argmax_tokens() {
        let heads = vec![vec![(t(1), 1.0), (t(2), 0.9)], vec![(t(3), 1.0), (t(4), 0.9)]];
        let lat = build_lattice(&heads, 2, &[]).unwrap();
        let mut r = FxHashMap::default();
        r.insert((None, t(2)), 1.0); // step 1 picks 2
        r.insert((Some(t(2)), t(4)), 1.0); // only fires when conditioned on the rescored token
        let rescored = local_rescore_with(&lat, &TableScorer(r.clone()), 1.0, LocalConditioning::Rescored).unwrap();
        assert_eq!(rescored.tokens, vec![t(2), t(4)]);
        let parallel = local_rescore_with(&lat, &TableScorer(r), 1.0, LocalConditioning::Vanilla).unwrap();
        assert_eq!(parallel.tokens, vec![t(2), t(3)]);
    }

    #[test]
    fn scorer_errors_propagate() {
        let lat = build_lattice(&[vec![(t(1), 1.0)]], 1, &[]).unwrap();
        assert!(matches!(local_rescore(&lat, &Failing, 1.0), Err(Error::Rescore(_))));
        assert!(local_rescore(&lat, &Failing, -1.0).is_err());
    }
}
