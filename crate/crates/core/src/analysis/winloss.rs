use serde::{Deserialize, Serialize};

use super::repetition::has_adjacent_repeat;
use crate::engine::{PairedStep, StepOutcome};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Win,
    Tie,
    Loss,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WinLossReport {
    pub steps: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub win_repair: usize,
    pub win_regress: usize,
    pub loss_repair: usize,
    pub loss_regress: usize,
    pub win_repair_pct: f64,
    pub win_regress_pct: f64,
    pub loss_repair_pct: f64,
    pub loss_regress_pct: f64,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

/// Compares a rescored decode with the vanilla decode it was paired with.
///
/// A step is a win when the rescored draft is accepted further. It is a
/// repair when the vanilla draft repeats a token back to back somewhere in
/// the block and the rescored draft does not; a regress is the reverse.
pub fn winloss<S: Scalar>(vanilla: &[StepOutcome<S>], rescored: &[StepOutcome<S>]) -> Result<WinLossReport> {
    if vanilla.len() != rescored.len() {
        return invalid(format!("{} vanilla steps but {} rescored steps", vanilla.len(), rescored.len()));
    }
    let mut r = WinLossReport { steps: vanilla.len(), ..WinLossReport::default() };
    for (i, (v, c)) in vanilla.iter().zip(rescored).enumerate() {
        if v.position != c.position || v.draft.tokens.len() != c.draft.tokens.len() {
            return invalid(format!("step {i} is not aligned"));
        }
        let repair = has_adjacent_repeat(&v.draft.tokens) && !has_adjacent_repeat(&c.draft.tokens);
        let regress = !has_adjacent_repeat(&v.draft.tokens) && has_adjacent_repeat(&c.draft.tokens);
        match c.accepted.cmp(&v.accepted) {
            std::cmp::Ordering::Greater => {
                r.wins += 1;
                r.win_repair += usize::from(repair);
                r.win_regress += usize::from(regress);
            }
            std::cmp::Ordering::Less => {
                r.losses += 1;
                r.loss_repair += usize::from(repair);
                r.loss_regress += usize::from(regress);
            }
            std::cmp::Ordering::Equal => r.ties += 1,
        }
    }
    r.win_repair_pct = pct(r.win_repair, r.wins);
    r.win_regress_pct = pct(r.win_regress, r.wins);
    r.loss_repair_pct = pct(r.loss_repair, r.losses);
    r.loss_regress_pct = pct(r.loss_regress, r.losses);
    Ok(r)
}

/// [`winloss`] over the output of [`crate::engine::paired_decode`].
pub fn winloss_paired<S: Scalar>(steps: &[PairedStep<S>]) -> Result<WinLossReport> {
    let (v, c): (Vec<_>, Vec<_>) = steps.iter().map(|s| (s.reference.clone(), s.candidate.clone())).unzip();
    winloss(&v, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rescoring::DraftCandidate;
    use crate::vocab::TokenId;

    fn step(pos: usize, toks: &[u32], accepted: usize) -> StepOutcome<f64> {
        StepOutcome {
            position: pos,
            accepted,
            match_prefix_len: accepted - 1,
            draft: DraftCandidate::new(toks.iter().map(|&t| TokenId(t)).collect(), 0.0, 0.0, 0.0),
            draft_rank: 0,
            candidates: 1,
            first_candidate_match: accepted - 1,
            positions_verified: toks.len() - 1,
            fallback: false,
        }
    }

    #[test]
    fn identical_drafts_tie() {
        let v = vec![step(0, &[1, 1, 2], 2), step(2, &[3, 4, 5], 1)];
        let r = winloss(&v, &v).unwrap();
        assert_eq!((r.wins, r.ties, r.losses), (0, 2, 0));
        assert_eq!(r.win_repair_pct + r.win_regress_pct + r.loss_repair_pct + r.loss_regress_pct, 0.0);
    }

    #[test]
    fn repair_win_and_regress_loss() {
        // a=1 b=2 c=3
        let r = winloss(&[step(0, &[1, 1, 2], 1)], &[step(0, &[1, 3, 2], 3)]).unwrap();
        assert_eq!(r.wins, 1);
        assert_eq!(r.win_repair_pct, 100.0);
        let r = winloss(&[step(0, &[1, 3, 2], 3)], &[step(0, &[1, 1, 2], 1)]).unwrap();
        assert_eq!(r.losses, 1);
        assert_eq!(r.loss_regress_pct, 100.0);
    }

    #[test]
    fn misaligned_traces_are_rejected() {
        assert!(winloss(&[step(0, &[1, 2], 1)], &[]).is_err());
        assert!(winloss(&[step(0, &[1, 2], 1)], &[step(1, &[1, 2], 1)]).is_err());
    }
}
