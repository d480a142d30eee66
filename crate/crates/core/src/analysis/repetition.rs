use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionStats {
    /// Identical adjacent pairs as a percentage of all adjacent pairs,
    /// pooled over every draft.
    pub pct_consec: f64,
    /// Mean over drafts of the longest run of one repeated token.
    pub max_run_avg: f64,
    pub drafts: usize,
    pub pairs: usize,
}

pub fn longest_run(draft: &[TokenId]) -> usize {
    let mut best = usize::from(!draft.is_empty());
    let mut run = best;
    for w in draft.windows(2) {
        run = if w[0] == w[1] { run + 1 } else { 1 };
        best = best.max(run);
    }
    best
}

pub fn has_adjacent_repeat(draft: &[TokenId]) -> bool {
    draft.windows(2).any(|w| w[0] == w[1])
}

pub fn repetition_stats<D: AsRef<[TokenId]>>(drafts: &[D]) -> Result<RepetitionStats> {
    if drafts.is_empty() {
        return invalid("no drafts");
    }
    let mut pairs = 0;
    let mut same = 0;
    let mut runs = 0;
    for d in drafts {
        let d = d.as_ref();
        if d.len() < 2 {
            return invalid(format!("draft of length {} has no adjacent pairs", d.len()));
        }
        pairs += d.len() - 1;
        same += d.windows(2).filter(|w| w[0] == w[1]).count();
        runs += longest_run(d);
    }
    Ok(RepetitionStats {
        pct_consec: 100.0 * same as f64 / pairs as f64,
        max_run_avg: runs as f64 / drafts.len() as f64,
        drafts: drafts.len(),
        pairs,
    })
}
