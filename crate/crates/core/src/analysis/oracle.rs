use serde::{Deserialize, Serialize};

use crate::engine::{BaseLm, DecodeReport, Drafter};
use crate::error::{invalid, Result};
use crate::lattice::{build_lattice, oracle_accept_length};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    pub k: usize,
    pub block_efficiency: f64,
}

/// Oracle block efficiency of the top-k lattice, for each `k`, over the
/// steps of an existing decode.
///
/// Every step of `report` is replayed at its own context: the lattice is
/// rebuilt with the largest `k`, its first step pinned as in decoding, and
/// the oracle accepts its walk length (at least one token). Because the
/// contexts are shared, smaller lattices are subsets of larger ones and the
/// curve cannot decrease; at `k = 1` it reproduces a vanilla report.
pub fn oracle_curve<S, D, B>(
    drafter: &D,
    base: &B,
    prompt: &[TokenId],
    report: &DecodeReport<S>,
    ks: &[usize],
) -> Result<Vec<OraclePoint>>
where
    S: Scalar,
    D: Drafter<S> + ?Sized,
    B: BaseLm + ?Sized,
{
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("k values must be positive and strictly increasing");
    }
    if report.per_step.is_empty() {
        return invalid("report has no steps");
    }
    let kmax = *ks.last().expect("non-empty");
    let mut accepted = vec![0usize; ks.len()];
    let mut ctx = prompt.to_vec();
    for step in &report.per_step {
        if step.position > report.output.len() {
            return invalid("report steps run past its output");
        }
        ctx.truncate(prompt.len());
        ctx.extend_from_slice(&report.output[..step.position]);
        let heads = drafter.head_logits(&ctx, kmax)?;
        let full = build_lattice(&heads, kmax, &ctx)?.pin_first_step();
        for (acc, &k) in accepted.iter_mut().zip(ks) {
            let lat = full.truncated(k)?;
            *acc += oracle_accept_length(&lat, base, &ctx).max(1);
        }
    }
    let calls = report.per_step.len() as f64;
    Ok(ks.iter().zip(accepted).map(|(&k, a)| OraclePoint { k, block_efficiency: a as f64 / calls }).collect())
}
