use serde::{Deserialize, Serialize};

use super::{bpd_decode, BaseLm, DecodeConfig, Drafter, Refinement};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

/// The interpolation weights swept when tuning n-gram rescoring.
pub const DEFAULT_ALPHA_GRID: [f64; 10] = [0.1, 0.5, 0.75, 0.9, 1.0, 1.1, 1.5, 2.0, 5.0, 10.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTuning {
    pub best_alpha: f64,
    pub best_block_efficiency: f64,
    /// `(alpha, block efficiency)` in grid order.
    pub table: Vec<(f64, f64)>,
}

/// Evaluates every alpha in `grid` and keeps the one with the highest
/// block efficiency; among equal values the smallest alpha wins.
pub fn tune_alpha<F>(grid: &[f64], mut eval: F) -> Result<AlphaTuning>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return invalid("alpha grid is empty");
    }
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &alpha in grid {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return invalid(format!("grid value {alpha} is not a finite non-negative number"));
        }
        let b = eval(alpha)?;
        table.push((alpha, b));
        best = match best {
            Some((ba, bb)) if bb > b || (bb == b && ba <= alpha) => Some((ba, bb)),
            _ => Some((alpha, b)),
        };
    }
    let (best_alpha, best_block_efficiency) = best.expect("grid is non-empty");
    Ok(AlphaTuning { best_alpha, best_block_efficiency, table })
}

/// Pooled block efficiency over `prompts`: all tokens over all calls.
pub fn evaluate_block_efficiency<S, D, B>(
    drafter: &D,
    base: &B,
    prompts: &[Vec<TokenId>],
    refinement: &Refinement<'_, S>,
    cfg: &DecodeConfig,
) -> Result<f64>
where
    S: Scalar,
    D: Drafter<S> + ?Sized,
    B: BaseLm + ?Sized,
{
    if prompts.is_empty() {
        return invalid("no prompts to evaluate on");
    }
    let mut cfg = *cfg;
    cfg.check_fidelity = false;
    let (mut tokens, mut calls) = (0usize, 0usize);
    for p in prompts {
        let r = bpd_decode(drafter, base, p, refinement, &cfg)?;
        tokens += r.total_tokens;
        calls += r.serial_calls;
    }
    if calls == 0 {
        return Err(Error::Invariant("no serial calls were made".into()));
    }
    Ok(tokens as f64 / calls as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_grid() {
        let t = tune_alpha(&[0.75], |_| Ok(1.3)).unwrap();
        assert_eq!(t.best_alpha, 0.75);
        assert_eq!(t.table, vec![(0.75, 1.3)]);
    }

    #[test]
    fn ties_go_to_smallest_alpha() {
        let t = tune_alpha(&[2.0, 0.5, 1.0], |_| Ok(1.5)).unwrap();
        assert_eq!(t.best_alpha, 0.5);
    }

    #[test]
    fn picks_maximum() {
        let t = tune_alpha(&DEFAULT_ALPHA_GRID, |a| Ok(2.0 - (a - 1.1f64).abs())).unwrap();
        assert_eq!(t.best_alpha, 1.1);
        assert_eq!(t.table.len(), 10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(tune_alpha(&[], |_| Ok(1.0)).is_err());
        assert!(tune_alpha(&[-1.0], |_| Ok(1.0)).is_err());
        assert!(tune_alpha(&[1.0], |_| Err(Error::Rescore("x".into()))).is_err());
    }
}
