//! The predict / verify / accept loop and the model contracts it runs on.
//!
//! A [`BaseLm`] supplies the ground-truth greedy continuation. A [`Drafter`]
//! supplies one logit vector per head; head 1 must agree with the base
//! model. [`SimulatedDrafter`] derives degraded heads from a base model so
//! the whole pipeline runs without a neural network, and the line-JSON
//! adapter in [`external`] is where a real blockwise parallel LM attaches.

mod decode;
pub mod external;
mod simulated;
pub mod synthetic;
mod tune;

pub use decode::{
    bpd_decode, bpd_decode_traced, block_efficiency, paired_decode, verify_draft, DecodeConfig, DecodeReport,
    DecodeTrace, PairedStep, Refinement, StepOutcome, TraceStep,
};
pub use simulated::{SimConfig, SimulatedDrafter};
pub use tune::{evaluate_block_efficiency, tune_alpha, AlphaTuning, DEFAULT_ALPHA_GRID};

use std::f64::consts::LN_10;

use crate::error::Result;
use crate::ngram::NgramModel;
use crate::scalar::Scalar;
use crate::vocab::TokenId;

/// An autoregressive model decoded greedily.
pub trait BaseLm: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Next-token probabilities indexed by token id; sums to one.
    fn distribution(&self, context: &[TokenId]) -> Vec<f64>;

    /// Natural-log probabilities indexed by token id.
    fn log_distribution(&self, context: &[TokenId]) -> Vec<f64> {
        self.distribution(context).into_iter().map(f64::ln).collect()
    }

    /// Argmax of [`distribution`](BaseLm::distribution), lower id on ties.
    fn greedy_next(&self, context: &[TokenId]) -> TokenId {
        argmax(&self.distribution(context))
    }
}

impl<T: BaseLm + ?Sized> BaseLm for &T {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
        (**self).distribution(context)
    }
    fn log_distribution(&self, context: &[TokenId]) -> Vec<f64> {
        (**self).log_distribution(context)
    }
    fn greedy_next(&self, context: &[TokenId]) -> TokenId {
        (**self).greedy_next(context)
    }
}

impl<T: BaseLm + ?Sized> BaseLm for std::sync::Arc<T> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
        (**self).distribution(context)
    }
    fn log_distribution(&self, context: &[TokenId]) -> Vec<f64> {
        (**self).log_distribution(context)
    }
    fn greedy_next(&self, context: &[TokenId]) -> TokenId {
        (**self).greedy_next(context)
    }
}

impl BaseLm for NgramModel {
    fn vocab_size(&self) -> usize {
        self.vocab().len()
    }

    fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
        NgramModel::distribution(self, context)
    }

    fn log_distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let ctx = self.effective_context(context);
        (0..self.vocab().len() as u32).map(|w| self.log10_prob_raw(&ctx, w) * LN_10).collect()
    }

    // the argmax of the log scores, so a drafter head built from
    // log_distribution agrees with it bit for bit
    fn greedy_next(&self, context: &[TokenId]) -> TokenId {
        argmax(&self.log_distribution(context))
    }
}

/// Produces per-head logits for the next `h` positions.
pub trait Drafter<S: Scalar>: Send + Sync {
    fn heads(&self) -> usize;

    /// One list of `(token, logit)` per head. Head 1 scores the very next
    /// token and its argmax must be the base model's greedy token. `k` is a
    /// hint: implementations may return only the top `k` of each head.
    fn head_logits(&self, context: &[TokenId], k: usize) -> Result<Vec<Vec<(TokenId, S)>>>;
}

impl<S: Scalar, T: Drafter<S> + ?Sized> Drafter<S> for &T {
    fn heads(&self) -> usize {
        (**self).heads()
    }
    fn head_logits(&self, context: &[TokenId], k: usize) -> Result<Vec<Vec<(TokenId, S)>>> {
        (**self).head_logits(context, k)
    }
}

/// Index of the largest value, lower index on ties.
pub fn argmax(values: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    TokenId(best as u32)
}

/// Plain greedy decoding, one base-model call per token.
pub fn greedy_decode<B: BaseLm + ?Sized>(base: &B, prompt: &[TokenId], len: usize) -> Vec<TokenId> {
    let mut ctx = prompt.to_vec();
    for _ in 0..len {
        let g = base.greedy_next(&ctx);
        ctx.push(g);
    }
    ctx.split_off(prompt.len())
}
