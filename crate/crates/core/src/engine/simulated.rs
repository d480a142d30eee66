use rand::Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use super::{argmax, BaseLm, Drafter};
use crate::error::{invalid, Result};
use crate::rng::{stream, StreamKey};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

/// Log probabilities are clamped here before tempering, so that zero
/// probabilities stay finite.
pub const LOG_FLOOR: f64 = -30.0;

const NOISE_DOMAIN: u64 = 0x6e6f_6973;
const REPEAT_DOMAIN: u64 = 0x7265_7074;

/// How each simulated head is degraded. All vectors have one entry per head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Softmax temperature per head; the first is 1 and they never decrease.
    pub temperatures: Vec<f64>,
    /// Tokens of context each head sees; `None` is the full context.
    pub context_lens: Vec<Option<usize>>,
    /// Scale of the Gumbel noise added to each head's logits.
    pub noise: Vec<f64>,
    /// Chance that a head copies the previous head's top token.
    #[serde(default)]
    pub repeat_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    /// Every head sees the base model exactly.
    pub fn exact(heads: usize) -> Self {
        SimConfig {
            temperatures: vec![1.0; heads],
            context_lens: vec![None; heads],
            noise: vec![0.0; heads],
            repeat_prob: 0.0,
            seed: 0,
        }
    }

    /// Heads after the first see `context_len` tokens, run hotter the further
    /// out they are, and carry noise of scale `noise`.
    pub fn degraded(heads: usize, context_len: usize, temperature_step: f64, noise: f64, seed: u64) -> Self {
        SimConfig {
            temperatures: (0..heads).map(|j| 1.0 + temperature_step * j as f64).collect(),
            context_lens: (0..heads).map(|j| if j == 0 { None } else { Some(context_len) }).collect(),
            noise: (0..heads).map(|j| if j == 0 { 0.0 } else { noise }).collect(),
            repeat_prob: 0.0,
            seed,
        }
    }

    pub fn heads(&self) -> usize {
        self.temperatures.len()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.temperatures.len();
        if h == 0 {
            return invalid("at least one head is required");
        }
        if self.context_lens.len() != h || self.noise.len() != h {
            return invalid(format!(
                "{h} temperatures but {} context lengths and {} noise scales",
                self.context_lens.len(),
                self.noise.len()
            ));
        }
        if self.temperatures[0] != 1.0 || self.context_lens[0].is_some() || self.noise[0] != 0.0 {
            return invalid("head 1 must be exact: temperature 1, full context, no noise");
        }
        if self.temperatures.iter().any(|t| !(t.is_finite() && *t >= 1.0)) {
            return invalid("temperatures must be finite and at least 1");
        }
        if self.temperatures.windows(2).any(|w| w[1] < w[0]) {
            return invalid("temperatures must not decrease across heads");
        }
        if self.noise.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return invalid("noise scales must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.repeat_prob) {
            return invalid("repeat probability must lie in [0, 1]");
        }
        Ok(())
    }
}

/// A drafter whose heads are tempered, context-truncated and noised copies
/// of a base model.
///
/// Head `j` predicts position `t + j` from the context extended with the
/// base model's own greedy tokens for positions `t + 1 .. t + j - 1`, cut to
/// the head's context length. Noise is drawn from a stream keyed by the
/// context and head, so equal contexts always give equal logits.
pub struct SimulatedDrafter<B> {
    base: B,
    cfg: SimConfig,
}

impl<B: BaseLm> SimulatedDrafter<B> {
    pub fn new(base: B, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(SimulatedDrafter { base, cfg })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn base(&self) -> &B {
        &self.base
    }

    /// Logits of every head over the whole vocabulary, in `f64`.
    pub fn dense_logits(&self, context: &[TokenId]) -> Vec<Vec<f64>> {
        let h = self.cfg.heads();
        let mut ext = context.to_vec();
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(h);
        for j in 0..h {
            let visible = match self.cfg.context_lens[j] {
                Some(l) => &ext[ext.len() - l.min(ext.len())..],
                None => &ext[..],
            };
            let tau = self.cfg.temperatures[j];
            let mut z: Vec<f64> =
                self.base.log_distribution(visible).into_iter().map(|lp| lp.max(LOG_FLOOR) / tau).collect();
            let scale = self.cfg.noise[j];
            if scale > 0.0 {
                let key = StreamKey::new(NOISE_DOMAIN).push_tokens(context).push(j as u64);
                let mut rng = stream(self.cfg.seed, key);
                let g = Gumbel::new(0.0, scale).expect("scale validated");
                for v in z.iter_mut() {
                    *v += g.sample(&mut rng);
                }
            }
            if j > 0 && self.cfg.repeat_prob > 0.0 {
                let key = StreamKey::new(REPEAT_DOMAIN).push_tokens(context).push(j as u64);
                if stream(self.cfg.seed, key).random::<f64>() < self.cfg.repeat_prob {
                    let prev = argmax(&out[j - 1]).index();
                    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    z[prev] = max + 1.0;
                }
            }
            out.push(z);
            if j + 1 < h {
                let g = self.base.greedy_next(&ext);
                ext.push(g);
            }
        }
        out
    }
}

impl<S: Scalar, B: BaseLm> Drafter<S> for SimulatedDrafter<B> {
    fn heads(&self) -> usize {
        self.cfg.heads()
    }

    fn head_logits(&self, context: &[TokenId], _k: usize) -> Result<Vec<Vec<(TokenId, S)>>> {
        Ok(self
            .dense_logits(context)
            .into_iter()
            .map(|z| z.into_iter().enumerate().map(|(i, v)| (TokenId(i as u32), S::from_f64_lossy(v))).collect())
            .collect())
    }
}
