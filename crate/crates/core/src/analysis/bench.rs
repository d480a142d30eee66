use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{build_lattice, SausageLattice};
use crate::ngram::NgramModel;
use crate::rescoring::global_rescore;
use crate::rng::{split, stream, StreamKey};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub steps: Vec<usize>,
    pub arcs: Vec<usize>,
    pub p: Vec<usize>,
    /// Timed calls per cell.
    pub runs: usize,
    /// Untimed calls before the timed ones.
    pub warmup: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { steps: vec![8], arcs: vec![16], p: vec![1, 16], runs: 100, warmup: 5, alpha: 1.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub steps: usize,
    pub arcs: usize,
    pub p: usize,
    pub runs: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
}

/// A lattice with `arcs` distinct tokens from `words` per step and
/// standard-normal logits.
pub fn random_lattice(
    steps: usize,
    arcs: usize,
    words: &[TokenId],
    seed: u64,
    prefix: &[TokenId],
) -> Result<SausageLattice<f64>> {
    if arcs == 0 || arcs > words.len() {
        return invalid(format!("cannot draw {arcs} distinct arcs from {} words", words.len()));
    }
    let mut rng = stream(seed, StreamKey::new(steps as u64).push(arcs as u64));
    let heads: Vec<Vec<(TokenId, f64)>> = (0..steps)
        .map(|_| {
            sample(&mut rng, words.len(), arcs)
                .into_iter()
                .map(|i| (words[i], rng.sample::<f64, _>(StandardNormal)))
                .collect()
        })
        .collect();
    build_lattice(&heads, arcs, prefix)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Wall-clock latency of global rescoring for every (steps, arcs, p) cell.
pub fn rescore_bench(cfg: &BenchConfig, model: Option<&NgramModel>) -> Result<Vec<BenchRow>> {
    if cfg.runs == 0 || cfg.steps.is_empty() || cfg.arcs.is_empty() || cfg.p.is_empty() {
        return invalid("bench needs at least one run and one value per grid axis");
    }
    let words: Vec<TokenId> = match model {
        Some(m) => m.vocab().ids().filter(|&t| t.index() >= Vocabulary::with_specials().len()).collect(),
        None => (0..*cfg.arcs.iter().max().expect("non-empty") as u32).map(TokenId).collect(),
    };
    let prefix: Vec<TokenId> = match model {
        Some(m) if !words.is_empty() => {
            let mut rng = stream(cfg.seed, StreamKey::new(0));
            (0..m.order().saturating_sub(1)).map(|_| words[rng.random_range(0..words.len())]).collect()
        }
        _ => Vec::new(),
    };
    let mut rows = Vec::new();
    for &steps in &cfg.steps {
        for &arcs in &cfg.arcs {
            for &p in &cfg.p {
                let mut times = Vec::with_capacity(cfg.runs);
                for run in 0..cfg.warmup + cfg.runs {
                    let lat = random_lattice(steps, arcs, &words, split(cfg.seed, run as u64), &prefix)?;
                    let start = Instant::now();
                    let out = global_rescore(&lat, model, cfg.alpha, p)?;
                    let elapsed = start.elapsed().as_secs_f64() * 1e3;
                    std::hint::black_box(out);
                    if run >= cfg.warmup {
                        times.push(elapsed);
                    }
                }
                let mean_ms = times.iter().sum::<f64>() / times.len() as f64;
                times.sort_by(f64::total_cmp);
                rows.push(BenchRow { steps, arcs, p, runs: cfg.runs, median_ms: median(&times), mean_ms });
            }
        }
    }
    Ok(rows)
}
