use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const NORM_TOL: f64 = 1e-6;

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(dist: &[f64]) -> Result<f64> {
    if dist.is_empty() {
        return invalid("empty distribution");
    }
    if let Some(p) = dist.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return invalid(format!("probability {p} is not a finite non-negative number"));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > NORM_TOL {
        return invalid(format!("probabilities sum to {sum}, not 1"));
    }
    Ok(dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>().max(0.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyUnit {
    #[default]
    Nats,
    Bits,
}

impl EntropyUnit {
    pub fn from_nats(self, h: f64) -> f64 {
        match self {
            EntropyUnit::Nats => h,
            EntropyUnit::Bits => h / LN_2,
        }
    }
}

/// Largest `k` such that the mean entropies of heads `1..=k` never decrease.
pub fn h_max(means: &[f64]) -> usize {
    if means.is_empty() {
        return 0;
    }
    1 + means.windows(2).take_while(|w| w[0] <= w[1]).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadStats {
    /// `samples[i]` holds head `i + 1`'s entropy at every step, in nats.
    pub samples: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub h_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    /// 1-based head index.
    pub head: usize,
    /// Left edge of the bin.
    pub bin_edge: f64,
    /// Fraction of the head's samples in the bin; sums to 1 per head.
    pub density: f64,
}

impl HeadStats {
    /// Equal-width bins over `[0, max entropy]`, shared by all heads.
    pub fn histogram(&self, bins: usize, unit: EntropyUnit) -> Result<Vec<HistogramRow>> {
        if bins == 0 {
            return invalid("need at least one bin");
        }
        let top = self.samples.iter().flatten().copied().fold(0.0, f64::max);
        let top = unit.from_nats(top);
        let width = if top > 0.0 { top / bins as f64 } else { 1.0 };
        let mut rows = Vec::with_capacity(bins * self.samples.len());
        for (i, s) in self.samples.iter().enumerate() {
            let mut counts = vec![0usize; bins];
            for &h in s {
                let b = ((unit.from_nats(h) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            for (b, c) in counts.into_iter().enumerate() {
                rows.push(HistogramRow { head: i + 1, bin_edge: b as f64 * width, density: c as f64 / s.len() as f64 });
            }
        }
        Ok(rows)
    }
}

/// Per-head entropy statistics over a decode. Each item holds one step's
/// distributions, one per head.
pub fn head_entropy_profile<'a, I>(steps: I) -> Result<HeadStats>
where
    I: IntoIterator<Item = &'a [Vec<f64>]>,
{
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for (n, step) in steps.into_iter().enumerate() {
        if n == 0 {
            if step.is_empty() {
                return invalid("trace step has no heads");
            }
            samples = vec![Vec::new(); step.len()];
        } else if step.len() != samples.len() {
            return invalid(format!("step {n} has {} heads, expected {}", step.len(), samples.len()));
        }
        for (i, dist) in step.iter().enumerate() {
            samples[i].push(entropy(dist)?);
        }
    }
    if samples.is_empty() {
        return invalid("empty trace");
    }
    let means: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    let h_max = h_max(&means);
    Ok(HeadStats { samples, means, h_max })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation.
    pub r: f64,
}

/// Least-squares line through `(x, y)` pairs.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return invalid("need at least two points");
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return invalid("all x values are equal");
    }
    let slope = sxy / sxx;
    let r = if syy == 0.0 { 0.0 } else { sxy / (sxx * syy).sqrt() };
    Ok(LinearFit { slope, intercept: my - slope * mx, r })
}
