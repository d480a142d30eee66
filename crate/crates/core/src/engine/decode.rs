use serde::{Deserialize, Serialize};

use super::{greedy_decode, BaseLm, Drafter};
use crate::error::{invalid, Error, Result};
use crate::lattice::{build_lattice, oracle_path, SausageLattice};
use crate::ngram::NgramModel;
use crate::rescoring::{global_rescore, local_rescore_with, DraftCandidate, LocalConditioning, LocalScorer};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Arcs kept per lattice step.
    pub k: usize,
    /// Tokens to produce after the prompt.
    pub target_len: usize,
    /// Re-decode greedily at the end and compare outputs.
    pub check_fidelity: bool,
}

impl DecodeConfig {
    pub fn new(k: usize, target_len: usize) -> Self {
        DecodeConfig { k, target_len, check_fidelity: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return invalid("k must be at least 1");
        }
        if self.target_len == 0 {
            return invalid("target length must be at least 1");
        }
        Ok(())
    }
}

/// How the draft is chosen from each step's lattice.
pub enum Refinement<'a, S: Scalar> {
    /// Argmax of every head.
    Vanilla,
    Local { scorer: &'a dyn LocalScorer<S>, alpha: S, conditioning: LocalConditioning },
    /// p-best global rescoring; `model: None` ranks by lattice score alone.
    Global { model: Option<&'a NgramModel>, alpha: S, p: usize },
    /// The lattice path with the longest accepted prefix, found by
    /// consulting the base model. An upper bound, not a decoder.
    Oracle,
}

impl<S: Scalar> Clone for Refinement<'_, S> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<S: Scalar> Copy for Refinement<'_, S> {}

impl<S: Scalar> Refinement<'_, S> {
    pub fn name(&self) -> &'static str {
        match self {
            Refinement::Vanilla => "vanilla",
            Refinement::Local { .. } => "local",
            Refinement::Global { model: Some(_), .. } => "global",
            Refinement::Global { model: None, .. } => "global-no-ngram",
            Refinement::Oracle => "oracle",
        }
    }

    fn validate(&self) -> Result<()> {
        let alpha = match self {
            Refinement::Local { alpha, .. } => *alpha,
            Refinement::Global { alpha, p, .. } => {
                if *p == 0 {
                    return invalid("p must be at least 1");
                }
                *alpha
            }
            _ => S::zero(),
        };
        if !(alpha >= S::zero()) || !alpha.is_finite() {
            return invalid(format!("alpha must be a finite non-negative number, got {alpha}"));
        }
        Ok(())
    }
}

/// What one serial call produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct StepOutcome<S> {
    /// Tokens already produced before this call.
    pub position: usize,
    /// Tokens appended: `match_prefix_len + 1`.
    pub accepted: usize,
    /// Draft positions 2..h that matched the greedy continuation.
    pub match_prefix_len: usize,
    /// The selected draft.
    pub draft: DraftCandidate<S>,
    /// Index of the selected draft in the candidate list.
    pub draft_rank: usize,
    pub candidates: usize,
    /// Match length of the top-ranked candidate alone.
    pub first_candidate_match: usize,
    /// Draft positions checked against the base model, over all candidates.
    pub positions_verified: usize,
    /// Refinement failed and the vanilla draft was used instead.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DecodeReport<S> {
    pub heads: usize,
    pub k: usize,
    pub prompt_len: usize,
    pub total_tokens: usize,
    pub serial_calls: usize,
    pub block_efficiency: f64,
    pub positions_verified: usize,
    pub fallbacks: usize,
    /// Whether the output equals an independent greedy decode, when checked.
    pub fidelity: Option<bool>,
    /// Produced tokens, truncated to the target length.
    pub output: Vec<TokenId>,
    pub per_step: Vec<StepOutcome<S>>,
}

impl<S: Scalar> DecodeReport<S> {
    /// Checks the accounting identities and bounds.
    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invariant(m));
        if self.serial_calls != self.per_step.len() {
            return fail(format!("{} calls but {} steps", self.serial_calls, self.per_step.len()));
        }
        let mut total = 0;
        for (i, s) in self.per_step.iter().enumerate() {
            if s.accepted != s.match_prefix_len + 1 || s.accepted > self.heads {
                return fail(format!("step {i}: accepted {} with match {}", s.accepted, s.match_prefix_len));
            }
            if s.position != total {
                return fail(format!("step {i} starts at {} but {} tokens were produced", s.position, total));
            }
            total += s.accepted;
        }
        if total != self.total_tokens {
            return fail(format!("steps accept {total} tokens, report says {}", self.total_tokens));
        }
        let b = self.block_efficiency;
        if !(1.0..=self.heads as f64).contains(&b) {
            return fail(format!("block efficiency {b} outside [1, {}]", self.heads));
        }
        if self.fidelity == Some(false) {
            return fail("output differs from greedy decoding".into());
        }
        Ok(())
    }
}

/// Per-step data for the analysis module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TraceStep<S> {
    pub position: usize,
    /// The top-k lattice before the first step is pinned, without prefix.
    pub lattice: SausageLattice<S>,
    /// Softmax of each head's logits over the support it returned.
    pub head_probs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DecodeTrace<S> {
    pub steps: Vec<TraceStep<S>>,
}

/// Two refinements evaluated on the same lattice; the stream follows `reference`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PairedStep<S> {
    pub reference: StepOutcome<S>,
    pub candidate: StepOutcome<S>,
}

pub fn block_efficiency<S: Scalar>(report: &DecodeReport<S>) -> f64 {
    report.total_tokens as f64 / report.serial_calls as f64
}

/// Number of leading `draft` tokens that follow the greedy continuation of
/// `prefix`. `prefix` already ends with the first (always correct) token.
pub fn verify_draft<B: BaseLm + ?Sized>(base: &B, prefix: &[TokenId], draft: &[TokenId]) -> usize {
    let mut ctx = prefix.to_vec();
    for (m, &t) in draft.iter().enumerate() {
        if base.greedy_next(&ctx) != t {
            return m;
        }
        ctx.push(t);
    }
    draft.len()
}

/// The base model's greedy continuation, computed as far as anyone asks.
struct Continuation<'a, B: ?Sized> {
    base: &'a B,
    ctx: Vec<TokenId>,
    tokens: Vec<TokenId>,
}

impl<'a, B: BaseLm + ?Sized> Continuation<'a, B> {
    fn new(base: &'a B, context: &[TokenId]) -> Self {
        Continuation { base, ctx: context.to_vec(), tokens: Vec::new() }
    }

    fn get(&mut self, j: usize) -> TokenId {
        while self.tokens.len() <= j {
            let g = self.base.greedy_next(&self.ctx);
            self.ctx.push(g);
            self.tokens.push(g);
        }
        self.tokens[j]
    }

    fn matched(&mut self, draft: &[TokenId]) -> usize {
        (1..draft.len()).take_while(|&j| draft[j] == self.get(j)).count()
    }
}

struct Prepared<S> {
    lattice: SausageLattice<S>,
    trace: Option<TraceStep<S>>,
}

fn softmax<S: Scalar>(head: &[(TokenId, S)]) -> Vec<f64> {
    let vals: Vec<f64> = head.iter().map(|(_, z)| z.to_f64_lossy()).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = vals.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn prepare<S, D, B>(
    drafter: &D,
    cont: &mut Continuation<'_, B>,
    context: &[TokenId],
    position: usize,
    k: usize,
    trace: bool,
) -> Result<Prepared<S>>
where
    S: Scalar,
    D: Drafter<S> + ?Sized,
    B: BaseLm + ?Sized,
{
    let heads = drafter.head_logits(context, k)?;
    if heads.len() != drafter.heads() {
        return Err(Error::Protocol(format!("drafter declared {} heads but returned {}", drafter.heads(), heads.len())));
    }
    let full = build_lattice(&heads, k, context)?;
    let g1 = cont.get(0);
    let top = full.step(0)[0].token;
    if top != g1 {
        return Err(Error::Config(format!(
            "head 1 argmax {top} differs from the base model's greedy token {g1} after {position} generated tokens"
        )));
    }
    let trace = trace.then(|| TraceStep {
        position,
        lattice: SausageLattice::from_steps(full.steps().to_vec(), Vec::new()).expect("steps already validated"),
        head_probs: heads.iter().map(|h| softmax(h)).collect(),
    });
    Ok(Prepared { lattice: full.pin_first_step(), trace })
}

fn evaluate<S, B>(
    refinement: &Refinement<'_, S>,
    lat: &SausageLattice<S>,
    cont: &mut Continuation<'_, B>,
    position: usize,
) -> Result<StepOutcome<S>>
where
    S: Scalar,
    B: BaseLm + ?Sized,
{
    let mut fallback = false;
    let cands = match refinement {
        Refinement::Vanilla => vec![DraftCandidate::vanilla(lat)],
        Refinement::Local { scorer, alpha, conditioning } => {
            match local_rescore_with(lat, *scorer, *alpha, *conditioning) {
                Ok(d) => vec![d],
                Err(e) => {
                    log::warn!("local rescoring failed at position {position}, using the vanilla draft: {e}");
                    fallback = true;
                    vec![DraftCandidate::vanilla(lat)]
                }
            }
        }
        Refinement::Global { model, alpha, p } => match global_rescore(lat, *model, *alpha, *p) {
            Ok(c) if !c.is_empty() => c,
            Ok(_) => return Err(Error::Invariant("global rescoring returned no drafts".into())),
            Err(e) => {
                log::warn!("global rescoring failed at position {position}, using the vanilla draft: {e}");
                fallback = true;
                vec![DraftCandidate::vanilla(lat)]
            }
        },
        Refinement::Oracle => {
            let (_, path) = oracle_path(lat, cont.base, lat.prefix());
            let score = lat.path_score(&path).expect("oracle path lies on the lattice");
            vec![DraftCandidate::new(path, score, S::zero(), S::zero())]
        }
    };
    let h = lat.len();
    let mut best = 0;
    let mut best_m = 0;
    let mut first = 0;
    for (rank, c) in cands.iter().enumerate() {
        let m = cont.matched(&c.tokens);
        if rank == 0 {
            first = m;
            best_m = m;
        } else if m > best_m {
            best = rank;
            best_m = m;
        }
    }
    Ok(StepOutcome {
        position,
        accepted: best_m + 1,
        match_prefix_len: best_m,
        draft: cands[best].clone(),
        draft_rank: best,
        candidates: cands.len(),
        first_candidate_match: first,
        positions_verified: cands.len() * (h - 1),
        fallback,
    })
}

fn check_setup<S: Scalar, D: Drafter<S> + ?Sized>(drafter: &D, cfg: &DecodeConfig) -> Result<()> {
    cfg.validate()?;
    if drafter.heads() == 0 {
        return Err(Error::Config("drafter has no heads".into()));
    }
    Ok(())
}

/// Blockwise parallel decoding of `cfg.target_len` tokens after `prompt`.
pub fn bpd_decode<S, D, B>(
    drafter: &D,
    base: &B,
    prompt: &[TokenId],
    refinement: &Refinement<'_, S>,
    cfg: &DecodeConfig,
) -> Result<DecodeReport<S>>
where
    S: Scalar,
    D: Drafter<S> + ?Sized,
    B: BaseLm + ?Sized,
{
    bpd_decode_traced(drafter, base, prompt, refinement, cfg, false).map(|(r, _)| r)
}

/// [`bpd_decode`], optionally recording each step's lattice and head distributions.
pub fn bpd_decode_traced<S, D, B>(
    drafter: &D,
    base: &B,
    prompt: &[TokenId],
    refinement: &Refinement<'_, S>,
    cfg: &DecodeConfig,
    trace: bool,
) -> Result<(DecodeReport<S>, Option<DecodeTrace<S>>)>
where
    S: Scalar,
    D: Drafter<S> + ?Sized,
    B: BaseLm + ?Sized,
{
    check_setup(drafter, cfg)?;
    refinement.validate()?;
    let h = drafter.heads();
    let mut ctx = prompt.to_vec();
    let mut per_step = Vec::new();
    let mut steps = trace.then(Vec::new);
    let mut produced = 0;
    while produced < cfg.target_len {
        let mut cont = Continuation::new(base, &ctx);
        let prep = prepare(drafter, &mut cont, &ctx, produced, cfg.k, trace)?;
        let outcome = evaluate(refinement, &prep.lattice, &mut cont, produced)?;
        ctx.extend_from_slice(&cont.tokens[..outcome.accepted]);
        produced += outcome.accepted;
        if let (Some(steps), Some(t)) = (steps.as_mut(), prep.trace) {
            steps.push(t);
        }
        per_step.push(outcome);
    }
    let mut output = ctx.split_off(prompt.len());
    output.truncate(cfg.target_len);
    let fidelity = cfg.check_fidelity.then(|| greedy_decode(base, prompt, output.len()) == output);
    let report = DecodeReport {
        heads: h,
        k: cfg.k,
        prompt_len: prompt.len(),
        total_tokens: produced,
        serial_calls: per_step.len(),
        block_efficiency: produced as f64 / per_step.len() as f64,
        positions_verified: per_step.iter().map(|s| s.positions_verified).sum(),
        fallbacks: per_step.iter().filter(|s| s.fallback).count(),
        fidelity,
        output,
        per_step,
    };
    Ok((report, steps.map(|steps| DecodeTrace { steps })))
}

/// Runs `reference` and, on every one of its lattices, also `candidate`.
///
/// Both outcomes of a step see the same context and lattice, which is what
/// a win/tie/loss comparison needs.
pub fn paired_decode<S, D, B>(
    drafter: &D,
    base: &B,
    prompt: &[TokenId],
    reference: &Refinement<'_, S>,
    candidate: &Refinement<'_, S>,
    cfg: &DecodeConfig,
) -> Result<Vec<PairedStep<S>>>
where
    S: Scalar,
    D: Drafter<S> + ?Sized,
    B: BaseLm + ?Sized,
{
    check_setup(drafter, cfg)?;
    reference.validate()?;
    candidate.validate()?;
    let mut ctx = prompt.to_vec();
    let mut out = Vec::new();
    let mut produced = 0;
    while produced < cfg.target_len {
        let mut cont = Continuation::new(base, &ctx);
        let prep = prepare(drafter, &mut cont, &ctx, produced, cfg.k, false)?;
        let r = evaluate(reference, &prep.lattice, &mut cont, produced)?;
        let c = evaluate(candidate, &prep.lattice, &mut cont, produced)?;
        ctx.extend_from_slice(&cont.tokens[..r.accepted]);
        produced += r.accepted;
        out.push(PairedStep { reference: r, candidate: c });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Base model over `v` tokens that deterministically continues with
    /// `(last + 1) % v`.
    struct Counter(u32);

    impl BaseLm for Counter {
        fn vocab_size(&self) -> usize {
            self.0 as usize
        }
        fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
            let next = context.last().map_or(0, |t| (t.0 + 1) % self.0);
            (0..self.0).map(|i| if i == next { 1.0 } else { 0.0 }).collect()
        }
    }

    /// Head j predicts the greedy token if `right[j]`, else the token after it,
    /// with the greedy token as runner-up.
    struct Scripted {
        v: u32,
        right: Vec<bool>,
    }

    impl Drafter<f64> for Scripted {
        fn heads(&self) -> usize {
            self.right.len()
        }
        fn head_logits(&self, context: &[TokenId], _k: usize) -> Result<Vec<Vec<(TokenId, f64)>>> {
            let last = context.last().map_or(self.v - 1, |t| t.0);
            Ok(self
                .right
                .iter()
                .enumerate()
                .map(|(j, &ok)| {
                    let correct = (last + 1 + j as u32) % self.v;
                    let target = (correct + u32::from(!ok)) % self.v;
                    let z = |t: u32| if t == target { 1.0 } else if t == correct { 0.5 } else { 0.0 };
                    (0..self.v).map(|t| (TokenId(t), z(t))).collect()
                })
                .collect())
        }
    }

    #[test]
    fn always_wrong_heads_accept_one() {
        let d = Scripted { v: 10, right: vec![true, false, false, false] };
        let r = bpd_decode(&d, &Counter(10), &[TokenId(0)], &Refinement::Vanilla, &DecodeConfig::new(1, 7)).unwrap();
        assert_eq!(r.block_efficiency, 1.0);
        assert_eq!(r.serial_calls, 7);
        r.check().unwrap();
    }

    #[test]
    fn perfect_heads_accept_h() {
        let d = Scripted { v: 10, right: vec![true; 4] };
        let r = bpd_decode(&d, &Counter(10), &[TokenId(0)], &Refinement::Vanilla, &DecodeConfig::new(1, 12)).unwrap();
        assert_eq!(r.block_efficiency, 4.0);
        assert_eq!(r.output, (1..=12).map(|i| TokenId(i % 10)).collect::<Vec<_>>());
        assert_eq!(r.fidelity, Some(true));
    }

    #[test]
    fn overshoot_counts_the_full_call() {
        let d = Scripted { v: 10, right: vec![true; 4] };
        let r = bpd_decode(&d, &Counter(10), &[TokenId(0)], &Refinement::Vanilla, &DecodeConfig::new(1, 5)).unwrap();
        assert_eq!(r.serial_calls, 2);
        assert_eq!(r.total_tokens, 8);
        assert_eq!(r.output.len(), 5);
    }

    #[test]
    fn head_one_mismatch_is_a_config_error() {
        let d = Scripted { v: 10, right: vec![false, true] };
        let err = bpd_decode(&d, &Counter(10), &[TokenId(0)], &Refinement::Vanilla, &DecodeConfig::new(1, 3));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn verify_draft_counts_leading_matches() {
        let base = Counter(10);
        let prefix = [TokenId(3), TokenId(4)];
        assert_eq!(verify_draft(&base, &prefix, &[TokenId(5), TokenId(6), TokenId(9)]), 2);
        assert_eq!(verify_draft(&base, &prefix, &[TokenId(7)]), 0);
        assert_eq!(verify_draft(&base, &prefix, &[TokenId(5), TokenId(6)]), 2);
    }

    #[test]
    fn wider_lattice_lets_oracle_recover() {
        let d = Scripted { v: 10, right: vec![true, false, false] };
        let cfg = DecodeConfig::new(2, 9);
        let oracle = bpd_decode(&d, &Counter(10), &[TokenId(0)], &Refinement::Oracle, &cfg).unwrap();
        // the greedy token is the runner-up of every wrong head
        assert_eq!(oracle.block_efficiency, 3.0);
        let vanilla = bpd_decode(&d, &Counter(10), &[TokenId(0)], &Refinement::Vanilla, &cfg).unwrap();
        assert_eq!(vanilla.block_efficiency, 1.0);
        assert_eq!(oracle.output, vanilla.output);
    }

    #[test]
    fn multi_draft_picks_longest_match() {
        let d = Scripted { v: 10, right: vec![true, false, false] };
        let cfg = DecodeConfig::new(2, 9);
        let g = Refinement::Global { model: None, alpha: 0.0, p: 4 };
        let r = bpd_decode(&d, &Counter(10), &[TokenId(0)], &g, &cfg).unwrap();
        assert_eq!(r.block_efficiency, 3.0);
        for s in &r.per_step {
            assert!(s.match_prefix_len >= s.first_candidate_match);
            assert_eq!(s.positions_verified, 4 * 2);
        }
    }

    #[test]
    fn block_efficiency_arithmetic() {
        let mut r = DecodeReport::<f64> {
            heads: 9,
            k: 1,
            prompt_len: 0,
            total_tokens: 312,
            serial_calls: 100,
            block_efficiency: 0.0,
            positions_verified: 0,
            fallbacks: 0,
            fidelity: None,
            output: vec![],
            per_step: vec![],
        };
        assert!((block_efficiency(&r) - 3.12).abs() < 1e-12);
        r.total_tokens = 90;
        r.serial_calls = 10;
        assert_eq!(block_efficiency(&r), 9.0);
    }

    #[test]
    fn paired_steps_share_positions() {
        let d = Scripted { v: 10, right: vec![true, false, true] };
        let cfg = DecodeConfig::new(2, 10);
        let steps = paired_decode(&d, &Counter(10), &[TokenId(0)], &Refinement::Vanilla, &Refinement::Oracle, &cfg).unwrap();
        let mut pos = 0;
        for s in &steps {
            assert_eq!(s.reference.position, pos);
            assert_eq!(s.candidate.position, pos);
            assert!(s.candidate.accepted >= s.reference.accepted);
            pos += s.reference.accepted;
        }
    }
}
