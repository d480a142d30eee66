use anyhow::Context;
use draftlat::engine::{bpd_decode_traced, DecodeConfig, DecodeTrace};
use draftlat::{Report, TokenId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunArgs, RunConfig};
use crate::exit::CheckFailed;
use crate::setup::{read_prompts, write_json, Models, Prompt, SCHEMA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub prompts: usize,
    pub total_tokens: usize,
    pub serial_calls: usize,
    /// Pooled over prompts: total tokens over total serial calls.
    pub block_efficiency: f64,
    /// Whether every output equals greedy decoding, when checked.
    pub fidelity: Option<bool>,
    pub unknown_tokens: usize,
    pub fallbacks: usize,
    pub checks_passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptResult {
    pub index: usize,
    pub prompt: Vec<TokenId>,
    pub unknown_tokens: usize,
    pub output_text: String,
    /// Why the post-run checks failed, if they did.
    pub check_error: Option<String>,
    pub report: Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeFile {
    pub schema: u32,
    pub config: RunConfig,
    pub summary: Summary,
    pub prompts: Vec<PromptResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub schema: u32,
    pub prompts: Vec<DecodeTrace<f64>>,
}

/// Runs `f` over `items` on `jobs` threads (0: one per core), keeping input order.
pub fn par_map<U, T, F>(jobs: usize, items: &[U], f: F) -> anyhow::Result<Vec<T>>
where
    U: Sync,
    T: Send,
    F: Fn(usize, &U) -> anyhow::Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect())
}

pub fn decode_config(cfg: &RunConfig) -> DecodeConfig {
    DecodeConfig { k: cfg.k, target_len: cfg.max_tokens, check_fidelity: cfg.check_fidelity }
}

/// Decodes every prompt of `cfg` and assembles the report.
pub fn decode_all(cfg: &RunConfig, jobs: usize) -> anyhow::Result<(DecodeFile, Option<TraceFile>)> {
    let models = Models::load(cfg)?;
    let prompts = read_prompts(cfg.prompts.as_deref().expect("validated"), models.base.vocab(), cfg.max_prompts)?;
    let drafter = models.drafter(cfg)?;
    let refinement = models.refinement(cfg, cfg.alpha);
    let dc = decode_config(cfg);
    let want_trace = cfg.output.trace.is_some();
    let runs = par_map(jobs, &prompts, |i, p: &Prompt| {
        bpd_decode_traced(&*drafter, &models.base, &p.tokens, &refinement, &dc, want_trace)
            .with_context(|| format!("decoding prompt {}", i + 1))
    })?;

    let vocab = models.base.vocab();
    let mut results = Vec::with_capacity(runs.len());
    let mut traces = Vec::new();
    for (i, ((report, trace), p)) in runs.into_iter().zip(&prompts).enumerate() {
        let check_error = report.check().err().map(|e| e.to_string());
        if let Some(e) = &check_error {
            log::error!("prompt {}: {e}", i + 1);
        }
        results.push(PromptResult {
            index: i,
            prompt: p.tokens.clone(),
            unknown_tokens: p.unknown,
            output_text: vocab.decode(&report.output)?.join(" "),
            check_error,
            report,
        });
        traces.extend(trace);
    }
    let total_tokens: usize = results.iter().map(|r| r.report.total_tokens).sum();
    let serial_calls: usize = results.iter().map(|r| r.report.serial_calls).sum();
    let summary = Summary {
        prompts: results.len(),
        total_tokens,
        serial_calls,
        block_efficiency: total_tokens as f64 / serial_calls as f64,
        fidelity: cfg.check_fidelity.then(|| results.iter().all(|r| r.report.fidelity == Some(true))),
        unknown_tokens: results.iter().map(|r| r.unknown_tokens).sum(),
        fallbacks: results.iter().map(|r| r.report.fallbacks).sum(),
        checks_passed: results.iter().all(|r| r.check_error.is_none()),
    };
    let file = DecodeFile { schema: SCHEMA, config: cfg.clone(), summary, prompts: results };
    let trace = want_trace.then_some(TraceFile { schema: SCHEMA, prompts: traces });
    Ok((file, trace))
}

pub fn run(args: &RunArgs, jobs: usize) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    let (file, trace) = decode_all(&cfg, jobs)?;
    let s = &file.summary;
    log::info!(
        "{} prompts, {} tokens in {} calls, block efficiency {:.4}",
        s.prompts,
        s.total_tokens,
        s.serial_calls,
        s.block_efficiency
    );
    write_json(cfg.output.report.as_deref(), &file)?;
    if let (Some(path), Some(trace)) = (&cfg.output.trace, &trace) {
        write_json(Some(path), trace)?;
    }
    if !file.summary.checks_passed {
        let failed = file.prompts.iter().filter(|r| r.check_error.is_some()).count();
        return Err(CheckFailed(format!("post-run checks failed on {failed} of {} prompts", file.prompts.len())).into());
    }
    Ok(())
}
