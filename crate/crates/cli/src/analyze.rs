use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Subcommand, ValueEnum};
use draftlat::analysis::{
    head_entropy_profile, oracle_curve, parameter_io_per_token, repetition_stats, winloss_paired, CostModelInput,
    EntropyUnit,
};
use draftlat::engine::{bpd_decode, paired_decode, Refinement};
use draftlat::{TokenId, Vocabulary};
use serde::Serialize;

use crate::config::{Mode, RunArgs};
use crate::decode::{decode_config, par_map, DecodeFile, TraceFile};
use crate::exit::usage;
use crate::setup::{open, parse_list, read_json, read_prompts, write_csv, write_json, Models, Prompt, SCHEMA};

#[derive(Subcommand, Debug)]
pub enum AnalyzeCmd {
    /// Per-head entropy histogram from a decode trace.
    Entropy(EntropyArgs),
    /// Consecutive-repetition statistics of drafts.
    Repetition(RepetitionArgs),
    /// Win/tie/loss of a refinement against vanilla drafts on the same lattices.
    Winloss(WinlossArgs),
    /// Oracle block efficiency for several lattice sizes.
    OracleCurve(OracleArgs),
    /// Parameter bytes read per generated token.
    CostModel(CostArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Unit {
    Nats,
    Bits,
}

#[derive(Args, Debug)]
pub struct EntropyArgs {
    /// Trace written by `decode --trace`.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, value_enum, default_value = "nats")]
    pub unit: Unit,
    /// Histogram CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-head means and h_max as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct RepetitionInput {
    /// Decode report; every step's selected draft is used.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// One draft per line, whitespace-separated tokens.
    #[arg(long)]
    pub drafts: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RepetitionArgs {
    #[command(flatten)]
    pub input: RepetitionInput,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WinlossArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Strictly increasing lattice sizes.
    #[arg(long, default_value = "1,2,4,8,16", value_parser = parse_list::<usize>)]
    pub ks: ::std::vec::Vec<usize>,
    /// Curve CSV; stdout when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    /// Parameter count.
    #[arg(long)]
    pub params: f64,
    /// Bytes per parameter.
    #[arg(long, default_value_t = 2.0)]
    pub bytes: f64,
    /// One or more block efficiencies, comma-separated.
    #[arg(long, value_parser = parse_list::<f64>)]
    pub block_efficiency: ::std::vec::Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: &AnalyzeCmd, jobs: usize) -> anyhow::Result<()> {
    match cmd {
        AnalyzeCmd::Entropy(a) => entropy(a),
        AnalyzeCmd::Repetition(a) => repetition(a),
        AnalyzeCmd::Winloss(a) => winloss(a, jobs),
        AnalyzeCmd::OracleCurve(a) => oracle(a, jobs),
        AnalyzeCmd::CostModel(a) => cost(a),
    }
}

#[derive(Serialize)]
struct EntropySummary {
    schema: u32,
    steps: usize,
    unit: EntropyUnit,
    means: Vec<f64>,
    h_max: usize,
}

fn entropy(a: &EntropyArgs) -> anyhow::Result<()> {
    let trace: TraceFile = read_json(&a.trace)?;
    let steps = trace.prompts.iter().flat_map(|t| &t.steps);
    let stats = head_entropy_profile(steps.clone().map(|s| s.head_probs.as_slice()))?;
    let unit = match a.unit {
        Unit::Nats => EntropyUnit::Nats,
        Unit::Bits => EntropyUnit::Bits,
    };
    write_csv(a.out.as_deref(), &stats.histogram(a.bins, unit).map_err(|e| usage(e.to_string()))?)?;
    if let Some(path) = &a.summary {
        let summary = EntropySummary {
            schema: SCHEMA,
            steps: steps.count(),
            unit,
            means: stats.means.iter().map(|&h| unit.from_nats(h)).collect(),
            h_max: stats.h_max,
        };
        write_json(Some(path), &summary)?;
    }
    Ok(())
}

fn repetition(a: &RepetitionArgs) -> anyhow::Result<()> {
    let drafts: Vec<Vec<TokenId>> = if let Some(path) = &a.input.report {
        let file: DecodeFile = read_json(path)?;
        file.prompts.iter().flat_map(|p| p.report.per_step.iter().map(|s| s.draft.tokens.clone())).collect()
    } else {
        let path = a.input.drafts.as_ref().expect("clap requires one input");
        let mut vocab = Vocabulary::with_specials();
        let mut out = Vec::new();
        for line in std::io::BufRead::lines(open(path)?) {
            let line = line.with_context(|| format!("reading {}", path.display()))?;
            if !line.trim().is_empty() {
                out.push(line.split_whitespace().map(|w| vocab.insert(w)).collect());
            }
        }
        out
    };
    let stats = repetition_stats(&drafts).map_err(|e| usage(e.to_string()))?;
    write_json(a.out.as_deref(), &stats)
}

#[derive(Serialize)]
struct WinlossFile {
    schema: u32,
    config: crate::config::RunConfig,
    report: draftlat::analysis::WinLossReport,
}

fn winloss(a: &WinlossArgs, jobs: usize) -> anyhow::Result<()> {
    let cfg = a.run.resolve()?;
    if cfg.mode == Mode::Vanilla {
        return Err(usage("win/loss compares a refinement with vanilla; choose another mode"));
    }
    let models = Models::load(&cfg)?;
    let prompts = read_prompts(cfg.prompts.as_deref().expect("validated"), models.base.vocab(), cfg.max_prompts)?;
    let drafter = models.drafter(&cfg)?;
    let candidate = models.refinement(&cfg, cfg.alpha);
    let dc = decode_config(&cfg);
    let steps = par_map(jobs, &prompts, |i, p: &Prompt| {
        paired_decode(&*drafter, &models.base, &p.tokens, &Refinement::Vanilla, &candidate, &dc)
            .with_context(|| format!("decoding prompt {}", i + 1))
    })?;
    let steps: Vec<_> = steps.into_iter().flatten().collect();
    let report = winloss_paired(&steps)?;
    let out = cfg.output.report.clone();
    write_json(out.as_deref(), &WinlossFile { schema: SCHEMA, config: cfg, report })
}

#[derive(Serialize)]
struct CurveRow {
    k: usize,
    block_efficiency: f64,
}

/// The curve replays the vanilla decode's contexts, so every k sees the same steps.
fn oracle(a: &OracleArgs, jobs: usize) -> anyhow::Result<()> {
    let cfg = a.run.resolve()?;
    if a.ks.is_empty() || a.ks[0] == 0 || a.ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("--ks must be positive and strictly increasing"));
    }
    let models = Models::load(&cfg)?;
    let prompts = read_prompts(cfg.prompts.as_deref().expect("validated"), models.base.vocab(), cfg.max_prompts)?;
    let drafter = models.drafter(&cfg)?;
    let mut dc = decode_config(&cfg);
    dc.k = *a.ks.last().expect("non-empty");
    dc.check_fidelity = false;
    let curves = par_map(jobs, &prompts, |i, p: &Prompt| {
        let report = bpd_decode(&*drafter, &models.base, &p.tokens, &Refinement::Vanilla, &dc)
            .with_context(|| format!("decoding prompt {}", i + 1))?;
        let curve = oracle_curve(&*drafter, &models.base, &p.tokens, &report, &a.ks)?;
        Ok((curve, report.serial_calls))
    })?;
    let calls: usize = curves.iter().map(|(_, c)| c).sum();
    let rows: Vec<CurveRow> = a
        .ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let accepted: f64 = curves.iter().map(|(c, n)| c[j].block_efficiency * *n as f64).sum();
            CurveRow { k, block_efficiency: accepted / calls as f64 }
        })
        .collect();
    write_csv(a.csv.as_deref(), &rows)
}

#[derive(Serialize)]
struct CostRow {
    n_params: f64,
    bytes_per_param: f64,
    block_efficiency: f64,
    gb_per_token: f64,
}

fn cost(a: &CostArgs) -> anyhow::Result<()> {
    if a.block_efficiency.is_empty() {
        return Err(usage("give at least one --block-efficiency"));
    }
    let rows = a
        .block_efficiency
        .iter()
        .map(|&b| {
            let input = CostModelInput { n_params: a.params, bytes_per_param: a.bytes, block_efficiency: b };
            let gb = parameter_io_per_token(&input).map_err(|e| usage(e.to_string()))?;
            Ok(CostRow { n_params: a.params, bytes_per_param: a.bytes, block_efficiency: b, gb_per_token: gb })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_csv(a.out.as_deref(), &rows)
}
