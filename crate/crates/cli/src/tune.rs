use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use draftlat::engine::{bpd_decode, tune_alpha, DEFAULT_ALPHA_GRID};
use serde::Serialize;

use crate::config::{Mode, RunArgs, RunConfig};
use crate::decode::{decode_config, par_map};
use crate::exit::usage;
use crate::setup::{parse_list, read_prompts, write_csv, write_json, Models, Prompt, SCHEMA};

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Candidate alphas, comma-separated.
    #[arg(long, value_parser = parse_list::<f64>)]
    pub grid: Option<::std::vec::Vec<f64>>,
    /// Per-alpha table as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Serialize)]
struct Row {
    alpha: f64,
    block_efficiency: f64,
}

#[derive(Serialize)]
struct TuneFile {
    schema: u32,
    config: RunConfig,
    grid: Vec<f64>,
    best_alpha: f64,
    best_block_efficiency: f64,
    table: Vec<Row>,
}

/// Block efficiency for every grid value, pooled over the prompts; ties go to the smallest alpha.
pub fn run(a: &TuneArgs, jobs: usize) -> anyhow::Result<()> {
    let cfg = a.run.resolve()?;
    if !matches!(cfg.mode, Mode::Local | Mode::Ngram | Mode::Pbest) {
        return Err(usage("tuning needs a mode that uses alpha: local, ngram or pbest"));
    }
    let grid = a.grid.clone().unwrap_or_else(|| DEFAULT_ALPHA_GRID.to_vec());
    if grid.is_empty() {
        return Err(usage("--grid is empty"));
    }
    let models = Models::load(&cfg)?;
    let prompts = read_prompts(cfg.prompts.as_deref().expect("validated"), models.base.vocab(), cfg.max_prompts)?;
    let drafter = models.drafter(&cfg)?;
    let mut dc = decode_config(&cfg);
    dc.check_fidelity = false;
    let mut pooled = Vec::with_capacity(grid.len());
    for &alpha in &grid {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(usage(format!("grid value {alpha} is not a finite non-negative number")));
        }
        let refinement = models.refinement(&cfg, alpha);
        let runs = par_map(jobs, &prompts, |i, p: &Prompt| {
            let r = bpd_decode(&*drafter, &models.base, &p.tokens, &refinement, &dc)
                .with_context(|| format!("decoding prompt {} at alpha {alpha}", i + 1))?;
            Ok((r.total_tokens, r.serial_calls))
        })?;
        let (tokens, calls) = runs.iter().fold((0, 0), |(t, c), r| (t + r.0, c + r.1));
        pooled.push(tokens as f64 / calls as f64);
    }
    let mut values = pooled.iter();
    let tuning = tune_alpha(&grid, |_| Ok(*values.next().expect("one value per grid entry")))?;
    log::info!("best alpha {} with block efficiency {:.4}", tuning.best_alpha, tuning.best_block_efficiency);
    let table: Vec<Row> = tuning.table.iter().map(|&(alpha, block_efficiency)| Row { alpha, block_efficiency }).collect();
    if let Some(path) = &a.table {
        write_csv(Some(path), &table)?;
    }
    let out = cfg.output.report.clone();
    let file = TuneFile {
        schema: SCHEMA,
        config: cfg,
        grid,
        best_alpha: tuning.best_alpha,
        best_block_efficiency: tuning.best_block_efficiency,
        table,
    };
    write_json(out.as_deref(), &file)
}
