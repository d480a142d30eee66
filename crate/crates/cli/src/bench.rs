use std::path::PathBuf;

use clap::Args;
use draftlat::analysis::{rescore_bench, BenchConfig};

use crate::exit::usage;
use crate::setup::{load_arpa, parse_list, write_csv};

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Lattice lengths, comma-separated.
    #[arg(long, default_value = "8", value_parser = parse_list::<usize>)]
    pub steps_grid: ::std::vec::Vec<usize>,
    /// Arcs per step, comma-separated.
    #[arg(long, default_value = "16", value_parser = parse_list::<usize>)]
    pub arcs_grid: ::std::vec::Vec<usize>,
    #[arg(long, default_value = "1,16", value_parser = parse_list::<usize>)]
    pub p_grid: ::std::vec::Vec<usize>,
    /// ARPA model to rescore with; lattice scores only when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Untimed runs before each measurement.
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Latency CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: &BenchArgs) -> anyhow::Result<()> {
    let model = a.model.as_deref().map(load_arpa).transpose()?;
    let cfg = BenchConfig {
        steps: a.steps_grid.clone(),
        arcs: a.arcs_grid.clone(),
        p: a.p_grid.clone(),
        runs: a.runs,
        warmup: a.warmup,
        alpha: a.alpha,
        seed: a.seed,
    };
    let rows = rescore_bench(&cfg, model.as_ref()).map_err(|e| usage(e.to_string()))?;
    write_csv(a.out.as_deref(), &rows)
}
