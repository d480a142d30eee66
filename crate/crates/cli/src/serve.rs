use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use clap::Args;
use draftlat::engine::external::serve;
use draftlat::engine::SimulatedDrafter;

use crate::config::DrafterConfig;
use crate::exit::usage;
use crate::setup::load_arpa;

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Base model the simulated heads are derived from, ARPA.
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub heads: usize,
    /// Context tokens seen by heads 2..h; 0 means the full context.
    #[arg(long, default_value_t = 1)]
    pub context_len: usize,
    #[arg(long, default_value_t = 0.25)]
    pub temperature_step: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub repeat_prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Answers line-JSON head requests on stdin with a simulated drafter.
pub fn run(a: &ServeArgs) -> anyhow::Result<()> {
    let base = load_arpa(&a.base)?;
    let dc = DrafterConfig {
        context_len: (a.context_len > 0).then_some(a.context_len),
        temperature_step: a.temperature_step,
        noise: a.noise,
        repeat_prob: a.repeat_prob,
        command: None,
    };
    let drafter = SimulatedDrafter::new(&base, dc.sim_config(a.heads, a.seed)).map_err(|e| usage(e.to_string()))?;
    let served = serve::<f64, _, _, _>(&drafter, BufReader::new(std::io::stdin()), BufWriter::new(std::io::stdout()))?;
    log::info!("served {served} requests");
    Ok(())
}
