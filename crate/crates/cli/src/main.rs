//! `draftlat`: train n-gram models, run blockwise parallel decoding with
//! lattice draft refinement, and analyze the results.

mod analyze;
mod bench;
mod config;
mod decode;
mod exit;
mod serve;
mod setup;
mod synth;
mod train;
mod tune;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "draftlat", version, about = "Lattice draft refinement for blockwise parallel decoding")]
struct Cli {
    /// Worker threads for per-prompt work; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Estimate a Katz backoff model and write it as ARPA.
    TrainNgram(train::TrainArgs),
    /// Decode prompts and write a JSON report.
    Decode(config::RunArgs),
    /// Statistics over traces, reports and decodes.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeCmd),
    /// Pick the rescorer weight with the best block efficiency.
    TuneAlpha(tune::TuneArgs),
    /// Time global rescoring on random lattices.
    Bench(bench::BenchArgs),
    /// Write a synthetic corpus and prompts.
    Synth(synth::SynthArgs),
    /// Serve simulated drafter heads over stdin/stdout.
    ServeDrafter(serve::ServeArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DRAFTLAT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    let result = match &cli.command {
        Cmd::TrainNgram(a) => train::run(a),
        Cmd::Decode(a) => decode::run(a, cli.jobs),
        Cmd::Analyze(a) => analyze::run(a, cli.jobs),
        Cmd::TuneAlpha(a) => tune::run(a, cli.jobs),
        Cmd::Bench(a) => bench::run(a),
        Cmd::Synth(a) => synth::run(a),
        Cmd::ServeDrafter(a) => serve::run(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(exit::code(&e));
    }
}
