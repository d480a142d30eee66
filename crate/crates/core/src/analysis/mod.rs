//! Measurements around a decode: head entropies, draft repetition,
//! win/tie/loss attribution, oracle headroom, parameter I/O and rescoring
//! latency.

mod bench;
mod cost;
mod entropy;
mod oracle;
mod repetition;
mod winloss;

pub use bench::{random_lattice, rescore_bench, BenchConfig, BenchRow};
pub use cost::{parameter_io_per_token, CostModelInput};
pub use entropy::{entropy, h_max, head_entropy_profile, linear_fit, EntropyUnit, HeadStats, HistogramRow, LinearFit};
pub use oracle::{oracle_curve, OraclePoint};
pub use repetition::{has_adjacent_repeat, longest_run, repetition_stats, RepetitionStats};
pub use winloss::{winloss, winloss_paired, Outcome, WinLossReport};
