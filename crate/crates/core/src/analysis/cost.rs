use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModelInput {
    pub n_params: f64,
    pub bytes_per_param: f64,
    pub block_efficiency: f64,
}

/// Gigabytes of weights read per generated token: each serial call reads
/// every parameter once and yields `block_efficiency` tokens on average.
pub fn parameter_io_per_token(input: &CostModelInput) -> Result<f64> {
    let CostModelInput { n_params, bytes_per_param, block_efficiency } = *input;
    for (name, v) in [("parameter count", n_params), ("bytes per parameter", bytes_per_param), ("block efficiency", block_efficiency)] {
        if !(v.is_finite() && v > 0.0) {
            return invalid(format!("{name} must be positive, got {v}"));
        }
    }
    Ok(n_params * bytes_per_param / block_efficiency / 1e9)
}
