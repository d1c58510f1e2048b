//! Every default the commands use. Flags override them.

use cvgate::gridsim::EnvelopeSpec;
use cvgate::optimizer::OptimizerConfig;

/// Random starts per optimization.
pub const STARTS: usize = 200;
/// Seed for all randomness unless `--seed` is given.
pub const SEED: u64 = 0;
/// Directory for record files.
pub const STORE_DIR: &str = "results";
/// Position grid points per mode and half-width.
pub const GRID_POINTS: usize = 64;
pub const GRID_HALF_WIDTH: f64 = 32.0;
/// Window margin and ramp width of ideal ancillas.
pub const ENVELOPE_MARGIN: f64 = 5.0;
pub const ENVELOPE_RAMP: f64 = 2.0;
/// Mean position and momentum of the default coherent input.
pub const INPUT_MEAN: (f64, f64) = (0.5, 0.3);
/// Sampled protocol runs logged by `simulate`.
pub const RUNS: usize = 5;
/// Fock cutoff, cubic strength and `lambda1` grid of `cubic-limit`.
pub const LIMIT_N: usize = 10;
pub const LIMIT_T: f64 = 0.1;
pub const LIMIT_LAMBDA1: &str = "1:0.05:0.05";

pub fn optimizer(starts: Option<usize>, seed: Option<u64>) -> OptimizerConfig {
    OptimizerConfig::default().with_starts(starts.unwrap_or(STARTS)).with_seed(seed.unwrap_or(SEED))
}

pub fn envelope(std: f64) -> EnvelopeSpec {
    EnvelopeSpec { std, margin: ENVELOPE_MARGIN, ramp: ENVELOPE_RAMP }
}
