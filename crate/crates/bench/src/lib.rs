//! Benchmark fixtures for the simulator.

use dcc_core::{DccVariant, DensityClass, RunConfig};

/// A short run of the given scenario: long enough to reach steady state,
/// short enough to iterate.
pub fn short_run(variant: DccVariant, density: DensityClass, seconds: f64) -> RunConfig {
    RunConfig {
        variant,
        density,
        sim_duration_s: seconds,
        warmup_s: 1.0,
        ..RunConfig::default()
    }
}
