//! Batched sampling, sweeps, baseline comparisons and gradient-check
//! suites built from the library pieces.

mod ablation;
pub mod checks;
mod sampling;

pub use ablation::{
    ablate, ablation_csv, baseline_row, parse_sweep_values, AblationRow, SweepParam, ABLATION_HEADER,
};
pub use sampling::{
    compare, cond_for_seed, parse_samples_csv, run_samples, samples_csv, Comparison, SampleRecord,
    SAMPLES_HEADER,
};
