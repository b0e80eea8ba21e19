//! Flicker and motion proxies, diagonal-variability statistics and the
//! coherent-versus-incoherent separation study.

mod report;
mod stats;
mod variability;
mod video;

pub use report::{MetricReport, AGGREGATE};
pub use stats::{binomial_upper_tail, mean, median, separation_auroc, sign_test, std_dev, SignTest};
pub use variability::{probe_clip, probe_noise, variability_stats, VariabilityRow, VariabilityTable};
pub use video::{dynamic_proxy, flicker_score, DYNAMIC_THRESHOLD};
