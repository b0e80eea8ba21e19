use std::fmt::Write as _;

use serde::Serialize;

use super::sampling::run_samples;
use crate::diffusion::NoiseSchedule;
use crate::error::{usage_err, Result};
use crate::metrics::{mean, std_dev};
use crate::model::DiTParams;
use crate::tedio::TedioConfig;
use crate::tensor::Element;

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    K,
    Iters,
    Ell,
    Block,
}

impl std::str::FromStr for SweepParam {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(Self::K),
            "iters" => Ok(Self::Iters),
            "ell" => Ok(Self::Ell),
            "block" => Ok(Self::Block),
            other => Err(usage_err!("unknown sweep {other:?} (k|iters|ell|block)")),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::K => "k",
            Self::Iters => "iters",
            Self::Ell => "ell",
            Self::Block => "block",
        }
    }

    pub fn apply(self, base: &TedioConfig, value: usize) -> TedioConfig {
        let mut c = base.clone();
        match self {
            Self::K => c.k = value,
            Self::Iters => c.n_iters = value,
            Self::Ell => {
                c.ell = value;
                c.timesteps = None;
            }
            Self::Block => c.block = value,
        }
        c
    }
}

/// Sweep values; `P` stands for the patch count in `k` sweeps.
pub fn parse_sweep_values(text: &str, patches: usize) -> Result<Vec<usize>> {
    text.split(',')
        .map(|v| match v.trim() {
            "P" => Ok(patches),
            s => s.parse().map_err(|_| usage_err!("bad sweep value {s:?}")),
        })
        .collect()
}

/// Metrics of one sweep setting over all seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub sweep: String,
    pub value: usize,
    pub k: usize,
    pub n_iters: usize,
    pub ell: usize,
    pub block: usize,
    pub seeds: usize,
    pub flicker_mean: f64,
    pub flicker_std: f64,
    pub dynamic_mean: f64,
    /// Mean loss at the first and last iteration of every refined step;
    /// NaN when nothing was refined.
    pub loss_first: f64,
    pub loss_last: f64,
    pub refine_iterations: usize,
    pub refine_forward_blocks: usize,
}

pub const ABLATION_HEADER: &str = "sweep,value,k,n_iters,ell,block,seeds,flicker_mean,flicker_std,\
dynamic_mean,loss_first,loss_last,refine_iterations,refine_forward_blocks";

fn summarize<E: Element>(
    sweep: &str,
    value: usize,
    cfg: Option<&TedioConfig>,
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    seeds: &[u64],
    threshold: f64,
    jobs: usize,
) -> Result<AblationRow> {
    let runs = run_samples(params, schedule, seeds, cfg, threshold, jobs)?;
    let flicker: Vec<f64> = runs.iter().map(|(r, _)| r.flicker).collect();
    let dynamic: Vec<f64> = runs.iter().map(|(r, _)| r.dynamic).collect();
    let (mut first, mut last) = (Vec::new(), Vec::new());
    for (_, out) in &runs {
        for e in &out.events {
            if e.iter == 0 {
                first.push(e.loss);
            }
            if cfg.is_some_and(|c| e.iter + 1 == c.n_iters) {
                last.push(e.loss);
            }
        }
    }
    let nan_mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { mean(v) };
    let base = cfg.cloned().unwrap_or_default();
    Ok(AblationRow {
        sweep: sweep.into(),
        value,
        k: base.k,
        n_iters: if cfg.is_some() { base.n_iters } else { 0 },
        ell: if cfg.is_some() { base.ell } else { 0 },
        block: base.block,
        seeds: seeds.len(),
        flicker_mean: mean(&flicker),
        flicker_std: std_dev(&flicker),
        dynamic_mean: mean(&dynamic),
        loss_first: nan_mean(&first),
        loss_last: nan_mean(&last),
        refine_iterations: runs.iter().map(|(_, o)| o.stats.iterations).sum(),
        refine_forward_blocks: runs.iter().map(|(_, o)| o.stats.refine_forward).sum(),
    })
}

/// One row per value of `sweep`, everything else from `base`.
pub fn ablate<E: Element>(
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    base: &TedioConfig,
    sweep: SweepParam,
    values: &[usize],
    seeds: &[u64],
    threshold: f64,
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    if values.is_empty() || seeds.is_empty() {
        return Err(usage_err!("a sweep needs values and seeds"));
    }
    let configs: Vec<TedioConfig> = values.iter().map(|&v| sweep.apply(base, v)).collect();
    for c in &configs {
        c.validate(&params.config, schedule.sampling_steps)?;
    }
    values
        .iter()
        .zip(&configs)
        .map(|(&v, c)| summarize(sweep.name(), v, Some(c), params, schedule, seeds, threshold, jobs))
        .collect()
}

/// The untouched sampler on the same seeds, for reference.
pub fn baseline_row<E: Element>(
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    seeds: &[u64],
    threshold: f64,
    jobs: usize,
) -> Result<AblationRow> {
    summarize("baseline", 0, None, params, schedule, seeds, threshold, jobs)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.sweep,
            r.value,
            r.k,
            r.n_iters,
            r.ell,
            r.block,
            r.seeds,
            r.flicker_mean,
            r.flicker_std,
            r.dynamic_mean,
            r.loss_first,
            r.loss_last,
            r.refine_iterations,
            r.refine_forward_blocks
        );
    }
    s
}
