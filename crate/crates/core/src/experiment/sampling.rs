use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diffusion::{sample, NoiseSchedule, SampleOutput};
use crate::error::{usage_err, Error, Result};
use crate::metrics::{dynamic_proxy, flicker_score, mean, sign_test, SignTest};
use crate::model::DiTParams;
use crate::parallel::parallel_map;
use crate::tedio::TedioConfig;
use crate::tensor::Element;

/// Class used for a sampling seed.
pub fn cond_for_seed(seed: u64, vocab: usize) -> usize {
    (seed % vocab as u64) as usize
}

/// Metrics of one sampled video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub cond: usize,
    pub flicker: f64,
    pub dynamic: f64,
    pub refine_iterations: usize,
    pub refine_forward_blocks: usize,
}

pub const SAMPLES_HEADER: &str = "seed,cond,flicker,dynamic_proxy,refine_iterations,refine_forward_blocks";

/// Samples every seed (class from [`cond_for_seed`]) and measures the
/// result. Output order follows `seeds` regardless of `jobs`.
pub fn run_samples<E: Element>(
    params: &DiTParams<E>,
    schedule: &NoiseSchedule,
    seeds: &[u64],
    tedio: Option<&TedioConfig>,
    threshold: f64,
    jobs: usize,
) -> Result<Vec<(SampleRecord, SampleOutput<E>)>> {
    let vocab = params.config.cond_vocab;
    parallel_map(seeds, jobs, |_, &seed| {
        let cond = cond_for_seed(seed, vocab);
        let out = sample(params, schedule, cond, seed, tedio)?;
        let record = SampleRecord {
            seed,
            cond,
            flicker: flicker_score(&out.z0)?,
            dynamic: dynamic_proxy(&out.z0, threshold)?,
            refine_iterations: out.stats.iterations,
            refine_forward_blocks: out.stats.refine_forward,
        };
        Ok((record, out))
    })
}

pub fn samples_csv(records: &[SampleRecord]) -> String {
    let mut s = format!("{SAMPLES_HEADER}\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.seed, r.cond, r.flicker, r.dynamic, r.refine_iterations, r.refine_forward_blocks
        );
    }
    s
}

pub fn parse_samples_csv(text: &str) -> Result<Vec<SampleRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(SAMPLES_HEADER) {
        return Err(Error::Format(format!("samples CSV must start with {SAMPLES_HEADER:?}")));
    }
    let bad = |n: usize, what: &str| Error::Format(format!("samples CSV line {n}: bad {what}"));
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let n = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(n, "field count"));
            }
            Ok(SampleRecord {
                seed: f[0].parse().map_err(|_| bad(n, "seed"))?,
                cond: f[1].parse().map_err(|_| bad(n, "cond"))?,
                flicker: f[2].parse().map_err(|_| bad(n, "flicker"))?,
                dynamic: f[3].parse().map_err(|_| bad(n, "dynamic_proxy"))?,
                refine_iterations: f[4].parse().map_err(|_| bad(n, "refine_iterations"))?,
                refine_forward_blocks: f[5].parse().map_err(|_| bad(n, "refine_forward_blocks"))?,
            })
        })
        .collect()
}

/// Baseline against refined samples, paired by seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub baseline_flicker: Vec<f64>,
    pub tedio_flicker: Vec<f64>,
    pub baseline_dynamic: Vec<f64>,
    pub tedio_dynamic: Vec<f64>,
    /// Does refinement lower flicker?
    pub flicker_test: SignTest,
}

pub fn compare(baseline: &[SampleRecord], tedio: &[SampleRecord]) -> Result<Comparison> {
    let index = |rs: &[SampleRecord]| -> Result<BTreeMap<u64, SampleRecord>> {
        let mut m = BTreeMap::new();
        for r in rs {
            if m.insert(r.seed, r.clone()).is_some() {
                return Err(usage_err!("seed {} appears twice", r.seed));
            }
        }
        Ok(m)
    };
    let (b, t) = (index(baseline)?, index(tedio)?);
    if !b.keys().eq(t.keys()) {
        return Err(usage_err!("baseline and refined runs cover different seeds"));
    }
    if b.is_empty() {
        return Err(usage_err!("nothing to compare"));
    }
    let seeds: Vec<u64> = b.keys().copied().collect();
    let col = |m: &BTreeMap<u64, SampleRecord>, f: fn(&SampleRecord) -> f64| -> Vec<f64> {
        m.values().map(f).collect()
    };
    let baseline_flicker = col(&b, |r| r.flicker);
    let tedio_flicker = col(&t, |r| r.flicker);
    let flicker_test = sign_test(&baseline_flicker, &tedio_flicker)?;
    Ok(Comparison {
        seeds,
        baseline_flicker,
        tedio_flicker,
        baseline_dynamic: col(&b, |r| r.dynamic),
        tedio_dynamic: col(&t, |r| r.dynamic),
        flicker_test,
    })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,baseline_flicker,tedio_flicker,baseline_dynamic_proxy,tedio_dynamic_proxy\n");
        for i in 0..self.seeds.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                self.seeds[i],
                self.baseline_flicker[i],
                self.tedio_flicker[i],
                self.baseline_dynamic[i],
                self.tedio_dynamic[i]
            );
        }
        let _ = writeln!(
            s,
            "#aggregate:mean,{},{},{},{}",
            mean(&self.baseline_flicker),
            mean(&self.tedio_flicker),
            mean(&self.baseline_dynamic),
            mean(&self.tedio_dynamic)
        );
        s
    }

    pub fn summary(&self) -> String {
        let t = &self.flicker_test;
        format!(
            "pairs: {}\n\
             flicker mean: baseline {:.6} tedio {:.6}\n\
             dynamic proxy mean: baseline {:.6} tedio {:.6}\n\
             flicker lower with tedio: {} of {} untied pairs ({} ties), one-sided sign test p = {:.3e}\n",
            self.seeds.len(),
            mean(&self.baseline_flicker),
            mean(&self.tedio_flicker),
            mean(&self.baseline_dynamic),
            mean(&self.tedio_dynamic),
            t.wins,
            t.wins + t.losses,
            t.ties,
            t.p_value
        )
    }
}
