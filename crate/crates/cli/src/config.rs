use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tedio_core::data::CorpusConfig;
use tedio_core::diffusion::{ScheduleConfig, TrainConfig};
use tedio_core::metrics::DYNAMIC_THRESHOLD;
use tedio_core::model::ModelConfig;
use tedio_core::tedio::TedioConfig;
use tedio_core::{Error, Result};

/// Everything a subcommand needs. Loaded from JSON (missing keys take
/// defaults, unknown keys are rejected), then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub tedio: TedioConfig,
    /// Whether `sample` refines latents.
    pub tedio_enabled: bool,
    pub train: TrainConfig,
    pub corpus: CorpusConfig,
    pub probe: ProbeConfig,
    /// Corpus directory written by `gen-data`.
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub dynamic_threshold: f64,
    /// Also write PPM frames next to TDT videos.
    pub ppm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub blocks: Vec<usize>,
    /// Sampling steps the clips are noised to; 0 probes clean clips.
    pub timesteps: Vec<usize>,
    pub noise_seed: u64,
    /// Clips whose attention maps and scores are dumped as TDT.
    pub dump_clips: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            blocks: vec![1, 2, 3, 4],
            timesteps: vec![50, 45, 40],
            noise_seed: 0,
            dump_clips: 4,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            schedule: ScheduleConfig::default(),
            tedio: TedioConfig::default(),
            tedio_enabled: true,
            train: TrainConfig::default(),
            corpus: CorpusConfig::default(),
            probe: ProbeConfig::default(),
            data: None,
            checkpoint: None,
            out: PathBuf::from("out"),
            seeds: (0..8).collect(),
            jobs: 1,
            dynamic_threshold: DYNAMIC_THRESHOLD,
            ppm: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))
    }

    /// Writes the effective configuration as `config.json` in `dir`.
    pub fn snapshot(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.json");
        let text = serde_json::to_string_pretty(self).expect("config serializes") + "\n";
        fs::create_dir_all(dir)
            .and_then(|_| fs::write(&path, text))
            .map_err(|e| Error::Io { path, source: e })
    }
}

/// `0,1,2` or ranges such as `0-49`, mixed freely.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Usage(format!("bad seed list {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("0-2,7").unwrap(), vec![0, 1, 2, 7]);
        assert!(parse_seeds("2-1").is_err());
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn partial_json_takes_defaults_and_unknown_keys_fail() {
        let c: RunConfig = serde_json::from_str(r#"{"tedio": {"k": 4}, "jobs": 2}"#).unwrap();
        assert_eq!(c.tedio.k, 4);
        assert_eq!(c.tedio.n_iters, TedioConfig::default().n_iters);
        assert_eq!(c.jobs, 2);
        assert!(serde_json::from_str::<RunConfig>(r#"{"tedio": {"kk": 4}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }
}
