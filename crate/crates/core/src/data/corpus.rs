use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::jitter::{inject_jitter, JitterMode, JitterSpec};
use super::ppm::write_frames;
use super::scene::{SceneSpec, VideoDims};
use crate::error::{usage_err, Error, Result};
use crate::tensor::io::{read_tdt, write_tdt};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n: usize,
    /// Fraction of clips that get jittered; the count is rounded and
    /// exact, not sampled.
    pub jitter_rate: f64,
    pub jitter_mode: JitterMode,
    pub jitter_amplitude: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n: 256,
            jitter_rate: 0.0,
            jitter_mode: JitterMode::PositionNoise,
            jitter_amplitude: 1.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Clip {
    pub scene: SceneSpec,
    pub class: usize,
    pub jitter: Option<JitterSpec>,
    pub video: Tensor<f32>,
}

impl Clip {
    pub fn coherent(&self) -> bool {
        self.jitter.is_none()
    }
}

/// The coherent clip of `scene`.
pub fn gen_coherent(scene: &SceneSpec, dims: &VideoDims) -> Result<Clip> {
    Ok(Clip {
        scene: scene.clone(),
        class: scene.class_id(),
        jitter: None,
        video: scene.render(dims)?,
    })
}

/// Clip `index` of a corpus, drawn from its own stream of the corpus seed.
pub fn corpus_clip(config: &CorpusConfig, dims: &VideoDims, index: usize, jittered: bool) -> Result<Clip> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let scene = SceneSpec::random(dims, &mut rng);
    let jitter_seed = rng.next_u64();
    let mut clip = gen_coherent(&scene, dims)?;
    if jittered {
        let spec = JitterSpec {
            mode: config.jitter_mode,
            amplitude: config.jitter_amplitude,
            seed: jitter_seed,
        };
        clip.video = inject_jitter(&scene, dims, &clip.video, &spec)?;
        clip.jitter = Some(spec);
    }
    Ok(clip)
}

/// Which clips are jittered: exactly `round(n · rate)` of them, chosen by
/// a seeded shuffle.
pub fn jittered_set(config: &CorpusConfig) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&config.jitter_rate) {
        return Err(usage_err!("jitter_rate {} outside [0, 1]", config.jitter_rate));
    }
    let count = (config.n as f64 * config.jitter_rate).round() as usize;
    let mut order: Vec<usize> = (0..config.n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    order.shuffle(&mut rng);
    let mut out = vec![false; config.n];
    for &i in &order[..count] {
        out[i] = true;
    }
    Ok(out)
}

pub fn gen_clips(config: &CorpusConfig, dims: &VideoDims) -> Result<Vec<Clip>> {
    if config.n == 0 {
        return Err(usage_err!("corpus needs at least one clip"));
    }
    jittered_set(config)?
        .into_iter()
        .enumerate()
        .map(|(i, j)| corpus_clip(config, dims, i, j))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub file: String,
    pub class: usize,
    pub coherent: bool,
    pub scene: SceneSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<JitterSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub dims: VideoDims,
    pub config: CorpusConfig,
    pub clips: Vec<ManifestEntry>,
}

pub const MANIFEST_FORMAT: &str = "tedio-corpus-1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `clip_{id:05}.tdt` files and `manifest.json` under `dir`, plus
/// per-frame PPMs in `frames/` when asked.
pub fn write_corpus(dir: &Path, config: &CorpusConfig, dims: &VideoDims, ppm: bool) -> Result<Manifest> {
    let clips = gen_clips(config, dims)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(clips.len());
    for (id, clip) in clips.iter().enumerate() {
        let file = format!("clip_{id:05}.tdt");
        write_tdt(&dir.join(&file), &clip.video)?;
        if ppm {
            write_frames(&dir.join("frames"), &format!("clip_{id:05}"), &clip.video)?;
        }
        entries.push(ManifestEntry {
            id,
            file,
            class: clip.class,
            coherent: clip.coherent(),
            scene: clip.scene.clone(),
            jitter: clip.jitter.clone(),
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        dims: *dims,
        config: config.clone(),
        clips: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a corpus written by [`write_corpus`].
pub fn read_corpus(dir: &Path) -> Result<(Manifest, Vec<Clip>)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::Format(format!(
            "{}: unknown manifest format {:?}",
            path.display(),
            manifest.format
        )));
    }
    let mut clips = Vec::with_capacity(manifest.clips.len());
    for e in &manifest.clips {
        let (video, _) = read_tdt::<f32>(&dir.join(&e.file))?;
        if video.shape() != manifest.dims.shape() {
            return Err(Error::Dimension(format!(
                "{}: shape {:?} differs from manifest {:?}",
                e.file,
                video.shape(),
                manifest.dims.shape()
            )));
        }
        clips.push(Clip {
            scene: e.scene.clone(),
            class: e.class,
            jitter: e.jitter.clone(),
            video,
        });
    }
    Ok((manifest, clips))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIMS: VideoDims = VideoDims {
        frames: 4,
        channels: 1,
        height: 4,
        width: 4,
    };

    #[test]
    fn stratified_counts_are_exact() {
        let c = CorpusConfig { n: 10, jitter_rate: 0.5, ..CorpusConfig::default() };
        let clips = gen_clips(&c, &DIMS).unwrap();
        assert_eq!(clips.iter().filter(|c| c.coherent()).count(), 5);
        let c = CorpusConfig { n: 10, jitter_rate: 0.0, ..c };
        assert!(gen_clips(&c, &DIMS).unwrap().iter().all(Clip::coherent));
    }

    #[test]
    fn clips_are_deterministic_and_seed_dependent() {
        let c = CorpusConfig { n: 4, jitter_rate: 0.5, ..CorpusConfig::default() };
        let a = gen_clips(&c, &DIMS).unwrap();
        let b = gen_clips(&c, &DIMS).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.video.bit_eq(&y.video)));
        let d = gen_clips(&CorpusConfig { seed: 1, ..c }, &DIMS).unwrap();
        assert!(!a.iter().zip(&d).all(|(x, y)| x.video.bit_eq(&y.video)));
    }

    #[test]
    fn bad_rate_is_rejected() {
        let c = CorpusConfig { n: 4, jitter_rate: 1.5, ..CorpusConfig::default() };
        assert!(gen_clips(&c, &DIMS).is_err());
        assert!(gen_clips(&CorpusConfig { n: 0, ..CorpusConfig::default() }, &DIMS).is_err());
    }
}
