//! Synthetic moving-shape videos and controlled temporal incoherence.

mod corpus;
mod jitter;
mod ppm;
mod scene;

pub use corpus::{
    corpus_clip, gen_clips, gen_coherent, jittered_set, read_corpus, write_corpus, Clip, CorpusConfig,
    Manifest, ManifestEntry, MANIFEST_FILE, MANIFEST_FORMAT,
};
pub use jitter::{inject_jitter, JitterMode, JitterSpec};
pub use ppm::{frame_ppm, write_frames};
pub use scene::{reflect, SceneSpec, ShapeKind, VideoDims, CLASSES, DIRECTIONS};
