//! On-disk layout shared by `gen`, `train` and `eval`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use syncforge::io::{read_fmat, write_atomic};
use syncforge::synth::ManifestEntry;
use syncforge::Matrix;

pub const MANIFEST: &str = "manifest.json";
pub const PAIRS: &str = "pairs.csv";
pub const SAMPLES_DIR: &str = "samples";

/// One row of a pair list. Paths are relative to the list's directory
/// unless absolute. The feature columns may be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub sample_id: String,
    pub gen_wav: String,
    pub ref_wav: String,
    #[serde(default)]
    pub video_fmat: String,
    #[serde(default)]
    pub mel_ref_fmat: String,
}

pub struct SamplePaths {
    pub video: PathBuf,
    pub mel_ref: PathBuf,
    pub mel_hat: PathBuf,
    pub ref_wav: PathBuf,
    pub gen_wav: PathBuf,
}

impl SamplePaths {
    /// Paths relative to the dataset root.
    pub fn relative(sample_id: &str) -> Self {
        let f = |suffix: &str| Path::new(SAMPLES_DIR).join(format!("{sample_id}.{suffix}"));
        Self {
            video: f("video.fmat"),
            mel_ref: f("mel_ref.fmat"),
            mel_hat: f("mel_hat.fmat"),
            ref_wav: f("ref.wav"),
            gen_wav: f("gen.wav"),
        }
    }
}

pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> anyhow::Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_pairs(path: &Path) -> anyhow::Result<Vec<PairRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{} row {}", path.display(), i + 1)))
        .collect()
}

pub fn load_fmat(path: &Path) -> anyhow::Result<Matrix<f64>> {
    read_fmat(path).with_context(|| format!("reading {}", path.display()))
}
