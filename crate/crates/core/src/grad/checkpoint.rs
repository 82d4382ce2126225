//! Parameter checkpoints: one FMAT file per tensor plus a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{decode_fmat, encode_fmat, write_atomic};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<CheckpointEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Writes every tensor and the manifest into `dir` (created if missing).
pub fn save_checkpoint<'a, T: Scalar>(
    dir: &Path,
    tensors: impl IntoIterator<Item = (String, &'a Matrix<T>)>,
    meta: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (name, m) in tensors {
        let file = format!("{name}.fmat");
        write_atomic(&dir.join(&file), &encode_fmat(m))?;
        entries.push(CheckpointEntry {
            name,
            file,
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let manifest = Manifest { tensors: entries, meta };
    write_atomic(
        &dir.join(CHECKPOINT_MANIFEST),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )
}

/// Reads the manifest and every tensor it lists, checking shapes.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(Vec<(CheckpointEntry, Matrix<T>)>, serde_json::Value)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(CHECKPOINT_MANIFEST))?)?;
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        let m: Matrix<T> = decode_fmat(&fs::read(dir.join(&entry.file))?)?;
        if m.shape() != (entry.rows, entry.cols) {
            return Err(Error::Format {
                format: "checkpoint",
                reason: format!(
                    "{} is {}x{}, manifest says {}x{}",
                    entry.file,
                    m.rows(),
                    m.cols(),
                    entry.rows,
                    entry.cols
                ),
            });
        }
        out.push((entry, m));
    }
    Ok((out, manifest.meta))
}
