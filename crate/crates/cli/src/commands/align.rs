use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use syncforge::align::{AlignedMetric, Aligner};
use syncforge::dsp::Waveform;
use syncforge::io::read_wav;

use super::{aligner, emit_json};
use crate::config::RunConfig;
use crate::Failure;

/// Raw and aligned metric values for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMetrics {
    pub mcd: f64,
    pub a_mcd: f64,
    pub mel_mse: f64,
    pub a_mel_mse: f64,
}

#[derive(Debug, Serialize)]
struct AlignReport {
    offset_ms: i64,
    mse_curve: Vec<f64>,
    metrics: PairMetrics,
}

/// Front-end offset and metrics for one pair.
pub(crate) fn score_pair(
    aligner: &Aligner<f64>,
    gen: &Waveform<f64>,
    reference: &Waveform<f64>,
) -> syncforge::Result<(i64, Vec<f64>, PairMetrics)> {
    let (res, aligned) = aligner.aligned_metrics(gen, reference, &AlignedMetric::ALL)?;
    let metrics = PairMetrics {
        mcd: aligner.raw_metric(gen, reference, AlignedMetric::Mcd)?,
        a_mcd: aligned[0],
        mel_mse: aligner.raw_metric(gen, reference, AlignedMetric::MelMse)?,
        a_mel_mse: aligned[1],
    };
    Ok((res.offset_ms, res.mse_curve, metrics))
}

pub(crate) fn load_wav(path: &Path) -> anyhow::Result<Waveform<f64>> {
    read_wav(path).with_context(|| format!("reading {}", path.display()))
}

pub fn align(generated: &Path, reference: &Path, config: Option<&Path>, output: Option<&Path>) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    cfg.validate()?;
    let aligner = aligner(&cfg)?;
    let (g, r) = (load_wav(generated)?, load_wav(reference)?);
    let (offset_ms, mse_curve, metrics) = score_pair(&aligner, &g, &r)?;
    emit_json(
        &AlignReport {
            offset_ms,
            mse_curve,
            metrics,
        },
        output,
    )
}
