use std::path::Path;

use serde::Serialize;
use syncforge::grad::SyncModel;
use syncforge::sync::{
    argmax_lag, oracle_distribution, FeatureSequence, OffsetDistribution, PredictorConfig, SyncVector,
};
use syncforge::synth::FRAME_MS;
use syncforge::Matrix;

use super::emit_json;
use crate::files::load_fmat;
use crate::Failure;

#[derive(Debug, Serialize)]
struct EstimateReport {
    mode: &'static str,
    radius: usize,
    sync_vector: Vec<f64>,
    distribution: Vec<f64>,
    lag: i64,
    offset_ms: i64,
}

/// Lag of `reference` against `video` and its distribution, with the
/// learned predictor when a model is given and oracle features otherwise.
pub(crate) fn estimate_lag(
    video: &Matrix<f64>,
    reference: &Matrix<f64>,
    model: Option<&SyncModel>,
    radius: Option<usize>,
) -> syncforge::Result<(&'static str, SyncVector<f64>, OffsetDistribution<f64>)> {
    let (mode, (s, d)) = match model {
        Some(m) => {
            let mut cfg = m.config;
            if let Some(k) = radius {
                cfg.radius = k;
            }
            (
                "learned",
                m.dsm
                    .distribution(&FeatureSequence::video(video.clone()), reference, None, &cfg)?,
            )
        }
        None => {
            let mut cfg = PredictorConfig::default();
            if let Some(k) = radius {
                cfg.radius = k;
            }
            ("oracle", oracle_distribution(video, reference, None, &cfg)?)
        }
    };
    Ok((mode, s, d))
}

pub fn load_model(params: Option<&Path>) -> anyhow::Result<Option<SyncModel>> {
    match params {
        Some(dir) if dir.join(syncforge::grad::CHECKPOINT_MANIFEST).is_file() => Ok(Some(SyncModel::load(dir)?)),
        Some(dir) => {
            eprintln!(
                "warning: no checkpoint at {}; falling back to oracle features",
                dir.display()
            );
            Ok(None)
        }
        None => {
            eprintln!("warning: no --params given; using oracle features");
            Ok(None)
        }
    }
}

pub fn estimate(
    video: &Path,
    reference: &Path,
    params: Option<&Path>,
    radius: Option<usize>,
    output: Option<&Path>,
) -> Result<(), Failure> {
    if radius == Some(0) {
        return Err(Failure::usage(anyhow::anyhow!("--radius must be positive")));
    }
    let model = load_model(params)?;
    let (v, r) = (load_fmat(video)?, load_fmat(reference)?);
    let (mode, s, d) = estimate_lag(&v, &r, model.as_ref(), radius)?;
    let lag = argmax_lag(&d);
    emit_json(
        &EstimateReport {
            mode,
            radius: s.radius,
            sync_vector: s.values,
            distribution: d.probs,
            lag,
            offset_ms: lag * FRAME_MS,
        },
        output,
    )
}
