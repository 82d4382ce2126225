use rand::Rng;
use serde::{Deserialize, Serialize};

use super::correlate::{offset_distribution, sync_vec, OffsetDistribution, SyncVector};
use super::extractor::{extract_local, ExtractorConfig, ExtractorParams, UPSAMPLE_FACTOR};
use super::{FeatureSequence, TimeMask};
use crate::dsp::normalize_channels;
use crate::error::{Error, Result};
use crate::kernels;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Offset-predictor hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    /// Synchronization radius K in mel frames.
    pub radius: usize,
    /// Softmax temperature τ.
    pub temperature: f64,
    /// Divide each lag by its valid-pair count.
    pub normalized: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            radius: 20,
            temperature: 0.07,
            normalized: true,
        }
    }
}

/// Video and audio extractors of one offset predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetPredictor<T> {
    pub video: ExtractorParams<T>,
    pub audio: ExtractorParams<T>,
}

impl<T: Scalar> OffsetPredictor<T> {
    pub fn init<R: Rng>(video: &ExtractorConfig, audio: &ExtractorConfig, rng: &mut R) -> Self {
        let video = ExtractorParams::init(video, rng);
        let audio = ExtractorParams::init(audio, rng);
        Self { video, audio }
    }

    /// Embeds both streams and correlates them; the result peaks at `k > 0`
    /// when the video runs `k` mel frames behind the audio.
    pub fn distribution(
        &self,
        video: &FeatureSequence<T>,
        mel: &Matrix<T>,
        mask: Option<&TimeMask>,
        cfg: &PredictorConfig,
    ) -> Result<(SyncVector<T>, OffsetDistribution<T>)> {
        let v = extract_local(video, &self.video, true)?;
        let u = extract_local(&FeatureSequence::new(mel.clone(), 100.0), &self.audio, false)?;
        correlate(&v, &u, mask, cfg)
    }

    pub fn tensors(&self) -> impl Iterator<Item = (String, &Matrix<T>)> {
        let names = ExtractorParams::<T>::tensor_names();
        let v = names
            .iter()
            .zip(self.video.tensors())
            .map(|(n, m)| (format!("video.{n}"), m));
        let a = names
            .iter()
            .zip(self.audio.tensors())
            .map(|(n, m)| (format!("audio.{n}"), m));
        v.chain(a)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Matrix<T>> {
        self.video.tensors_mut().into_iter().chain(self.audio.tensors_mut())
    }
}

fn correlate<T: Scalar>(
    v: &FeatureSequence<T>,
    u: &FeatureSequence<T>,
    mask: Option<&TimeMask>,
    cfg: &PredictorConfig,
) -> Result<(SyncVector<T>, OffsetDistribution<T>)> {
    if v.len() != u.len() {
        return Err(Error::DimensionMismatch {
            context: "upsampled video frames vs mel frames",
            expected: u.len(),
            actual: v.len(),
        });
    }
    let all = TimeMask::all_valid(v.len());
    let s = sync_vec(v, u, mask.unwrap_or(&all), cfg.radius, cfg.normalized)?;
    let d = offset_distribution(&s, T::lit(cfg.temperature))?;
    Ok((s, d))
}

/// Parameter-free embedding: channel standardization, then unit rows.
pub fn oracle_features<T: Scalar>(m: &Matrix<T>) -> FeatureSequence<T> {
    let (frames, _) = kernels::l2_normalize_rows(&normalize_channels(m));
    FeatureSequence {
        frames,
        frame_rate: 100.0,
        unit_rows: true,
    }
}

/// Offset distribution from oracle features, no learned extractors.
/// `video` may be at the mel rate or at a quarter of it (upsampled first).
pub fn oracle_distribution<T: Scalar>(
    video: &Matrix<T>,
    reference: &Matrix<T>,
    mask: Option<&TimeMask>,
    cfg: &PredictorConfig,
) -> Result<(SyncVector<T>, OffsetDistribution<T>)> {
    if video.cols() != reference.cols() {
        return Err(Error::DimensionMismatch {
            context: "oracle mode needs equal feature widths",
            expected: reference.cols(),
            actual: video.cols(),
        });
    }
    let video = if video.rows() * UPSAMPLE_FACTOR == reference.rows() {
        kernels::upsample_linear(video, UPSAMPLE_FACTOR)?
    } else {
        video.clone()
    };
    correlate(&oracle_features(&video), &oracle_features(reference), mask, cfg)
}
