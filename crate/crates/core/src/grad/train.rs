//! Training loop for the data- and self-synchronization offset predictors.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::model::{collect_grads, dsm_graph, ssm_graph, PredictorVars};
use super::optim::{Adam, AdamConfig, LrSchedule};
use super::tape::Tape;
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::sync::{argmax_lag, ExtractorConfig, ExtractorParams, FeatureSequence, OffsetPredictor, PredictorConfig};

/// One training example. `video` is at 25 Hz, both mels at 100 Hz with
/// four times as many frames. `lag` is the ground-truth video lag in mel
/// frames, used only for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub video: Matrix<f64>,
    pub mel_ref: Matrix<f64>,
    pub mel_hat: Matrix<f64>,
    pub lag: Option<i64>,
}

impl From<crate::synth::MelPair> for TrainingSample {
    fn from(p: crate::synth::MelPair) -> Self {
        Self {
            lag: Some(p.truth.data_lag_frames()),
            video: p.video.frames,
            mel_ref: p.mel_ref.frames,
            mel_hat: p.mel_hat.frames,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub warmup: usize,
    /// Weight λ of the self-synchronization loss.
    pub ssm_weight: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub d_hidden: usize,
    pub d_embed: usize,
    #[serde(flatten)]
    pub predictor: PredictorConfig,
    #[serde(flatten)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 5e-4,
            warmup: 1000,
            ssm_weight: 1.0,
            batch_size: 8,
            seed: 0,
            d_hidden: 128,
            d_embed: 64,
            predictor: PredictorConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

/// Predicted-lag statistics over one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSummary {
    pub min: i64,
    pub max: i64,
    pub mean: f64,
    pub histogram: BTreeMap<i64, usize>,
}

impl LagSummary {
    pub fn from_lags(lags: &[i64]) -> Self {
        let mut histogram = BTreeMap::new();
        for &l in lags {
            *histogram.entry(l).or_insert(0) += 1;
        }
        Self {
            min: lags.iter().copied().min().unwrap_or(0),
            max: lags.iter().copied().max().unwrap_or(0),
            mean: lags.iter().sum::<i64>() as f64 / lags.len().max(1) as f64,
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: usize,
    pub lr: f64,
    pub soft_loss: f64,
    pub hard_loss: f64,
    pub ssm_loss: f64,
    pub total_loss: f64,
    pub lags: LagSummary,
}

/// The data-synchronization predictor (conditioned on the reference mel)
/// and the self-synchronization predictor (conditioned on the
/// reconstruction).
#[derive(Debug, Clone, PartialEq)]
pub struct SyncModel {
    pub dsm: OffsetPredictor<f64>,
    pub ssm: OffsetPredictor<f64>,
    pub config: PredictorConfig,
}

impl SyncModel {
    pub fn init(d_video: usize, d_mel: usize, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ext = |d_in| ExtractorConfig {
            d_in,
            d_hidden: cfg.d_hidden,
            d_embed: cfg.d_embed,
        };
        let dsm = OffsetPredictor::init(&ext(d_video), &ext(d_mel), &mut rng);
        let ssm = OffsetPredictor::init(&ext(d_video), &ext(d_mel), &mut rng);
        Self {
            dsm,
            ssm,
            config: cfg.predictor,
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = (String, &Matrix<f64>)> {
        let d = self.dsm.tensors().map(|(n, m)| (format!("dsm.{n}"), m));
        d.chain(self.ssm.tensors().map(|(n, m)| (format!("ssm.{n}"), m)))
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Matrix<f64>> {
        self.dsm.tensors_mut().chain(self.ssm.tensors_mut())
    }

    /// Lag of the video against `mel` by the data-synchronization
    /// predictor, with its distribution.
    pub fn predict(&self, video: &Matrix<f64>, mel: &Matrix<f64>) -> Result<(i64, Vec<f64>)> {
        let (_, d) = self
            .dsm
            .distribution(&FeatureSequence::video(video.clone()), mel, None, &self.config)?;
        Ok((argmax_lag(&d), d.probs))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = serde_json::json!({ "predictor": self.config });
        save_checkpoint(dir, self.tensors(), meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (entries, meta) = load_checkpoint::<f64>(dir)?;
        let config: PredictorConfig = serde_json::from_value(meta.get("predictor").cloned().unwrap_or_default())
            .map_err(|e| Error::Format {
                format: "checkpoint",
                reason: format!("predictor settings: {e}"),
            })?;
        let n = ExtractorParams::<f64>::tensor_names().len();
        if entries.len() != 4 * n {
            return Err(Error::Format {
                format: "checkpoint",
                reason: format!("expected {} tensors, found {}", 4 * n, entries.len()),
            });
        }
        let mut groups = Vec::new();
        for (g, prefix) in ["dsm.video.", "dsm.audio.", "ssm.video.", "ssm.audio."]
            .iter()
            .enumerate()
        {
            let chunk = &entries[g * n..(g + 1) * n];
            for ((entry, _), name) in chunk.iter().zip(ExtractorParams::<f64>::tensor_names()) {
                if entry.name != format!("{prefix}{name}") {
                    return Err(Error::Format {
                        format: "checkpoint",
                        reason: format!("unexpected tensor {} (wanted {prefix}{name})", entry.name),
                    });
                }
            }
            groups.push(ExtractorParams::from_tensors(
                chunk.iter().map(|(_, m)| m.clone()).collect(),
            )?);
        }
        let mut it = groups.into_iter();
        let mut next = || it.next().expect("four groups");
        Ok(Self {
            dsm: OffsetPredictor {
                video: next(),
                audio: next(),
            },
            ssm: OffsetPredictor {
                video: next(),
                audio: next(),
            },
            config,
        })
    }
}

fn check_sample(s: &TrainingSample, radius: usize) -> Result<()> {
    let t = s.mel_ref.rows();
    if s.mel_hat.shape() != s.mel_ref.shape() {
        return Err(Error::DimensionMismatch {
            context: "reconstruction vs reference mel",
            expected: s.mel_ref.len(),
            actual: s.mel_hat.len(),
        });
    }
    if s.video.rows() * crate::sync::UPSAMPLE_FACTOR != t {
        return Err(Error::DimensionMismatch {
            context: "upsampled video frames vs mel frames",
            expected: t,
            actual: s.video.rows() * crate::sync::UPSAMPLE_FACTOR,
        });
    }
    if t <= 2 * radius {
        return Err(Error::SequenceTooShort { len: t, radius });
    }
    Ok(())
}

/// Adam training of both predictors on `L_soft + L_hard + λ·L_ssm`,
/// averaged over a batch drawn with replacement each step.
pub fn train_offset_predictor(
    dataset: &[TrainingSample],
    mut model: SyncModel,
    cfg: &TrainConfig,
) -> Result<(SyncModel, Vec<TrainLogRecord>)> {
    if dataset.is_empty() {
        return Err(invalid("dataset", "no training samples"));
    }
    if cfg.batch_size == 0 {
        return Err(invalid("batch_size", "must be positive"));
    }
    for s in dataset {
        check_sample(s, cfg.predictor.radius)?;
    }
    model.config = cfg.predictor;
    let schedule = LrSchedule {
        peak: cfg.lr,
        warmup: cfg.warmup,
        total: cfg.steps,
    };
    let mut adam = Adam::new(model.tensors().map(|(_, m)| m), cfg.adam, schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c);
    let inv_b = 1.0 / cfg.batch_size as f64;
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut tape = Tape::new();
        let dvars = PredictorVars::register(&mut tape, &model.dsm);
        let svars = PredictorVars::register(&mut tape, &model.ssm);
        let mut terms = Vec::with_capacity(cfg.batch_size);
        let (mut soft_sum, mut hard_sum, mut ssm_sum) = (0.0, 0.0, 0.0);
        let mut lags = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let s = &dataset[rng.gen_range(0..dataset.len())];
            let video = tape.constant(s.video.clone());
            let m_ref = tape.constant(s.mel_ref.clone());
            let m_hat = tape.constant(s.mel_hat.clone());
            let dsm = dsm_graph(&mut tape, &dvars, video, m_ref, m_hat, &cfg.predictor)?;
            let ssm = ssm_graph(&mut tape, &svars, video, m_hat, &cfg.predictor)?;
            soft_sum += tape.value(dsm.soft).item();
            hard_sum += tape.value(dsm.hard).item();
            ssm_sum += tape.value(ssm).item();
            lags.push(dsm.lag);
            let dsm_total = tape.add(dsm.soft, dsm.hard)?;
            let weighted = tape.scale(ssm, cfg.ssm_weight);
            terms.push(tape.add(dsm_total, weighted)?);
        }
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = tape.add(total, t)?;
        }
        let total = tape.scale(total, inv_b);
        let value = tape.value(total).item();
        if !value.is_finite() {
            return Err(Error::Diverged { step, value });
        }
        let grads = collect_grads(&tape, total, dvars.vars().chain(svars.vars()))?;
        let lr = adam.update(model.tensors_mut(), &grads)?;
        log.push(TrainLogRecord {
            step,
            lr,
            soft_loss: soft_sum * inv_b,
            hard_loss: hard_sum * inv_b,
            ssm_loss: ssm_sum * inv_b,
            total_loss: value,
            lags: LagSummary::from_lags(&lags),
        });
    }
    Ok((model, log))
}

/// Fraction of samples whose data-synchronization argmax equals the
/// ground-truth lag. Samples without a lag are skipped.
pub fn evaluate_lag_accuracy(model: &SyncModel, samples: &[TrainingSample]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in samples {
        let Some(lag) = s.lag else { continue };
        let (pred, _) = model.predict(&s.video, &s.mel_ref)?;
        hits += usize::from(pred == lag);
        total += 1;
    }
    if total == 0 {
        return Err(invalid("samples", "none carries a ground-truth lag"));
    }
    Ok(hits as f64 / total as f64)
}

/// Mean `-ln P(0)` of the self-synchronization predictor on
/// `(video, mel_hat)`.
pub fn evaluate_ssm_loss(model: &SyncModel, samples: &[TrainingSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("samples", "empty"));
    }
    let mut total = 0.0;
    for s in samples {
        let (_, d) = model.ssm.distribution(
            &FeatureSequence::video(s.video.clone()),
            &s.mel_hat,
            None,
            &model.config,
        )?;
        total -= d.prob(0).ln();
    }
    Ok(total / samples.len() as f64)
}
