//! Shift-search alignment of a generated waveform against a reference.
//!
//! Candidate shifts cover −300..=300 ms in 10 ms steps. One step equals one
//! mel hop, so each candidate is an integer frame shift of the generated
//! mel. Frames within [`EDGE_TRIM`] of an overlap boundary are dropped: their
//! analysis windows straddle the zero-filled region of a sample-domain
//! shift, and the remaining frames are then identical to those of the
//! shifted waveform.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{normalize_channels, MelConfig, MelExtractor, Waveform, HOP, SAMPLE_RATE};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{mcd_from_mels, mel_mse};
use crate::scalar::Scalar;

pub const SHIFT_STEP_MS: i64 = 10;
pub const MAX_SHIFT_MS: i64 = 300;
pub const N_PROPOSALS: usize = (2 * MAX_SHIFT_MS / SHIFT_STEP_MS + 1) as usize;
/// Frames dropped at each end of an overlap.
pub const EDGE_TRIM: usize = 2;
/// Half a second of mel frames.
pub const MIN_OVERLAP_FRAMES: usize = 50;

const SAMPLES_PER_MS: i64 = SAMPLE_RATE as i64 / 1000;

/// Candidate shifts of the generated audio, ascending.
pub fn shift_grid_ms() -> impl Iterator<Item = i64> {
    (-MAX_SHIFT_MS..=MAX_SHIFT_MS).step_by(SHIFT_STEP_MS as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult<T> {
    /// Front-end offset: the negative of the chosen shift.
    pub offset_ms: i64,
    /// Candidate shifts, ascending.
    pub shifts_ms: Vec<i64>,
    /// MSE between normalized mels per candidate shift.
    pub mse_curve: Vec<T>,
    /// Generated audio with the chosen shift applied (zero-filled).
    pub aligned_generated: Waveform<T>,
}

impl<T: Scalar> AlignmentResult<T> {
    pub fn shift_ms(&self) -> i64 {
        -self.offset_ms
    }

    pub fn min_mse(&self) -> T {
        let i = self
            .shifts_ms
            .iter()
            .position(|&s| s == self.shift_ms())
            .expect("chosen shift is on the grid");
        self.mse_curve[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignedMetric {
    Mcd,
    MelMse,
}

impl AlignedMetric {
    pub const ALL: [AlignedMetric; 2] = [Self::Mcd, Self::MelMse];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mcd => "mcd",
            Self::MelMse => "mel_mse",
        }
    }

    /// Scores two equal-shape log-mel spectrograms.
    pub fn score<T: Scalar>(self, gen: &Matrix<T>, reference: &Matrix<T>) -> Result<T> {
        match self {
            Self::Mcd => mcd_from_mels(gen, reference),
            Self::MelMse => mel_mse(gen, reference),
        }
    }
}

impl FromStr for AlignedMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid("metric", format!("unknown metric {s:?} (mcd, mel_mse)")))
    }
}

/// Reference rows `[start, end)` compared against generated rows shifted
/// by `shift` frames, after trimming.
fn overlap(t_gen: usize, t_ref: usize, shift: i64) -> (i64, i64) {
    let start = shift.max(0);
    let end = (t_ref as i64).min(t_gen as i64 + shift);
    (start, end)
}

/// Trimmed overlapping rows of `gen` delayed by `shift` frames and of
/// `reference`, as `(gen_part, ref_part)`.
pub fn overlapping_frames<T: Scalar>(
    gen: &Matrix<T>,
    reference: &Matrix<T>,
    shift: i64,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (start, end) = overlap(gen.rows(), reference.rows(), shift);
    let (lo, hi) = (start + EDGE_TRIM as i64, end - EDGE_TRIM as i64);
    if hi <= lo {
        return Err(Error::InsufficientOverlap {
            shift_ms: shift * SHIFT_STEP_MS,
            frames: (end - start).max(0) as usize,
            required: MIN_OVERLAP_FRAMES,
        });
    }
    let r = reference.slice_rows(lo as usize, hi as usize);
    let g = gen.slice_rows((lo - shift) as usize, (hi - shift) as usize);
    Ok((g, r))
}

/// Reusable aligner holding the mel analysis plan and the shift grid.
pub struct Aligner<T: Scalar> {
    mel: MelExtractor<T>,
    max_shift: i64,
    step: i64,
}

impl<T: Scalar> Aligner<T> {
    pub fn new() -> Result<Self> {
        Self::with_config(&MelConfig::default())
    }

    /// The hop must stay at 160 samples so a 10 ms shift is one frame.
    pub fn with_config(cfg: &MelConfig) -> Result<Self> {
        if cfg.hop != HOP {
            return Err(invalid(
                "hop",
                format!("alignment needs a {HOP}-sample hop, got {}", cfg.hop),
            ));
        }
        Ok(Self {
            mel: MelExtractor::new(cfg)?,
            max_shift: MAX_SHIFT_MS / SHIFT_STEP_MS,
            step: 1,
        })
    }

    /// Replaces the default ±300 ms / 10 ms grid. Both values must be
    /// whole frames and the range a whole number of steps.
    pub fn with_search(mut self, max_shift_ms: i64, step_ms: i64) -> Result<Self> {
        if step_ms <= 0 || step_ms % SHIFT_STEP_MS != 0 {
            return Err(invalid(
                "step_ms",
                format!("need a positive multiple of {SHIFT_STEP_MS}, got {step_ms}"),
            ));
        }
        if max_shift_ms < 0 || max_shift_ms % step_ms != 0 {
            return Err(invalid(
                "max_shift_ms",
                format!("need a nonnegative multiple of the step {step_ms}, got {max_shift_ms}"),
            ));
        }
        self.max_shift = max_shift_ms / SHIFT_STEP_MS;
        self.step = step_ms / SHIFT_STEP_MS;
        Ok(self)
    }

    /// Candidate shifts in frames, ascending.
    fn shifts(&self) -> impl Iterator<Item = i64> {
        (-self.max_shift..=self.max_shift).step_by(self.step as usize)
    }

    pub fn shifts_ms(&self) -> Vec<i64> {
        self.shifts().map(|s| s * SHIFT_STEP_MS).collect()
    }

    pub fn log_mel(&self, w: &Waveform<T>) -> Result<Matrix<T>> {
        if w.sample_rate() != SAMPLE_RATE {
            return Err(invalid(
                "waveform",
                format!("sample rate {} Hz, expected {SAMPLE_RATE}", w.sample_rate()),
            ));
        }
        self.mel.compute_samples(w.samples())
    }

    /// MSE curve over the candidate shifts and the chosen shift in frames.
    pub fn search(&self, gen_mel: &Matrix<T>, ref_mel: &Matrix<T>) -> Result<(i64, Vec<T>)> {
        let mut curve = Vec::new();
        for shift in self.shifts() {
            let (start, end) = overlap(gen_mel.rows(), ref_mel.rows(), shift);
            let frames = (end - start).max(0) as usize;
            if frames < MIN_OVERLAP_FRAMES {
                return Err(Error::InsufficientOverlap {
                    shift_ms: shift * SHIFT_STEP_MS,
                    frames,
                    required: MIN_OVERLAP_FRAMES,
                });
            }
            let (g, r) = overlapping_frames(gen_mel, ref_mel, shift)?;
            curve.push(mel_mse(&normalize_channels(&g), &normalize_channels(&r))?);
        }
        // Visit 0, −1, +1, −2, ... steps so strict improvement keeps the
        // smallest |shift|, then the negative one.
        let centre = curve.len() / 2;
        let mut best = centre;
        for mag in 1..=centre {
            for i in [centre - mag, centre + mag] {
                if curve[i] < curve[best] {
                    best = i;
                }
            }
        }
        Ok(((best as i64 - centre as i64) * self.step, curve))
    }

    fn result(&self, gen: &Waveform<T>, shift: i64, mse_curve: Vec<T>) -> AlignmentResult<T> {
        let shift_ms = shift * SHIFT_STEP_MS;
        AlignmentResult {
            offset_ms: -shift_ms,
            shifts_ms: self.shifts_ms(),
            mse_curve,
            aligned_generated: gen.shifted(shift_ms * SAMPLES_PER_MS),
        }
    }

    pub fn align(&self, gen: &Waveform<T>, reference: &Waveform<T>) -> Result<AlignmentResult<T>> {
        let (shift, mse_curve) = self.search(&self.log_mel(gen)?, &self.log_mel(reference)?)?;
        Ok(self.result(gen, shift, mse_curve))
    }

    /// Aligns, then scores the overlapping log-mel frames of the pair.
    pub fn aligned_metric(&self, gen: &Waveform<T>, reference: &Waveform<T>, metric: AlignedMetric) -> Result<T> {
        Ok(self.aligned_metrics(gen, reference, &[metric])?.1[0])
    }

    /// Alignment plus several metrics from one pair of mel analyses.
    pub fn aligned_metrics(
        &self,
        gen: &Waveform<T>,
        reference: &Waveform<T>,
        metrics: &[AlignedMetric],
    ) -> Result<(AlignmentResult<T>, Vec<T>)> {
        let (gm, rm) = (self.log_mel(gen)?, self.log_mel(reference)?);
        let (shift, mse_curve) = self.search(&gm, &rm)?;
        let (g, r) = overlapping_frames(&gm, &rm, shift)?;
        let scores = metrics.iter().map(|m| m.score(&g, &r)).collect::<Result<Vec<_>>>()?;
        Ok((self.result(gen, shift, mse_curve), scores))
    }

    /// Metric without alignment over the common leading frames.
    pub fn raw_metric(&self, gen: &Waveform<T>, reference: &Waveform<T>, metric: AlignedMetric) -> Result<T> {
        let (gm, rm) = (self.log_mel(gen)?, self.log_mel(reference)?);
        let n = gm.rows().min(rm.rows());
        metric.score(&gm.slice_rows(0, n), &rm.slice_rows(0, n))
    }
}

/// One-shot [`Aligner::align`] with the default mel settings.
pub fn align<T: Scalar>(gen: &Waveform<T>, reference: &Waveform<T>) -> Result<AlignmentResult<T>> {
    Aligner::new()?.align(gen, reference)
}

/// One-shot [`Aligner::aligned_metric`] with the default mel settings.
pub fn aligned_metric<T: Scalar>(gen: &Waveform<T>, reference: &Waveform<T>, metric: AlignedMetric) -> Result<T> {
    Aligner::new()?.aligned_metric(gen, reference, metric)
}
