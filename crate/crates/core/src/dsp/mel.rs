use serde::{Deserialize, Serialize};

use super::stft::Stft;
use super::{Waveform, HOP, MEL_FRAME_RATE, SAMPLE_RATE, WINDOW};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Energy floor applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Mel pipeline settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub n_mels: usize,
    pub window: usize,
    pub hop: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            window: WINDOW,
            hop: HOP,
            f_min: 0.0,
            f_max: 8000.0,
        }
    }
}

/// Triangular HTK filterbank, `n_mels × (window/2 + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank<T> {
    weights: Matrix<T>,
    f_min: f64,
    f_max: f64,
}

impl<T: Scalar> MelFilterbank<T> {
    pub fn new(n_mels: usize, window: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Self> {
        let nyquist = f64::from(sample_rate) / 2.0;
        if n_mels == 0 {
            return Err(crate::error::invalid("n_mels", "must be positive"));
        }
        if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
            return Err(crate::error::invalid(
                "f_min/f_max",
                format!("need 0 <= f_min < f_max <= {nyquist}, got {f_min}..{f_max}"),
            ));
        }
        let n_bins = window / 2 + 1;
        let bin_hz = f64::from(sample_rate) / window as f64;
        let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = Matrix::zeros(n_mels, n_bins);
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = weights.row_mut(m);
            for (b, w) in row.iter_mut().enumerate() {
                let f = b as f64 * bin_hz;
                let rise = (f - left) / (center - left);
                let fall = (right - f) / (right - center);
                *w = T::lit(rise.min(fall).max(0.0));
            }
            // Filters narrower than one bin would be empty; give them the
            // nearest bin so every channel carries energy.
            if row.iter().all(|&w| w == T::zero()) {
                let nearest = ((center / bin_hz).round() as usize).min(n_bins - 1);
                row[nearest] = T::one();
            }
        }
        Ok(Self { weights, f_min, f_max })
    }

    pub fn from_config(cfg: &MelConfig) -> Result<Self> {
        Self::new(cfg.n_mels, cfg.window, SAMPLE_RATE, cfg.f_min, cfg.f_max)
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.cols()
    }

    pub fn f_range(&self) -> (f64, f64) {
        (self.f_min, self.f_max)
    }
}

/// Time-major log-mel energies (`frames × n_mels`).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram<T> {
    pub frames: Matrix<T>,
    pub frame_rate: f64,
}

impl<T: Scalar> MelSpectrogram<T> {
    /// Wraps a 100 Hz matrix.
    pub fn new(frames: Matrix<T>) -> Self {
        Self {
            frames,
            frame_rate: MEL_FRAME_RATE,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.cols()
    }

    pub fn normalized(&self) -> Self {
        Self {
            frames: normalize_channels(&self.frames),
            frame_rate: self.frame_rate,
        }
    }

    /// Frame-domain delay by `frames` (advance when negative). Vacated
    /// frames repeat the nearest edge frame.
    pub fn shifted(&self, frames: i64) -> Self {
        let t = self.n_frames() as i64;
        let out = Matrix::from_fn(self.n_frames(), self.n_mels(), |r, c| {
            let src = (r as i64 - frames).clamp(0, t - 1);
            self.frames[(src as usize, c)]
        });
        Self {
            frames: out,
            frame_rate: self.frame_rate,
        }
    }
}

/// STFT plan plus filterbank, reusable across many waveforms.
pub struct MelExtractor<T: Scalar> {
    stft: Stft<T>,
    filterbank: MelFilterbank<T>,
}

impl<T: Scalar> MelExtractor<T> {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        Ok(Self {
            stft: Stft::new(cfg.window, cfg.hop)?,
            filterbank: MelFilterbank::from_config(cfg)?,
        })
    }

    pub fn with_filterbank(filterbank: MelFilterbank<T>, window: usize, hop: usize) -> Result<Self> {
        if filterbank.n_bins() != window / 2 + 1 {
            return Err(Error::DimensionMismatch {
                context: "filterbank columns vs window/2+1",
                expected: window / 2 + 1,
                actual: filterbank.n_bins(),
            });
        }
        Ok(Self {
            stft: Stft::new(window, hop)?,
            filterbank,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank<T> {
        &self.filterbank
    }

    pub fn compute(&self, w: &Waveform<T>) -> Result<MelSpectrogram<T>> {
        self.compute_samples(w.samples()).map(|frames| MelSpectrogram {
            frames,
            frame_rate: f64::from(w.sample_rate()) / self.stft.hop() as f64,
        })
    }

    /// `log(max(fb · |STFT|², floor))` per frame.
    pub fn compute_samples(&self, samples: &[T]) -> Result<Matrix<T>> {
        let power = self.stft.power(samples)?;
        let mut mel = power.matmul_t(self.filterbank.weights())?;
        let floor = T::lit(LOG_FLOOR);
        for v in mel.as_mut_slice() {
            *v = v.max(floor).ln();
        }
        Ok(mel)
    }
}

/// Log-mel spectrogram of `w` with an explicit filterbank.
pub fn mel_spectrogram<T: Scalar>(
    w: &Waveform<T>,
    fb: &MelFilterbank<T>,
    window: usize,
    hop: usize,
) -> Result<MelSpectrogram<T>> {
    MelExtractor::with_filterbank(fb.clone(), window, hop)?.compute(w)
}

/// Per-channel zero mean, unit (biased) variance over time. Channels whose
/// variance is below `1e-12` become all zeros.
pub fn normalize_channels<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(rows, cols);
    if rows == 0 {
        return out;
    }
    let n = T::from_count(rows);
    let degenerate = T::lit(1e-12);
    for c in 0..cols {
        let mean = (0..rows).map(|r| m[(r, c)]).sum::<T>() / n;
        let var = (0..rows).map(|r| (m[(r, c)] - mean).sq()).sum::<T>() / n;
        if var < degenerate {
            continue;
        }
        let inv = var.sqrt().recip();
        for r in 0..rows {
            out[(r, c)] = (m[(r, c)] - mean) * inv;
        }
    }
    out
}
