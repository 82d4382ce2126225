//! Waveform-to-mel pipeline: STFT magnitude, triangular mel filterbank,
//! log compression and per-channel standardization.

mod mel;
mod stft;

pub use mel::{
    hz_to_mel, mel_spectrogram, mel_to_hz, normalize_channels, MelConfig, MelExtractor, MelFilterbank, MelSpectrogram,
    LOG_FLOOR,
};
pub use stft::{hann_window, stft_magnitude, Stft};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Sample rate accepted by every toolkit entry point.
pub const SAMPLE_RATE: u32 = 16_000;
/// STFT window length in samples (40 ms).
pub const WINDOW: usize = 640;
/// STFT hop in samples (10 ms, one mel frame).
pub const HOP: usize = 160;
/// Mel frame rate in Hz.
pub const MEL_FRAME_RATE: f64 = SAMPLE_RATE as f64 / HOP as f64;

/// Mono PCM signal with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(invalid(
                "sample_rate",
                format!("{sample_rate} Hz, expected {SAMPLE_RATE} Hz"),
            ));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(invalid("samples", format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// 16 kHz waveform.
    pub fn from_samples(samples: Vec<T>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Delays (positive `samples`) or advances (negative) the signal,
    /// zero-filling the vacated region. Length is preserved.
    pub fn shifted(&self, samples: i64) -> Self {
        let n = self.samples.len();
        let mut out = vec![T::zero(); n];
        for (i, slot) in out.iter_mut().enumerate() {
            let src = i as i64 - samples;
            if src >= 0 && (src as usize) < n {
                *slot = self.samples[src as usize];
            }
        }
        Self {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }

    /// Scales every sample by `gain`.
    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn power(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        self.samples.iter().map(|&x| x * x).sum::<T>() / T::from_count(self.samples.len())
    }
}

pub(crate) fn check_frame_params(window: usize, hop: usize) -> Result<()> {
    if window == 0 || hop == 0 {
        return Err(invalid("window/hop", "must be positive"));
    }
    if window % 2 != 0 {
        return Err(invalid("window", format!("{window} is odd")));
    }
    Ok(())
}

pub(crate) fn check_len(len: usize, window: usize) -> Result<()> {
    if len == 0 || len < window {
        return Err(Error::WaveformTooShort { len, min: window });
    }
    Ok(())
}
