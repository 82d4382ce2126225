use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{check_frame_params, check_len, Waveform};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Periodic Hann window of length `n`.
pub fn hann_window<T: Scalar>(n: usize) -> Vec<T> {
    let two_pi = T::PI() + T::PI();
    let n_t = T::from_count(n);
    (0..n)
        .map(|i| T::lit(0.5) - T::lit(0.5) * (two_pi * T::from_count(i) / n_t).cos())
        .collect()
}

/// Reusable STFT plan: Hann-windowed frames centered on `t·hop` with
/// reflection padding of `window/2` samples on both ends.
///
/// A signal of `N` samples yields `N / hop` frames, so one second at
/// 16 kHz with a 160-sample hop gives exactly 100 frames.
pub struct Stft<T: Scalar> {
    window: usize,
    hop: usize,
    taper: Vec<T>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Scalar> Stft<T> {
    pub fn new(window: usize, hop: usize) -> Result<Self> {
        check_frame_params(window, hop)?;
        let fft = FftPlanner::new().plan_fft_forward(window);
        Ok(Self {
            window,
            hop,
            taper: hann_window(window),
            fft,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn n_bins(&self) -> usize {
        self.window / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples / self.hop
    }

    /// Magnitude spectrogram, `n_frames × (window/2 + 1)`.
    pub fn magnitude(&self, samples: &[T]) -> Result<Matrix<T>> {
        let mut out = self.power(samples)?;
        for v in out.as_mut_slice() {
            *v = v.sqrt();
        }
        Ok(out)
    }

    /// Squared magnitude spectrogram.
    pub fn power(&self, samples: &[T]) -> Result<Matrix<T>> {
        check_len(samples.len(), self.window)?;
        let half = self.window / 2;
        let n = samples.len();
        let frames = self.n_frames(n);
        let bins = self.n_bins();
        let mut out = Matrix::zeros(frames, bins);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.window];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fft.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = (t * self.hop) as i64 - half as i64;
            for (j, slot) in buf.iter_mut().enumerate() {
                let x = samples[reflect(start + j as i64, n)];
                *slot = Complex::new(x * self.taper[j], T::zero());
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (dst, c) in out.row_mut(t).iter_mut().zip(&buf) {
                *dst = c.norm_sqr();
            }
        }
        Ok(out)
    }
}

/// Reflect-mode index (edge sample not repeated), valid for offsets up to
/// `n - 1` outside the signal.
#[inline]
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// Magnitude of the DFT of Hann-windowed, centered frames.
pub fn stft_magnitude<T: Scalar>(w: &Waveform<T>, window: usize, hop: usize) -> Result<Matrix<T>> {
    Stft::new(window, hop)?.magnitude(w.samples())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f64>) -> Waveform<f64> {
        Waveform::from_samples(samples).unwrap()
    }

    /// Direct O(N²) DFT of one windowed frame.
    fn dft_magnitude(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &x) in frame.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn reflect_matches_numpy_reflect_mode() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn dc_signal_concentrates_in_bin_zero() {
        let mag = stft_magnitude(&wave(vec![1.0; 16_000]), 640, 160).unwrap();
        for t in 0..mag.rows() {
            let row = mag.row(t);
            let total: f64 = row.iter().map(|x| x * x).sum();
            // Hann leaks into bin 1 only; bin 0 carries the bulk.
            assert!(row[0] * row[0] / total > 0.6, "frame {t}");
            assert!(row[2..].iter().all(|&x| x < 1e-6 * row[0]));
        }
    }

    #[test]
    fn sine_peaks_at_expected_bin_and_matches_direct_dft() {
        let sr = 16_000.0;
        let samples: Vec<f64> = (0..16_000)
            .map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / sr).sin() * 0.5)
            .collect();
        let w = wave(samples.clone());
        let mag = stft_magnitude(&w, 640, 160).unwrap();
        let t = 50;
        let row = mag.row(t);
        let argmax = (0..row.len())
            .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, 40);

        let taper: Vec<f64> = hann_window(640);
        let frame: Vec<f64> = (0..640).map(|j| samples[t * 160 - 320 + j] * taper[j]).collect();
        let oracle = dft_magnitude(&frame);
        for (a, b) in row.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn one_second_gives_one_hundred_frames() {
        let mag = stft_magnitude(&wave(vec![0.1; 16_000]), 640, 160).unwrap();
        assert_eq!(mag.shape(), (100, 321));
    }

    #[test]
    fn short_or_empty_waveform_is_rejected() {
        let err = stft_magnitude(&wave(vec![]), 640, 160).unwrap_err();
        assert!(err.to_string().contains("waveform too short"));
        assert!(stft_magnitude(&wave(vec![0.0; 639]), 640, 160).is_err());
        assert!(stft_magnitude(&wave(vec![0.0; 1000]), 641, 160).is_err());
        assert!(stft_magnitude(&wave(vec![0.0; 1000]), 640, 0).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let w = Waveform::<f32>::from_samples(vec![0.25; 3200]).unwrap();
        let mag = stft_magnitude(&w, 640, 160).unwrap();
        assert_eq!(mag.rows(), 20);
        assert!(mag.all_finite());
    }
}
