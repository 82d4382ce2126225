//! Offset correction of a reconstructed mel-spectrogram and the three
//! synchronization losses.
//!
//! Lag convention: a distribution peaking at `k > 0` says the video (and a
//! reconstruction that follows it) runs `k` frames behind the reference.
//! Correction kernels are the time-flipped distribution, so convolving
//! with them pulls the reconstruction `k` frames earlier:
//! `out_i = Σ_j taps_j · m̂_{i-j}` with `taps_j = P(-j)`.

use crate::dsp::MelSpectrogram;
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::sync::{argmax_lag, FeatureSequence, OffsetDistribution, OffsetPredictor, PredictorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Soft,
    Hard,
}

/// Convolution taps over displacements `-K..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionKernel<T> {
    pub taps: Vec<T>,
    pub kind: KernelKind,
}

impl<T: Scalar> CorrectionKernel<T> {
    /// Time-flipped offset distribution.
    pub fn soft(d: &OffsetDistribution<T>) -> Self {
        let mut taps = d.probs.clone();
        taps.reverse();
        Self {
            taps,
            kind: KernelKind::Soft,
        }
    }

    /// One-hot kernel undoing a lag of `lag` frames.
    pub fn hard(radius: usize, lag: i64) -> Self {
        let mut taps = vec![T::zero(); 2 * radius + 1];
        taps[(radius as i64 - lag) as usize] = T::one();
        Self {
            taps,
            kind: KernelKind::Hard,
        }
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn tap(&self, displacement: i64) -> T {
        self.taps[(displacement + self.radius() as i64) as usize]
    }

    /// `out_i = Σ_j taps_j · m̂_{i-j}` over `j` with `i - j` inside the
    /// sequence. Edge frames sum fewer taps and are not renormalized.
    pub fn apply(&self, m_hat: &Matrix<T>) -> Matrix<T> {
        let (t_len, d) = m_hat.shape();
        let k = self.radius() as i64;
        let mut out = Matrix::zeros(t_len, d);
        for i in 0..t_len as i64 {
            let lo = (-k).max(i - t_len as i64 + 1);
            let hi = k.min(i);
            for j in lo..=hi {
                let w = self.tap(j);
                if w == T::zero() {
                    continue;
                }
                let src = m_hat.row((i - j) as usize);
                for (o, &x) in out.row_mut(i as usize).iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
        out
    }
}

/// Frames that take part in a loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameValidity {
    pub flags: Vec<bool>,
}

impl FrameValidity {
    pub fn all(len: usize) -> Self {
        Self { flags: vec![true; len] }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn intersect(&self, other: &Self) -> Self {
        Self {
            flags: self.flags.iter().zip(&other.flags).map(|(&a, &b)| a && b).collect(),
        }
    }
}

/// Soft correction with the flipped distribution; every frame stays valid.
pub fn soft_correct<T: Scalar>(
    m_hat: &MelSpectrogram<T>,
    d: &OffsetDistribution<T>,
) -> Result<(MelSpectrogram<T>, FrameValidity)> {
    let t = m_hat.n_frames();
    if t <= 2 * d.radius() {
        return Err(Error::SequenceTooShort {
            len: t,
            radius: d.radius(),
        });
    }
    let frames = CorrectionKernel::soft(d).apply(&m_hat.frames);
    Ok((
        MelSpectrogram {
            frames,
            frame_rate: m_hat.frame_rate,
        },
        FrameValidity::all(t),
    ))
}

/// Hard correction: `out_i = m̂_{i+k̂}`. Frames whose source falls outside
/// the sequence are zeroed and marked invalid (the trailing `k̂` frames for
/// `k̂ > 0`, the leading `|k̂|` for `k̂ < 0`).
pub fn hard_correct<T: Scalar>(m_hat: &MelSpectrogram<T>, lag: i64) -> Result<(MelSpectrogram<T>, FrameValidity)> {
    let t = m_hat.n_frames() as i64;
    if lag.abs() >= t {
        return Err(invalid(
            "lag",
            format!("|{lag}| must be smaller than the {t}-frame sequence"),
        ));
    }
    let d = m_hat.n_mels();
    let mut frames = Matrix::zeros(t as usize, d);
    let mut flags = vec![false; t as usize];
    for i in 0..t {
        let src = i + lag;
        if (0..t).contains(&src) {
            frames
                .row_mut(i as usize)
                .copy_from_slice(m_hat.frames.row(src as usize));
            flags[i as usize] = true;
        }
    }
    Ok((
        MelSpectrogram {
            frames,
            frame_rate: m_hat.frame_rate,
        },
        FrameValidity { flags },
    ))
}

/// Mean squared error over valid frames and all channels.
pub fn masked_mse<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, valid: &FrameValidity) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            context: "loss operands",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if valid.flags.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "validity length",
            expected: a.rows(),
            actual: valid.flags.len(),
        });
    }
    let n = valid.count() * a.cols();
    if n == 0 {
        return Err(Error::NoValidFrames);
    }
    let mut total = T::zero();
    for (r, _) in valid.flags.iter().enumerate().filter(|(_, &f)| f) {
        for (&x, &y) in a.row(r).iter().zip(b.row(r)) {
            total += (x - y).sq();
        }
    }
    Ok(total / T::from_count(n))
}

pub fn soft_dsm_loss<T: Scalar>(
    m_ref: &MelSpectrogram<T>,
    m_soft: &MelSpectrogram<T>,
    valid: &FrameValidity,
) -> Result<T> {
    masked_mse(&m_ref.frames, &m_soft.frames, valid)
}

pub fn hard_dsm_loss<T: Scalar>(
    m_ref: &MelSpectrogram<T>,
    m_hard: &MelSpectrogram<T>,
    valid: &FrameValidity,
) -> Result<T> {
    masked_mse(&m_ref.frames, &m_hard.frames, valid)
}

/// `-ln P(k = 0)`.
pub fn ssm_loss<T: Scalar>(d: &OffsetDistribution<T>) -> T {
    -d.prob(0).ln()
}

/// Result of one data-synchronization evaluation.
#[derive(Debug, Clone)]
pub struct DsmOutput<T> {
    pub soft_loss: T,
    pub hard_loss: T,
    pub lag: i64,
    pub distribution: OffsetDistribution<T>,
}

/// Predicts the video/reference offset with `params`, corrects `m_hat`
/// both ways and scores each correction against `m_ref`.
pub fn dsm_step<T: Scalar>(
    video: &FeatureSequence<T>,
    m_ref: &MelSpectrogram<T>,
    m_hat: &MelSpectrogram<T>,
    params: &OffsetPredictor<T>,
    cfg: &PredictorConfig,
) -> Result<DsmOutput<T>> {
    let (_, distribution) = params.distribution(video, &m_ref.frames, None, cfg)?;
    dsm_losses(m_ref, m_hat, distribution)
}

/// Loss half of [`dsm_step`] for an already computed distribution.
pub fn dsm_losses<T: Scalar>(
    m_ref: &MelSpectrogram<T>,
    m_hat: &MelSpectrogram<T>,
    distribution: OffsetDistribution<T>,
) -> Result<DsmOutput<T>> {
    if m_ref.frames.shape() != m_hat.frames.shape() {
        return Err(Error::DimensionMismatch {
            context: "reference vs reconstruction mel",
            expected: m_ref.frames.len(),
            actual: m_hat.frames.len(),
        });
    }
    let (soft, soft_valid) = soft_correct(m_hat, &distribution)?;
    let lag = argmax_lag(&distribution);
    let (hard, hard_valid) = hard_correct(m_hat, lag)?;
    Ok(DsmOutput {
        soft_loss: soft_dsm_loss(m_ref, &soft, &soft_valid)?,
        hard_loss: hard_dsm_loss(m_ref, &hard, &hard_valid)?,
        lag,
        distribution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mel(rng: &mut ChaCha8Rng, t: usize, d: usize) -> MelSpectrogram<f64> {
        MelSpectrogram::new(Matrix::from_fn(t, d, |_, _| rng.gen_range(-3.0..3.0)))
    }

    #[test]
    fn delta_at_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mel(&mut rng, 12, 3);
        let (out, valid) = soft_correct(&m, &OffsetDistribution::delta(3, 0)).unwrap();
        assert_eq!(out.frames, m.frames);
        assert_eq!(valid.count(), 12);
        let (hard, hv) = hard_correct(&m, 0).unwrap();
        assert_eq!(hard.frames, m.frames);
        assert_eq!(hv.count(), 12);
    }

    #[test]
    fn delta_soft_correction_pulls_frames_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_mel(&mut rng, 12, 2);
        for k0 in -3i64..=3 {
            let (out, _) = soft_correct(&m, &OffsetDistribution::delta(3, k0)).unwrap();
            for i in 0..12i64 {
                let src = i + k0;
                let row = out.frames.row(i as usize);
                if (0..12).contains(&src) {
                    assert_eq!(row, m.frames.row(src as usize));
                } else {
                    assert!(row.iter().all(|&x| x == 0.0));
                }
            }
        }
    }

    #[test]
    fn two_tap_kernel_averages_neighbours() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_mel(&mut rng, 10, 2);
        let d = OffsetDistribution::from_probs(vec![0.0, 0.5, 0.0, 0.5, 0.0], 1.0).unwrap();
        let (out, _) = soft_correct(&m, &d).unwrap();
        for i in 1..9 {
            for c in 0..2 {
                let expect = 0.5 * (m.frames[(i - 1, c)] + m.frames[(i + 1, c)]);
                assert!((out.frames[(i, c)] - expect).abs() < 1e-15);
            }
        }
        assert!(soft_correct(&random_mel(&mut rng, 4, 2), &d).is_err());
    }

    #[test]
    fn hard_correction_validity_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_mel(&mut rng, 10, 2);
        let (out, v) = hard_correct(&m, 3).unwrap();
        assert_eq!(v.flags, [vec![true; 7], vec![false; 3]].concat());
        for i in 0..7 {
            assert_eq!(out.frames.row(i), m.frames.row(i + 3));
        }
        assert!(out.frames.row(8).iter().all(|&x| x == 0.0));
        let (out, v) = hard_correct(&m, -2).unwrap();
        assert_eq!(v.flags, [vec![false; 2], vec![true; 8]].concat());
        assert_eq!(out.frames.row(5), m.frames.row(3));
        assert!(hard_correct(&m, 10).is_err());
        assert!(hard_correct(&m, -10).is_err());
    }

    #[test]
    fn hard_correct_round_trip_restores_doubly_valid_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_mel(&mut rng, 15, 3);
        for lag in -4i64..=4 {
            let (fwd, v1) = hard_correct(&m, lag).unwrap();
            let (back, v2) = hard_correct(&fwd, -lag).unwrap();
            for i in 0..15 {
                let src = (i as i64 - lag) as usize;
                if v2.flags[i] && v1.flags.get(src).copied().unwrap_or(false) {
                    assert_eq!(back.frames.row(i), m.frames.row(i));
                }
            }
        }
    }

    #[test]
    fn loss_reference_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_mel(&mut rng, 10, 4);
        let all = FrameValidity::all(10);
        assert_eq!(soft_dsm_loss(&m, &m, &all).unwrap(), 0.0);
        let plus = MelSpectrogram::new(m.frames.map(|x| x + 1.0));
        assert!((soft_dsm_loss(&m, &plus, &all).unwrap() - 1.0).abs() < 1e-12);
        let none = FrameValidity { flags: vec![false; 10] };
        assert!(matches!(hard_dsm_loss(&m, &m, &none), Err(Error::NoValidFrames)));
    }

    #[test]
    fn shifted_reconstruction_is_recovered_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_mel(&mut rng, 30, 4);
        let k0 = 4;
        let m_hat = m.shifted(k0);
        let (hard, valid) = hard_correct(&m_hat, k0).unwrap();
        assert_eq!(hard_dsm_loss(&m, &hard, &valid).unwrap(), 0.0);
        let (wrong, wv) = hard_correct(&m_hat, k0 - 1).unwrap();
        assert!(hard_dsm_loss(&m, &wrong, &wv).unwrap() > 0.0);
    }

    #[test]
    fn ssm_loss_reference_values() {
        let uniform = OffsetDistribution::<f64>::from_probs(vec![1.0; 7], 1.0).unwrap();
        assert!((ssm_loss(&uniform) - 7f64.ln()).abs() < 1e-12);
        assert!((ssm_loss(&uniform) - 1.945910).abs() < 1e-6);
        let half = OffsetDistribution::<f64>::from_probs(vec![0.25, 0.5, 0.25], 1.0).unwrap();
        assert!((ssm_loss(&half) - 0.693147).abs() < 1e-6);
        let sharp = OffsetDistribution::<f64>::from_probs(vec![1e-9, 1.0 - 2e-9, 1e-9], 1.0).unwrap();
        assert!(ssm_loss(&sharp) < 1e-8);
    }
}
