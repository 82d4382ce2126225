//! Mel cepstral distortion and offset agreement.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Cepstral coefficients kept by [`mel_cepstra`] (c1..c13).
pub const N_CEPSTRA: usize = 13;

/// Orthonormal DCT-II of each log-mel frame, keeping c1..c13. c0 carries
/// the frame's overall level and is dropped.
pub fn mel_cepstra<T: Scalar>(log_mel: &Matrix<T>) -> Result<Matrix<T>> {
    let n = log_mel.cols();
    if n <= N_CEPSTRA {
        return Err(invalid(
            "log_mel",
            format!("need more than {N_CEPSTRA} channels, got {n}"),
        ));
    }
    let n_t = T::from_count(n);
    let scale = (T::lit(2.0) / n_t).sqrt();
    let basis = Matrix::from_fn(n, N_CEPSTRA, |m, k| {
        let angle = T::PI() * T::from_count(k + 1) * (T::from_count(2 * m + 1)) / (T::lit(2.0) * n_t);
        scale * angle.cos()
    });
    log_mel.matmul(&basis)
}

/// Mean per-frame `(10 / ln 10) · sqrt(2 · Σ_d (c_d − c'_d)²)` in dB.
/// Frames are compared one-to-one, so callers align first.
pub fn mcd<T: Scalar>(gen: &Matrix<T>, reference: &Matrix<T>) -> Result<T> {
    if gen.shape() != reference.shape() {
        return Err(Error::DimensionMismatch {
            context: "mcd frame count",
            expected: reference.rows(),
            actual: gen.rows(),
        });
    }
    if gen.rows() == 0 {
        return Err(Error::NoValidFrames);
    }
    let k = T::lit(10.0) / T::LN_10();
    let total = gen
        .iter_rows()
        .zip(reference.iter_rows())
        .map(|(a, b)| {
            let d2 = a.iter().zip(b).map(|(&x, &y)| (x - y).sq()).sum::<T>();
            k * (T::lit(2.0) * d2).sqrt()
        })
        .sum::<T>();
    Ok(total / T::from_count(gen.rows()))
}

/// [`mcd`] on log-mel spectrograms.
pub fn mcd_from_mels<T: Scalar>(gen: &Matrix<T>, reference: &Matrix<T>) -> Result<T> {
    mcd(&mel_cepstra(gen)?, &mel_cepstra(reference)?)
}

/// Mean squared difference of two equal-shape log-mel spectrograms.
pub fn mel_mse<T: Scalar>(gen: &Matrix<T>, reference: &Matrix<T>) -> Result<T> {
    if gen.shape() != reference.shape() {
        return Err(Error::DimensionMismatch {
            context: "mel mse shape",
            expected: reference.len(),
            actual: gen.len(),
        });
    }
    if gen.is_empty() {
        return Err(Error::NoValidFrames);
    }
    let ss = gen
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(&a, &b)| (a - b).sq())
        .sum::<T>();
    Ok(ss / T::from_count(gen.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetSource {
    Dsm,
    Frontend,
    SyncnetLike,
    GroundTruth,
    Dummy,
}

/// Per-sample offsets in milliseconds with their sample ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetSeries {
    pub source: OffsetSource,
    pub sample_ids: Vec<String>,
    pub offsets_ms: Vec<f64>,
}

impl OffsetSeries {
    pub fn new(source: OffsetSource, sample_ids: Vec<String>, offsets_ms: Vec<f64>) -> Result<Self> {
        if sample_ids.len() != offsets_ms.len() {
            return Err(Error::DimensionMismatch {
                context: "offset series ids vs values",
                expected: sample_ids.len(),
                actual: offsets_ms.len(),
            });
        }
        if let Some(bad) = offsets_ms.iter().find(|v| !v.is_finite()) {
            return Err(invalid("offsets_ms", format!("non-finite offset {bad}")));
        }
        Ok(Self {
            source,
            sample_ids,
            offsets_ms,
        })
    }

    /// Series with generated ids `0, 1, ...`.
    pub fn unlabeled(source: OffsetSource, offsets_ms: Vec<f64>) -> Result<Self> {
        let ids = (0..offsets_ms.len()).map(|i| i.to_string()).collect();
        Self::new(source, ids, offsets_ms)
    }

    pub fn len(&self) -> usize {
        self.offsets_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets_ms.is_empty()
    }
}

/// Coefficient of determination of `predicted` against `reference`:
/// `1 − Σ(ref − pred)² / Σ(ref − mean(ref))²`. May be negative.
pub fn offset_r2(predicted: &OffsetSeries, reference: &OffsetSeries) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            context: "offset series length",
            expected: reference.len(),
            actual: predicted.len(),
        });
    }
    if let Some(i) = (0..reference.len()).find(|&i| predicted.sample_ids[i] != reference.sample_ids[i]) {
        return Err(invalid(
            "predicted",
            format!(
                "sample {i} is {:?} but reference has {:?}",
                predicted.sample_ids[i], reference.sample_ids[i]
            ),
        ));
    }
    if reference.len() < 2 {
        return Err(invalid("reference", "need at least two samples"));
    }
    r2_values(&predicted.offsets_ms, &reference.offsets_ms)
}

/// [`offset_r2`] on bare paired slices.
pub fn r2_values(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    let n = reference.len() as f64;
    let mean = reference.iter().sum::<f64>() / n;
    let ss_tot: f64 = reference.iter().map(|r| (r - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::R2Undefined);
    }
    let ss_res: f64 = reference.iter().zip(predicted).map(|(r, p)| (r - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
