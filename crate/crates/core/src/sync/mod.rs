//! Offset prediction: local feature extractors, the masked sliding
//! cross-correlation (synchronization vector) and the temperature-softmax
//! offset distribution.

mod correlate;
mod extractor;
mod predictor;

pub use correlate::{argmax_lag, offset_distribution, sync_vec, OffsetDistribution, SyncVector};
pub use extractor::{extract_local, upsample_linear, ExtractorConfig, ExtractorParams, UPSAMPLE_FACTOR};
pub use predictor::{oracle_distribution, oracle_features, OffsetPredictor, PredictorConfig};

use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Video feature rate in Hz.
pub const VIDEO_FRAME_RATE: f64 = 25.0;

/// Time-major feature matrix with its frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<T> {
    pub frames: Matrix<T>,
    pub frame_rate: f64,
    /// Every row has unit L2 norm or is exactly zero.
    pub unit_rows: bool,
}

impl<T: Scalar> FeatureSequence<T> {
    pub fn new(frames: Matrix<T>, frame_rate: f64) -> Self {
        Self {
            frames,
            frame_rate,
            unit_rows: false,
        }
    }

    pub fn video(frames: Matrix<T>) -> Self {
        Self::new(frames, VIDEO_FRAME_RATE)
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    /// Frame-domain delay (advance when negative) with zero fill.
    pub fn shifted(&self, frames: i64) -> Self {
        let t = self.len() as i64;
        let out = Matrix::from_fn(self.len(), self.dim(), |r, c| {
            let src = r as i64 - frames;
            if (0..t).contains(&src) {
                self.frames[(src as usize, c)]
            } else {
                T::zero()
            }
        });
        Self {
            frames: out,
            frame_rate: self.frame_rate,
            unit_rows: self.unit_rows,
        }
    }
}

/// Per-frame validity flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeMask {
    flags: Vec<bool>,
}

impl TimeMask {
    pub fn new(flags: Vec<bool>) -> Result<Self> {
        if !flags.iter().any(|&f| f) {
            return Err(invalid("mask", "at least one frame must be valid"));
        }
        Ok(Self { flags })
    }

    pub fn all_valid(len: usize) -> Self {
        Self { flags: vec![true; len] }
    }

    /// Builds a mask from a `T × 1` matrix of 0.0/1.0 values.
    pub fn from_matrix<T: Scalar>(m: &Matrix<T>) -> Result<Self> {
        if m.cols() != 1 {
            return Err(invalid("mask", format!("expected one column, got {}", m.cols())));
        }
        Self::new(m.as_slice().iter().map(|&v| v > T::lit(0.5)).collect())
    }

    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        Matrix::from_fn(
            self.flags.len(),
            1,
            |r, _| {
                if self.flags[r] {
                    T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn weights<T: Scalar>(&self) -> Vec<T> {
        self.flags
            .iter()
            .map(|&f| if f { T::one() } else { T::zero() })
            .collect()
    }
}
