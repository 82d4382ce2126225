use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::FeatureSequence;
use crate::dsp::MEL_FRAME_RATE;
use crate::error::{Error, Result};
use crate::kernels;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// 25 Hz video features → 100 Hz.
pub const UPSAMPLE_FACTOR: usize = 4;
const CONV1_KERNEL: usize = 3;
const CONV2_KERNEL: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_embed: usize,
}

impl ExtractorConfig {
    pub fn new(d_in: usize) -> Self {
        Self {
            d_in,
            d_hidden: 128,
            d_embed: 64,
        }
    }
}

/// Weights of one local feature extractor:
/// conv(k=3) → norm → GELU → conv(k=1) → norm → GELU → linear → L2.
///
/// Convolution weights use the im2col layout of [`kernels::im2col`]. The
/// convolutions carry no bias since the following norm removes it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams<T> {
    pub conv1_weight: Matrix<T>,
    pub norm1_scale: Matrix<T>,
    pub norm1_shift: Matrix<T>,
    pub conv2_weight: Matrix<T>,
    pub norm2_scale: Matrix<T>,
    pub norm2_shift: Matrix<T>,
    pub fc_weight: Matrix<T>,
    pub fc_bias: Matrix<T>,
}

pub(crate) const TENSOR_NAMES: [&str; 8] = [
    "conv1.weight",
    "norm1.scale",
    "norm1.shift",
    "conv2.weight",
    "norm2.scale",
    "norm2.shift",
    "fc.weight",
    "fc.bias",
];

impl<T: Scalar> ExtractorParams<T> {
    /// Uniform `[-a, a]` init with `a = sqrt(1 / (fan_in · kernel))` for
    /// weights and the output bias; norm layers start as the identity affine.
    pub fn init<R: Rng>(cfg: &ExtractorConfig, rng: &mut R) -> Self {
        let mut uniform = |rows: usize, cols: usize, fan: usize| {
            let a = (1.0 / fan as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a);
            Matrix::from_fn(rows, cols, |_, _| T::lit(dist.sample(rng)))
        };
        let (d_in, h, e) = (cfg.d_in, cfg.d_hidden, cfg.d_embed);
        let conv1_weight = uniform(CONV1_KERNEL * d_in, h, d_in * CONV1_KERNEL);
        let conv2_weight = uniform(CONV2_KERNEL * h, h, h * CONV2_KERNEL);
        let fc_weight = uniform(h, e, h);
        let fc_bias = uniform(1, e, h);
        Self {
            conv1_weight,
            norm1_scale: Matrix::filled(1, h, T::one()),
            norm1_shift: Matrix::zeros(1, h),
            conv2_weight,
            norm2_scale: Matrix::filled(1, h, T::one()),
            norm2_shift: Matrix::zeros(1, h),
            fc_weight,
            fc_bias,
        }
    }

    /// All-zero weights with identity norm layers.
    pub fn zeros(cfg: &ExtractorConfig) -> Self {
        let (d_in, h, e) = (cfg.d_in, cfg.d_hidden, cfg.d_embed);
        Self {
            conv1_weight: Matrix::zeros(CONV1_KERNEL * d_in, h),
            norm1_scale: Matrix::filled(1, h, T::one()),
            norm1_shift: Matrix::zeros(1, h),
            conv2_weight: Matrix::zeros(h, h),
            norm2_scale: Matrix::filled(1, h, T::one()),
            norm2_shift: Matrix::zeros(1, h),
            fc_weight: Matrix::zeros(h, e),
            fc_bias: Matrix::zeros(1, e),
        }
    }

    pub fn config(&self) -> ExtractorConfig {
        ExtractorConfig {
            d_in: self.conv1_weight.rows() / CONV1_KERNEL,
            d_hidden: self.conv1_weight.cols(),
            d_embed: self.fc_weight.cols(),
        }
    }

    pub fn tensor_names() -> &'static [&'static str] {
        &TENSOR_NAMES
    }

    pub fn tensors(&self) -> [&Matrix<T>; 8] {
        [
            &self.conv1_weight,
            &self.norm1_scale,
            &self.norm1_shift,
            &self.conv2_weight,
            &self.norm2_scale,
            &self.norm2_shift,
            &self.fc_weight,
            &self.fc_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix<T>; 8] {
        [
            &mut self.conv1_weight,
            &mut self.norm1_scale,
            &mut self.norm1_shift,
            &mut self.conv2_weight,
            &mut self.norm2_scale,
            &mut self.norm2_shift,
            &mut self.fc_weight,
            &mut self.fc_bias,
        ]
    }

    /// Rebuilds from tensors in [`Self::tensor_names`] order, checking shapes.
    pub fn from_tensors(tensors: Vec<Matrix<T>>) -> Result<Self> {
        let [c1w, n1s, n1b, c2w, n2s, n2b, fw, fb]: [Matrix<T>; 8] =
            tensors
                .try_into()
                .map_err(|v: Vec<Matrix<T>>| Error::DimensionMismatch {
                    context: "extractor tensor count",
                    expected: 8,
                    actual: v.len(),
                })?;
        let p = Self {
            conv1_weight: c1w,
            norm1_scale: n1s,
            norm1_shift: n1b,
            conv2_weight: c2w,
            norm2_scale: n2s,
            norm2_shift: n2b,
            fc_weight: fw,
            fc_bias: fb,
        };
        let cfg = p.config();
        if p.conv1_weight.rows() % CONV1_KERNEL != 0 {
            return Err(Error::DimensionMismatch {
                context: "conv1 weight rows",
                expected: CONV1_KERNEL * cfg.d_in,
                actual: p.conv1_weight.rows(),
            });
        }
        let expected = Self::zeros(&cfg);
        for ((name, got), want) in TENSOR_NAMES.iter().zip(p.tensors()).zip(expected.tensors()) {
            if got.shape() != want.shape() {
                return Err(crate::error::invalid(
                    "extractor tensor",
                    format!("{name} has shape {:?}, expected {:?}", got.shape(), want.shape()),
                ));
            }
        }
        Ok(p)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.all_finite())
    }
}

/// Linear interpolation of 25 Hz features to 100 Hz.
pub fn upsample_linear<T: Scalar>(f: &FeatureSequence<T>) -> Result<FeatureSequence<T>> {
    Ok(FeatureSequence {
        frames: kernels::upsample_linear(&f.frames, UPSAMPLE_FACTOR)?,
        frame_rate: f.frame_rate * UPSAMPLE_FACTOR as f64,
        unit_rows: false,
    })
}

/// Runs one local extractor. Video input is upsampled to 100 Hz first.
pub fn extract_local<T: Scalar>(
    f: &FeatureSequence<T>,
    p: &ExtractorParams<T>,
    is_video: bool,
) -> Result<FeatureSequence<T>> {
    let cfg = p.config();
    if f.dim() != cfg.d_in {
        return Err(Error::DimensionMismatch {
            context: "extractor input channels",
            expected: cfg.d_in,
            actual: f.dim(),
        });
    }
    let x = if is_video {
        kernels::upsample_linear(&f.frames, UPSAMPLE_FACTOR)?
    } else {
        f.frames.clone()
    };
    let h = kernels::conv1d(&x, &p.conv1_weight, CONV1_KERNEL)?;
    let (h, _) = kernels::channel_norm(&h, &p.norm1_scale, &p.norm1_shift)?;
    let h = h.map(kernels::gelu);
    let h = kernels::conv1d(&h, &p.conv2_weight, CONV2_KERNEL)?;
    let (h, _) = kernels::channel_norm(&h, &p.norm2_scale, &p.norm2_shift)?;
    let h = h.map(kernels::gelu);
    let h = kernels::add_row_bias(&h.matmul(&p.fc_weight)?, &p.fc_bias)?;
    let (frames, _) = kernels::l2_normalize_rows(&h);
    Ok(FeatureSequence {
        frames,
        frame_rate: MEL_FRAME_RATE,
        unit_rows: true,
    })
}
