pub mod align;
pub mod correction;
pub mod dsp;
pub mod error;
pub mod grad;
pub mod io;
pub mod kernels;
pub mod matrix;
pub mod metrics;
pub mod scalar;
pub mod sync;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// Single-precision aliases.
pub type MatrixF32 = Matrix<f32>;
pub type WaveformF32 = dsp::Waveform<f32>;
pub type MelSpectrogramF32 = dsp::MelSpectrogram<f32>;
pub type FeatureSequenceF32 = sync::FeatureSequence<f32>;

/// Double-precision aliases.
pub type MatrixF64 = Matrix<f64>;
pub type WaveformF64 = dsp::Waveform<f64>;
pub type MelSpectrogramF64 = dsp::MelSpectrogram<f64>;
pub type FeatureSequenceF64 = sync::FeatureSequence<f64>;
