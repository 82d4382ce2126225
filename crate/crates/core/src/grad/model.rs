//! Offset-predictor and loss graphs on a [`Tape`].

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::sync::{argmax_lag, ExtractorParams, OffsetDistribution, OffsetPredictor, PredictorConfig, UPSAMPLE_FACTOR};

/// Tape handles of one extractor's tensors, in
/// [`ExtractorParams::tensor_names`] order.
#[derive(Debug, Clone, Copy)]
pub struct ExtractorVars(pub [Var; 8]);

impl ExtractorVars {
    pub fn register<T: Scalar>(tape: &mut Tape<T>, p: &ExtractorParams<T>) -> Self {
        Self(p.tensors().map(|m| tape.param(m.clone())))
    }

    /// Same layout as [`register`](Self::register) but with constants.
    pub fn frozen<T: Scalar>(tape: &mut Tape<T>, p: &ExtractorParams<T>) -> Self {
        Self(p.tensors().map(|m| tape.constant(m.clone())))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PredictorVars {
    pub video: ExtractorVars,
    pub audio: ExtractorVars,
}

impl PredictorVars {
    pub fn register<T: Scalar>(tape: &mut Tape<T>, p: &OffsetPredictor<T>) -> Self {
        Self {
            video: ExtractorVars::register(tape, &p.video),
            audio: ExtractorVars::register(tape, &p.audio),
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.video.0.iter().chain(&self.audio.0).copied()
    }
}

/// Local extractor; video input is upsampled to the mel rate first.
pub fn extractor_graph<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &ExtractorVars, is_video: bool) -> Result<Var> {
    let [c1w, n1s, n1b, c2w, n2s, n2b, fw, fb] = p.0;
    let x = if is_video {
        tape.upsample(x, UPSAMPLE_FACTOR)?
    } else {
        x
    };
    let h = tape.conv1d(x, c1w, 3)?;
    let h = tape.channel_norm(h, n1s, n1b)?;
    let h = tape.gelu(h);
    let h = tape.conv1d(h, c2w, 1)?;
    let h = tape.channel_norm(h, n2s, n2b)?;
    let h = tape.gelu(h);
    let h = tape.matmul(h, fw)?;
    let h = tape.add_row_bias(h, fb)?;
    Ok(tape.l2_normalize_rows(h))
}

/// Offset distribution `P(k | video, mel)` as a `1 × (2K+1)` row.
pub fn distribution_graph<T: Scalar>(
    tape: &mut Tape<T>,
    p: &PredictorVars,
    video: Var,
    mel: Var,
    mask: Option<&[T]>,
    cfg: &PredictorConfig,
) -> Result<Var> {
    let v = extractor_graph(tape, video, &p.video, true)?;
    let u = extractor_graph(tape, mel, &p.audio, false)?;
    let t = tape.value(u).rows();
    if tape.value(v).rows() != t {
        return Err(Error::DimensionMismatch {
            context: "upsampled video frames vs mel frames",
            expected: t,
            actual: tape.value(v).rows(),
        });
    }
    let ones = vec![T::one(); t];
    let s = tape.sync_vec(v, u, mask.unwrap_or(&ones), cfg.radius, cfg.normalized)?;
    tape.softmax(s, T::lit(cfg.temperature))
}

/// Nodes of one data-synchronization evaluation.
#[derive(Debug, Clone, Copy)]
pub struct DsmGraph {
    pub probs: Var,
    pub soft: Var,
    pub hard: Var,
    pub lag: i64,
}

/// Distribution conditioned on `(video, m_ref)`; soft correction of the
/// gradient-stopped `m_hat`; hard correction at the argmax lag.
pub fn dsm_graph<T: Scalar>(
    tape: &mut Tape<T>,
    p: &PredictorVars,
    video: Var,
    m_ref: Var,
    m_hat: Var,
    cfg: &PredictorConfig,
) -> Result<DsmGraph> {
    let probs = distribution_graph(tape, p, video, m_ref, None, cfg)?;
    let frozen = tape.stop_gradient(m_hat);
    let soft_out = tape.soft_correct(frozen, probs)?;
    let all = vec![true; tape.value(m_ref).rows()];
    let soft = tape.mse_valid(m_ref, soft_out, &all)?;
    let d = OffsetDistribution {
        probs: tape.value(probs).as_slice().to_vec(),
        temperature: T::lit(cfg.temperature),
    };
    let lag = argmax_lag(&d);
    let hard_out = tape.hard_correct(m_hat, lag)?;
    let t = all.len() as i64;
    let valid: Vec<bool> = (0..t).map(|i| (0..t).contains(&(i + lag))).collect();
    let hard = tape.mse_valid(m_ref, hard_out, &valid)?;
    Ok(DsmGraph { probs, soft, hard, lag })
}

/// `-ln P(0 | video, m_hat)`.
pub fn ssm_graph<T: Scalar>(
    tape: &mut Tape<T>,
    p: &PredictorVars,
    video: Var,
    m_hat: Var,
    cfg: &PredictorConfig,
) -> Result<Var> {
    let probs = distribution_graph(tape, p, video, m_hat, None, cfg)?;
    tape.neg_log_index(probs, cfg.radius)
}

/// Gradients of `loss` for `vars`, zeros where unreachable.
pub fn collect_grads<T: Scalar>(tape: &Tape<T>, loss: Var, vars: impl Iterator<Item = Var>) -> Result<Vec<Matrix<T>>> {
    let g = tape.backward(loss)?;
    Ok(vars.map(|v| g.get_or_zeros(v, tape.value(v).shape())).collect())
}
