//! Synthetic audio/feature pairs with known data and model offsets.
//!
//! A latent event path `z(t)` (8 dims, knots on the 25 Hz video grid,
//! linear in between) drives both streams. Video features are a fixed
//! random projection of the knots; audio is a set of carriers whose
//! amplitudes follow `exp(gain · z(t))`. The projections and carrier bands
//! are the same for every scenario so that a learned extractor sees one
//! consistent mapping; only the latent path and noise depend on the seed.
//!
//! Time origin is the video. The reference audio is the master signal
//! advanced by `o_d` (so the video lags it by `o_d`) and the
//! reconstruction is the master delayed by `o_m`.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::{MelConfig, MelExtractor, MelSpectrogram, Waveform, HOP, SAMPLE_RATE, WINDOW};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::sync::{FeatureSequence, UPSAMPLE_FACTOR};

pub const LATENT_DIM: usize = 8;
pub const VIDEO_DIM: usize = 16;
/// Mel frames per millisecond grid step.
pub const FRAME_MS: i64 = 10;
const SAMPLES_PER_MS: i64 = (SAMPLE_RATE / 1000) as i64;
/// Samples per video frame.
const SAMPLES_PER_VIDEO_FRAME: usize = HOP * UPSAMPLE_FACTOR;
const WORLD_SEED: u64 = 0x0a5c_5eed;
const AMP_GAIN: f64 = 1.0;
const NOISE_FLOOR: f64 = 1e-3;
const WALK_RHO: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// Harmonic complex with a gliding pitch; latent shapes its spectral
    /// envelope.
    HarmonicSweep,
    /// Band-limited noise carriers switched on by sparse latent bursts.
    NoiseBursts,
    /// Mean-reverting random walk stepping at the mel frame rate, so video
    /// sees every fourth step. Its mel pair is produced directly in the
    /// feature domain; audio uses band-noise carriers.
    RandomWalk,
}

impl SignalKind {
    pub const ALL: [SignalKind; 3] = [Self::HarmonicSweep, Self::NoiseBursts, Self::RandomWalk];

    pub fn name(self) -> &'static str {
        match self {
            Self::HarmonicSweep => "harmonic_sweep",
            Self::NoiseBursts => "noise_bursts",
            Self::RandomWalk => "random_walk",
        }
    }
}

impl std::str::FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid("kind", format!("unknown signal kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsyncScenario {
    /// Data offset in ms; positive means the video lags the reference.
    pub o_d_ms: i64,
    /// Model offset in ms; positive delays the reconstruction.
    pub o_m_ms: i64,
    pub noise_snr_db: Option<f64>,
    pub duration_s: f64,
    pub seed: u64,
    pub kind: SignalKind,
}

impl AsyncScenario {
    pub fn new(o_d_ms: i64, o_m_ms: i64, seed: u64, kind: SignalKind) -> Self {
        Self {
            o_d_ms,
            o_m_ms,
            noise_snr_db: None,
            duration_s: 2.0,
            seed,
            kind,
        }
    }

    pub fn with_noise(mut self, snr_db: f64) -> Self {
        self.noise_snr_db = Some(snr_db);
        self
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.duration_s = seconds;
        self
    }

    /// Video frames (25 Hz); the duration is rounded down to whole frames.
    pub fn video_frames(&self) -> usize {
        (self.duration_s * 25.0 + 1e-9).floor() as usize
    }

    pub fn mel_frames(&self) -> usize {
        self.video_frames() * UPSAMPLE_FACTOR
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s >= 1.0) || !self.duration_s.is_finite() {
            return Err(invalid(
                "duration",
                format!("{} s is below the 1 s minimum", self.duration_s),
            ));
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return Err(invalid("noise_snr_db", "must be finite"));
            }
        }
        Ok(())
    }

    fn check_grid(&self) -> Result<()> {
        for ms in [self.o_d_ms, self.o_m_ms] {
            if ms % FRAME_MS != 0 {
                return Err(Error::FractionalFrameShift { ms, frame_ms: FRAME_MS });
            }
        }
        Ok(())
    }
}

/// Offsets a generated pair was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub o_d_ms: i64,
    pub o_m_ms: i64,
}

impl GroundTruth {
    /// Lag of the video behind the reference in mel frames.
    pub fn data_lag_frames(&self) -> i64 {
        self.o_d_ms / FRAME_MS
    }

    /// Delay of the reconstruction behind the reference in mel frames.
    pub fn total_shift_frames(&self) -> i64 {
        (self.o_d_ms + self.o_m_ms) / FRAME_MS
    }
}

/// Pseudo-video plus reference and reconstructed audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncPair {
    pub video: FeatureSequence<f64>,
    pub reference: Waveform<f64>,
    pub reconstruction: Waveform<f64>,
    pub truth: GroundTruth,
}

/// Pseudo-video with reference and reconstructed mel-spectrograms.
#[derive(Debug, Clone, PartialEq)]
pub struct MelPair {
    pub video: FeatureSequence<f64>,
    pub mel_ref: MelSpectrogram<f64>,
    pub mel_hat: MelSpectrogram<f64>,
    pub truth: GroundTruth,
}

/// Ground-truth manifest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub o_d_ms: i64,
    pub o_m_ms: i64,
    pub seed: u64,
    pub kind: SignalKind,
}

struct World {
    video_proj: Matrix<f64>,
    mel_proj: Matrix<f64>,
    mel_bias: Vec<f64>,
    band_centers: Vec<f64>,
}

fn world() -> &'static World {
    static WORLD: OnceLock<World> = OnceLock::new();
    WORLD.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(WORLD_SEED);
        let scale = (1.0 / LATENT_DIM as f64).sqrt();
        let mut normal = |rows, cols| Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let video_proj = normal(LATENT_DIM, VIDEO_DIM);
        let mel_proj = normal(LATENT_DIM, MelConfig::default().n_mels);
        let mel_bias = (0..MelConfig::default().n_mels)
            .map(|c| -4.0 - 0.05 * c as f64)
            .collect();
        let (lo, hi) = (250f64.ln(), 6000f64.ln());
        let band_centers = (0..LATENT_DIM)
            .map(|d| (lo + (hi - lo) * d as f64 / (LATENT_DIM - 1) as f64).exp())
            .collect();
        World {
            video_proj,
            mel_proj,
            mel_bias,
            band_centers,
        }
    })
}

/// Latent knots `first_knot..first_knot + n` (rows) for one scenario,
/// `spacing` samples apart. Video frames sample every knot that falls on
/// the 25 Hz grid.
struct Latent {
    first_knot: i64,
    spacing: usize,
    knots: Matrix<f64>,
}

/// The random walk moves at the mel frame rate so that neighbouring
/// frames differ; the other kinds move at the video rate.
fn knot_spacing(kind: SignalKind) -> usize {
    match kind {
        SignalKind::RandomWalk => HOP,
        _ => SAMPLES_PER_VIDEO_FRAME,
    }
}

impl Latent {
    fn generate(kind: SignalKind, first_knot: i64, n: usize, rng: &mut ChaCha8Rng) -> Self {
        let spacing = knot_spacing(kind);
        let mut knots = Matrix::zeros(n, LATENT_DIM);
        match kind {
            SignalKind::HarmonicSweep => {
                for v in knots.as_mut_slice() {
                    *v = rng.sample(StandardNormal);
                }
            }
            SignalKind::NoiseBursts => {
                for v in knots.as_mut_slice() {
                    let x: f64 = rng.sample(StandardNormal);
                    *v = if rng.gen_bool(0.35) {
                        1.0 + x.abs()
                    } else {
                        -1.0 + 0.3 * x
                    };
                }
            }
            SignalKind::RandomWalk => {
                let innovation = (1.0 - WALK_RHO * WALK_RHO).sqrt();
                for d in 0..LATENT_DIM {
                    let mut state: f64 = rng.sample(StandardNormal);
                    for r in 0..n {
                        knots[(r, d)] = state;
                        state = WALK_RHO * state + innovation * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
        }
        Self {
            first_knot,
            spacing,
            knots,
        }
    }

    /// Linear interpolation at sample position `sample` (relative to
    /// video frame 0).
    fn at(&self, sample: i64, out: &mut [f64]) {
        let rel = sample as f64 / self.spacing as f64 - self.first_knot as f64;
        let last = self.knots.rows() - 1;
        let lo = (rel.floor().max(0.0) as usize).min(last);
        let hi = (lo + 1).min(last);
        let a = (rel - lo as f64).clamp(0.0, 1.0);
        for (d, o) in out.iter_mut().enumerate() {
            *o = (1.0 - a) * self.knots[(lo, d)] + a * self.knots[(hi, d)];
        }
    }

    /// Knot rows under video frames `0..n`.
    fn video_knots(&self, n: usize) -> Matrix<f64> {
        let start = (-self.first_knot) as usize;
        let stride = SAMPLES_PER_VIDEO_FRAME / self.spacing;
        Matrix::from_fn(n, LATENT_DIM, |r, c| self.knots[(start + r * stride, c)])
    }
}

/// Sample span `[start, end)` of the master signal needed to cover every
/// shifted view, in samples relative to video frame 0.
struct Span {
    start: i64,
    end: i64,
}

fn master_span(sc: &AsyncScenario) -> Span {
    let n = (sc.mel_frames() * HOP) as i64;
    let reach = (sc.o_d_ms.abs() + sc.o_m_ms.abs()) * SAMPLES_PER_MS + WINDOW as i64 * 2;
    let knot = SAMPLES_PER_VIDEO_FRAME as i64;
    let start = -((reach + knot - 1) / knot) * knot;
    let end = n + (reach + knot - 1) / knot * knot;
    Span { start, end }
}

fn noise_sigma(signal_power: f64, snr_db: f64) -> f64 {
    (signal_power / 10f64.powf(snr_db / 10.0)).sqrt()
}

fn add_noise(values: &mut [f64], snr_db: f64, rng: &mut ChaCha8Rng) {
    let power = values.iter().map(|v| v * v).sum::<f64>() / values.len().max(1) as f64;
    let sigma = noise_sigma(power, snr_db);
    for v in values {
        *v += sigma * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Triangular weight of band `d` at frequency `f` on a log-frequency axis.
fn band_weight(centers: &[f64], d: usize, f: f64) -> f64 {
    let step = (centers[1] / centers[0]).ln();
    let dist = (f.ln() - centers[d].ln()).abs() / step;
    (1.0 - dist).max(0.0)
}

fn band_noise(len: usize, centers: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut white: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    fwd.process(&mut white);
    let step = (centers[1] / centers[0]).ln();
    (0..centers.len())
        .map(|d| {
            let (lo, hi) = (
                (centers[d].ln() - step / 2.0).exp(),
                (centers[d].ln() + step / 2.0).exp(),
            );
            let mut spec: Vec<Complex<f64>> = white
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let bin = k.min(n - k);
                    let f = bin as f64 * SAMPLE_RATE as f64 / n as f64;
                    if f >= lo && f < hi {
                        c
                    } else {
                        Complex::new(0.0, 0.0)
                    }
                })
                .collect();
            inv.process(&mut spec);
            let band: Vec<f64> = spec[..len].iter().map(|c| c.re / n as f64).collect();
            let rms = (band.iter().map(|v| v * v).sum::<f64>() / len as f64)
                .sqrt()
                .max(1e-300);
            band.into_iter().map(|v| v / rms).collect()
        })
        .collect()
}

/// Master waveform over `span`.
fn render_master(kind: SignalKind, latent: &Latent, span: &Span, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w = world();
    let len = (span.end - span.start) as usize;
    let mut z = vec![0.0; LATENT_DIM];
    let mut envelopes = vec![vec![0.0; LATENT_DIM]; len];
    for (k, env) in envelopes.iter_mut().enumerate() {
        latent.at(span.start + k as i64, &mut z);
        for (e, &zd) in env.iter_mut().zip(&z) {
            *e = (AMP_GAIN * zd).exp();
        }
    }
    let mut out = vec![0.0; len];
    match kind {
        SignalKind::HarmonicSweep => {
            let f_start = rng.gen_range(100.0..180.0);
            let ratio: f64 = rng.gen_range(0.7..1.4);
            let total = len as f64 / SAMPLE_RATE as f64;
            let n_harm = (7000.0 / (f_start * ratio.max(1.0))).floor() as usize;
            let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
            let mut phase0 = 0.0;
            for (k, o) in out.iter_mut().enumerate() {
                let t = k as f64 / SAMPLE_RATE as f64;
                let f0 = f_start * ratio.powf(t / total);
                phase0 += std::f64::consts::TAU * f0 / SAMPLE_RATE as f64;
                let mut acc = 0.0;
                for (h, ph) in phases.iter().enumerate() {
                    let f = f0 * (h + 1) as f64;
                    let amp: f64 = (0..LATENT_DIM)
                        .map(|d| band_weight(&w.band_centers, d, f) * envelopes[k][d])
                        .sum();
                    if amp > 0.0 {
                        acc += amp * (phase0 * (h + 1) as f64 + ph).sin();
                    }
                }
                *o = acc;
            }
        }
        SignalKind::NoiseBursts | SignalKind::RandomWalk => {
            let bands = band_noise(len, &w.band_centers, rng);
            for (k, o) in out.iter_mut().enumerate() {
                *o = (0..LATENT_DIM).map(|d| envelopes[k][d] * bands[d][k]).sum();
            }
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt().max(1e-300);
    for o in &mut out {
        *o = 0.1 * *o / rms + NOISE_FLOOR * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

fn scenario_setup(sc: &AsyncScenario) -> Result<(ChaCha8Rng, Span, Latent)> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let span = master_span(sc);
    let knot = knot_spacing(sc.kind) as i64;
    let first = span.start / knot;
    let count = ((span.end - span.start) / knot + 2) as usize;
    let latent = Latent::generate(sc.kind, first, count, &mut rng);
    Ok((rng, span, latent))
}

fn video_features(latent: &Latent, sc: &AsyncScenario, rng: &mut ChaCha8Rng) -> Result<FeatureSequence<f64>> {
    let mut frames = latent.video_knots(sc.video_frames()).matmul(&world().video_proj)?;
    if let Some(snr) = sc.noise_snr_db {
        add_noise(frames.as_mut_slice(), snr, rng);
    }
    Ok(FeatureSequence::video(frames))
}

/// Video features and reference/reconstruction audio for one scenario.
/// Noise (when set) goes on the video and the reconstruction.
pub fn gen_pair(sc: &AsyncScenario) -> Result<SyncPair> {
    let (mut rng, span, latent) = scenario_setup(sc)?;
    let master = render_master(sc.kind, &latent, &span, &mut rng);
    let n = sc.mel_frames() * HOP;
    let view = |offset: i64| -> Vec<f64> {
        (0..n as i64)
            .map(|k| master[(k + offset - span.start) as usize])
            .collect()
    };
    let reference = view(sc.o_d_ms * SAMPLES_PER_MS);
    let mut reconstruction = view(-sc.o_m_ms * SAMPLES_PER_MS);
    let video = video_features(&latent, sc, &mut rng)?;
    if let Some(snr) = sc.noise_snr_db {
        add_noise(&mut reconstruction, snr, &mut rng);
    }
    Ok(SyncPair {
        video,
        reference: Waveform::from_samples(reference)?,
        reconstruction: Waveform::from_samples(reconstruction)?,
        truth: GroundTruth {
            o_d_ms: sc.o_d_ms,
            o_m_ms: sc.o_m_ms,
        },
    })
}

/// Master mel over `span`, one row per hop starting at `span.start`.
fn master_mel(sc: &AsyncScenario, latent: &Latent, span: &Span, rng: &mut ChaCha8Rng) -> Result<Matrix<f64>> {
    let w = world();
    let frames = ((span.end - span.start) as usize) / HOP;
    match sc.kind {
        SignalKind::RandomWalk => {
            let mut z = vec![0.0; LATENT_DIM];
            let mut out = Matrix::zeros(frames, w.mel_bias.len());
            for r in 0..frames {
                latent.at(span.start + (r * HOP) as i64, &mut z);
                let row = out.row_mut(r);
                for (c, o) in row.iter_mut().enumerate() {
                    *o = w.mel_bias[c] + (0..LATENT_DIM).map(|d| z[d] * w.mel_proj[(d, c)]).sum::<f64>();
                }
            }
            Ok(out)
        }
        _ => {
            let master = render_master(sc.kind, latent, span, rng);
            MelExtractor::new(&MelConfig::default())?.compute_samples(&master)
        }
    }
}

/// Reference mel and a reconstruction delayed by `o_d + o_m`, both cut
/// from one master spectrogram so the shift is exact. The random-walk kind
/// builds its mel directly from the latent (a linear map plus bias).
/// Noise (when set) goes on the video and the reconstruction.
pub fn gen_mel_pair(sc: &AsyncScenario) -> Result<MelPair> {
    sc.check_grid()?;
    let (mut rng, span, latent) = scenario_setup(sc)?;
    let master = master_mel(sc, &latent, &span, &mut rng)?;
    let t = sc.mel_frames();
    let origin = (-span.start) as usize / HOP;
    let window = |shift_frames: i64| -> Matrix<f64> {
        let start = (origin as i64 + shift_frames) as usize;
        master.slice_rows(start, start + t)
    };
    let mel_ref = window(sc.o_d_ms / FRAME_MS);
    let mut mel_hat = window(-sc.o_m_ms / FRAME_MS);
    let video = video_features(&latent, sc, &mut rng)?;
    if let Some(snr) = sc.noise_snr_db {
        let centered = crate::dsp::normalize_channels(&mel_hat);
        let power = centered.as_slice().iter().map(|v| v * v).sum::<f64>() / centered.len() as f64;
        let sigma = noise_sigma(power, snr);
        let std: Vec<f64> = (0..mel_hat.cols())
            .map(|c| {
                let col: Vec<f64> = (0..t).map(|r| mel_hat[(r, c)]).collect();
                let mean = col.iter().sum::<f64>() / t as f64;
                (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64).sqrt()
            })
            .collect();
        for r in 0..t {
            for (c, s) in std.iter().enumerate() {
                mel_hat[(r, c)] += sigma * s * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(MelPair {
        video,
        mel_ref: MelSpectrogram::new(mel_ref),
        mel_hat: MelSpectrogram::new(mel_hat),
        truth: GroundTruth {
            o_d_ms: sc.o_d_ms,
            o_m_ms: sc.o_m_ms,
        },
    })
}

/// Equal-width feature pair at the mel rate where `v` is `u` delayed by
/// `lag` frames: `v_i = u_{i-lag}`. Both come from one AR(1) sequence of
/// length `T + 2K`, so no frame is padded. Noise is added independently to
/// each at `snr_db`.
pub fn gen_feature_pair(
    frames: usize,
    dim: usize,
    radius: usize,
    lag: i64,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<(Matrix<f64>, Matrix<f64>)> {
    if lag.unsigned_abs() as usize > radius {
        return Err(invalid("lag", format!("|{lag}| exceeds radius {radius}")));
    }
    if frames == 0 || dim == 0 {
        return Err(invalid("frames", "need a nonempty pair"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = frames + 2 * radius;
    let rho: f64 = 0.5;
    let innovation = (1.0 - rho * rho).sqrt();
    let mut base = Matrix::zeros(total, dim);
    for d in 0..dim {
        let mut state: f64 = rng.sample(StandardNormal);
        for r in 0..total {
            base[(r, d)] = state;
            state = rho * state + innovation * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let u_start = radius;
    let v_start = (radius as i64 - lag) as usize;
    let mut u = base.slice_rows(u_start, u_start + frames);
    let mut v = base.slice_rows(v_start, v_start + frames);
    if let Some(snr) = snr_db {
        add_noise(u.as_mut_slice(), snr, &mut rng);
        add_noise(v.as_mut_slice(), snr, &mut rng);
    }
    Ok((v, u))
}

/// Draws a scenario per index with offsets uniform on the 10 ms grid in
/// `[-max_ms, max_ms]`; `o_m` is zero.
pub fn random_scenarios(count: usize, max_ms: i64, kind: SignalKind, duration_s: f64, seed: u64) -> Vec<AsyncScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = max_ms / FRAME_MS;
    (0..count)
        .map(|_| {
            let o_d = rng.gen_range(-steps..=steps) * FRAME_MS;
            AsyncScenario::new(o_d, 0, rng.gen(), kind).with_duration(duration_s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correction::{hard_correct, hard_dsm_loss};
    use crate::sync::{argmax_lag, oracle_distribution, PredictorConfig};

    #[test]
    fn kind_names_round_trip() {
        for k in SignalKind::ALL {
            assert_eq!(k.name().parse::<SignalKind>().unwrap(), k);
        }
        assert!("sine".parse::<SignalKind>().is_err());
    }

    #[test]
    fn pair_shapes() {
        let sc = AsyncScenario::new(40, -20, 3, SignalKind::NoiseBursts).with_duration(1.0);
        let p = gen_pair(&sc).unwrap();
        assert_eq!(p.video.len(), 25);
        assert_eq!(p.video.dim(), VIDEO_DIM);
        assert_eq!(p.reference.len(), 16000);
        assert_eq!(p.reconstruction.len(), 16000);
        let peak = p.reference.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 1.0 && peak > 0.05);
    }

    #[test]
    fn reconstruction_is_the_reference_delayed() {
        let sc = AsyncScenario::new(30, 50, 9, SignalKind::HarmonicSweep).with_duration(1.0);
        let p = gen_pair(&sc).unwrap();
        let shift = ((30 + 50) * SAMPLES_PER_MS) as usize;
        let r = p.reference.samples();
        let g = p.reconstruction.samples();
        for k in shift..r.len() {
            assert_eq!(g[k], r[k - shift]);
        }
    }

    #[test]
    fn determinism_per_seed() {
        let sc = AsyncScenario::new(-80, 0, 11, SignalKind::HarmonicSweep)
            .with_duration(1.0)
            .with_noise(20.0);
        assert_eq!(gen_pair(&sc).unwrap(), gen_pair(&sc).unwrap());
        assert_eq!(gen_mel_pair(&sc).unwrap(), gen_mel_pair(&sc).unwrap());
        let other = AsyncScenario { seed: 12, ..sc };
        assert_ne!(gen_pair(&sc).unwrap().reference, gen_pair(&other).unwrap().reference);
    }

    #[test]
    fn mel_pair_shift_is_exact() {
        for kind in SignalKind::ALL {
            let sc = AsyncScenario::new(30, 20, 5, kind).with_duration(1.2);
            let p = gen_mel_pair(&sc).unwrap();
            assert_eq!(p.mel_ref.n_frames(), 120);
            let (fixed, valid) = hard_correct(&p.mel_hat, 5).unwrap();
            assert_eq!(hard_dsm_loss(&p.mel_ref, &fixed, &valid).unwrap(), 0.0);
            // Same master, composite shift only: windows differ by o_m.
            let composed = gen_mel_pair(&AsyncScenario::new(50, 0, 5, kind).with_duration(1.2)).unwrap();
            for i in 0..118 {
                assert_eq!(composed.mel_hat.frames.row(i), p.mel_hat.frames.row(i + 2));
                assert_eq!(composed.mel_ref.frames.row(i), p.mel_ref.frames.row(i + 2));
            }
        }
    }

    #[test]
    fn off_grid_offsets_are_rejected_for_mel_pairs() {
        let sc = AsyncScenario::new(45, 0, 1, SignalKind::RandomWalk);
        assert!(matches!(
            gen_mel_pair(&sc),
            Err(Error::FractionalFrameShift { ms: 45, .. })
        ));
        assert!(gen_pair(&AsyncScenario::new(0, 0, 1, SignalKind::RandomWalk).with_duration(0.5)).is_err());
    }

    #[test]
    fn feature_pair_lag_is_recovered_by_oracle() {
        let cfg = PredictorConfig {
            radius: 6,
            ..PredictorConfig::default()
        };
        for lag in -6..=6 {
            let (v, u) = gen_feature_pair(64, 4, 6, lag, None, (lag + 100) as u64).unwrap();
            for i in 0..64 {
                let src = i as i64 - lag;
                if (0..64).contains(&src) {
                    assert_eq!(v.row(i), u.row(src as usize));
                }
            }
            let (_, d) = oracle_distribution(&v, &u, None, &cfg).unwrap();
            assert_eq!(argmax_lag(&d), lag);
        }
    }
}
