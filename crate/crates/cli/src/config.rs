//! Flat JSON run configuration and the scenario file read by `gen`.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use syncforge::align::{MAX_SHIFT_MS, SHIFT_STEP_MS};
use syncforge::dsp::MelConfig;
use syncforge::grad::TrainConfig;
use syncforge::synth::SignalKind;

use crate::Failure;

pub const SEED_ENV: &str = "SYNCFORGE_SEED";

/// Every tunable in one flat object; a file may set any subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(flatten)]
    pub mel: MelConfig,
    pub max_shift_ms: i64,
    pub shift_step_ms: i64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            mel: MelConfig::default(),
            max_shift_ms: MAX_SHIFT_MS,
            shift_step_ms: SHIFT_STEP_MS,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let mut cfg: Self = match path {
            Some(p) => parse_flat(p)?,
            None => Self::default(),
        };
        if let Some(seed) = env_seed()? {
            cfg.train.seed = seed;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let t = &self.train;
        let p = &t.predictor;
        let checks = [
            (t.steps > 0, "steps must be positive"),
            (t.lr > 0.0 && t.lr.is_finite(), "lr must be positive"),
            (t.batch_size > 0, "batch_size must be positive"),
            (
                t.ssm_weight >= 0.0 && t.ssm_weight.is_finite(),
                "ssm_weight must be nonnegative",
            ),
            (t.d_hidden > 0 && t.d_embed > 0, "d_hidden and d_embed must be positive"),
            (p.radius > 0, "radius must be positive"),
            (
                p.temperature > 0.0 && p.temperature.is_finite(),
                "temperature must be positive",
            ),
            (self.mel.n_mels > 0, "n_mels must be positive"),
            (self.shift_step_ms > 0, "shift_step_ms must be positive"),
            (self.max_shift_ms >= 0, "max_shift_ms must be nonnegative"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Failure::usage(anyhow::anyhow!("invalid config: {msg}"))),
            None => Ok(()),
        }
    }
}

/// `gen` scenario batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub count: usize,
    /// Data offsets are drawn on the 10 ms grid within ±this.
    pub max_offset_ms: i64,
    /// Model offset applied to every reconstruction.
    pub o_m_ms: i64,
    pub kind: SignalKind,
    pub duration_s: f64,
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            count: 100,
            max_offset_ms: 200,
            o_m_ms: 0,
            kind: SignalKind::RandomWalk,
            duration_s: 2.0,
            noise_snr_db: None,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let mut cfg: Self = parse_flat(path)?;
        if let Some(seed) = env_seed()? {
            cfg.seed = seed;
        }
        if cfg.count == 0 {
            return Err(Failure::usage(anyhow::anyhow!(
                "invalid scenario: count must be positive"
            )));
        }
        if cfg.max_offset_ms < 0 || cfg.max_offset_ms % 10 != 0 || cfg.o_m_ms % 10 != 0 {
            return Err(Failure::usage(anyhow::anyhow!(
                "invalid scenario: offsets must be on the 10 ms grid"
            )));
        }
        Ok(cfg)
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            .map_err(Failure::usage),
        Err(_) => Ok(None),
    }
}

/// Parses a flat JSON object, rejecting keys the target type lacks.
fn parse_flat<T: Serialize + for<'de> Deserialize<'de> + Default>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::data)?;
    let value: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))
        .map_err(Failure::usage)?;
    let Value::Object(given) = &value else {
        return Err(Failure::usage(anyhow::anyhow!(
            "config {} must be a JSON object",
            path.display()
        )));
    };
    let known = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    };
    if let Some(key) = given.keys().find(|k| !known.contains_key(*k)) {
        let mut names: Vec<&String> = known.keys().collect();
        names.sort();
        return Err(Failure::usage(anyhow::anyhow!(
            "unknown config key {key:?} in {} (known: {})",
            path.display(),
            names.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    serde_json::from_value(value)
        .with_context(|| format!("config {}", path.display()))
        .map_err(Failure::usage)
}
