use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};
use syncforge::grad::{train_offset_predictor, SyncModel, TrainingSample};
use syncforge::io::write_atomic;
use syncforge::synth::FRAME_MS;

use crate::config::RunConfig;
use crate::files::{load_fmat, read_manifest, SamplePaths, MANIFEST};
use crate::{Failure, TrainOverrides};

pub const TRAIN_LOG: &str = "train_log.jsonl";

fn apply(cfg: &mut RunConfig, o: &TrainOverrides) {
    let t = &mut cfg.train;
    macro_rules! set {
        ($($flag:ident => $field:expr),*) => {$(if let Some(v) = o.$flag { $field = v; })*};
    }
    set!(
        steps => t.steps,
        lr => t.lr,
        warmup => t.warmup,
        batch_size => t.batch_size,
        seed => t.seed,
        radius => t.predictor.radius,
        temperature => t.predictor.temperature,
        ssm_weight => t.ssm_weight
    );
}

fn load_dataset(data: &Path) -> anyhow::Result<Vec<TrainingSample>> {
    let manifest = read_manifest(&data.join(MANIFEST))?;
    if manifest.is_empty() {
        return Err(anyhow!("{} lists no samples", data.join(MANIFEST).display()));
    }
    manifest
        .iter()
        .map(|e| {
            let p = SamplePaths::relative(&e.sample_id);
            Ok(TrainingSample {
                video: load_fmat(&data.join(&p.video))?,
                mel_ref: load_fmat(&data.join(&p.mel_ref))?,
                mel_hat: load_fmat(&data.join(&p.mel_hat))?,
                lag: Some(e.o_d_ms / FRAME_MS),
            })
        })
        .collect()
}

pub fn train(data: &Path, config: Option<&Path>, output: &Path, overrides: &TrainOverrides) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(config)?;
    apply(&mut cfg, overrides);
    cfg.validate()?;
    let dataset = load_dataset(data)?;
    let first = &dataset[0];
    let model = SyncModel::init(first.video.cols(), first.mel_ref.cols(), &cfg.train);
    let (model, log) = train_offset_predictor(&dataset, model, &cfg.train)?;

    std::fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    model.save(output)?;
    let mut lines = String::new();
    for record in &log {
        writeln!(lines, "{}", serde_json::to_string(record)?).expect("writing to a String");
    }
    write_atomic(&output.join(TRAIN_LOG), lines.as_bytes())?;
    if let Some(last) = log.last() {
        eprintln!(
            "{} steps, final loss {:.4} (soft {:.4}, hard {:.4}, ssm {:.4}) -> {}",
            log.len(),
            last.total_loss,
            last.soft_loss,
            last.hard_loss,
            last.ssm_loss,
            output.display()
        );
    }
    Ok(())
}
