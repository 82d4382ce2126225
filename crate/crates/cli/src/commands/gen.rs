use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;
use syncforge::io::{write_atomic, write_fmat, write_wav};
use syncforge::synth::{gen_mel_pair, gen_pair, random_scenarios, AsyncScenario, ManifestEntry};

use crate::config::ScenarioConfig;
use crate::files::{write_json, PairRow, SamplePaths, MANIFEST, PAIRS, SAMPLES_DIR};
use crate::Failure;

fn write_sample(root: &Path, id: &str, sc: &AsyncScenario) -> anyhow::Result<()> {
    let mel = gen_mel_pair(sc)?;
    let audio = gen_pair(sc)?;
    let rel = SamplePaths::relative(id);
    write_fmat(&root.join(&rel.video), &mel.video.frames)?;
    write_fmat(&root.join(&rel.mel_ref), &mel.mel_ref.frames)?;
    write_fmat(&root.join(&rel.mel_hat), &mel.mel_hat.frames)?;
    write_wav(&root.join(&rel.ref_wav), &audio.reference)?;
    write_wav(&root.join(&rel.gen_wav), &audio.reconstruction)?;
    Ok(())
}

pub fn gen(scenario: &Path, output: &Path) -> Result<(), Failure> {
    let cfg = ScenarioConfig::load(scenario)?;
    let scenarios: Vec<AsyncScenario> =
        random_scenarios(cfg.count, cfg.max_offset_ms, cfg.kind, cfg.duration_s, cfg.seed)
            .into_iter()
            .map(|mut sc| {
                sc.o_m_ms = cfg.o_m_ms;
                sc.noise_snr_db = cfg.noise_snr_db;
                sc
            })
            .collect();
    for sc in &scenarios {
        sc.validate().map_err(Failure::usage)?;
    }
    std::fs::create_dir_all(output.join(SAMPLES_DIR)).with_context(|| format!("creating {}", output.display()))?;

    let ids: Vec<String> = (0..scenarios.len()).map(|i| format!("s{i:05}")).collect();
    scenarios
        .par_iter()
        .zip(&ids)
        .try_for_each(|(sc, id)| write_sample(output, id, sc).with_context(|| format!("sample {id}")))?;

    let manifest: Vec<ManifestEntry> = scenarios
        .iter()
        .zip(&ids)
        .map(|(sc, id)| ManifestEntry {
            sample_id: id.clone(),
            o_d_ms: sc.o_d_ms,
            o_m_ms: sc.o_m_ms,
            seed: sc.seed,
            kind: sc.kind,
        })
        .collect();
    write_json(&output.join(MANIFEST), &manifest)?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    for id in &ids {
        let rel = SamplePaths::relative(id);
        let s = |p: &Path| p.to_string_lossy().into_owned();
        csv.serialize(PairRow {
            sample_id: id.clone(),
            gen_wav: s(&rel.gen_wav),
            ref_wav: s(&rel.ref_wav),
            video_fmat: s(&rel.video),
            mel_ref_fmat: s(&rel.mel_ref),
        })?;
    }
    let bytes = csv.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_atomic(&output.join(PAIRS), &bytes)?;
    eprintln!("{} samples -> {}", ids.len(), output.display());
    Ok(())
}
