use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;
use syncforge::io::write_atomic;
use syncforge::metrics::{offset_r2, OffsetSeries, OffsetSource};
use syncforge::sync::argmax_lag;
use syncforge::synth::{ManifestEntry, FRAME_MS};

use super::align::{load_wav, score_pair, PairMetrics};
use super::aligner;
use super::estimate::{estimate_lag, load_model};
use crate::config::RunConfig;
use crate::files::{load_fmat, read_manifest, read_pairs, resolve, write_json, PairRow, MANIFEST};
use crate::Failure;

pub const REPORT_CSV: &str = "report.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Clone, Serialize)]
struct ReportRow {
    sample_id: String,
    o_f_ms: i64,
    dsm_offset_ms: Option<i64>,
    mcd: f64,
    a_mcd: f64,
    mel_mse: f64,
    a_mel_mse: f64,
}

#[derive(Debug, Serialize)]
struct R2Summary {
    /// DSM offsets against front-end offsets.
    dsm_vs_frontend: Option<f64>,
    dsm_vs_truth: Option<f64>,
    frontend_vs_truth: Option<f64>,
    /// All-zero predictor against the true data offsets.
    dummy_vs_truth: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    pairs: usize,
    mean: PairMetrics,
    r2: R2Summary,
}

fn series(source: OffsetSource, rows: &[ReportRow], f: impl Fn(&ReportRow) -> Option<f64>) -> Option<OffsetSeries> {
    let values: Option<Vec<f64>> = rows.iter().map(&f).collect();
    let ids = rows.iter().map(|r| r.sample_id.clone()).collect();
    OffsetSeries::new(source, ids, values?).ok()
}

/// `None` when either side is missing or R² is undefined.
fn r2(pred: &Option<OffsetSeries>, reference: &Option<OffsetSeries>) -> Option<f64> {
    offset_r2(pred.as_ref()?, reference.as_ref()?).ok()
}

pub fn eval(
    pairs: &Path,
    output: &Path,
    manifest: Option<&Path>,
    params: Option<&Path>,
    config: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    cfg.validate()?;
    let aligner = aligner(&cfg)?;
    let rows = read_pairs(pairs)?;
    if rows.is_empty() {
        return Err(Failure::data(anyhow!("pair list {} is empty", pairs.display())));
    }
    let base = pairs.parent().unwrap_or(Path::new("."));
    let manifest_path = manifest.map(Path::to_path_buf).unwrap_or_else(|| base.join(MANIFEST));
    let truth: HashMap<String, ManifestEntry> = if manifest_path.is_file() {
        read_manifest(&manifest_path)?
            .into_iter()
            .map(|e| (e.sample_id.clone(), e))
            .collect()
    } else {
        eprintln!("warning: no manifest at {}; truth R² skipped", manifest_path.display());
        HashMap::new()
    };
    let with_features = rows
        .iter()
        .all(|r| !r.video_fmat.is_empty() && !r.mel_ref_fmat.is_empty());
    let model = if with_features { load_model(params)? } else { None };

    let score = |row: &PairRow| -> anyhow::Result<ReportRow> {
        let g = load_wav(&resolve(base, &row.gen_wav))?;
        let r = load_wav(&resolve(base, &row.ref_wav))?;
        let (o_f_ms, _, m) = score_pair(&aligner, &g, &r)?;
        let dsm_offset_ms = if with_features {
            let v = load_fmat(&resolve(base, &row.video_fmat))?;
            let mel = load_fmat(&resolve(base, &row.mel_ref_fmat))?;
            match estimate_lag(&v, &mel, model.as_ref(), None) {
                Ok((_, _, d)) => Some(argmax_lag(&d) * FRAME_MS),
                // Oracle features need equal widths; learned mode does not.
                Err(syncforge::Error::DimensionMismatch { .. }) if model.is_none() => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        Ok(ReportRow {
            sample_id: row.sample_id.clone(),
            o_f_ms,
            dsm_offset_ms,
            mcd: m.mcd,
            a_mcd: m.a_mcd,
            mel_mse: m.mel_mse,
            a_mel_mse: m.a_mel_mse,
        })
    };
    let report: Vec<ReportRow> = rows
        .par_iter()
        .map(|row| score(row).with_context(|| format!("pair {}", row.sample_id)))
        .collect::<anyhow::Result<_>>()?;

    let n = report.len() as f64;
    let mean = |f: fn(&ReportRow) -> f64| report.iter().map(f).sum::<f64>() / n;
    let frontend = series(OffsetSource::Frontend, &report, |r| Some(r.o_f_ms as f64));
    let dsm = series(OffsetSource::Dsm, &report, |r| r.dsm_offset_ms.map(|v| v as f64));
    let truth_d = series(OffsetSource::GroundTruth, &report, |r| {
        truth.get(&r.sample_id).map(|e| e.o_d_ms as f64)
    });
    let truth_total = series(OffsetSource::GroundTruth, &report, |r| {
        truth.get(&r.sample_id).map(|e| (e.o_d_ms + e.o_m_ms) as f64)
    });
    let dummy = series(OffsetSource::Dummy, &report, |_| Some(0.0));
    let summary = Summary {
        pairs: report.len(),
        mean: PairMetrics {
            mcd: mean(|r| r.mcd),
            a_mcd: mean(|r| r.a_mcd),
            mel_mse: mean(|r| r.mel_mse),
            a_mel_mse: mean(|r| r.a_mel_mse),
        },
        r2: R2Summary {
            dsm_vs_frontend: r2(&dsm, &frontend),
            dsm_vs_truth: r2(&dsm, &truth_d),
            frontend_vs_truth: r2(&frontend, &truth_total),
            dummy_vs_truth: r2(&dummy, &truth_d),
        },
    };

    std::fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    for row in &report {
        csv.serialize(row)?;
    }
    let bytes = csv.into_inner().map_err(|e| anyhow!("{e}"))?;
    write_atomic(&output.join(REPORT_CSV), &bytes)?;
    write_json(&output.join(SUMMARY_JSON), &summary)?;
    eprintln!("{} pairs -> {}", report.len(), output.display());
    Ok(())
}
