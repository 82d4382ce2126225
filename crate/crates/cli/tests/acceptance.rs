//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits nonzero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use syncforge::align::{shift_grid_ms, AlignedMetric, Aligner, SHIFT_STEP_MS};
use syncforge::correction::{hard_correct, hard_dsm_loss, soft_correct, soft_dsm_loss, ssm_loss};
use syncforge::dsp::{MelSpectrogram, Waveform};
use syncforge::grad::suite::{
    composite_config, composite_instance, composite_loss, op_cases, random_directions, sample_case,
};
use syncforge::grad::{
    directional_check, dsm_graph, evaluate_lag_accuracy, evaluate_ssm_loss, graph_gradients, train_offset_predictor,
    ExtractorVars, PredictorVars, SyncModel, Tape, TrainConfig, TrainingSample,
};
use syncforge::metrics::{offset_r2, OffsetSeries, OffsetSource};
use syncforge::sync::{
    argmax_lag, offset_distribution, oracle_distribution, sync_vec, FeatureSequence, OffsetDistribution,
    PredictorConfig, SyncVector, TimeMask,
};
use syncforge::synth::{
    gen_feature_pair, gen_mel_pair, gen_pair, random_scenarios, AsyncScenario, SignalKind, VIDEO_DIM,
};
use syncforge::Matrix;
use tempfile::TempDir;

const H: f64 = 1e-6;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let took = start.elapsed();
    (
        took <= limit,
        format!("{:.1} s / {} s", took.as_secs_f64(), limit.as_secs()),
    )
}

fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    let mut m = Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
    for r in 0..rows {
        let n = m.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in m.row_mut(r) {
            *x /= n;
        }
    }
    m
}

/// Straight double loop over lags and frames with explicit bounds checks.
fn brute_sync(v: &Matrix<f64>, u: &Matrix<f64>, mask: &[bool], radius: usize, normalized: bool) -> Vec<f64> {
    let t = v.rows() as i64;
    let k = radius as i64;
    let mut out = Vec::new();
    for lag in -k..=k {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for i in 0..t {
            let j = i - lag;
            if j < 0 || j >= t || !mask[i as usize] || !mask[j as usize] {
                continue;
            }
            let mut dot = 0.0;
            for c in 0..v.cols() {
                dot += v[(i as usize, c)] * u[(j as usize, c)];
            }
            num += dot;
            pairs += 1.0;
        }
        out.push(match (normalized, pairs > 0.0) {
            (false, _) => num,
            (true, true) => num / pairs,
            (true, false) => 0.0,
        });
    }
    out
}

fn a1_sync_vector_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let t = rng.gen_range(8..=32);
        let d = rng.gen_range(2..=8);
        let k = rng.gen_range(1..=8usize.min(t - 1));
        let v = unit_rows(&mut rng, t, d);
        let u = unit_rows(&mut rng, t, d);
        let mut flags: Vec<bool> = (0..t).map(|_| rng.gen_bool(0.7)).collect();
        flags[rng.gen_range(0..t)] = true;
        let mask = TimeMask::new(flags.clone()).unwrap();
        let (fv, fu) = (
            FeatureSequence::new(v.clone(), 100.0),
            FeatureSequence::new(u.clone(), 100.0),
        );
        for normalized in [true, false] {
            let got = sync_vec(&fv, &fu, &mask, k, normalized).unwrap();
            let want = brute_sync(&v, &u, &flags, k, normalized);
            for (a, b) in got.values.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(5), start);
    verdict(
        worst < 1e-12 && fast,
        format!("200 instances, max |diff| {worst:.1e} (< 1e-12), {time}"),
    )
}

fn a2_feature_offset_recovery() -> Verdict {
    let start = Instant::now();
    let (frames, dim, radius) = (200, 16, 20usize);
    let cfg = PredictorConfig {
        radius,
        ..PredictorConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut hits = [0usize; 2];
    let n = 1000;
    for i in 0..n {
        let lag = rng.gen_range(-(radius as i64)..=radius as i64);
        for (slot, snr) in [None, Some(20.0)].into_iter().enumerate() {
            let (v, u) = gen_feature_pair(frames, dim, radius, lag, snr, 10_000 + i as u64).unwrap();
            let (_, d) = oracle_distribution(&v, &u, None, &cfg).unwrap();
            hits[slot] += usize::from(argmax_lag(&d) == lag);
        }
    }
    let clean = hits[0] as f64 / n as f64;
    let noisy = hits[1] as f64 / n as f64;
    let (fast, time) = within(Duration::from_secs(30), start);
    verdict(
        clean == 1.0 && noisy >= 0.99 && fast,
        format!(
            "noiseless {:.1}% (100%), 20 dB {:.1}% (>= 99%), {time}",
            clean * 100.0,
            noisy * 100.0
        ),
    )
}

fn speech(seed: u64, kind: SignalKind, seconds: f64) -> Waveform<f64> {
    gen_pair(&AsyncScenario::new(0, 0, seed, kind).with_duration(seconds))
        .unwrap()
        .reference
}

fn with_noise(w: &Waveform<f64>, snr_db: f64, rng: &mut ChaCha8Rng) -> Waveform<f64> {
    let sigma = (w.power() / 10f64.powf(snr_db / 10.0)).sqrt();
    let noise = Normal::new(0.0, sigma).unwrap();
    Waveform::from_samples(w.samples().iter().map(|x| x + noise.sample(rng)).collect()).unwrap()
}

fn a3_frontend_shift_recovery() -> Verdict {
    let start = Instant::now();
    let aligner = Aligner::<f64>::new().unwrap();
    let offset = |gen: &Waveform<f64>, ref_mel: &Matrix<f64>| -> i64 {
        let (shift, _) = aligner.search(&aligner.log_mel(gen).unwrap(), ref_mel).unwrap();
        -shift * SHIFT_STEP_MS
    };
    let reference = speech(3, SignalKind::NoiseBursts, 3.0);
    let ref_mel = aligner.log_mel(&reference).unwrap();
    let exact = shift_grid_ms()
        .filter(|&s| offset(&reference.shifted(s * 16), &ref_mel) == s)
        .count();

    // 100 references, five random grid delays each, fresh noise per trial.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid: Vec<i64> = shift_grid_ms().collect();
    let kinds = [SignalKind::NoiseBursts, SignalKind::HarmonicSweep];
    let mut trials = 0;
    let mut close = 0;
    for i in 0..100 {
        let r = speech(20_000 + i as u64, kinds[i % 2], 2.0);
        let ref_mel = aligner.log_mel(&r).unwrap();
        for _ in 0..5 {
            let s = grid[rng.gen_range(0..grid.len())];
            let gen = with_noise(&r.shifted(s * 16), 20.0, &mut rng);
            close += usize::from((offset(&gen, &ref_mel) - s).abs() <= 10);
            trials += 1;
        }
    }
    let rate = close as f64 / trials as f64;
    let (fast, time) = within(Duration::from_secs(60), start);
    verdict(
        exact == grid.len() && rate >= 0.99 && fast,
        format!(
            "exact {exact}/{} grid shifts, 20 dB within 10 ms {:.1}% of {trials} (>= 99%), {time}",
            grid.len(),
            rate * 100.0
        ),
    )
}

fn a4_shift_sensitivity() -> Verdict {
    let aligner = Aligner::<f64>::new().unwrap();
    let r = speech(4, SignalKind::HarmonicSweep, 3.0);
    let raw: Vec<f64> = [0, 4, 8, 12]
        .iter()
        .map(|ms| aligner.raw_metric(&r.shifted(ms * 16), &r, AlignedMetric::Mcd).unwrap())
        .collect();
    let increasing = raw.windows(2).all(|w| w[1] > w[0]);
    let worst_aligned = shift_grid_ms()
        .map(|s| {
            aligner
                .aligned_metric(&r.shifted(s * 16), &r, AlignedMetric::Mcd)
                .unwrap()
        })
        .fold(0.0f64, f64::max);
    verdict(
        raw[0] == 0.0 && increasing && worst_aligned < 1e-6,
        format!(
            "MCD at 0/4/8/12 ms = {:.3}/{:.3}/{:.3}/{:.3}, max a-MCD on grid {worst_aligned:.1e} (< 1e-6)",
            raw[0], raw[1], raw[2], raw[3]
        ),
    )
}

/// Soft-loss gradient reaching a trainable `m_hat` in the full graph.
fn soft_grad_to_reconstruction(seed: u64) -> (bool, bool) {
    let (inputs, constants) = composite_instance(seed);
    let mut tape = Tape::new();
    let params: Vec<_> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let video = tape.constant(constants[0].clone());
    let m_ref = tape.constant(constants[1].clone());
    let m_hat = tape.param(constants[2].clone());
    let pv = PredictorVars {
        video: ExtractorVars(params[0..8].try_into().unwrap()),
        audio: ExtractorVars(params[8..16].try_into().unwrap()),
    };
    let d = dsm_graph(&mut tape, &pv, video, m_ref, m_hat, &composite_config()).unwrap();
    let soft = tape.backward(d.soft).unwrap();
    let zero = soft.get(m_hat).is_none_or(|g| g.as_slice().iter().all(|&x| x == 0.0));
    let hard = tape.backward(d.hard).unwrap();
    let reaches = hard.get(m_hat).is_some_and(|g| g.as_slice().iter().any(|&x| x != 0.0));
    (zero, reaches)
}

fn a5_gradients() -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst_op = 0.0f64;
    let cases = op_cases();
    for case in &cases {
        for seed in 0..100 {
            let (inputs, constants) = sample_case(case, seed);
            let dirs = random_directions(&inputs, seed);
            let err = directional_check(case.build, &inputs, &constants, &dirs, H).unwrap();
            worst_op = worst_op.max(err);
            if !(err < 1e-5) {
                failures.push(format!("{} seed {seed}: {err:.1e}", case.name));
            }
        }
    }
    let mut worst_tensor = 0.0f64;
    let mut worst_coord = 0.0f64;
    let mut stop_ok = true;
    for seed in 0..100 {
        let (inputs, constants) = composite_instance(seed);
        let check = graph_gradients(composite_loss, &inputs, &constants, H).unwrap();
        let err = check.max_tensor_error();
        worst_tensor = worst_tensor.max(err);
        worst_coord = worst_coord.max(check.max_coordinate_error());
        if !(err < 1e-5) {
            failures.push(format!("composite seed {seed}: {err:.1e}"));
        }
        let (zero, reaches) = soft_grad_to_reconstruction(seed);
        stop_ok &= zero && reaches;
    }
    let (fast, time) = within(Duration::from_secs(120), start);
    let mut detail = format!(
        "{} ops x 100 directional max {worst_op:.1e}, composite x 100 per-tensor max {worst_tensor:.1e} \
         (< 1e-5; per-coordinate max {worst_coord:.1e}), soft-loss grad to reconstruction exactly zero: {stop_ok}, {time}",
        cases.len()
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first failure {f}"));
    }
    verdict(failures.is_empty() && stop_ok && fast, detail)
}

fn a6_toy_training() -> Verdict {
    let start = Instant::now();
    let kind = SignalKind::RandomWalk;
    let data = |n, seed| -> Vec<TrainingSample> {
        random_scenarios(n, 200, kind, 2.0, seed)
            .iter()
            .map(|s| gen_mel_pair(s).unwrap().into())
            .collect()
    };
    let train = data(2000, 1);
    let held = data(200, 2);
    let cfg = TrainConfig {
        steps: 2000,
        warmup: 200,
        d_hidden: 32,
        d_embed: 16,
        predictor: PredictorConfig {
            radius: 20,
            ..PredictorConfig::default()
        },
        ..TrainConfig::default()
    };
    let model = SyncModel::init(VIDEO_DIM, train[0].mel_ref.cols(), &cfg);
    let ssm_before = evaluate_ssm_loss(&model, &held).unwrap();
    let (model, log) = train_offset_predictor(&train, model, &cfg).unwrap();
    let acc = evaluate_lag_accuracy(&model, &held).unwrap();
    let ssm_after = evaluate_ssm_loss(&model, &held).unwrap();
    let ratio = ssm_after / ssm_before;
    let (fast, time) = within(Duration::from_secs(600), start);
    verdict(
        log.len() == 2000 && acc >= 0.95 && ratio < 0.1 && fast,
        format!(
            "held-out exact-lag accuracy {:.1}% (>= 95%), SSM {ssm_before:.3} -> {ssm_after:.3} ({:.1}% of initial, < 10%), {time}",
            acc * 100.0,
            ratio * 100.0
        ),
    )
}

fn a7_loss_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = rng.gen_range(12..=40);
        let d = rng.gen_range(2..=10);
        let k = rng.gen_range(1..=8usize.min((t - 1) / 2));
        let lag = rng.gen_range(-(k as i64)..=k as i64);
        let mut mel = || MelSpectrogram::new(Matrix::from_fn(t, d, |_, _| rng.gen_range(-3.0..3.0)));
        let (m_ref, m_hat) = (mel(), mel());
        let delta = OffsetDistribution::<f64>::delta(k, lag);
        let (soft, soft_valid) = soft_correct(&m_hat, &delta).unwrap();
        let (hard, hard_valid) = hard_correct(&m_hat, argmax_lag(&delta)).unwrap();
        let shared = soft_valid.intersect(&hard_valid);
        let s = soft_dsm_loss(&m_ref, &soft, &shared).unwrap();
        let h = hard_dsm_loss(&m_ref, &hard, &hard_valid).unwrap();
        worst = worst.max((s - h).abs());
    }
    let flat = SyncVector {
        values: vec![0.37; 7],
        radius: 3,
        normalized: true,
    };
    let uniform = offset_distribution(&flat, 0.07).unwrap();
    let ssm_err = (ssm_loss(&uniform) - 7f64.ln()).abs();
    verdict(
        worst <= 1e-12 && ssm_err <= 1e-9,
        format!("delta soft vs hard over 100 instances max |diff| {worst:.1e} (<= 1e-12), |ssm(uniform 7) - ln 7| {ssm_err:.1e} (<= 1e-9)"),
    )
}

fn a8_offset_r2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth: Vec<f64> = (0..64).map(|_| (rng.gen_range(-20..=30) * 10) as f64 + 40.0).collect();
    let ids: Vec<String> = (0..truth.len()).map(|i| format!("s{i:05}")).collect();
    let series = |source, values: Vec<f64>| OffsetSeries::new(source, ids.clone(), values).unwrap();
    let reference = series(OffsetSource::GroundTruth, truth.clone());
    let perfect = offset_r2(&series(OffsetSource::Dsm, truth.clone()), &reference).unwrap();
    let dummy = offset_r2(&series(OffsetSource::Dummy, vec![0.0; truth.len()]), &reference).unwrap();
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = truth.iter().map(|t| t * t).sum();
    let expect = 1.0 - ss_res / ss_tot;
    let err = (dummy - expect).abs();
    verdict(
        perfect == 1.0 && mean != 0.0 && err <= 1e-12,
        format!("perfect {perfect}, dummy {dummy:.6} vs closed form {expect:.6} (|diff| {err:.1e} <= 1e-12)"),
    )
}

fn cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_syncforge"))
        .args(args)
        .env_remove("SYNCFORGE_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

/// One full pipeline run under `root`; returns every output file.
fn pipeline(root: &Path, jobs: &str) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    fs::write(
        root.join("scenario.json"),
        r#"{"count": 6, "max_offset_ms": 100, "duration_s": 1.5, "kind": "random_walk", "seed": 9}"#,
    )
    .map_err(|e| e.to_string())?;
    fs::write(
        root.join("train.json"),
        r#"{"steps": 20, "warmup": 5, "d_hidden": 8, "d_embed": 4, "batch_size": 2, "radius": 12, "seed": 9}"#,
    )
    .map_err(|e| e.to_string())?;
    cli(&[
        "gen",
        "--scenario",
        &p("scenario.json"),
        "-o",
        &p("data"),
        "--jobs",
        jobs,
    ])?;
    cli(&[
        "train",
        "--data",
        &p("data"),
        "--config",
        &p("train.json"),
        "-o",
        &p("ckpt"),
    ])?;
    let estimate = cli(&[
        "estimate",
        &p("data/samples/s00000.video.fmat"),
        &p("data/samples/s00000.mel_ref.fmat"),
        "--params",
        &p("ckpt"),
    ])?;
    fs::write(root.join("estimate.json"), estimate).map_err(|e| e.to_string())?;
    cli(&[
        "eval",
        "--pairs",
        &p("data/pairs.csv"),
        "--params",
        &p("ckpt"),
        "-o",
        &p("report"),
        "--jobs",
        jobs,
    ])?;
    Ok(tree_bytes(root))
}

fn a9_determinism() -> Verdict {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    match (pipeline(a.path(), "1"), pipeline(b.path(), "2")) {
        (Ok(x), Ok(y)) => {
            let names: Vec<_> = x.iter().map(|(n, _)| n.clone()).collect();
            let has_reports = [
                "report/summary.json",
                "report/report.csv",
                "ckpt/train_log.jsonl",
                "estimate.json",
            ]
            .iter()
            .all(|f| names.contains(&PathBuf::from(f)));
            let differing: Vec<String> = x
                .iter()
                .zip(&y)
                .filter(|(p, q)| p != q)
                .map(|(p, _)| p.0.display().to_string())
                .collect();
            let same = x.len() == y.len() && differing.is_empty();
            verdict(
                same && has_reports,
                format!(
                    "gen -> train -> estimate -> eval twice ({} files, jobs 1 vs 2): {}",
                    x.len(),
                    if same {
                        "bitwise identical".to_string()
                    } else {
                        format!("differ in {differing:?}")
                    }
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("pipeline failed: {e}")),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Verdict); 9] = [
        ("A1", "sync-vector oracle equivalence", a1_sync_vector_oracle),
        ("A2", "feature-domain offset recovery", a2_feature_offset_recovery),
        ("A3", "frontend shift recovery", a3_frontend_shift_recovery),
        ("A4", "shift sensitivity of raw vs aligned MCD", a4_shift_sensitivity),
        ("A5", "gradient verification", a5_gradients),
        ("A6", "toy training", a6_toy_training),
        ("A7", "loss identities", a7_loss_identities),
        ("A8", "offset R2 contract", a8_offset_r2),
        ("A9", "end-to-end determinism", a9_determinism),
    ];
    let mut failed = 0;
    for (id, title, run) in criteria {
        let v = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!("{id} {} {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
