use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syncforge::align::{align, overlapping_frames, shift_grid_ms, AlignedMetric, Aligner, N_PROPOSALS};
use syncforge::dsp::Waveform;
use syncforge::metrics::mcd_from_mels;
use syncforge::synth::{gen_pair, AsyncScenario, SignalKind};
use syncforge::Error;

fn speechlike(seed: u64, seconds: f64) -> Waveform<f64> {
    let sc = AsyncScenario::new(0, 0, seed, SignalKind::NoiseBursts).with_duration(seconds);
    gen_pair(&sc).unwrap().reference
}

fn delayed(w: &Waveform<f64>, ms: i64) -> Waveform<f64> {
    w.shifted(ms * 16)
}

#[test]
fn identical_audio_aligns_at_zero() {
    let r = speechlike(1, 2.0);
    let res = align(&r, &r).unwrap();
    assert_eq!(res.offset_ms, 0);
    assert_eq!(res.min_mse(), 0.0);
    assert_eq!(res.mse_curve.len(), N_PROPOSALS);
    assert_eq!(shift_grid_ms().count(), 61);
}

#[test]
fn delayed_generation_is_advanced_back() {
    let r = speechlike(2, 2.0);
    let res = align(&delayed(&r, 80), &r).unwrap();
    assert_eq!(res.shift_ms(), -80);
    assert_eq!(res.offset_ms, 80);
    assert_eq!(res.min_mse(), 0.0);
}

#[test]
fn grid_shifts_are_recovered_exactly() {
    let aligner = Aligner::new().unwrap();
    let r = speechlike(3, 2.0);
    for s in [-300, -170, -10, 10, 50, 230, 300] {
        let res = aligner.align(&delayed(&r, s), &r).unwrap();
        assert_eq!(res.offset_ms, s, "shift {s}");
    }
}

#[test]
fn out_of_range_delay_stays_on_the_grid_with_a_residual() {
    let r = speechlike(4, 3.0);
    let far = align(&delayed(&r, 400), &r).unwrap();
    assert!(far.offset_ms.abs() <= 300 && far.offset_ms % 10 == 0);
    let near = align(&delayed(&r, 200), &r).unwrap();
    assert_eq!(near.min_mse(), 0.0);
    assert!(far.min_mse() > 0.1);
}

#[test]
fn alignment_is_idempotent() {
    let r = speechlike(5, 2.0);
    let first = align(&delayed(&r, -120), &r).unwrap();
    assert_eq!(first.offset_ms, -120);
    let again = align(&first.aligned_generated, &r).unwrap();
    assert_eq!(again.offset_ms, 0);
}

#[test]
fn short_audio_is_rejected() {
    let full = speechlike(6, 1.0);
    let r = Waveform::from_samples(full.samples()[..9600].to_vec()).unwrap();
    assert!(matches!(align(&r, &r), Err(Error::InsufficientOverlap { .. })));
}

#[test]
fn wrong_sample_rate_is_rejected() {
    assert!(Waveform::new(vec![0.1f64; 32_000], 22_050).is_err());
    let aligner = Aligner::<f64>::new().unwrap();
    let ok = Waveform::new(vec![0.1f64; 32_000], 16_000).unwrap();
    assert!(aligner.log_mel(&ok).is_ok());
}

#[test]
fn frontend_removes_grid_shift_from_metrics() {
    let aligner = Aligner::new().unwrap();
    let r = speechlike(7, 2.0);
    assert_eq!(aligner.aligned_metric(&r, &r, AlignedMetric::Mcd).unwrap(), 0.0);
    let g = delayed(&r, 80);
    assert!(aligner.raw_metric(&g, &r, AlignedMetric::Mcd).unwrap() > 0.0);
    for m in AlignedMetric::ALL {
        assert!(aligner.aligned_metric(&g, &r, m).unwrap() < 1e-6, "{}", m.name());
    }
}

#[test]
fn noise_aligned_mcd_matches_direct_evaluation() {
    let aligner = Aligner::new().unwrap();
    let r = speechlike(8, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Waveform::from_samples((0..r.len()).map(|_| rng.gen_range(-0.3..0.3)).collect()).unwrap();
    let (res, scores) = aligner.aligned_metrics(&noise, &r, &[AlignedMetric::Mcd]).unwrap();
    let (gm, rm) = (aligner.log_mel(&noise).unwrap(), aligner.log_mel(&r).unwrap());
    let (g, rr) = overlapping_frames(&gm, &rm, res.shift_ms() / 10).unwrap();
    assert!(scores[0] > 0.0);
    assert_eq!(scores[0], mcd_from_mels(&g, &rr).unwrap());
}

#[test]
fn metric_names_parse() {
    for m in AlignedMetric::ALL {
        assert_eq!(m.name().parse::<AlignedMetric>().unwrap(), m);
    }
    assert!("pesq".parse::<AlignedMetric>().is_err());
}

#[test]
fn custom_search_grid() {
    let aligner = Aligner::new().unwrap().with_search(100, 20).unwrap();
    assert_eq!(
        aligner.shifts_ms(),
        vec![-100, -80, -60, -40, -20, 0, 20, 40, 60, 80, 100]
    );
    let r = speechlike(9, 2.0);
    let res = aligner.align(&delayed(&r, 60), &r).unwrap();
    assert_eq!(res.offset_ms, 60);
    assert_eq!(res.mse_curve.len(), 11);
    assert!(Aligner::<f64>::new().unwrap().with_search(100, 15).is_err());
    assert!(Aligner::<f64>::new().unwrap().with_search(90, 20).is_err());
}
