//! Random instances for gradient self-checks: one case per tape operation
//! plus the full data/self-synchronization composite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{dsm_graph, ssm_graph, ExtractorVars, PredictorVars};
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::sync::{ExtractorConfig, OffsetPredictor, PredictorConfig};

type Sample = (Vec<Matrix<f64>>, Vec<Matrix<f64>>);

/// One operation under test. `sample` draws parameter inputs and
/// constants; `build` maps them to a scalar loss. Unless noted, the loss
/// is the MSE between the op output and the last constant.
pub struct OpCase {
    pub name: &'static str,
    pub sample: fn(&mut ChaCha8Rng) -> Sample,
    pub build: fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, a: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..a))
}

fn head(tape: &mut Tape<f64>, out: Var, target: Var) -> Result<Var> {
    let rows = tape.value(out).rows();
    tape.mse_valid(out, target, &vec![true; rows])
}

fn mask_row(rng: &mut ChaCha8Rng, t: usize) -> Matrix<f64> {
    let mut m: Vec<f64> = (0..t).map(|_| f64::from(u8::from(rng.gen_bool(0.7)))).collect();
    m[rng.gen_range(0..t)] = 1.0;
    Matrix::row_vector(m)
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "matmul",
            sample: |r| {
                (
                    vec![uniform(r, 4, 3, 1.0), uniform(r, 3, 5, 1.0)],
                    vec![uniform(r, 4, 5, 1.0)],
                )
            },
            build: |t, v| {
                let y = t.matmul(v[0], v[1])?;
                head(t, y, v[2])
            },
        },
        OpCase {
            name: "add_row_bias",
            sample: |r| {
                (
                    vec![uniform(r, 5, 3, 1.0), uniform(r, 1, 3, 1.0)],
                    vec![uniform(r, 5, 3, 1.0)],
                )
            },
            build: |t, v| {
                let y = t.add_row_bias(v[0], v[1])?;
                head(t, y, v[2])
            },
        },
        OpCase {
            name: "conv1d_k3",
            sample: |r| {
                (
                    vec![uniform(r, 7, 3, 1.0), uniform(r, 9, 4, 1.0)],
                    vec![uniform(r, 7, 4, 1.0)],
                )
            },
            build: |t, v| {
                let y = t.conv1d(v[0], v[1], 3)?;
                head(t, y, v[2])
            },
        },
        OpCase {
            name: "conv1d_k1",
            sample: |r| {
                (
                    vec![uniform(r, 7, 3, 1.0), uniform(r, 3, 4, 1.0)],
                    vec![uniform(r, 7, 4, 1.0)],
                )
            },
            build: |t, v| {
                let y = t.conv1d(v[0], v[1], 1)?;
                head(t, y, v[2])
            },
        },
        OpCase {
            name: "channel_norm",
            sample: |r| {
                let x = uniform(r, 8, 3, 2.0).map(|v| v + 0.5);
                (
                    vec![x, uniform(r, 1, 3, 1.5), uniform(r, 1, 3, 1.0)],
                    vec![uniform(r, 8, 3, 1.0)],
                )
            },
            build: |t, v| {
                let y = t.channel_norm(v[0], v[1], v[2])?;
                head(t, y, v[3])
            },
        },
        OpCase {
            name: "gelu",
            sample: |r| (vec![uniform(r, 4, 5, 3.0)], vec![uniform(r, 4, 5, 1.0)]),
            build: |t, v| {
                let y = t.gelu(v[0]);
                head(t, y, v[1])
            },
        },
        OpCase {
            name: "l2_normalize_rows",
            sample: |r| (vec![uniform(r, 6, 4, 1.0)], vec![uniform(r, 6, 4, 1.0)]),
            build: |t, v| {
                let y = t.l2_normalize_rows(v[0]);
                head(t, y, v[1])
            },
        },
        OpCase {
            name: "upsample_linear",
            sample: |r| (vec![uniform(r, 5, 3, 1.0)], vec![uniform(r, 20, 3, 1.0)]),
            build: |t, v| {
                let y = t.upsample(v[0], 4)?;
                head(t, y, v[1])
            },
        },
        OpCase {
            name: "sync_vec_normalized",
            sample: |r| {
                let m = mask_row(r, 12);
                (
                    vec![uniform(r, 12, 3, 1.0), uniform(r, 12, 3, 1.0)],
                    vec![m, uniform(r, 1, 7, 1.0)],
                )
            },
            build: |t, v| {
                let mask = t.value(v[2]).as_slice().to_vec();
                let y = t.sync_vec(v[0], v[1], &mask, 3, true)?;
                head(t, y, v[3])
            },
        },
        OpCase {
            name: "sync_vec_unnormalized",
            sample: |r| {
                let m = mask_row(r, 12);
                (
                    vec![uniform(r, 12, 3, 1.0), uniform(r, 12, 3, 1.0)],
                    vec![m, uniform(r, 1, 7, 1.0)],
                )
            },
            build: |t, v| {
                let mask = t.value(v[2]).as_slice().to_vec();
                let y = t.sync_vec(v[0], v[1], &mask, 3, false)?;
                head(t, y, v[3])
            },
        },
        OpCase {
            name: "softmax_temperature",
            sample: |r| (vec![uniform(r, 1, 9, 1.0)], vec![uniform(r, 1, 9, 0.3)]),
            build: |t, v| {
                let y = t.softmax(v[0], 0.3)?;
                head(t, y, v[1])
            },
        },
        OpCase {
            name: "soft_correct",
            sample: |r| {
                let p = Matrix::from_fn(1, 7, |_, _| r.gen_range(0.0..1.0));
                (vec![uniform(r, 12, 3, 1.0), p], vec![uniform(r, 12, 3, 1.0)])
            },
            build: |t, v| {
                let y = t.soft_correct(v[0], v[1])?;
                head(t, y, v[2])
            },
        },
        OpCase {
            name: "hard_correct",
            sample: |r| (vec![uniform(r, 10, 3, 1.0)], vec![uniform(r, 10, 3, 1.0)]),
            build: |t, v| {
                let y = t.hard_correct(v[0], 2)?;
                let z = t.hard_correct(y, -3)?;
                head(t, z, v[1])
            },
        },
        OpCase {
            name: "mse_valid",
            sample: |r| {
                let mut flags = mask_row(r, 9);
                flags.as_mut_slice()[0] = 0.0;
                flags.as_mut_slice()[5] = 1.0;
                (vec![uniform(r, 9, 3, 1.0), uniform(r, 9, 3, 1.0)], vec![flags])
            },
            build: |t, v| {
                let valid: Vec<bool> = t.value(v[2]).as_slice().iter().map(|&f| f > 0.5).collect();
                t.mse_valid(v[0], v[1], &valid)
            },
        },
        OpCase {
            name: "neg_log_index",
            sample: |r| (vec![Matrix::from_fn(1, 7, |_, _| r.gen_range(0.05..1.0))], vec![]),
            build: |t, v| t.neg_log_index(v[0], 3),
        },
        OpCase {
            name: "sum_scale_add",
            sample: |r| {
                (
                    vec![uniform(r, 3, 4, 1.0), uniform(r, 3, 4, 1.0)],
                    vec![uniform(r, 3, 4, 1.0)],
                )
            },
            build: |t, v| {
                let a = t.scale(v[0], -1.7);
                let b = t.add(a, v[1])?;
                let c = head(t, b, v[2])?;
                let s = t.sum(v[1]);
                let s = t.scale(s, 0.25);
                t.add(c, s)
            },
        },
        OpCase {
            name: "softmax_nll",
            sample: |r| (vec![uniform(r, 1, 9, 1.0)], vec![]),
            build: |t, v| {
                let p = t.softmax(v[0], 0.2)?;
                t.neg_log_index(p, 4)
            },
        },
        OpCase {
            name: "extractor",
            sample: |r| {
                let cfg = ExtractorConfig {
                    d_in: 3,
                    d_hidden: 4,
                    d_embed: 3,
                };
                let p = crate::sync::ExtractorParams::<f64>::init(&cfg, r);
                let mut inputs: Vec<Matrix<f64>> = p.tensors().into_iter().cloned().collect();
                for m in &mut inputs {
                    for x in m.as_mut_slice() {
                        *x += r.gen_range(-0.3..0.3);
                    }
                }
                inputs.push(uniform(r, 5, 3, 1.0));
                (inputs, vec![uniform(r, 20, 3, 0.6)])
            },
            build: |t, v| {
                let p = ExtractorVars(v[0..8].try_into().expect("eight tensors"));
                let y = super::model::extractor_graph(t, v[8], &p, true)?;
                head(t, y, v[9])
            },
        },
    ]
}

pub fn sample_case(case: &OpCase, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (case.sample)(&mut rng)
}

/// Random unit-scale directions matching `inputs`.
pub fn random_directions(inputs: &[Matrix<f64>], seed: u64) -> Vec<Matrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1_7ec7);
    inputs
        .iter()
        .map(|m| uniform(&mut rng, m.rows(), m.cols(), 1.0))
        .collect()
}

/// Sizes of the composite check instance.
pub const COMPOSITE_FRAMES: usize = 24;
pub const COMPOSITE_MEL_DIM: usize = 6;
pub const COMPOSITE_VIDEO_DIM: usize = 5;
pub const COMPOSITE_RADIUS: usize = 4;

pub fn composite_config() -> PredictorConfig {
    PredictorConfig {
        radius: COMPOSITE_RADIUS,
        temperature: 0.07,
        normalized: true,
    }
}

/// Parameters of two small predictors (data- then self-synchronization),
/// and constants `[video, m_ref, m_hat]`.
pub fn composite_instance(seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ext = |d_in| ExtractorConfig {
        d_in,
        d_hidden: 4,
        d_embed: 3,
    };
    let mut inputs = Vec::new();
    for _ in 0..2 {
        let mut p = OffsetPredictor::<f64>::init(&ext(COMPOSITE_VIDEO_DIM), &ext(COMPOSITE_MEL_DIM), &mut rng);
        for m in p.tensors_mut() {
            for x in m.as_mut_slice() {
                *x += rng.gen_range(-0.3..0.3);
            }
        }
        inputs.extend(p.tensors().map(|(_, m)| m.clone()));
    }
    let t = COMPOSITE_FRAMES;
    let constants = vec![
        uniform(&mut rng, t / 4, COMPOSITE_VIDEO_DIM, 1.0),
        uniform(&mut rng, t, COMPOSITE_MEL_DIM, 1.0),
        uniform(&mut rng, t, COMPOSITE_MEL_DIM, 1.0),
    ];
    (inputs, constants)
}

/// `L_soft + L_hard + L_ssm` over the layout of [`composite_instance`].
pub fn composite_loss(tape: &mut Tape<f64>, vars: &[Var]) -> Result<Var> {
    let cfg = composite_config();
    let ev = |s: &[Var]| ExtractorVars(s.try_into().expect("eight tensors"));
    let dsm = PredictorVars {
        video: ev(&vars[0..8]),
        audio: ev(&vars[8..16]),
    };
    let ssm = PredictorVars {
        video: ev(&vars[16..24]),
        audio: ev(&vars[24..32]),
    };
    let (video, m_ref, m_hat) = (vars[32], vars[33], vars[34]);
    let d = dsm_graph(tape, &dsm, video, m_ref, m_hat, &cfg)?;
    let s = ssm_graph(tape, &ssm, video, m_hat, &cfg)?;
    let l = tape.add(d.soft, d.hard)?;
    tape.add(l, s)
}
