use syncforge::grad::suite::{
    composite_config, composite_instance, composite_loss, op_cases, random_directions, sample_case, uniform,
};
use syncforge::grad::{directional_check, dsm_graph, fd_check, graph_gradients, PredictorVars, Tape};
use syncforge::sync::{ExtractorConfig, OffsetPredictor};
use syncforge::Matrix;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

#[test]
fn every_op_passes_directional_checks() {
    for case in op_cases() {
        let mut worst = 0.0f64;
        for seed in 0..20 {
            let (inputs, constants) = sample_case(&case, seed);
            let dirs = random_directions(&inputs, seed);
            let err = directional_check(case.build, &inputs, &constants, &dirs, H).unwrap();
            worst = worst.max(err);
        }
        assert!(worst < 1e-5, "{}: {worst:e}", case.name);
    }
}

#[test]
fn every_op_gradient_tensor_matches_finite_differences() {
    for case in op_cases() {
        for seed in 100..105 {
            let (inputs, constants) = sample_case(&case, seed);
            let check = graph_gradients(case.build, &inputs, &constants, H).unwrap();
            let err = check.max_tensor_error();
            assert!(err < 1e-5, "{} seed {seed}: {err:e}", case.name);
        }
    }
}

#[test]
fn composite_parameter_gradients_match_finite_differences() {
    for seed in 0..3 {
        let (inputs, constants) = composite_instance(seed);
        let check = graph_gradients(composite_loss, &inputs, &constants, H).unwrap();
        let errors = check.tensor_errors();
        assert_eq!(errors.len(), 32);
        for (i, e) in errors.iter().enumerate() {
            assert!(*e < 1e-5, "seed {seed} tensor {i}: {e:e}");
        }
        assert!(check.analytic.iter().any(|g| g.as_slice().iter().any(|&x| x != 0.0)));
    }
}

#[test]
fn soft_loss_gradient_to_reconstruction_is_exactly_zero() {
    let (_, constants) = composite_instance(7);
    let cfg = composite_config();
    let build = |tape: &mut Tape<f64>, m_hat_value: &Matrix<f64>, detached: &Matrix<f64>| {
        let p = OffsetPredictor::<f64>::init(
            &ExtractorConfig {
                d_in: 5,
                d_hidden: 4,
                d_embed: 3,
            },
            &ExtractorConfig {
                d_in: 6,
                d_hidden: 4,
                d_embed: 3,
            },
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        let pv = PredictorVars::register(tape, &p);
        let video = tape.constant(constants[0].clone());
        let m_ref = tape.constant(constants[1].clone());
        let m_hat = tape.param(m_hat_value.clone());
        let frozen = tape.constant(detached.clone());
        (pv, m_hat, frozen, video, m_ref)
    };
    let m_hat0 = constants[2].clone();
    let mut tape = Tape::new();
    let (pv, m_hat, _, video, m_ref) = build(&mut tape, &m_hat0, &m_hat0);
    let d = dsm_graph(&mut tape, &pv, video, m_ref, m_hat, &cfg).unwrap();
    let g = tape.backward(d.soft).unwrap();
    assert!(g.get(m_hat).is_none());
    let param_grads: f64 = pv
        .vars()
        .filter_map(|v| g.get(v))
        .map(|m| m.as_slice().iter().map(|x| x.abs()).sum::<f64>())
        .sum();
    assert!(param_grads > 0.0);

    // Finite differences of the detached graph: the correction reads a
    // frozen copy while the perturbed value feeds nothing else.
    let flat = m_hat0.as_slice().to_vec();
    let f = |theta: &[f64]| {
        let mut tape = Tape::new();
        let perturbed = Matrix::from_vec(m_hat0.rows(), m_hat0.cols(), theta.to_vec()).unwrap();
        let (pv, _, frozen, video, m_ref) = build(&mut tape, &perturbed, &m_hat0);
        let d = dsm_graph(&mut tape, &pv, video, m_ref, frozen, &cfg).unwrap();
        tape.value(d.soft).item()
    };
    let zeros = vec![0.0; flat.len()];
    assert_eq!(fd_check(f, &flat, &zeros, H), 0.0);
}

#[test]
fn backward_is_linear_in_the_loss() {
    let (inputs, constants) = composite_instance(3);
    let cfg = composite_config();
    let (a, b) = (0.7, -2.3);
    let grads_of = |wa: f64, wb: f64| {
        let mut tape = Tape::new();
        let mut vars: Vec<_> = inputs.iter().map(|m| tape.param(m.clone())).collect();
        vars.extend(constants.iter().map(|m| tape.constant(m.clone())));
        let ev = |s: &[_]| syncforge::grad::ExtractorVars(<[_; 8]>::try_from(s).unwrap());
        let pv = PredictorVars {
            video: ev(&vars[0..8]),
            audio: ev(&vars[8..16]),
        };
        let d = dsm_graph(&mut tape, &pv, vars[32], vars[33], vars[34], &cfg).unwrap();
        let l1 = tape.scale(d.soft, wa);
        let sv = PredictorVars {
            video: ev(&vars[16..24]),
            audio: ev(&vars[24..32]),
        };
        let l2 = syncforge::grad::ssm_graph(&mut tape, &sv, vars[32], vars[34], &cfg).unwrap();
        let l2 = tape.scale(l2, wb);
        let loss = tape.add(l1, l2).unwrap();
        syncforge::grad::collect_grads(&tape, loss, vars[..32].iter().copied()).unwrap()
    };
    let combined = grads_of(a, b);
    let g1 = grads_of(1.0, 0.0);
    let g2 = grads_of(0.0, 1.0);
    for ((c, x), y) in combined.iter().zip(&g1).zip(&g2) {
        let expect = x.zip_map(y, |p, q| a * p + b * q);
        assert!(c.max_abs_diff(&expect) < 1e-12);
    }
}

#[test]
fn stop_gradient_matches_a_frozen_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x0 = uniform(&mut rng, 4, 3, 1.0);
    let target = uniform(&mut rng, 4, 3, 1.0);
    let grad = |frozen: bool| {
        let mut tape = Tape::new();
        let x = tape.param(x0.clone());
        let t = tape.constant(target.clone());
        let g = tape.gelu(x);
        let s = if frozen {
            let v = tape.value(g).clone();
            tape.constant(v)
        } else {
            tape.stop_gradient(g)
        };
        let s = tape.scale(s, 2.5);
        let y = tape.add(g, s).unwrap();
        let loss = tape.mse_valid(y, t, &[true; 4]).unwrap();
        let d = tape.backward(loss).unwrap();
        (d.get(x).unwrap().clone(), tape.value(loss).item())
    };
    let (g_stop, l_stop) = grad(false);
    let (g_const, l_const) = grad(true);
    assert_eq!(l_stop, l_const);
    assert_eq!(g_stop, g_const);
}
