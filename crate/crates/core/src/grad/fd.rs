//! Central finite-difference gradient verification.

use super::tape::{Tape, Var};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Relative error with a `max(|a|, |b|, 1e-8)` denominator.
pub fn relative_error<T: Scalar>(a: T, b: T) -> T {
    let denom = a.abs().max(b.abs()).max(T::lit(1e-8));
    (a - b).abs() / denom
}

/// Central differences of `f` at `theta`.
pub fn numeric_gradient<T: Scalar>(mut f: impl FnMut(&[T]) -> T, theta: &[T], h: T) -> Vec<T> {
    let mut probe = theta.to_vec();
    let two_h = h + h;
    (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + h;
            let plus = f(&probe);
            probe[i] = theta[i] - h;
            let minus = f(&probe);
            probe[i] = theta[i];
            (plus - minus) / two_h
        })
        .collect()
}

/// Largest relative error between `analytic` and central differences of
/// `f` at `theta`.
pub fn fd_check<T: Scalar>(f: impl FnMut(&[T]) -> T, theta: &[T], analytic: &[T], h: T) -> T {
    assert_eq!(theta.len(), analytic.len(), "one analytic entry per coordinate");
    numeric_gradient(f, theta, h)
        .into_iter()
        .zip(analytic)
        .map(|(n, &a)| relative_error(a, n))
        .fold(T::zero(), T::max)
}

/// Analytic and central-difference gradients of one graph, per input.
#[derive(Debug, Clone)]
pub struct GraphCheck<T> {
    pub analytic: Vec<Matrix<T>>,
    pub numeric: Vec<Matrix<T>>,
}

impl<T: Scalar> GraphCheck<T> {
    /// Largest per-coordinate relative error.
    pub fn max_coordinate_error(&self) -> T {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .flat_map(|(a, n)| {
                a.as_slice()
                    .iter()
                    .zip(n.as_slice())
                    .map(|(&x, &y)| relative_error(x, y))
            })
            .fold(T::zero(), T::max)
    }

    /// Per-tensor error `‖a - n‖ / max(‖a‖, ‖n‖, 1e-8)`.
    pub fn tensor_errors(&self) -> Vec<T> {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| {
                let norm = |m: &Matrix<T>| m.as_slice().iter().map(|v| v.sq()).sum::<T>().sqrt();
                let diff = a.zip_map(n, |x, y| x - y);
                norm(&diff) / norm(a).max(norm(n)).max(T::lit(1e-8))
            })
            .collect()
    }

    pub fn max_tensor_error(&self) -> T {
        self.tensor_errors().into_iter().fold(T::zero(), T::max)
    }
}

fn eval_graph<T: Scalar>(
    build: &impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    inputs: &[Matrix<T>],
    constants: &[Matrix<T>],
) -> Result<(Tape<T>, Vec<Var>, Var)> {
    let mut tape = Tape::new();
    let mut vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    vars.extend(constants.iter().map(|m| tape.constant(m.clone())));
    let loss = build(&mut tape, &vars)?;
    Ok((tape, vars, loss))
}

fn loss_at<T: Scalar>(
    build: &impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    inputs: &[Matrix<T>],
    constants: &[Matrix<T>],
) -> T {
    eval_graph(build, inputs, constants)
        .map(|(tape, _, loss)| tape.value(loss).item())
        .unwrap_or_else(|_| T::nan())
}

/// Builds `build` over `inputs` (registered as parameters) followed by
/// `constants`, and returns its backward-pass gradient next to central
/// differences for every parameter coordinate.
pub fn graph_gradients<T: Scalar>(
    build: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    inputs: &[Matrix<T>],
    constants: &[Matrix<T>],
    h: T,
) -> Result<GraphCheck<T>> {
    let (tape, vars, loss) = eval_graph(&build, inputs, constants)?;
    let grads = tape.backward(loss)?;
    let analytic = vars
        .iter()
        .zip(inputs)
        .map(|(v, m)| grads.get_or_zeros(*v, m.shape()))
        .collect();
    let mut probe = inputs.to_vec();
    let two_h = h + h;
    let mut numeric = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut g = Matrix::zeros(inputs[t].rows(), inputs[t].cols());
        for i in 0..inputs[t].len() {
            let x = inputs[t].as_slice()[i];
            probe[t].as_mut_slice()[i] = x + h;
            let plus = loss_at(&build, &probe, constants);
            probe[t].as_mut_slice()[i] = x - h;
            let minus = loss_at(&build, &probe, constants);
            probe[t].as_mut_slice()[i] = x;
            g.as_mut_slice()[i] = (plus - minus) / two_h;
        }
        numeric.push(g);
    }
    Ok(GraphCheck { analytic, numeric })
}

/// Directional check: relative error between `⟨∇f, d⟩` from the backward
/// pass and `(f(θ + h·d) - f(θ - h·d)) / 2h`.
pub fn directional_check<T: Scalar>(
    build: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    inputs: &[Matrix<T>],
    constants: &[Matrix<T>],
    directions: &[Matrix<T>],
    h: T,
) -> Result<T> {
    let (tape, vars, loss) = eval_graph(&build, inputs, constants)?;
    let grads = tape.backward(loss)?;
    let mut analytic = T::zero();
    for ((v, m), d) in vars.iter().zip(inputs).zip(directions) {
        let g = grads.get_or_zeros(*v, m.shape());
        analytic += crate::matrix::dot(g.as_slice(), d.as_slice());
    }
    let step = |sign: T| -> Vec<Matrix<T>> {
        inputs
            .iter()
            .zip(directions)
            .map(|(m, d)| m.zip_map(d, |x, dx| x + sign * h * dx))
            .collect()
    };
    let plus = loss_at(&build, &step(T::one()), constants);
    let minus = loss_at(&build, &step(-T::one()), constants);
    Ok(relative_error(analytic, (plus - minus) / (h + h)))
}
