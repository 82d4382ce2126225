//! Forward kernels shared by the inference path and the gradient tape.
//! Each function here has a matching backward rule in `grad::tape`.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::scalar::Scalar;

/// Variance epsilon of the per-sequence channel normalization layers.
pub const NORM_EPS: f64 = 1e-5;
/// Rows with an L2 norm below this are mapped to zero rows.
pub const NORM_FLOOR: f64 = 1e-12;

/// Same-padded sliding windows: row `t` is `[x_{t-h}, …, x_{t+h}]`
/// (`h = k/2`), zero outside the sequence.
pub fn im2col<T: Scalar>(x: &Matrix<T>, kernel: usize) -> Matrix<T> {
    let (t_len, d) = x.shape();
    let half = (kernel / 2) as i64;
    let mut out = Matrix::zeros(t_len, kernel * d);
    for t in 0..t_len {
        let dst = out.row_mut(t);
        for tap in 0..kernel {
            let src = t as i64 + tap as i64 - half;
            if src < 0 || src >= t_len as i64 {
                continue;
            }
            dst[tap * d..(tap + 1) * d].copy_from_slice(x.row(src as usize));
        }
    }
    out
}

pub fn im2col_backward<T: Scalar>(g: &Matrix<T>, d: usize, kernel: usize) -> Matrix<T> {
    let t_len = g.rows();
    let half = (kernel / 2) as i64;
    let mut out = Matrix::zeros(t_len, d);
    for t in 0..t_len {
        let row = g.row(t);
        for tap in 0..kernel {
            let src = t as i64 + tap as i64 - half;
            if src < 0 || src >= t_len as i64 {
                continue;
            }
            let dst = out.row_mut(src as usize);
            for (a, &b) in dst.iter_mut().zip(&row[tap * d..(tap + 1) * d]) {
                *a += b;
            }
        }
    }
    out
}

/// Adds a `1 × D` bias to every row.
pub fn add_row_bias<T: Scalar>(x: &Matrix<T>, bias: &Matrix<T>) -> Result<Matrix<T>> {
    if bias.rows() != 1 || bias.cols() != x.cols() {
        return Err(Error::DimensionMismatch {
            context: "row bias width",
            expected: x.cols(),
            actual: bias.cols(),
        });
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (a, &b) in out.row_mut(r).iter_mut().zip(bias.as_slice()) {
            *a += b;
        }
    }
    Ok(out)
}

/// Same-padded 1-D convolution without bias. `w` is `(kernel·D_in) × D_out`
/// with tap `j` (offset `j - kernel/2`) occupying rows `j·D_in..(j+1)·D_in`.
pub fn conv1d<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, kernel: usize) -> Result<Matrix<T>> {
    if w.rows() != kernel * x.cols() {
        return Err(Error::DimensionMismatch {
            context: "conv1d weight rows (kernel * input channels)",
            expected: kernel * x.cols(),
            actual: w.rows(),
        });
    }
    im2col(x, kernel).matmul(w)
}

/// Standardized activations and inverse std per channel.
pub struct NormCache<T> {
    pub xhat: Matrix<T>,
    pub inv_std: Vec<T>,
}

/// Per-channel standardization over time (biased variance) followed by a
/// learned affine map `scale ⊙ x̂ + shift`.
pub fn channel_norm<T: Scalar>(
    x: &Matrix<T>,
    scale: &Matrix<T>,
    shift: &Matrix<T>,
) -> Result<(Matrix<T>, NormCache<T>)> {
    let (rows, cols) = x.shape();
    for (p, name) in [(scale, "norm scale width"), (shift, "norm shift width")] {
        if p.rows() != 1 || p.cols() != cols {
            return Err(Error::DimensionMismatch {
                context: name,
                expected: cols,
                actual: p.cols(),
            });
        }
    }
    if rows == 0 {
        return Err(Error::NoValidFrames);
    }
    let n = T::from_count(rows);
    let eps = T::lit(NORM_EPS);
    let mut xhat = Matrix::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(cols);
    let mut y = Matrix::zeros(rows, cols);
    for c in 0..cols {
        let mean = (0..rows).map(|r| x[(r, c)]).sum::<T>() / n;
        let var = (0..rows).map(|r| (x[(r, c)] - mean).sq()).sum::<T>() / n;
        let inv = (var + eps).sqrt().recip();
        inv_std.push(inv);
        for r in 0..rows {
            let h = (x[(r, c)] - mean) * inv;
            xhat[(r, c)] = h;
            y[(r, c)] = scale.as_slice()[c] * h + shift.as_slice()[c];
        }
    }
    Ok((y, NormCache { xhat, inv_std }))
}

const GELU_C: f64 = 0.044_715;

#[inline]
fn sqrt_2_over_pi<T: Scalar>() -> T {
    (T::lit(2.0) / T::PI()).sqrt()
}

/// GELU, tanh approximation.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let inner = sqrt_2_over_pi::<T>() * (x + T::lit(GELU_C) * x * x * x);
    T::lit(0.5) * x * (T::one() + inner.tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = sqrt_2_over_pi::<T>();
    let inner = k * (x + T::lit(GELU_C) * x * x * x);
    let th = inner.tanh();
    let d_inner = k * (T::one() + T::lit(3.0 * GELU_C) * x * x);
    T::lit(0.5) * (T::one() + th) + T::lit(0.5) * x * (T::one() - th * th) * d_inner
}

/// Row-wise L2 normalization; returns the output and the row norms.
pub fn l2_normalize_rows<T: Scalar>(x: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    let floor = T::lit(NORM_FLOOR);
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let mut norms = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let norm = dot(x.row(r), x.row(r)).sqrt();
        norms.push(norm);
        if norm < floor {
            continue;
        }
        for (a, &b) in out.row_mut(r).iter_mut().zip(x.row(r)) {
            *a = b / norm;
        }
    }
    (out, norms)
}

/// Source index and interpolation weight of output frame `t` when
/// upsampling by `factor`: position `t / factor` clamped to `[0, T-1]`.
#[inline]
pub fn upsample_source<T: Scalar>(t: usize, factor: usize, src_len: usize) -> (usize, T) {
    let last = src_len - 1;
    let lo = t / factor;
    if lo >= last {
        return (last, T::zero());
    }
    (lo, T::from_count(t % factor) / T::from_count(factor))
}

/// Linear interpolation to `factor ×` the frame count.
pub fn upsample_linear<T: Scalar>(x: &Matrix<T>, factor: usize) -> Result<Matrix<T>> {
    let (rows, cols) = x.shape();
    if rows < 2 {
        return Err(Error::TooFewFrames);
    }
    if factor == 0 {
        return Err(crate::error::invalid("factor", "must be positive"));
    }
    let mut out = Matrix::zeros(rows * factor, cols);
    for t in 0..rows * factor {
        let (lo, a) = upsample_source::<T>(t, factor, rows);
        let hi = (lo + 1).min(rows - 1);
        for c in 0..cols {
            out[(t, c)] = (T::one() - a) * x[(lo, c)] + a * x[(hi, c)];
        }
    }
    Ok(out)
}

/// Masked sliding cross-correlation over lags `-K..=K`.
///
/// Lag `k` scores `Σ_i m_i m_{i-k} ⟨v_i, u_{i-k}⟩` over indices where both
/// frames exist. When `normalized`, each lag is divided by its number of
/// contributing frame pairs `Σ_i m_i m_{i-k}` (zero when no pair is valid).
/// Returns the values and the per-lag divisors (`1` when unnormalized).
pub fn sync_values<T: Scalar>(
    v: &Matrix<T>,
    u: &Matrix<T>,
    mask: &[T],
    radius: usize,
    normalized: bool,
) -> (Vec<T>, Vec<T>) {
    let t_len = v.rows() as i64;
    let k = radius as i64;
    let mut values = Vec::with_capacity(2 * radius + 1);
    let mut divisors = Vec::with_capacity(2 * radius + 1);
    for lag in -k..=k {
        let lo = lag.max(0);
        let hi = (lag.min(0) + t_len).min(t_len);
        let mut num = T::zero();
        let mut count = T::zero();
        for i in lo..hi {
            let j = (i - lag) as usize;
            let w = mask[i as usize] * mask[j];
            if w == T::zero() {
                continue;
            }
            num += w * dot(v.row(i as usize), u.row(j));
            count += w;
        }
        if normalized {
            if count > T::zero() {
                values.push(num / count);
                divisors.push(count);
            } else {
                values.push(T::zero());
                divisors.push(T::zero());
            }
        } else {
            values.push(num);
            divisors.push(T::one());
        }
    }
    (values, divisors)
}

/// `softmax(s / τ)` with max subtraction.
pub fn softmax_temperature<T: Scalar>(s: &[T], tau: T) -> Vec<T> {
    let max = s.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = s.iter().map(|&x| ((x - max) / tau).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_k3_pads_with_zeros() {
        let x = Matrix::from_rows(&[vec![1.0f64, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let c = im2col(&x, 3);
        assert_eq!(c.row(0), &[0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.row(2), &[3.0, 4.0, 5.0, 6.0, 0.0, 0.0]);
        assert_eq!(im2col(&x, 1), x);
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0f64), 0.0);
        // tanh-approximate GELU(1) = 0.5(1 + tanh(√(2/π)·1.044715))
        let expect = 0.5 * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * 1.044715f64).tanh());
        assert!((gelu(1.0f64) - expect).abs() < 1e-15);
        let h = 1e-6;
        for &x in &[-2.5f64, -0.3, 0.0, 0.7, 3.1] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn upsample_two_frames_by_four() {
        let x = Matrix::from_rows(&[vec![0.0f64], vec![1.0]]).unwrap();
        let y = upsample_linear(&x, 4).unwrap();
        let got: Vec<f64> = y.as_slice().to_vec();
        assert_eq!(got, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            upsample_linear(&Matrix::<f64>::zeros(1, 3), 4),
            Err(Error::TooFewFrames)
        ));
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let p = softmax_temperature(&[1000.0f64, 1001.0, 1000.0], 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p[1] > p[0]);
    }
}
