//! Reverse-mode tape over the operations of the offset predictor and the
//! synchronization losses.

use crate::correction::CorrectionKernel;
use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::matrix::{dot, Matrix};
use crate::scalar::Scalar;
use crate::sync::OffsetDistribution;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    StopGradient(Var),
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Im2Col {
        x: Var,
        kernel: usize,
    },
    ChannelNorm {
        x: Var,
        scale: Var,
        shift: Var,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
    },
    Gelu(Var),
    L2NormalizeRows {
        x: Var,
        norms: Vec<T>,
    },
    Upsample {
        x: Var,
        factor: usize,
    },
    SyncVec {
        v: Var,
        u: Var,
        mask: Vec<T>,
        divisors: Vec<T>,
    },
    Softmax {
        s: Var,
        tau: T,
    },
    SoftCorrect {
        m_hat: Var,
        probs: Var,
    },
    HardCorrect {
        m_hat: Var,
        lag: i64,
    },
    MseValid {
        a: Var,
        b: Var,
        valid: Vec<bool>,
        count: usize,
    },
    NegLogIndex {
        p: Var,
        index: usize,
    },
    Sum(Var),
    Scale(Var, T),
    Add(Var, Var),
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::StopGradient(a) | Op::Gelu(a) | Op::Sum(a) | Op::Scale(a, _) => vec![*a],
            Op::MatMul(a, b) | Op::AddRowBias(a, b) | Op::Add(a, b) => vec![*a, *b],
            Op::Im2Col { x, .. } | Op::L2NormalizeRows { x, .. } | Op::Upsample { x, .. } => vec![*x],
            Op::ChannelNorm { x, scale, shift, .. } => vec![*x, *scale, *shift],
            Op::SyncVec { v, u, .. } => vec![*v, *u],
            Op::Softmax { s, .. } => vec![*s],
            Op::SoftCorrect { m_hat, probs } => vec![*m_hat, *probs],
            Op::HardCorrect { m_hat, .. } => vec![*m_hat],
            Op::MseValid { a, b, .. } => vec![*a, *b],
            Op::NegLogIndex { p, .. } => vec![*p],
        }
    }
}

/// A value on the tape with the operation that produced it.
#[derive(Debug, Clone)]
pub struct DiffNode<T> {
    value: Matrix<T>,
    op: Op<T>,
    requires_grad: bool,
    stop_gradient: bool,
}

impl<T> DiffNode<T> {
    pub fn value(&self) -> &Matrix<T> {
        &self.value
    }

    /// Whether backward reaches this node from some parameter.
    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn stop_gradient(&self) -> bool {
        self.stop_gradient
    }

    pub fn parents(&self) -> Vec<Var> {
        self.op.parents()
    }
}

/// Gradient of a scalar loss with respect to every tape node that
/// requires one. Nodes cut off by a stop-gradient or not depending on a
/// parameter have no entry.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient, or zeros of `shape` when the node is unreachable.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix<T> {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<DiffNode<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &DiffNode<T> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(DiffNode {
            value,
            op,
            requires_grad,
            stop_gradient: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix<T>) -> Var {
        self.nodes.push(DiffNode {
            value,
            op: Op::Leaf,
            requires_grad: true,
            stop_gradient: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.nodes.push(DiffNode {
            value,
            op: Op::Leaf,
            requires_grad: false,
            stop_gradient: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Identity in the forward pass; blocks every gradient in backward.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.nodes.push(DiffNode {
            value,
            op: Op::StopGradient(x),
            requires_grad: false,
            stop_gradient: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let value = kernels::add_row_bias(self.value(x), self.value(b))?;
        Ok(self.push(value, Op::AddRowBias(x, b)))
    }

    pub fn im2col(&mut self, x: Var, kernel: usize) -> Result<Var> {
        if kernel == 0 || kernel % 2 == 0 {
            return Err(invalid("kernel", format!("{kernel} must be odd")));
        }
        let value = kernels::im2col(self.value(x), kernel);
        Ok(self.push(value, Op::Im2Col { x, kernel }))
    }

    /// Same-padded convolution without bias, see [`kernels::conv1d`].
    pub fn conv1d(&mut self, x: Var, w: Var, kernel: usize) -> Result<Var> {
        let cols = self.im2col(x, kernel)?;
        self.matmul(cols, w)
    }

    pub fn channel_norm(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let (value, cache) = kernels::channel_norm(self.value(x), self.value(scale), self.value(shift))?;
        Ok(self.push(
            value,
            Op::ChannelNorm {
                x,
                scale,
                shift,
                xhat: cache.xhat,
                inv_std: cache.inv_std,
            },
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(kernels::gelu);
        self.push(value, Op::Gelu(x))
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Var {
        let (value, norms) = kernels::l2_normalize_rows(self.value(x));
        self.push(value, Op::L2NormalizeRows { x, norms })
    }

    pub fn upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        let value = kernels::upsample_linear(self.value(x), factor)?;
        Ok(self.push(value, Op::Upsample { x, factor }))
    }

    /// Masked cross-correlation as a `1 × (2K+1)` row, see
    /// [`kernels::sync_values`].
    pub fn sync_vec(&mut self, v: Var, u: Var, mask: &[T], radius: usize, normalized: bool) -> Result<Var> {
        let (vs, us) = (self.value(v).shape(), self.value(u).shape());
        if vs != us {
            return Err(Error::DimensionMismatch {
                context: "sync_vec operands",
                expected: us.0 * us.1,
                actual: vs.0 * vs.1,
            });
        }
        if mask.len() != vs.0 {
            return Err(Error::DimensionMismatch {
                context: "sync_vec mask length",
                expected: vs.0,
                actual: mask.len(),
            });
        }
        if radius == 0 || radius >= vs.0 {
            return Err(invalid(
                "radius",
                format!("need 1 <= K < T, got K={radius}, T={}", vs.0),
            ));
        }
        let (values, divisors) = kernels::sync_values(self.value(v), self.value(u), mask, radius, normalized);
        Ok(self.push(
            Matrix::row_vector(values),
            Op::SyncVec {
                v,
                u,
                mask: mask.to_vec(),
                divisors,
            },
        ))
    }

    pub fn softmax(&mut self, s: Var, tau: T) -> Result<Var> {
        if !(tau > T::zero()) {
            return Err(invalid("temperature", "must be positive"));
        }
        let row = self.value(s);
        if row.rows() != 1 {
            return Err(invalid("softmax input", "expected a single row"));
        }
        let value = Matrix::row_vector(kernels::softmax_temperature(row.as_slice(), tau));
        Ok(self.push(value, Op::Softmax { s, tau }))
    }

    /// Convolution with the time-flipped distribution `probs` over lags
    /// `-K..=K`.
    pub fn soft_correct(&mut self, m_hat: Var, probs: Var) -> Result<Var> {
        let p = self.value(probs);
        if p.rows() != 1 || p.cols() % 2 == 0 {
            return Err(invalid("probs", "expected a 1 x (2K+1) row"));
        }
        let radius = p.cols() / 2;
        let t = self.value(m_hat).rows();
        if t <= 2 * radius {
            return Err(Error::SequenceTooShort { len: t, radius });
        }
        let d = OffsetDistribution {
            probs: p.as_slice().to_vec(),
            temperature: T::one(),
        };
        let value = CorrectionKernel::soft(&d).apply(self.value(m_hat));
        Ok(self.push(value, Op::SoftCorrect { m_hat, probs }))
    }

    /// `out_i = m̂_{i+lag}`, zero where the source is out of range.
    pub fn hard_correct(&mut self, m_hat: Var, lag: i64) -> Result<Var> {
        let src = self.value(m_hat);
        let t = src.rows() as i64;
        if lag.abs() >= t {
            return Err(invalid("lag", format!("|{lag}| must be smaller than {t}")));
        }
        let mut value = Matrix::zeros(src.rows(), src.cols());
        for i in 0..t {
            if (0..t).contains(&(i + lag)) {
                value.row_mut(i as usize).copy_from_slice(src.row((i + lag) as usize));
            }
        }
        Ok(self.push(value, Op::HardCorrect { m_hat, lag }))
    }

    /// Mean squared difference over rows flagged in `valid`.
    pub fn mse_valid(&mut self, a: Var, b: Var, valid: &[bool]) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::DimensionMismatch {
                context: "mse operands",
                expected: x.len(),
                actual: y.len(),
            });
        }
        if valid.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                context: "mse validity length",
                expected: x.rows(),
                actual: valid.len(),
            });
        }
        let count = valid.iter().filter(|&&f| f).count() * x.cols();
        if count == 0 {
            return Err(Error::NoValidFrames);
        }
        let mut total = T::zero();
        for r in (0..x.rows()).filter(|&r| valid[r]) {
            for (&p, &q) in x.row(r).iter().zip(y.row(r)) {
                total += (p - q).sq();
            }
        }
        let value = Matrix::scalar(total / T::from_count(count));
        Ok(self.push(
            value,
            Op::MseValid {
                a,
                b,
                valid: valid.to_vec(),
                count,
            },
        ))
    }

    /// `-ln p[index]` of a `1 × n` row.
    pub fn neg_log_index(&mut self, p: Var, index: usize) -> Result<Var> {
        let row = self.value(p);
        if row.rows() != 1 || index >= row.cols() {
            return Err(invalid("index", format!("{index} outside a 1 x {} row", row.cols())));
        }
        let value = Matrix::scalar(-row.as_slice()[index].ln());
        Ok(self.push(value, Op::NegLogIndex { p, index }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).scale(c);
        self.push(value, Op::Scale(x, c))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::DimensionMismatch {
                context: "add operands",
                expected: x.len(),
                actual: y.len(),
            });
        }
        let value = x.zip_map(y, |p, q| p + q);
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Reverse pass from a `1 × 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: shape.0,
                cols: shape.1,
            });
        }
        for (i, n) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if n.op.parents().iter().any(|p| p.0 >= i) {
                return Err(Error::GraphCycle { node: i });
            }
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Matrix::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || node.stop_gradient {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &DiffNode<T>, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        match &node.op {
            Op::Leaf | Op::StopGradient(_) => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let ga = g.matmul_t(self.value(*b)).expect("matmul shapes checked in forward");
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let gb = self.value(*a).t_matmul(g).expect("matmul shapes checked in forward");
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::AddRowBias(x, b) => {
                self.accumulate(grads, *x, g.clone());
                if self.wants(*b) {
                    self.accumulate(grads, *b, column_sums(g));
                }
            }
            Op::Im2Col { x, kernel } => {
                let d = self.value(*x).cols();
                self.accumulate(grads, *x, kernels::im2col_backward(g, d, *kernel));
            }
            Op::ChannelNorm {
                x,
                scale,
                shift,
                xhat,
                inv_std,
            } => {
                if self.wants(*scale) {
                    self.accumulate(grads, *scale, column_sums(&g.zip_map(xhat, |a, b| a * b)));
                }
                if self.wants(*shift) {
                    self.accumulate(grads, *shift, column_sums(g));
                }
                if self.wants(*x) {
                    let (rows, cols) = g.shape();
                    let n = T::from_count(rows);
                    let s = self.value(*scale).as_slice();
                    let mut dx = Matrix::zeros(rows, cols);
                    for c in 0..cols {
                        let mut mean_g = T::zero();
                        let mut mean_gx = T::zero();
                        for r in 0..rows {
                            let dxh = g[(r, c)] * s[c];
                            mean_g += dxh;
                            mean_gx += dxh * xhat[(r, c)];
                        }
                        mean_g /= n;
                        mean_gx /= n;
                        for r in 0..rows {
                            let dxh = g[(r, c)] * s[c];
                            dx[(r, c)] = inv_std[c] * (dxh - mean_g - xhat[(r, c)] * mean_gx);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::Gelu(x) => {
                let dx = g.zip_map(self.value(*x), |gi, xi| gi * kernels::gelu_grad(xi));
                self.accumulate(grads, *x, dx);
            }
            Op::L2NormalizeRows { x, norms } => {
                let y = &node.value;
                let floor = T::lit(kernels::NORM_FLOOR);
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    if norms[r] < floor {
                        continue;
                    }
                    let proj = dot(y.row(r), g.row(r));
                    for ((o, &yi), &gi) in dx.row_mut(r).iter_mut().zip(y.row(r)).zip(g.row(r)) {
                        *o = (gi - yi * proj) / norms[r];
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Upsample { x, factor } => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for t in 0..g.rows() {
                    let (lo, a) = kernels::upsample_source::<T>(t, *factor, rows);
                    let hi = (lo + 1).min(rows - 1);
                    for c in 0..cols {
                        dx[(lo, c)] += (T::one() - a) * g[(t, c)];
                        dx[(hi, c)] += a * g[(t, c)];
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::SyncVec { v, u, mask, divisors } => {
                let (vv, uu) = (self.value(*v), self.value(*u));
                let (t_len, d) = vv.shape();
                let radius = (divisors.len() / 2) as i64;
                let mut dv = Matrix::zeros(t_len, d);
                let mut du = Matrix::zeros(t_len, d);
                for (idx, lag) in (-radius..=radius).enumerate() {
                    let div = divisors[idx];
                    if div == T::zero() {
                        continue;
                    }
                    let gk = g.as_slice()[idx] / div;
                    let lo = lag.max(0);
                    let hi = (lag.min(0) + t_len as i64).min(t_len as i64);
                    for i in lo..hi {
                        let (i, j) = (i as usize, (i - lag) as usize);
                        let w = mask[i] * mask[j] * gk;
                        if w == T::zero() {
                            continue;
                        }
                        for c in 0..d {
                            dv[(i, c)] += w * uu[(j, c)];
                            du[(j, c)] += w * vv[(i, c)];
                        }
                    }
                }
                self.accumulate(grads, *v, dv);
                self.accumulate(grads, *u, du);
            }
            Op::Softmax { s, tau } => {
                let p = node.value.as_slice();
                let inner = dot(p, g.as_slice());
                let ds: Vec<T> = p
                    .iter()
                    .zip(g.as_slice())
                    .map(|(&pi, &gi)| pi * (gi - inner) / *tau)
                    .collect();
                self.accumulate(grads, *s, Matrix::row_vector(ds));
            }
            Op::SoftCorrect { m_hat, probs } => {
                let m = self.value(*m_hat);
                let p = self.value(*probs).as_slice();
                let (t_len, d) = m.shape();
                let radius = (p.len() / 2) as i64;
                // out_i = Σ_j P[K - j] · m̂_{i-j}
                let mut dp = vec![T::zero(); p.len()];
                let mut dm = Matrix::zeros(t_len, d);
                for i in 0..t_len as i64 {
                    let lo = (-radius).max(i - t_len as i64 + 1);
                    let hi = radius.min(i);
                    for j in lo..=hi {
                        let tap = (radius - j) as usize;
                        let src = (i - j) as usize;
                        dp[tap] += dot(g.row(i as usize), m.row(src));
                        for c in 0..d {
                            dm[(src, c)] += p[tap] * g[(i as usize, c)];
                        }
                    }
                }
                self.accumulate(grads, *probs, Matrix::row_vector(dp));
                self.accumulate(grads, *m_hat, dm);
            }
            Op::HardCorrect { m_hat, lag } => {
                let (rows, cols) = g.shape();
                let t = rows as i64;
                let mut dm = Matrix::zeros(rows, cols);
                for i in 0..t {
                    let src = i + lag;
                    if (0..t).contains(&src) {
                        dm.row_mut(src as usize).copy_from_slice(g.row(i as usize));
                    }
                }
                self.accumulate(grads, *m_hat, dm);
            }
            Op::MseValid { a, b, valid, count } => {
                let k = T::lit(2.0) * g.item() / T::from_count(*count);
                let (x, y) = (self.value(*a), self.value(*b));
                let mut da = Matrix::zeros(x.rows(), x.cols());
                for r in (0..x.rows()).filter(|&r| valid[r]) {
                    for ((o, &p), &q) in da.row_mut(r).iter_mut().zip(x.row(r)).zip(y.row(r)) {
                        *o = k * (p - q);
                    }
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, da.scale(-T::one()));
                }
                self.accumulate(grads, *a, da);
            }
            Op::NegLogIndex { p, index } => {
                let row = self.value(*p);
                let mut dp = Matrix::zeros(1, row.cols());
                dp.as_mut_slice()[*index] = -g.item() / row.as_slice()[*index];
                self.accumulate(grads, *p, dp);
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                self.accumulate(grads, *x, Matrix::filled(r, c, g.item()));
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, g.scale(*c)),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
        }
    }
}

fn column_sums<T: Scalar>(g: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(1, g.cols());
    for row in g.iter_rows() {
        for (o, &x) in out.as_mut_slice().iter_mut().zip(row) {
            *o += x;
        }
    }
    out
}
