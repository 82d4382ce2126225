//! Adam with a linear warm-up / cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Linear warm-up to `peak`, then cosine decay to zero at `total` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LrSchedule {
    /// Learning rate for 0-based `step`.
    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.peak * (step + 1) as f64 / self.warmup as f64;
        }
        let span = self.total.saturating_sub(self.warmup).max(1);
        let progress = ((step - self.warmup) as f64 / span as f64).min(1.0);
        0.5 * self.peak * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub schedule: LrSchedule,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    step: usize,
}

impl<T: Scalar> Adam<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix<T>>, config: AdamConfig, schedule: LrSchedule) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (Matrix::zeros(p.rows(), p.cols()), Matrix::zeros(p.rows(), p.cols())))
            .unzip();
        Self {
            config,
            schedule,
            m,
            v,
            step: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Applies one update; returns the learning rate used.
    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Matrix<T>>,
        grads: &[Matrix<T>],
    ) -> Result<f64> {
        let lr = self.schedule.at(self.step);
        self.step += 1;
        let (b1, b2) = (T::lit(self.config.beta1), T::lit(self.config.beta2));
        let c1 = T::one() - b1.powi(self.step as i32);
        let c2 = T::one() - b2.powi(self.step as i32);
        let (lr_t, eps) = (T::lit(lr), T::lit(self.config.eps));
        let mut count = 0;
        for (i, p) in params.into_iter().enumerate() {
            let g = grads.get(i).ok_or(Error::DimensionMismatch {
                context: "gradient count",
                expected: self.m.len(),
                actual: grads.len(),
            })?;
            if g.shape() != p.shape() || self.m[i].shape() != p.shape() {
                return Err(Error::DimensionMismatch {
                    context: "gradient shape",
                    expected: p.len(),
                    actual: g.len(),
                });
            }
            let (m, v) = (self.m[i].as_mut_slice(), self.v[i].as_mut_slice());
            for (((w, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let step = lr_t * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                *w -= step;
            }
            count += 1;
        }
        if count != self.m.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter count",
                expected: self.m.len(),
                actual: count,
            });
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = LrSchedule {
            peak: 1.0,
            warmup: 4,
            total: 14,
        };
        assert_eq!(s.at(0), 0.25);
        assert_eq!(s.at(3), 1.0);
        assert_eq!(s.at(4), 1.0);
        assert!((s.at(9) - 0.5).abs() < 1e-12);
        assert!(s.at(14).abs() < 1e-12);
        assert!(s.at(100).abs() < 1e-12);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = vec![Matrix::row_vector(vec![1.0f64, -2.0])];
        let sched = LrSchedule {
            peak: 0.1,
            warmup: 0,
            total: 1000,
        };
        let mut adam = Adam::new(&p, AdamConfig::default(), sched);
        adam.update(p.iter_mut(), &[Matrix::row_vector(vec![3.0, -0.5])])
            .unwrap();
        assert!((p[0].as_slice()[0] - 0.9).abs() < 1e-7);
        assert!((p[0].as_slice()[1] + 1.9).abs() < 1e-7);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![Matrix::scalar(5.0f64)];
        let sched = LrSchedule {
            peak: 0.1,
            warmup: 10,
            total: 2000,
        };
        let mut adam = Adam::new(&p, AdamConfig::default(), sched);
        for _ in 0..2000 {
            let g = Matrix::scalar(2.0 * (p[0].item() - 1.5));
            adam.update(p.iter_mut(), &[g]).unwrap();
        }
        assert!((p[0].item() - 1.5).abs() < 1e-3);
    }
}
