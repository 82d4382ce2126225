use serde::Serialize;

use super::{FeatureSequence, TimeMask};
use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::scalar::Scalar;

/// Cross-correlation scores over lags `-K..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncVector<T> {
    pub values: Vec<T>,
    pub radius: usize,
    pub normalized: bool,
}

impl<T: Scalar> SyncVector<T> {
    pub fn at(&self, lag: i64) -> T {
        self.values[(lag + self.radius as i64) as usize]
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let k = self.radius as i64;
        -k..=k
    }
}

/// Categorical distribution over lags `-K..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetDistribution<T> {
    pub probs: Vec<T>,
    pub temperature: T,
}

impl<T: Scalar> OffsetDistribution<T> {
    /// Builds a distribution from explicit probabilities (normalized on
    /// input). Intended for tests and hand-built kernels.
    pub fn from_probs(probs: Vec<T>, temperature: T) -> Result<Self> {
        if probs.is_empty() || probs.len() % 2 == 0 {
            return Err(invalid("probs", format!("length {} is not 2K+1", probs.len())));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= T::zero())) {
            return Err(invalid("probs", "entries must be finite and nonnegative"));
        }
        let total: T = probs.iter().copied().sum();
        if total <= T::zero() {
            return Err(invalid("probs", "total mass is zero"));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / total).collect(),
            temperature,
        })
    }

    /// Point mass at `lag`.
    pub fn delta(radius: usize, lag: i64) -> Self {
        let mut probs = vec![T::zero(); 2 * radius + 1];
        probs[(lag + radius as i64) as usize] = T::one();
        Self {
            probs,
            temperature: T::one(),
        }
    }

    pub fn radius(&self) -> usize {
        self.probs.len() / 2
    }

    pub fn prob(&self, lag: i64) -> T {
        let k = self.radius() as i64;
        if lag < -k || lag > k {
            return T::zero();
        }
        self.probs[(lag + k) as usize]
    }
}

/// Synchronization vector between `v` (lagging stream) and `u`.
///
/// Lag `k` accumulates `m_i m_{i-k} ⟨v_i, u_{i-k}⟩`, so a peak at `k > 0`
/// means `v` runs `k` frames behind `u`. With `normalized`, each lag is
/// divided by its count of doubly-valid frame pairs.
pub fn sync_vec<T: Scalar>(
    v: &FeatureSequence<T>,
    u: &FeatureSequence<T>,
    mask: &TimeMask,
    radius: usize,
    normalized: bool,
) -> Result<SyncVector<T>> {
    let t = v.len();
    for (what, n) in [("u frames", u.len()), ("mask", mask.len())] {
        if n != t {
            return Err(Error::DimensionMismatch {
                context: what,
                expected: t,
                actual: n,
            });
        }
    }
    if v.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            context: "embedding width",
            expected: v.dim(),
            actual: u.dim(),
        });
    }
    if radius == 0 || radius >= t {
        return Err(invalid("radius", format!("need 1 <= K < T, got K={radius}, T={t}")));
    }
    let (values, _) = kernels::sync_values(&v.frames, &u.frames, &mask.weights::<T>(), radius, normalized);
    Ok(SyncVector {
        values,
        radius,
        normalized,
    })
}

/// `P(k) = softmax(s / τ)`.
pub fn offset_distribution<T: Scalar>(s: &SyncVector<T>, tau: T) -> Result<OffsetDistribution<T>> {
    if !(tau > T::zero() && tau.is_finite()) {
        return Err(invalid("temperature", format!("{tau} is not positive")));
    }
    Ok(OffsetDistribution {
        probs: kernels::softmax_temperature(&s.values, tau),
        temperature: tau,
    })
}

/// Lags ordered by preference for tie-breaking: 0, -1, 1, -2, 2, …
pub(crate) fn lags_by_preference(radius: i64) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=radius).flat_map(|k| [-k, k]))
}

/// Most probable lag; ties go to the smallest `|k|`, then to the negative lag.
pub fn argmax_lag<T: Scalar>(d: &OffsetDistribution<T>) -> i64 {
    let mut best = 0;
    let mut best_p = T::neg_infinity();
    for lag in lags_by_preference(d.radius() as i64) {
        let p = d.prob(lag);
        if p > best_p {
            best = lag;
            best_p = p;
        }
    }
    best
}
