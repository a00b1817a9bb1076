//! Scalar signal math shared by block partitioning and parallel selection.
//!
//! All logarithms are natural, so every quantity here is in nats.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::types::{Dist, TokenId};

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-position quantities feeding the dependency score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalRow {
    pub pos: usize,
    pub influence: f64,
    pub entropy: f64,
    pub influence_norm: f64,
    pub entropy_norm: f64,
    pub score: f64,
}

#[inline]
pub(crate) fn floored_ln(p: f64) -> f64 {
    libm::log(p.max(PROB_FLOOR))
}

/// `KL(p || q) = sum_v p_v ln(p_v / max(q_v, floor))`, clamped at zero.
pub fn kl_divergence(p: &Dist, q: &Dist) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let floor = if mutant!(KlFloor) { 1e-3 } else { PROB_FLOOR };
    let mut kl = 0.0;
    for (&pv, &qv) in p.probs().iter().zip(q.probs()) {
        if pv > 0.0 {
            kl += pv * (libm::log(pv) - libm::log(qv.max(floor)));
        }
    }
    if mutant!(KlOffset) {
        kl += 1e-6;
    }
    Ok(kl.max(0.0))
}

/// Shannon entropy `-sum_v p_v ln p_v` with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &Dist) -> f64 {
    let h: f64 = p.probs().iter().filter(|&&v| v > 0.0).map(|&v| -v * libm::log(v)).sum();
    h.max(0.0)
}

/// Radius-1 centered moving average (edge replicated), then min-max scaling
/// onto `[0, 1]`. A flat window maps to 0.5 everywhere.
pub fn normalize_and_smooth(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let at = |i: isize| values[i.clamp(0, n as isize - 1) as usize];
    let smoothed: Vec<f64> = (0..n as isize).map(|i| (at(i - 1) + at(i) + at(i + 1)) / 3.0).collect();
    let (lo, hi) = smoothed
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range < 1e-12 {
        return alloc::vec![0.5; n];
    }
    smoothed
        .into_iter()
        .map(|v| ((v - lo) / range).clamp(0.0, 1.0))
        .collect()
}

/// `S_k = I~_k - lambda * H~_k`.
pub fn dependency_scores(influence_norm: &[f64], entropy_norm: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if influence_norm.len() != entropy_norm.len() {
        return Err(Error::LengthMismatch {
            left: influence_norm.len(),
            right: entropy_norm.len(),
        });
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::NonpositiveLambda);
    }
    let sign = if mutant!(LambdaSign) { 1.0 } else { -1.0 };
    Ok(influence_norm
        .iter()
        .zip(entropy_norm)
        .map(|(&i, &h)| i + sign * lambda * h)
        .collect())
}

/// Max probability and the lowest token id attaining it.
pub fn confidence_and_argmax(p: &Dist) -> (f64, TokenId) {
    let mut best = (p[0], 0);
    for (v, &pv) in p.probs().iter().enumerate().skip(1) {
        if pv > best.0 {
            best = (pv, v as TokenId);
        }
    }
    best
}
