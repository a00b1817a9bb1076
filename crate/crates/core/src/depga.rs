//! Dependency-guided adaptive block partitioning.
//!
//! The next block grows from the frontier while the last decoded block still
//! shifts the predictions of upcoming positions more than their remaining
//! uncertainty would suggest. Concretely, over a window of
//! `min(L_max, L_remain)` positions it scores
//! `S_k = norm(KL(p_curr || p_prev))_k - lambda * norm(H(p_curr))_k`
//! and ends the block just before the first negative score.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::signals::{dependency_scores, kl_divergence, normalize_and_smooth, shannon_entropy, SignalRow};
use crate::types::{BlockSpan, Predictions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionConfig {
    pub lambda: f64,
    pub l_min: usize,
    pub l_max: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            lambda: 1.2,
            l_min: 8,
            l_max: 128,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(Error::NonpositiveLambda);
        }
        if self.l_min == 0 {
            return Err(Error::InvalidConfig {
                field: "l_min",
                reason: "must be positive",
            });
        }
        if self.l_max < self.l_min {
            return Err(Error::InvalidConfig {
                field: "l_max",
                reason: "must be at least l_min",
            });
        }
        Ok(())
    }
}

/// Result of one partition decision, with the signals that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPlan {
    pub span: BlockSpan,
    /// Empty on a cold start.
    pub signals: Vec<SignalRow>,
}

impl BlockPlan {
    pub fn is_cold_start(&self) -> bool {
        self.signals.is_empty()
    }
}

/// `I_k = KL(p_curr[k] || p_prev[k])` over `window`, in order.
pub fn last_block_influence(p_prev: &Predictions, p_curr: &Predictions, window: &[usize]) -> Result<Vec<f64>> {
    window
        .iter()
        .map(|pos| {
            let prev = p_prev.get(pos).ok_or(Error::MissingPosition(*pos))?;
            let curr = p_curr.get(pos).ok_or(Error::MissingPosition(*pos))?;
            kl_divergence(curr, prev)
        })
        .collect()
}

/// Raw length is one less than the 1-based index of the first negative
/// score (the full window if none), then clamped to
/// `[min(l_min, l_window), l_window]`.
pub fn length_from_scores(scores: &[f64], l_min: usize, l_window: usize) -> usize {
    let raw = scores.iter().position(|s| *s < 0.0).unwrap_or(l_window);
    raw.clamp(l_min.min(l_window), l_window)
}

pub fn plan_next_block(
    p_prev: Option<&Predictions>,
    p_curr: &Predictions,
    frontier: usize,
    l_remain: usize,
    cfg: &PartitionConfig,
) -> Result<BlockPlan> {
    if l_remain == 0 {
        return Err(Error::EmptyWindow);
    }
    cfg.validate()?;
    let Some(p_prev) = p_prev else {
        return Ok(BlockPlan {
            span: BlockSpan::new(frontier, cfg.l_min.min(l_remain)),
            signals: Vec::new(),
        });
    };
    let l_window = cfg.l_max.min(l_remain);
    let window: Vec<usize> = (frontier..frontier + l_window).collect();
    let influence = last_block_influence(p_prev, p_curr, &window)?;
    // last_block_influence has already checked p_curr covers the window
    let entropy: Vec<f64> = window.iter().map(|pos| shannon_entropy(&p_curr[pos])).collect();
    let influence_norm = normalize_and_smooth(&influence);
    let entropy_norm = normalize_and_smooth(&entropy);
    let scores = dependency_scores(&influence_norm, &entropy_norm, cfg.lambda)?;
    let len = length_from_scores(&scores, cfg.l_min, l_window);
    let signals = window
        .iter()
        .enumerate()
        .map(|(i, &pos)| SignalRow {
            pos,
            influence: influence[i],
            entropy: entropy[i],
            influence_norm: influence_norm[i],
            entropy_norm: entropy_norm[i],
            score: scores[i],
        })
        .collect();
    Ok(BlockPlan {
        span: BlockSpan::new(frontier, len),
        signals,
    })
}

/// Chooses the next block. Without `p_prev` (first block) this is the cold
/// start of `min(l_min, l_remain)`.
pub fn choose_next_block(
    p_prev: Option<&Predictions>,
    p_curr: &Predictions,
    frontier: usize,
    l_remain: usize,
    cfg: &PartitionConfig,
) -> Result<BlockSpan> {
    plan_next_block(p_prev, p_curr, frontier, l_remain, cfg).map(|p| p.span)
}
