//! Reference strategies: single-token and confidence-threshold selection,
//! fixed-size blocks, and an AdaBlock-style delimiter heuristic.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::cap::{argmax_confidence, block_dists};
use crate::error::{Error, Result};
use crate::signals::confidence_and_argmax;
use crate::types::{BlockSpan, Predictions, TokenId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub conf_threshold: f64,
    pub fixed_block: usize,
    pub delimiter_token: TokenId,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            conf_threshold: 0.9,
            fixed_block: 32,
            delimiter_token: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.conf_threshold > 0.0 && self.conf_threshold <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "conf_threshold",
                reason: "must lie in (0, 1]",
            });
        }
        if self.fixed_block == 0 {
            return Err(Error::InvalidConfig {
                field: "fixed_block",
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// The single most confident masked position in the block.
pub fn vanilla_select(block: BlockSpan, masked: &BTreeSet<usize>, dists: &Predictions) -> Result<Vec<usize>> {
    let entries = block_dists(block, masked, dists)?;
    Ok(alloc::vec![argmax_confidence(&entries)])
}

/// Every masked block position with confidence at or above `threshold`,
/// falling back to [`vanilla_select`] when none qualifies.
pub fn confidence_select(
    block: BlockSpan,
    masked: &BTreeSet<usize>,
    dists: &Predictions,
    threshold: f64,
) -> Result<Vec<usize>> {
    let entries = block_dists(block, masked, dists)?;
    let picked: Vec<usize> = entries
        .iter()
        .filter(|(_, d)| confidence_and_argmax(d).0 >= threshold)
        .map(|(p, _)| *p)
        .collect();
    if picked.is_empty() {
        Ok(alloc::vec![argmax_confidence(&entries)])
    } else {
        Ok(picked)
    }
}

pub fn fixed_partition(frontier: usize, l_remain: usize, block_size: usize) -> Result<BlockSpan> {
    if l_remain == 0 {
        return Err(Error::EmptyWindow);
    }
    Ok(BlockSpan::new(frontier, block_size.max(1).min(l_remain)))
}

/// Ends the block at the first position whose predicted token is the
/// delimiter, otherwise uses `default_size`.
pub fn adablock_partition(
    frontier: usize,
    l_remain: usize,
    dists: &Predictions,
    delimiter_token: TokenId,
    default_size: usize,
) -> Result<BlockSpan> {
    if l_remain == 0 {
        return Err(Error::EmptyWindow);
    }
    let window = default_size.max(1).min(l_remain);
    for offset in 0..window {
        let pos = frontier + offset;
        let dist = dists.get(&pos).ok_or(Error::MissingPosition(pos))?;
        if confidence_and_argmax(dist).1 == delimiter_token {
            return Ok(BlockSpan::new(frontier, offset + 1));
        }
    }
    Ok(BlockSpan::new(frontier, window))
}
