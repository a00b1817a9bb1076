//! Conflict-aware selection of a safe subset of block positions to commit
//! together in one round.
//!
//! Candidates are masked block positions with confidence at least `tau_low`.
//! Two candidates conflict when `ln p_i(y_j) + ln p_j(y_i) > gamma`, i.e. each
//! position puts noticeable mass on the other's predicted token. Selection
//! first admits every candidate at or above `tau_high`, then greedily
//! completes the set by descending confidence while skipping conflicts.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::signals::{confidence_and_argmax, floored_ln};
use crate::types::{BlockSpan, Dist, Predictions, TokenId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectConfig {
    pub tau_low: f64,
    pub tau_high: f64,
    /// Conflict threshold in nats.
    pub gamma: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            tau_low: 0.8,
            tau_high: 0.95,
            gamma: -16.0,
        }
    }
}

impl SelectConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.tau_low) {
            return Err(Error::InvalidConfig {
                field: "tau_low",
                reason: "must lie in (0, 1]",
            });
        }
        if !unit(self.tau_high) {
            return Err(Error::InvalidConfig {
                field: "tau_high",
                reason: "must lie in (0, 1]",
            });
        }
        if self.tau_high < self.tau_low {
            return Err(Error::InvalidConfig {
                field: "tau_high",
                reason: "must be at least tau_low",
            });
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidConfig {
                field: "gamma",
                reason: "must be finite",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<'a> {
    pub pos: usize,
    pub conf: f64,
    pub pred: TokenId,
    pub dist: &'a Dist,
}

impl<'a> Candidate<'a> {
    pub fn new(pos: usize, dist: &'a Dist) -> Self {
        let (conf, pred) = confidence_and_argmax(dist);
        Self { pos, conf, pred, dist }
    }
}

/// `D_ij = ln max(p_i(y_j), floor) + ln max(p_j(y_i), floor)`; symmetric.
pub fn conflict_score(a: &Candidate<'_>, b: &Candidate<'_>) -> Result<f64> {
    if a.pos == b.pos {
        return Err(Error::SamePosition(a.pos));
    }
    Ok(floored_ln(a.dist.prob(b.pred)) + floored_ln(b.dist.prob(a.pred)))
}

/// Strict: a score equal to `gamma` is safe.
#[inline]
pub fn is_conflict(score: f64, gamma: f64) -> bool {
    if mutant!(ConflictDirection) {
        score < gamma
    } else {
        score > gamma
    }
}

/// Positions chosen for one commit round, split by how they were admitted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SafeSubset {
    /// Admitted for confidence at or above `tau_high`.
    pub high_confidence: Vec<usize>,
    /// Admitted by greedy completion, in admission order.
    pub greedy: Vec<usize>,
    /// Lone fallback pick when nothing else qualified.
    pub safeguard: Option<usize>,
}

impl SafeSubset {
    /// All selected positions, ascending.
    pub fn positions(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .high_confidence
            .iter()
            .chain(&self.greedy)
            .copied()
            .chain(self.safeguard)
            .collect();
        all.sort_unstable();
        all
    }

    pub fn len(&self) -> usize {
        self.high_confidence.len() + self.greedy.len() + usize::from(self.safeguard.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Masked positions of `block` with their distributions, ascending.
pub(crate) fn block_dists<'a>(
    block: BlockSpan,
    masked: &BTreeSet<usize>,
    dists: &'a Predictions,
) -> Result<Vec<(usize, &'a Dist)>> {
    let out: Vec<(usize, &Dist)> = masked
        .range(block.start..block.end())
        .map(|&pos| dists.get(&pos).map(|d| (pos, d)).ok_or(Error::MissingPosition(pos)))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::EmptyBlock);
    }
    Ok(out)
}

/// Highest-confidence position; ties go to the lowest position.
pub(crate) fn argmax_confidence(entries: &[(usize, &Dist)]) -> usize {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for &(pos, dist) in entries {
        let (c, _) = confidence_and_argmax(dist);
        if c > best.0 {
            best = (c, pos);
        }
    }
    best.1
}

pub fn select_safe_subset(
    block: BlockSpan,
    masked: &BTreeSet<usize>,
    dists: &Predictions,
    cfg: &SelectConfig,
) -> Result<SafeSubset> {
    let entries = block_dists(block, masked, dists)?;
    let pool: Vec<Candidate<'_>> = entries
        .iter()
        .map(|&(pos, d)| Candidate::new(pos, d))
        .filter(|c| c.conf >= cfg.tau_low)
        .collect();

    let n = pool.len();
    let mut conflicts = vec![false; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let flagged = is_conflict(conflict_score(&pool[i], &pool[j])?, cfg.gamma);
            conflicts[i * n + j] = flagged;
            conflicts[j * n + i] = flagged;
        }
    }

    let mut alive = vec![true; n];
    let mut subset = SafeSubset::default();

    // Phase 1: high-confidence priority.
    let high: Vec<usize> = (0..n).filter(|&i| pool[i].conf >= cfg.tau_high).collect();
    for &i in &high {
        subset.high_confidence.push(pool[i].pos);
        alive[i] = false;
    }
    for &i in &high {
        for j in 0..n {
            if conflicts[i * n + j] {
                alive[j] = false;
            }
        }
    }

    // Phase 2: greedy completion by descending confidence, ties to lower position.
    let mut order: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    order.sort_by(|&a, &b| {
        pool[b]
            .conf
            .total_cmp(&pool[a].conf)
            .then(pool[a].pos.cmp(&pool[b].pos))
    });
    for i in order {
        if !alive[i] {
            continue;
        }
        subset.greedy.push(pool[i].pos);
        alive[i] = false;
        for j in 0..n {
            if conflicts[i * n + j] {
                alive[j] = false;
            }
        }
    }

    if subset.is_empty() {
        subset.safeguard = Some(argmax_confidence(&entries));
    }
    Ok(subset)
}
