//! Shared domain types and the block-restricted commit rule.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use crate::error::{Error, Result};

/// Integer token id. Real tokens are `0..V`; the mask sentinel is `V`.
pub type TokenId = u32;

/// Predictive distributions for the masked positions of one forward pass,
/// keyed by target index.
pub type Predictions = BTreeMap<usize, Dist>;

/// Tolerance used when validating that probabilities sum to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocabulary {
    size: usize,
}

impl Vocabulary {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidConfig {
                field: "vocab",
                reason: "must contain at least 2 tokens",
            });
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// The sentinel lies outside `0..V`, so no [`Dist`] ever carries mask mass.
    pub fn mask_id(&self) -> TokenId {
        self.size as TokenId
    }

    pub fn contains(&self, token: TokenId) -> bool {
        (token as usize) < self.size
    }
}

/// Probability vector over the real vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist(Vec<f64>);

impl Dist {
    /// Validates non-negativity and unit mass (within [`SUM_TOLERANCE`]).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDist("empty"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDist("negative or non-finite entry"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDist("entries do not sum to 1"));
        }
        Ok(Self(probs))
    }

    /// Rescales non-negative weights to unit mass.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDist("negative or non-finite weight"));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidDist("weights have zero mass"));
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self(weights))
    }

    pub fn uniform(size: usize) -> Self {
        Self(vec![1.0 / size as f64; size])
    }

    pub fn one_hot(size: usize, token: TokenId) -> Self {
        let mut probs = vec![0.0; size];
        probs[token as usize] = 1.0;
        Self(probs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.0[token as usize]
    }
}

impl Index<usize> for Dist {
    type Output = f64;

    fn index(&self, idx: usize) -> &f64 {
        &self.0[idx]
    }
}

/// Contiguous span `[start, start + len)` of target positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpan {
    pub start: usize,
    pub len: usize,
}

impl BlockSpan {
    pub fn new(start: usize, len: usize) -> Self {
        debug_assert!(len > 0, "blocks are never empty");
        Self { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, pos: usize) -> bool {
        pos >= self.start && pos < self.end()
    }

    pub fn positions(&self) -> core::ops::Range<usize> {
        self.start..self.end()
    }
}

/// Prompt plus the partially decoded target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceState {
    vocab: Vocabulary,
    prompt: Vec<TokenId>,
    target: Vec<TokenId>,
    step: usize,
}

impl SequenceState {
    /// Fresh state with every target slot masked.
    pub fn new(vocab: Vocabulary, prompt: Vec<TokenId>, l_gen: usize) -> Result<Self> {
        if let Some(&token) = prompt.iter().find(|t| !vocab.contains(**t)) {
            return Err(Error::TokenOutOfRange {
                token,
                size: vocab.size(),
            });
        }
        Ok(Self {
            vocab,
            prompt,
            target: vec![vocab.mask_id(); l_gen],
            step: 0,
        })
    }

    /// Builds a state from an explicit target; `mask_id` slots are masked.
    pub fn with_target(vocab: Vocabulary, prompt: Vec<TokenId>, target: Vec<TokenId>) -> Result<Self> {
        let mut state = Self::new(vocab, prompt, 0)?;
        if let Some(&token) = target.iter().find(|t| **t != vocab.mask_id() && !vocab.contains(**t)) {
            return Err(Error::TokenOutOfRange {
                token,
                size: vocab.size(),
            });
        }
        state.target = target;
        Ok(state)
    }

    pub fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.prompt
    }

    pub fn target(&self) -> &[TokenId] {
        &self.target
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn is_masked(&self, pos: usize) -> bool {
        self.target[pos] == self.vocab.mask_id()
    }

    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        let mask = self.vocab.mask_id();
        self.target
            .iter()
            .enumerate()
            .filter(move |(_, t)| **t == mask)
            .map(|(i, _)| i)
    }

    pub fn masked_count(&self) -> usize {
        self.masked_positions().count()
    }

    /// Lowest masked index, or `None` once fully decoded.
    pub fn frontier(&self) -> Option<usize> {
        self.masked_positions().next()
    }

    /// Target as `Option`s, `None` for masked slots.
    pub fn observed_target(&self) -> Vec<Option<TokenId>> {
        let mask = self.vocab.mask_id();
        self.target.iter().map(|&t| (t != mask).then_some(t)).collect()
    }

    /// Commits `decisions` and advances the step counter.
    ///
    /// The update is all-or-nothing: every decision is validated before any
    /// slot is written, so a failed commit leaves the state untouched.
    pub fn apply_commit(&mut self, decisions: &BTreeMap<usize, TokenId>) -> Result<()> {
        for (&pos, &token) in decisions {
            if pos >= self.target.len() {
                return Err(Error::PositionOutOfRange {
                    pos,
                    len: self.target.len(),
                });
            }
            if !self.is_masked(pos) {
                return Err(Error::CommitToDecodedSlot { pos });
            }
            if token == self.vocab.mask_id() {
                return Err(Error::MaskTokenCommit { pos });
            }
            if !self.vocab.contains(token) {
                return Err(Error::TokenOutOfRange {
                    token,
                    size: self.vocab.size(),
                });
            }
        }
        for (&pos, &token) in decisions {
            self.target[pos] = token;
        }
        self.step += 1;
        Ok(())
    }
}

/// Per-run counters and quality scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    /// Denoiser forward passes.
    pub nfe: usize,
    /// Commit rounds.
    pub steps: usize,
    pub tokens_per_step: Vec<usize>,
    pub block_lengths: Vec<usize>,
    /// Joint log-likelihood (nats) of the decoded target given the prompt,
    /// when the denoiser is an exact oracle.
    pub quality_loglik: Option<f64>,
    /// Fraction of positions matching the vanilla reference decode.
    pub agreement_vs_vanilla: Option<f64>,
    /// Filled in by callers that own a clock.
    pub wall_ms: f64,
}

impl RunMetrics {
    pub fn generated(&self) -> usize {
        self.tokens_per_step.iter().sum()
    }

    pub fn mean_tokens_per_step(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.generated() as f64 / self.steps as f64
        }
    }

    pub fn mean_block_len(&self) -> f64 {
        if self.block_lengths.is_empty() {
            0.0
        } else {
            self.block_lengths.iter().sum::<usize>() as f64 / self.block_lengths.len() as f64
        }
    }

    pub fn tokens_per_nfe(&self) -> f64 {
        if self.nfe == 0 {
            0.0
        } else {
            self.generated() as f64 / self.nfe as f64
        }
    }
}
