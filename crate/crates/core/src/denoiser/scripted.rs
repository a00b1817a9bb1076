use alloc::collections::BTreeMap;

use super::Denoiser;
use crate::error::{Error, Result};
use crate::types::{Dist, Predictions, SequenceState};

/// Replays fixed distributions keyed by `(step, position)`; anything not in
/// the script gets the default distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedModel {
    script: BTreeMap<(usize, usize), Dist>,
    default: Dist,
}

impl ScriptedModel {
    pub fn new(default: Dist) -> Self {
        Self {
            script: BTreeMap::new(),
            default,
        }
    }

    pub fn insert(&mut self, step: usize, pos: usize, dist: Dist) -> Result<()> {
        if dist.len() != self.default.len() {
            return Err(Error::ShapeMismatch {
                what: "scripted distribution",
                expected: self.default.len(),
                got: dist.len(),
            });
        }
        self.script.insert((step, pos), dist);
        Ok(())
    }

    pub fn with(mut self, step: usize, pos: usize, dist: Dist) -> Result<Self> {
        self.insert(step, pos, dist)?;
        Ok(self)
    }

    pub fn default_dist(&self) -> &Dist {
        &self.default
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize), &Dist)> {
        self.script.iter()
    }
}

impl Denoiser for ScriptedModel {
    fn vocab_size(&self) -> usize {
        self.default.len()
    }

    fn predict(&self, state: &SequenceState) -> Result<Predictions> {
        if state.vocab().size() != self.vocab_size() {
            return Err(Error::ShapeMismatch {
                what: "vocabulary",
                expected: self.vocab_size(),
                got: state.vocab().size(),
            });
        }
        let step = state.step();
        let out: Predictions = state
            .masked_positions()
            .map(|pos| {
                let dist = self.script.get(&(step, pos)).unwrap_or(&self.default);
                (pos, dist.clone())
            })
            .collect();
        if out.is_empty() {
            return Err(Error::EmptyMaskSet);
        }
        Ok(out)
    }
}
