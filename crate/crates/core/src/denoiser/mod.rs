//! Predictive backends. A denoiser sees the whole sequence state and returns
//! one distribution per masked target position, like a bidirectional masked
//! language model's forward pass.

mod hmm;
mod scripted;

pub use hmm::{HmmModel, RandomModelSpec};
pub use scripted::ScriptedModel;

use crate::error::Result;
use crate::types::{Predictions, SequenceState, TokenId};

pub trait Denoiser {
    fn vocab_size(&self) -> usize;

    /// One forward pass: a distribution for every masked target position.
    /// Must be a pure function of the state.
    fn predict(&self, state: &SequenceState) -> Result<Predictions>;

    /// Exact `ln P(target | prompt)` when the backend can compute it.
    fn log_likelihood(&self, _prompt: &[TokenId], _target: &[TokenId]) -> Option<f64> {
        None
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&self, state: &SequenceState) -> Result<Predictions> {
        (**self).predict(state)
    }

    fn log_likelihood(&self, prompt: &[TokenId], target: &[TokenId]) -> Option<f64> {
        (**self).log_likelihood(prompt, target)
    }
}
