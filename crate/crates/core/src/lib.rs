//! Block-wise diffusion-language-model decoding against exact oracle denoisers.
//!
//! The crate is `no_std` (with `alloc`) and contains only computation:
//!
//! * [`types`]: sequence state, blocks, distributions and the commit rule.
//! * [`signals`]: KL, entropy, confidence, window normalization, dependency score.
//! * [`denoiser`]: the prediction contract plus HMM and scripted backends.
//! * [`depga`]: dependency-guided adaptive block partitioning.
//! * [`cap`]: conflict-aware safe-subset selection inside a block.
//! * [`baselines`]: vanilla / confidence-threshold selection, fixed and
//!   delimiter-based partitioning.
//! * [`engine`]: the decode loop, NFE accounting and traces.
//! * [`analysis`]: brute-force mutual-information identities on small HMMs.
//!
//! File formats, timing and the command-line harness live in `depcap-cli`.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

// Evaluates to `true` only when the named mutant is switched on.
macro_rules! mutant {
    ($m:ident) => {{
        #[cfg(feature = "mutants")]
        {
            $crate::mutants::is_active($crate::mutants::Mutant::$m)
        }
        #[cfg(not(feature = "mutants"))]
        {
            false
        }
    }};
}

pub mod analysis;
pub mod baselines;
pub mod cap;
pub mod denoiser;
pub mod depga;
pub mod engine;
pub mod error;
#[cfg(feature = "mutants")]
#[doc(hidden)]
pub mod mutants;
pub mod signals;
pub mod types;

pub use error::{Error, Result};
pub use types::{BlockSpan, Dist, Predictions, RunMetrics, SequenceState, TokenId, Vocabulary};
