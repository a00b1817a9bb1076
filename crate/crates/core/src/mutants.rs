//! Process-wide switches that deliberately break individual kernels.
//!
//! Only compiled with the `mutants` feature. The acceptance suite flips these
//! to confirm that its checks detect each perturbation.

use core::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Mutant {
    /// Raise the probability floor inside KL from 1e-12 to 1e-3.
    KlFloor = 1,
    /// Add 1e-6 to every KL value.
    KlOffset = 2,
    /// Use `I + lambda * H` instead of `I - lambda * H`.
    LambdaSign = 4,
    /// Flag conflicts with `D < gamma` instead of `D > gamma`.
    ConflictDirection = 8,
}

static ACTIVE: AtomicU8 = AtomicU8::new(0);

pub fn enable(m: Mutant) {
    ACTIVE.fetch_or(m as u8, Ordering::SeqCst);
}

pub fn disable(m: Mutant) {
    ACTIVE.fetch_and(!(m as u8), Ordering::SeqCst);
}

pub fn clear() {
    ACTIVE.store(0, Ordering::SeqCst);
}

pub fn is_active(m: Mutant) -> bool {
    ACTIVE.load(Ordering::SeqCst) & (m as u8) != 0
}
