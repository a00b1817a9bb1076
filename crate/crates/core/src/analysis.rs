//! Exact information-theoretic checks on small HMMs.
//!
//! Given an observed context `c`, a decoded block `B` and candidate positions
//! `Z_1..Z_L`, the joint `P(B, Z | c)` is tabulated by enumerating every
//! hidden-state path and every token assignment. From that table:
//!
//! * `I(Z_1:L; B | c)` by the direct definition,
//! * chain terms `I(Z_k; B | c, Z_<k)` from conditional entropies,
//! * per-position expected influence `E_b[KL(p(Z_k | c, b) || p(Z_k | c))]`,
//! * the overlap correction `eps(L) = sum_k [I(Z_k; B | c) - I(Z_k; B | c, Z_<k)]`.
//!
//! The two identities `I = sum chain` and `I = sum I_k^exp - eps` are exact, so
//! any residual above round-off means one of the routes is wrong.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::denoiser::{HmmModel, RandomModelSpec};
use crate::error::{Error, Result};
use crate::signals::kl_divergence;
use crate::types::{Dist, TokenId};

/// Maximum `K^n * V^m` joint states enumerated.
pub const ENUMERATION_CAP: u128 = 10_000_000;

/// Tolerance for the exact identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

/// `P(B, Z | c)` over `V^(|B| + |Z|)` cells. Variables are ordered block
/// first, then targets; the first variable is the most significant digit.
#[derive(Debug, Clone)]
struct JointTable {
    vocab: usize,
    vars: usize,
    block_vars: usize,
    probs: Vec<f64>,
}

impl JointTable {
    fn digit(&self, cell: usize, var: usize) -> usize {
        let m = self.vars;
        (cell / self.vocab.pow((m - 1 - var) as u32)) % self.vocab
    }

    /// Marginal over `keep` (variable indices), same digit convention.
    fn marginal(&self, keep: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab.pow(keep.len() as u32)];
        for (cell, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let idx = keep
                .iter()
                .fold(0, |acc, &var| acc * self.vocab + self.digit(cell, var));
            out[idx] += p;
        }
        out
    }

    fn entropy(&self, keep: &[usize]) -> f64 {
        if keep.is_empty() {
            return 0.0;
        }
        entropy_of(&self.marginal(keep))
    }

    fn block(&self) -> Vec<usize> {
        (0..self.block_vars).collect()
    }

    fn target(&self, k: usize) -> usize {
        self.block_vars + k
    }
}

fn entropy_of(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * libm::log(v)).sum()
}

/// `sum p(x, y) ln(p(x, y) / (p(x) p(y)))` over the table split into the
/// variable groups `xs` and `ys`.
fn mi_by_definition(table: &JointTable, xs: &[usize], ys: &[usize]) -> f64 {
    let v = table.vocab;
    let both: Vec<usize> = xs.iter().chain(ys).copied().collect();
    let joint = table.marginal(&both);
    let px = table.marginal(xs);
    let py = table.marginal(ys);
    let ny = v.pow(ys.len() as u32);
    let mut mi = 0.0;
    for (idx, &p) in joint.iter().enumerate() {
        if p > 0.0 {
            let (ix, iy) = (idx / ny, idx % ny);
            mi += p * libm::log(p / (px[ix] * py[iy]));
        }
    }
    mi
}

fn validate_positions(context_len: usize, block: &[usize], targets: &[usize]) -> Result<usize> {
    if block.is_empty() {
        return Err(Error::InvalidConfig {
            field: "block",
            reason: "must contain at least one position",
        });
    }
    if targets.is_empty() {
        return Err(Error::InvalidConfig {
            field: "targets",
            reason: "must contain at least one position",
        });
    }
    let all: Vec<usize> = block.iter().chain(targets).copied().collect();
    if all.iter().any(|&p| p < context_len) {
        return Err(Error::InvalidConfig {
            field: "positions",
            reason: "must lie after the observed context",
        });
    }
    let mut sorted = all.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != all.len() {
        return Err(Error::InvalidConfig {
            field: "positions",
            reason: "block and target positions must be distinct",
        });
    }
    Ok(sorted.last().map_or(context_len, |&p| p + 1).max(context_len))
}

/// Joint states the enumeration would visit.
pub fn enumeration_size(model: &HmmModel, seq_len: usize, free_vars: usize) -> u128 {
    let k = model.states() as u128;
    let v = model.vocab_size() as u128;
    k.saturating_pow(seq_len as u32)
        .saturating_mul(v.saturating_pow(free_vars as u32))
}

fn enumerate_joint(model: &HmmModel, context: &[TokenId], block: &[usize], targets: &[usize]) -> Result<JointTable> {
    let n = validate_positions(context.len(), block, targets)?;
    let vars: Vec<usize> = block.iter().chain(targets).copied().collect();
    let states = enumeration_size(model, n, vars.len());
    if states > ENUMERATION_CAP {
        return Err(Error::TooLarge {
            states,
            cap: ENUMERATION_CAP,
        });
    }
    if let Some(&token) = context.iter().find(|&&t| t as usize >= model.vocab_size()) {
        return Err(Error::TokenOutOfRange {
            token,
            size: model.vocab_size(),
        });
    }
    let k = model.states();
    let v = model.vocab_size();
    let cells = v.pow(vars.len() as u32);
    let mut table = vec![0.0; cells];
    let mut scratch = vec![0.0; cells];
    let mut path = vec![0usize; n];
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        for s in path.iter_mut().rev() {
            *s = c % k;
            c /= k;
        }
        let mut w = model.initial()[path[0]];
        for t in 1..n {
            w *= model.transition(path[t - 1], path[t]);
        }
        for (t, &tok) in context.iter().enumerate() {
            w *= model.emission(path[t], tok);
        }
        if w == 0.0 {
            continue;
        }
        // expand over token assignments, one variable at a time
        scratch[0] = w;
        let mut filled = 1;
        for &pos in &vars {
            for idx in (0..filled).rev() {
                let base = scratch[idx];
                for tok in 0..v {
                    scratch[idx * v + tok] = base * model.emission(path[pos], tok as TokenId);
                }
            }
            filled *= v;
        }
        for (t, s) in table.iter_mut().zip(&scratch) {
            *t += s;
        }
    }
    let total: f64 = table.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroLikelihood);
    }
    table.iter_mut().for_each(|p| *p /= total);
    Ok(JointTable {
        vocab: v,
        vars: vars.len(),
        block_vars: block.len(),
        probs: table,
    })
}

/// `I(Z; B | c)` by exhaustive enumeration.
pub fn conditional_mi(model: &HmmModel, context: &[TokenId], block: &[usize], targets: &[usize]) -> Result<f64> {
    let table = enumerate_joint(model, context, block, targets)?;
    let zs: Vec<usize> = (0..targets.len()).map(|k| table.target(k)).collect();
    Ok(mi_by_definition(&table, &table.block(), &zs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSample {
    pub tokens: Vec<TokenId>,
    /// `p(b | c)`.
    pub prob: f64,
    /// `KL(p(Z | c, b) || p(Z | c))`.
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceSplit {
    /// `I(Z; B | c)` by definition.
    pub expected: f64,
    /// One entry per block realization with positive probability.
    pub samples: Vec<BlockSample>,
}

impl InfluenceSplit {
    pub fn weighted_mean(&self) -> f64 {
        self.samples.iter().map(|s| s.prob * s.kl).sum()
    }

    pub fn residual(&self) -> f64 {
        (self.weighted_mean() - self.expected).abs()
    }
}

fn sample_influences(table: &JointTable, target_var: usize) -> Result<Vec<BlockSample>> {
    let v = table.vocab;
    let block = table.block();
    let mut keep = block.clone();
    keep.push(target_var);
    let joint = table.marginal(&keep);
    let prior = Dist::from_weights(table.marginal(&[target_var]))?;
    let mut out = Vec::new();
    for b in 0..v.pow(block.len() as u32) {
        let row = &joint[b * v..(b + 1) * v];
        let pb: f64 = row.iter().sum();
        if pb <= 0.0 {
            continue;
        }
        let posterior = Dist::from_weights(row.to_vec())?;
        let tokens = (0..block.len())
            .map(|i| ((b / v.pow((block.len() - 1 - i) as u32)) % v) as TokenId)
            .collect();
        out.push(BlockSample {
            tokens,
            prob: pb,
            kl: kl_divergence(&posterior, &prior)?,
        });
    }
    Ok(out)
}

/// Expected influence on `z_pos` next to its per-realization KL values.
pub fn expected_vs_sample_influence(
    model: &HmmModel,
    context: &[TokenId],
    block: &[usize],
    z_pos: usize,
) -> Result<InfluenceSplit> {
    let table = enumerate_joint(model, context, block, &[z_pos])?;
    let z = table.target(0);
    Ok(InfluenceSplit {
        expected: mi_by_definition(&table, &table.block(), &[z]),
        samples: sample_influences(&table, z)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiReport {
    /// `I(Z_1:L; B | c)`.
    pub joint_mi: f64,
    /// `E_b[KL(p(Z_k | c, b) || p(Z_k | c))]` per position.
    pub per_pos_mi: Vec<f64>,
    /// `I(Z_k; B | c)` per position, from entropies.
    pub marginal_mi: Vec<f64>,
    /// `I(Z_k; B | c, Z_<k)`.
    pub chain_terms: Vec<f64>,
    pub epsilon: f64,
}

impl MiReport {
    pub fn chain_residual(&self) -> f64 {
        (self.joint_mi - self.chain_terms.iter().sum::<f64>()).abs()
    }

    pub fn overlap_residual(&self) -> f64 {
        (self.joint_mi - (self.per_pos_mi.iter().sum::<f64>() - self.epsilon)).abs()
    }

    /// Largest per-position gap between the KL-expectation and entropy routes.
    pub fn sample_residual(&self) -> f64 {
        self.per_pos_mi
            .iter()
            .zip(&self.marginal_mi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `|eps| / sum_k I_k^exp`, or 0 when there is no influence at all.
    pub fn overlap_ratio(&self) -> f64 {
        let total: f64 = self.per_pos_mi.iter().sum();
        if total <= 1e-15 {
            0.0
        } else {
            self.epsilon.abs() / total
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.chain_residual()
            .max(self.overlap_residual())
            .max(self.sample_residual())
    }
}

/// All report quantities for the first `l` positions of `targets`.
pub fn chain_rule_report(
    model: &HmmModel,
    context: &[TokenId],
    block: &[usize],
    targets: &[usize],
    l: usize,
) -> Result<MiReport> {
    if l == 0 || l > targets.len() {
        return Err(Error::InvalidConfig {
            field: "L",
            reason: "must lie in 1..=number of target positions",
        });
    }
    let table = enumerate_joint(model, context, block, &targets[..l])?;
    let b = table.block();
    let zs: Vec<usize> = (0..l).map(|k| table.target(k)).collect();
    let joint_mi = mi_by_definition(&table, &b, &zs);
    let h_b = table.entropy(&b);

    let mut per_pos_mi = Vec::with_capacity(l);
    let mut marginal_mi = Vec::with_capacity(l);
    let mut chain_terms = Vec::with_capacity(l);
    for k in 0..l {
        let z = zs[k];
        let samples = sample_influences(&table, z)?;
        per_pos_mi.push(samples.iter().map(|s| s.prob * s.kl).sum());

        let mut bz = b.clone();
        bz.push(z);
        marginal_mi.push(table.entropy(&[z]) + h_b - table.entropy(&bz));

        // I(Z_k; B | Z_<k) = H(Z_<=k) + H(B, Z_<k) - H(B, Z_<=k) - H(Z_<k)
        let before = &zs[..k];
        let upto = &zs[..=k];
        let with_b = |zs: &[usize]| -> Vec<usize> { b.iter().chain(zs).copied().collect() };
        chain_terms.push(
            table.entropy(upto) + table.entropy(&with_b(before)) - table.entropy(&with_b(upto)) - table.entropy(before),
        );
    }
    let epsilon = marginal_mi.iter().zip(&chain_terms).map(|(m, c)| m - c).sum();
    Ok(MiReport {
        joint_mi,
        per_pos_mi,
        marginal_mi,
        chain_terms,
        epsilon,
    })
}

/// A small enumerable verification problem: context at `0..|c|`, block
/// right after it, candidate positions after the block.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub model: HmmModel,
    pub context: Vec<TokenId>,
    pub block: Vec<usize>,
    pub targets: Vec<usize>,
}

impl Fixture {
    pub fn enumeration_size(&self) -> u128 {
        let n = self.context.len() + self.block.len() + self.targets.len();
        enumeration_size(&self.model, n, self.block.len() + self.targets.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureOutcome {
    pub report: MiReport,
    /// Per target position: expected-vs-sample influence residual.
    pub influence_residuals: Vec<f64>,
}

impl FixtureOutcome {
    pub fn max_residual(&self) -> f64 {
        self.influence_residuals
            .iter()
            .copied()
            .fold(self.report.max_residual(), f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_residual() <= IDENTITY_TOLERANCE
    }
}

pub fn run_fixture(f: &Fixture) -> Result<FixtureOutcome> {
    let report = chain_rule_report(&f.model, &f.context, &f.block, &f.targets, f.targets.len())?;
    let influence_residuals = f
        .targets
        .iter()
        .map(|&z| expected_vs_sample_influence(&f.model, &f.context, &f.block, z).map(|s| s.residual()))
        .collect::<Result<_>>()?;
    Ok(FixtureOutcome {
        report,
        influence_residuals,
    })
}

/// Deterministic random fixtures with `K <= 3`, `V <= 4`, `L <= 4`, kept to
/// at most `max_states` enumeration states. Every other fixture uses sparse
/// emissions so that near-zero probabilities are exercised.
pub fn random_fixtures(count: usize, seed: u64, max_states: u128) -> Result<Vec<Fixture>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = out.len();
        let k = rng.random_range(1..=3usize);
        let v = rng.random_range(2..=4usize);
        let ctx_len = rng.random_range(0..=2usize);
        let b_len = rng.random_range(1..=2usize);
        let l = rng.random_range(1..=4usize);
        let alpha = if i % 2 == 0 { 1.0 } else { 0.1 };
        let model_seed = rng.random::<u64>();
        let spec = RandomModelSpec::new(k, v).with_emission_concentration(alpha);
        let model = HmmModel::random(spec, model_seed)?;
        let n = ctx_len + b_len + l;
        if enumeration_size(&model, n, b_len + l) > max_states {
            continue;
        }
        let context = model.sample_reference_sequence(ctx_len, model_seed);
        out.push(Fixture {
            name: format!("hmm-{i:03}-k{k}-v{v}-c{ctx_len}-b{b_len}-l{l}"),
            model,
            context,
            block: (ctx_len..ctx_len + b_len).collect(),
            targets: (ctx_len + b_len..n).collect(),
        });
    }
    Ok(out)
}
