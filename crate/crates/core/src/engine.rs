//! The block-wise decode loop.
//!
//! Each outer iteration picks the next block at the frontier; each inner
//! iteration runs one forward pass and commits the selector's subset of the
//! block's masked positions. The pass that follows a block's final commit is
//! reused both as `p_curr` for the next partition decision and as the first
//! prediction of the next block, so one forward pass is one NFE and
//! single-token decoding costs exactly `L_gen` passes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::baselines::{adablock_partition, confidence_select, fixed_partition, vanilla_select};
use crate::cap::{select_safe_subset, SelectConfig};
use crate::denoiser::Denoiser;
use crate::depga::{plan_next_block, BlockPlan, PartitionConfig};
use crate::error::{Error, Result};
use crate::signals::{confidence_and_argmax, SignalRow};
use crate::types::{BlockSpan, Predictions, RunMetrics, SequenceState, TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Partitioner {
    DepGa(PartitionConfig),
    Fixed(usize),
    /// Delimiter-scan heuristic in the spirit of AdaBlock.
    AdaBlock {
        delimiter: TokenId,
        default_size: usize,
    },
}

impl Partitioner {
    pub fn label(&self) -> String {
        match self {
            Partitioner::DepGa(_) => "depga".into(),
            Partitioner::Fixed(k) => alloc::format!("fixed{k}"),
            Partitioner::AdaBlock { .. } => "adablock-style".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    Vanilla,
    Confidence(f64),
    Cap(SelectConfig),
}

impl Selector {
    pub fn label(&self) -> &'static str {
        match self {
            Selector::Vanilla => "vanilla",
            Selector::Confidence(_) => "confidence",
            Selector::Cap(_) => "cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySpec {
    pub partitioner: Partitioner,
    pub selector: Selector,
    pub l_gen: usize,
}

impl StrategySpec {
    pub fn new(partitioner: Partitioner, selector: Selector) -> Self {
        Self {
            partitioner,
            selector,
            l_gen: 256,
        }
    }

    pub fn with_l_gen(mut self, l_gen: usize) -> Self {
        self.l_gen = l_gen;
        self
    }

    /// Full method: adaptive partitioning plus conflict-aware selection.
    pub fn depcap() -> Self {
        Self::new(
            Partitioner::DepGa(PartitionConfig::default()),
            Selector::Cap(SelectConfig::default()),
        )
    }

    /// Single-token decoding over fixed blocks.
    pub fn vanilla(block: usize) -> Self {
        Self::new(Partitioner::Fixed(block), Selector::Vanilla)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_gen == 0 {
            return Err(Error::InvalidConfig {
                field: "l_gen",
                reason: "must be positive",
            });
        }
        match self.partitioner {
            Partitioner::DepGa(cfg) => cfg.validate()?,
            Partitioner::Fixed(0) => {
                return Err(Error::InvalidConfig {
                    field: "fixed_block",
                    reason: "must be positive",
                })
            }
            Partitioner::AdaBlock { default_size: 0, .. } => {
                return Err(Error::InvalidConfig {
                    field: "fixed_block",
                    reason: "must be positive",
                })
            }
            _ => {}
        }
        match self.selector {
            Selector::Confidence(t) if !(t > 0.0 && t <= 1.0) => Err(Error::InvalidConfig {
                field: "conf_threshold",
                reason: "must lie in (0, 1]",
            }),
            Selector::Cap(cfg) => cfg.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub block: usize,
    pub positions: Vec<usize>,
    pub tokens: Vec<TokenId>,
    pub confidences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub span: BlockSpan,
    /// Partition signals over the candidate window; empty unless the block
    /// came from an informed adaptive decision.
    pub signals: Vec<SignalRow>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeTrace {
    pub steps: Vec<StepRecord>,
    pub blocks: Vec<BlockRecord>,
}

impl DecodeTrace {
    /// Committed positions in commit order.
    pub fn committed_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().flat_map(|s| s.positions.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeRun {
    pub state: SequenceState,
    pub metrics: RunMetrics,
    pub trace: DecodeTrace,
}

/// Holds the predictions from the pass just before the last block's final
/// commit, which serve as `p_prev` for the next partition decision.
#[derive(Debug, Clone, Default)]
pub struct InfluenceCapture {
    before_final_commit: Option<Predictions>,
}

impl InfluenceCapture {
    pub fn record_final_pass(&mut self, preds: &Predictions) {
        self.before_final_commit = Some(preds.clone());
    }

    /// `(p_prev, p_curr)` restricted to positions at or after `frontier`.
    pub fn capture_influence_inputs(
        &self,
        current: &Predictions,
        frontier: usize,
    ) -> Result<(Predictions, Predictions)> {
        let prev = self.before_final_commit.as_ref().ok_or(Error::FirstBlock)?;
        let tail = |p: &Predictions| -> Predictions { p.range(frontier..).map(|(k, d)| (*k, d.clone())).collect() };
        Ok((tail(prev), tail(current)))
    }
}

fn choose_block(
    partitioner: &Partitioner,
    capture: &InfluenceCapture,
    preds: &Predictions,
    frontier: usize,
    l_remain: usize,
) -> Result<BlockPlan> {
    match partitioner {
        Partitioner::DepGa(cfg) => match capture.capture_influence_inputs(preds, frontier) {
            Ok((prev, curr)) => plan_next_block(Some(&prev), &curr, frontier, l_remain, cfg),
            Err(Error::FirstBlock) => plan_next_block(None, preds, frontier, l_remain, cfg),
            Err(e) => Err(e),
        },
        Partitioner::Fixed(size) => Ok(BlockPlan {
            span: fixed_partition(frontier, l_remain, *size)?,
            signals: Vec::new(),
        }),
        Partitioner::AdaBlock {
            delimiter,
            default_size,
        } => Ok(BlockPlan {
            span: adablock_partition(frontier, l_remain, preds, *delimiter, *default_size)?,
            signals: Vec::new(),
        }),
    }
}

fn select(selector: &Selector, block: BlockSpan, masked: &BTreeSet<usize>, preds: &Predictions) -> Result<Vec<usize>> {
    match selector {
        Selector::Vanilla => vanilla_select(block, masked, preds),
        Selector::Confidence(t) => confidence_select(block, masked, preds, *t),
        Selector::Cap(cfg) => select_safe_subset(block, masked, preds, cfg).map(|s| s.positions()),
    }
}

/// Decodes `spec.l_gen` target positions after `prompt`.
///
/// Decoding is greedy (argmax commits), so the result is a deterministic
/// function of the model, prompt and spec. `wall_ms` and
/// `agreement_vs_vanilla` are left for the caller to fill in.
pub fn run_decode<D: Denoiser + ?Sized>(model: &D, prompt: &[TokenId], spec: &StrategySpec) -> Result<DecodeRun> {
    spec.validate()?;
    let vocab = Vocabulary::new(model.vocab_size())?;
    let mut state = SequenceState::new(vocab, prompt.to_vec(), spec.l_gen)?;
    let mut metrics = RunMetrics::default();
    let mut trace = DecodeTrace::default();
    let mut capture = InfluenceCapture::default();
    let tracks_influence = matches!(spec.partitioner, Partitioner::DepGa(_));

    let mut preds = model.predict(&state)?;
    metrics.nfe += 1;

    'blocks: while let Some(frontier) = state.frontier() {
        let l_remain = state.masked_count();
        let plan = choose_block(&spec.partitioner, &capture, &preds, frontier, l_remain)?;
        let block = plan.span;
        let block_id = trace.blocks.len();
        metrics.block_lengths.push(block.len);
        trace.blocks.push(BlockRecord {
            span: block,
            signals: plan.signals,
        });

        loop {
            let masked: BTreeSet<usize> = state.masked_positions().filter(|p| block.contains(*p)).collect();
            let chosen = select(&spec.selector, block, &masked, &preds)?;
            if chosen.is_empty() {
                return Err(Error::NoProgress);
            }
            let mut decisions = BTreeMap::new();
            let mut record = StepRecord {
                step: state.step(),
                block: block_id,
                positions: Vec::with_capacity(chosen.len()),
                tokens: Vec::with_capacity(chosen.len()),
                confidences: Vec::with_capacity(chosen.len()),
            };
            for pos in chosen {
                let dist = preds.get(&pos).ok_or(Error::MissingPosition(pos))?;
                let (conf, token) = confidence_and_argmax(dist);
                decisions.insert(pos, token);
                record.positions.push(pos);
                record.tokens.push(token);
                record.confidences.push(conf);
            }
            let completes_block = decisions.len() == masked.len();
            if completes_block && tracks_influence {
                capture.record_final_pass(&preds);
            }
            state.apply_commit(&decisions)?;
            metrics.steps += 1;
            metrics.tokens_per_step.push(decisions.len());
            trace.steps.push(record);

            if state.frontier().is_none() {
                break 'blocks;
            }
            preds = model.predict(&state)?;
            metrics.nfe += 1;
            if completes_block {
                break;
            }
        }
    }

    metrics.quality_loglik = model.log_likelihood(state.prompt(), state.target());
    Ok(DecodeRun { state, metrics, trace })
}

/// Fraction of positions where two equal-length sequences agree.
pub fn agreement(a: &[TokenId], b: &[TokenId]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len().max(b.len()) as f64
}
