//! Runs strategy/seed (and sweep grid) combinations and writes CSV.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Context};
use depcap_core::denoiser::{Denoiser, HmmModel, RandomModelSpec, ScriptedModel};
use depcap_core::engine::{agreement, run_decode, StrategySpec};
use depcap_core::TokenId;
use rayon::prelude::*;

use crate::config::{AxisValue, ConfigError, GridPoint, ModelSource, RunConfig, StrategyEntry};
use crate::format::sig6;
use crate::model_io::{load_hmm, load_scripted};

pub const COLUMNS: [&str; 13] = [
    "run_id",
    "strategy",
    "partitioner",
    "seed",
    "L_gen",
    "nfe",
    "steps",
    "mean_tokens_per_step",
    "n_blocks",
    "mean_block_len",
    "quality_loglik",
    "agreement_vs_vanilla",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: usize,
    pub strategy: String,
    pub partitioner: String,
    pub seed: u64,
    pub l_gen: usize,
    pub nfe: usize,
    pub steps: usize,
    pub mean_tokens_per_step: f64,
    pub n_blocks: usize,
    pub mean_block_len: f64,
    pub quality_loglik: Option<f64>,
    pub agreement_vs_vanilla: f64,
    pub wall_ms: f64,
    pub swept: Vec<(&'static str, AxisValue)>,
}

impl RunRow {
    fn record(&self) -> Vec<String> {
        let mut out = vec![
            self.run_id.to_string(),
            self.strategy.clone(),
            self.partitioner.clone(),
            self.seed.to_string(),
            self.l_gen.to_string(),
            self.nfe.to_string(),
            self.steps.to_string(),
            sig6(self.mean_tokens_per_step),
            self.n_blocks.to_string(),
            sig6(self.mean_block_len),
            self.quality_loglik.map(sig6).unwrap_or_default(),
            sig6(self.agreement_vs_vanilla),
            sig6(self.wall_ms),
        ];
        out.extend(self.swept.iter().map(|(_, v)| v.to_string()));
        out
    }
}

enum Loaded {
    Hmm(HmmModel),
    Scripted(ScriptedModel),
    /// Generated per run seed.
    Synthetic(RandomModelSpec),
}

/// A model and its prompt for one run seed.
enum Instance<'a> {
    Owned(HmmModel),
    Hmm(&'a HmmModel),
    Scripted(&'a ScriptedModel),
}

impl Instance<'_> {
    fn denoiser(&self) -> &dyn Denoiser {
        match self {
            Instance::Owned(m) => m,
            Instance::Hmm(m) => *m,
            Instance::Scripted(m) => *m,
        }
    }

    /// Prompts are sampled from the model itself; scripted models get none.
    fn prompt(&self, len: usize, seed: u64) -> Vec<TokenId> {
        match self {
            Instance::Owned(m) => m.sample_reference_sequence(len, seed),
            Instance::Hmm(m) => m.sample_reference_sequence(len, seed),
            Instance::Scripted(_) => Vec::new(),
        }
    }
}

struct Job {
    run_id: usize,
    entry: StrategyEntry,
    point: GridPoint,
    seed: u64,
}

pub struct Harness {
    config: RunConfig,
    loaded: Loaded,
    synthetic_seed: Option<u64>,
}

impl Harness {
    pub fn new(config: RunConfig) -> anyhow::Result<Self> {
        let (loaded, synthetic_seed) = match &config.model {
            ModelSource::Synthetic {
                states,
                vocab,
                seed,
                transition_concentration,
                emission_concentration,
            } => {
                let spec = RandomModelSpec {
                    states: *states,
                    vocab: *vocab,
                    transition_concentration: *transition_concentration,
                    emission_concentration: *emission_concentration,
                };
                (Loaded::Synthetic(spec), *seed)
            }
            ModelSource::Hmm { path } => (Loaded::Hmm(load_hmm(path)?), None),
            ModelSource::Scripted { path } => (Loaded::Scripted(load_scripted(path)?), None),
        };
        let vocab = match &loaded {
            Loaded::Hmm(m) => m.vocab_size(),
            Loaded::Scripted(m) => m.default_dist().len(),
            Loaded::Synthetic(s) => s.vocab,
        };
        if config.params.delimiter_token as usize >= vocab {
            return Err(ConfigError::Invalid {
                field: "delimiter_token".into(),
                reason: format!("must be below the model vocabulary size {vocab}"),
            }
            .into());
        }
        Ok(Self {
            config,
            loaded,
            synthetic_seed,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn instance(&self, seed: u64) -> anyhow::Result<Instance<'_>> {
        Ok(match &self.loaded {
            Loaded::Hmm(m) => Instance::Hmm(m),
            Loaded::Scripted(m) => Instance::Scripted(m),
            Loaded::Synthetic(spec) => {
                let model_seed = self.synthetic_seed.unwrap_or(seed);
                Instance::Owned(HmmModel::random(*spec, model_seed).context("generating synthetic model")?)
            }
        })
    }

    fn execute(&self, job: &Job) -> anyhow::Result<RunRow> {
        let inst = self.instance(job.seed)?;
        let model = inst.denoiser();
        let prompt = inst.prompt(self.config.prompt_len, job.seed);
        let params = &job.point.params;
        let spec: StrategySpec = params.spec(job.entry, self.config.l_gen);

        let start = Instant::now();
        let run = run_decode(model, &prompt, &spec)
            .with_context(|| format!("run {} ({}, seed {})", job.run_id, spec.partitioner.label(), job.seed))?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;

        let reference = run_decode(model, &prompt, &params.vanilla_reference(self.config.l_gen))
            .context("vanilla reference run")?;
        let m = &run.metrics;
        Ok(RunRow {
            run_id: job.run_id,
            strategy: spec.selector.label().into(),
            partitioner: spec.partitioner.label(),
            seed: job.seed,
            l_gen: spec.l_gen,
            nfe: m.nfe,
            steps: m.steps,
            mean_tokens_per_step: m.mean_tokens_per_step(),
            n_blocks: m.block_lengths.len(),
            mean_block_len: m.mean_block_len(),
            quality_loglik: m.quality_loglik,
            agreement_vs_vanilla: agreement(run.state.target(), reference.state.target()),
            wall_ms,
            swept: job.point.values.clone(),
        })
    }

    fn run_jobs(&self, points: &[GridPoint], jobs: Option<usize>) -> anyhow::Result<Vec<RunRow>> {
        let mut queue = Vec::new();
        for entry in &self.config.strategies {
            for point in points {
                for &seed in &self.config.seeds {
                    queue.push(Job {
                        run_id: queue.len(),
                        entry: *entry,
                        point: point.clone(),
                        seed,
                    });
                }
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.unwrap_or(0))
            .build()
            .context("building worker pool")?;
        let mut rows = pool.install(|| {
            queue
                .par_iter()
                .map(|j| self.execute(j))
                .collect::<anyhow::Result<Vec<_>>>()
        })?;
        rows.sort_by_key(|r| r.run_id);
        Ok(rows)
    }

    /// One run per strategy and seed at the configured params.
    pub fn run(&self, jobs: Option<usize>) -> anyhow::Result<Vec<RunRow>> {
        let point = GridPoint {
            values: Vec::new(),
            params: self.config.params,
        };
        self.run_jobs(&[point], jobs)
    }

    /// Every grid point for every strategy and seed.
    pub fn sweep(&self, jobs: Option<usize>) -> anyhow::Result<Vec<RunRow>> {
        let Some(grid) = &self.config.grid else {
            bail!(ConfigError::EmptyGrid);
        };
        let points = grid.points(&self.config.params)?;
        self.run_jobs(&points, jobs)
    }
}

/// Header is the fixed schema plus one column per swept axis.
pub fn write_csv<W: Write>(rows: &[RunRow], swept: &[&str], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS.iter().copied().chain(swept.iter().copied()))?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}
