//! TOML run configuration.
//!
//! ```toml
//! prompt_len = 16
//! l_gen = 256
//! seeds = [0, 1, 2]
//!
//! [model]
//! kind = "synthetic"
//! states = 4
//! vocab = 16
//!
//! [[strategies]]
//! partitioner = "depga"
//! selector = "cap"
//!
//! [params]
//! gamma = -16.0
//!
//! [grid]            # sweep only
//! lambda = [0.6, 1.2]
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use depcap_core::baselines::BaselineConfig;
use depcap_core::cap::SelectConfig;
use depcap_core::depga::PartitionConfig;
use depcap_core::engine::{Partitioner, Selector, StrategySpec};
use depcap_core::TokenId;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("sweep needs a [grid] with at least one non-empty axis")]
    EmptyGrid,
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_owned(),
        reason: reason.into(),
    }
}

impl From<depcap_core::Error> for ConfigError {
    fn from(e: depcap_core::Error) -> Self {
        match e {
            depcap_core::Error::InvalidConfig { field, reason } => invalid(field, reason),
            depcap_core::Error::NonpositiveLambda => invalid("lambda", "must be positive and finite"),
            other => invalid("model", other.to_string()),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSource {
    /// Random HMM with symmetric-Dirichlet rows. Without `seed`, each run
    /// seed also seeds its model.
    Synthetic {
        states: usize,
        vocab: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "one")]
        transition_concentration: f64,
        #[serde(default = "one")]
        emission_concentration: f64,
    },
    Hmm {
        path: PathBuf,
    },
    Scripted {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionerKind {
    Depga,
    Fixed,
    Adablock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    Vanilla,
    Confidence,
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyEntry {
    pub partitioner: PartitionerKind,
    pub selector: SelectorKind,
}

impl Default for StrategyEntry {
    fn default() -> Self {
        Self {
            partitioner: PartitionerKind::Depga,
            selector: SelectorKind::Cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub lambda: f64,
    pub l_min: usize,
    pub l_max: usize,
    pub tau_low: f64,
    pub tau_high: f64,
    pub gamma: f64,
    pub conf_threshold: f64,
    pub fixed_block: usize,
    pub delimiter_token: TokenId,
}

impl Default for Params {
    fn default() -> Self {
        let p = PartitionConfig::default();
        let s = SelectConfig::default();
        let b = BaselineConfig::default();
        Self {
            lambda: p.lambda,
            l_min: p.l_min,
            l_max: p.l_max,
            tau_low: s.tau_low,
            tau_high: s.tau_high,
            gamma: s.gamma,
            conf_threshold: b.conf_threshold,
            fixed_block: b.fixed_block,
            delimiter_token: b.delimiter_token,
        }
    }
}

impl Params {
    pub fn partition(&self) -> PartitionConfig {
        PartitionConfig {
            lambda: self.lambda,
            l_min: self.l_min,
            l_max: self.l_max,
        }
    }

    pub fn select(&self) -> SelectConfig {
        SelectConfig {
            tau_low: self.tau_low,
            tau_high: self.tau_high,
            gamma: self.gamma,
        }
    }

    pub fn baseline(&self) -> BaselineConfig {
        BaselineConfig {
            conf_threshold: self.conf_threshold,
            fixed_block: self.fixed_block,
            delimiter_token: self.delimiter_token,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.partition().validate()?;
        self.select().validate()?;
        self.baseline().validate()?;
        Ok(())
    }

    pub fn spec(&self, entry: StrategyEntry, l_gen: usize) -> StrategySpec {
        let partitioner = match entry.partitioner {
            PartitionerKind::Depga => Partitioner::DepGa(self.partition()),
            PartitionerKind::Fixed => Partitioner::Fixed(self.fixed_block),
            PartitionerKind::Adablock => Partitioner::AdaBlock {
                delimiter: self.delimiter_token,
                default_size: self.fixed_block,
            },
        };
        let selector = match entry.selector {
            SelectorKind::Vanilla => Selector::Vanilla,
            SelectorKind::Confidence => Selector::Confidence(self.conf_threshold),
            SelectorKind::Cap => Selector::Cap(self.select()),
        };
        StrategySpec::new(partitioner, selector).with_l_gen(l_gen)
    }

    /// The single-token reference that `agreement_vs_vanilla` compares against.
    pub fn vanilla_reference(&self, l_gen: usize) -> StrategySpec {
        StrategySpec::vanilla(self.fixed_block).with_l_gen(l_gen)
    }
}

/// Sweep axes. Each present axis is crossed with every other; absent axes
/// keep the value from `[params]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_min: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_low: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_high: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conf_threshold: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_block: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisValue {
    Real(f64),
    Count(usize),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Real(v) => f.write_str(&crate::format::sig6(*v)),
            AxisValue::Count(v) => write!(f, "{v}"),
        }
    }
}

/// One grid point: the swept values in axis order and the resulting params.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub values: Vec<(&'static str, AxisValue)>,
    pub params: Params,
}

type Setter = fn(&mut Params, AxisValue);

impl Grid {
    fn axes(&self) -> Vec<(&'static str, Vec<AxisValue>, Setter)> {
        fn reals(v: &Option<Vec<f64>>) -> Option<Vec<AxisValue>> {
            v.as_ref().map(|v| v.iter().map(|x| AxisValue::Real(*x)).collect())
        }
        fn counts(v: &Option<Vec<usize>>) -> Option<Vec<AxisValue>> {
            v.as_ref().map(|v| v.iter().map(|x| AxisValue::Count(*x)).collect())
        }
        fn real(v: AxisValue) -> f64 {
            match v {
                AxisValue::Real(x) => x,
                AxisValue::Count(n) => n as f64,
            }
        }
        fn count(v: AxisValue) -> usize {
            match v {
                AxisValue::Count(n) => n,
                AxisValue::Real(x) => x as usize,
            }
        }
        let all: [(&'static str, Option<Vec<AxisValue>>, Setter); 8] = [
            ("lambda", reals(&self.lambda), |p, v| p.lambda = real(v)),
            ("l_min", counts(&self.l_min), |p, v| p.l_min = count(v)),
            ("l_max", counts(&self.l_max), |p, v| p.l_max = count(v)),
            ("tau_low", reals(&self.tau_low), |p, v| p.tau_low = real(v)),
            ("tau_high", reals(&self.tau_high), |p, v| p.tau_high = real(v)),
            ("gamma", reals(&self.gamma), |p, v| p.gamma = real(v)),
            ("conf_threshold", reals(&self.conf_threshold), |p, v| {
                p.conf_threshold = real(v)
            }),
            ("fixed_block", counts(&self.fixed_block), |p, v| {
                p.fixed_block = count(v)
            }),
        ];
        all.into_iter()
            .filter_map(|(name, vals, set)| vals.map(|v| (name, v, set)))
            .collect()
    }

    pub fn axis_names(&self) -> Vec<&'static str> {
        self.axes().into_iter().map(|(n, _, _)| n).collect()
    }

    /// Cartesian product in axis order, last axis fastest.
    pub fn points(&self, base: &Params) -> Result<Vec<GridPoint>, ConfigError> {
        let axes = self.axes();
        if axes.is_empty() || axes.iter().any(|(_, v, _)| v.is_empty()) {
            return Err(ConfigError::EmptyGrid);
        }
        let mut points = vec![GridPoint {
            values: Vec::new(),
            params: *base,
        }];
        for (name, vals, set) in &axes {
            points = points
                .into_iter()
                .flat_map(|pt| {
                    vals.iter().map(move |v| {
                        let mut next = pt.clone();
                        set(&mut next.params, *v);
                        next.values.push((*name, *v));
                        next
                    })
                })
                .collect();
        }
        for pt in &points {
            pt.params.validate()?;
        }
        Ok(points)
    }
}

fn default_prompt_len() -> usize {
    16
}

fn default_l_gen() -> usize {
    256
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_strategies() -> Vec<StrategyEntry> {
    vec![StrategyEntry::default()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_prompt_len")]
    pub prompt_len: usize,
    #[serde(default = "default_l_gen")]
    pub l_gen: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub model: ModelSource,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategyEntry>,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; relative model paths resolve against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let ModelSource::Hmm { path } | ModelSource::Scripted { path } = &mut cfg.model {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.l_gen == 0 {
            return Err(invalid("l_gen", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must list at least one seed"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("strategies", "must list at least one strategy"));
        }
        if let ModelSource::Synthetic {
            states,
            vocab,
            transition_concentration,
            emission_concentration,
            ..
        } = self.model
        {
            if states == 0 {
                return Err(invalid("model.states", "must be at least 1"));
            }
            if vocab < 2 {
                return Err(invalid("model.vocab", "must be at least 2"));
            }
            let positive = |a: f64| a > 0.0 && a.is_finite();
            if !positive(transition_concentration) {
                return Err(invalid("model.transition_concentration", "must be positive"));
            }
            if !positive(emission_concentration) {
                return Err(invalid("model.emission_concentration", "must be positive"));
            }
            if self.params.delimiter_token as usize >= vocab {
                return Err(invalid("delimiter_token", "must be a token of the model vocabulary"));
            }
        }
        self.params.validate()
    }
}
