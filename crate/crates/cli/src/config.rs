//! Experiment config files.
//!
//! A config is one JSON object. SNR is given in dB and converted to a linear
//! ratio internally. Validation happens while deserializing, so every error
//! carries the line and column where parsing stopped.

use std::fs;
use std::path::Path;

use erasefl::aggregation::SchemeKind;
use erasefl::channel::{LinkBudget, Regime};
use erasefl::learning::LearnerConfig;
use erasefl::simulation::{DatasetSpec, ExperimentConfig, Normalization, SweepSpec, DEFAULT_NOISE_VARIANCE};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationSpec {
    #[default]
    Standardize,
    None,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    #[serde(default = "default_regime")]
    regime: Regime,
    gamma0_db: f64,
    #[serde(default = "default_k_bits")]
    k_bits: u64,
    rate: f64,
}

fn default_regime() -> Regime {
    Regime::ShortPacket
}

fn default_k_bits() -> u64 {
    100
}

/// Uplink settings with the SNR kept in dB for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "RawChannel")]
pub struct ChannelSpec {
    pub gamma0_db: f64,
    pub link: LinkBudget,
}

impl TryFrom<RawChannel> for ChannelSpec {
    type Error = String;

    fn try_from(raw: RawChannel) -> Result<Self, String> {
        let link = LinkBudget::from_db(raw.gamma0_db, raw.k_bits, raw.rate, raw.regime)
            .map_err(|e| format!("invalid channel: {e}"))?;
        Ok(Self { gamma0_db: raw.gamma0_db, link })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawScheme {
    ErrorFree,
    NoMemory,
    PerUserMemory,
    GlobalMemory { m: usize, alphas: Option<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawScheme")]
pub struct SchemeSpec(pub SchemeKind);

impl TryFrom<RawScheme> for SchemeSpec {
    type Error = String;

    fn try_from(raw: RawScheme) -> Result<Self, String> {
        let kind = match raw {
            RawScheme::ErrorFree => SchemeKind::ErrorFree,
            RawScheme::NoMemory => SchemeKind::NoMemory,
            RawScheme::PerUserMemory => SchemeKind::PerUserMemory,
            RawScheme::GlobalMemory { m, alphas: None } => SchemeKind::global_memory_equal(m).map_err(|e| e.to_string())?,
            RawScheme::GlobalMemory { m, alphas: Some(alphas) } => {
                if alphas.len() != m {
                    return Err(format!("global_memory has m = {m} but {} alphas", alphas.len()));
                }
                SchemeKind::global_memory(alphas).map_err(|e| e.to_string())?
            }
        };
        Ok(Self(kind))
    }
}

/// File label of a scheme, e.g. `global_memory_m2`.
pub fn scheme_label(scheme: &SchemeKind) -> String {
    match scheme {
        SchemeKind::GlobalMemory { alphas } => format!("global_memory_m{}", alphas.len()),
        other => other.label().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub rates: Vec<f64>,
    pub gamma0_db: Vec<f64>,
    #[serde(default)]
    pub memory: Vec<usize>,
}

impl SweepAxes {
    pub fn to_spec(&self) -> SweepSpec {
        SweepSpec { rates: self.rates.clone(), gamma0_db: self.gamma0_db.clone(), memory: self.memory.clone() }
    }
}

fn one_f64() -> f64 {
    1.0
}

fn noise_default() -> f64 {
    DEFAULT_NOISE_VARIANCE
}

fn degree_default() -> usize {
    2
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    users: usize,
    samples_per_user: usize,
    #[serde(default = "one_f64")]
    interval_width: f64,
    #[serde(default = "noise_default")]
    noise_variance: f64,
    #[serde(default = "degree_default")]
    feature_degree: usize,
    #[serde(default)]
    normalization: NormalizationSpec,
    learning_rate: f64,
    #[serde(default = "one_usize")]
    local_iterations: usize,
    schemes: Vec<SchemeSpec>,
    channel: ChannelSpec,
    time_budget: Option<u64>,
    rounds: Option<usize>,
    #[serde(default = "one_usize")]
    replicas: usize,
    #[serde(default)]
    seed: u64,
    forced_erasure: Option<f64>,
    sweep: Option<SweepAxes>,
}

/// A parsed and validated config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct RunConfig {
    pub channel: ChannelSpec,
    /// One experiment per configured scheme, otherwise identical.
    pub experiments: Vec<ExperimentConfig>,
    pub sweep: Option<SweepAxes>,
}

impl TryFrom<RawConfig> for RunConfig {
    type Error = String;

    fn try_from(raw: RawConfig) -> Result<Self, String> {
        if raw.schemes.is_empty() {
            return Err("at least one scheme is required".into());
        }
        let learner = LearnerConfig::new(raw.learning_rate, raw.local_iterations).map_err(|e| e.to_string())?;
        let data = DatasetSpec {
            users: raw.users,
            samples_per_user: raw.samples_per_user,
            interval_width: raw.interval_width,
            noise_variance: raw.noise_variance,
        };
        let experiments = raw
            .schemes
            .iter()
            .map(|scheme| {
                let mut cfg = ExperimentConfig::new(data, learner, scheme.0.clone(), raw.channel.link);
                cfg.feature_degree = raw.feature_degree;
                cfg.normalization = match raw.normalization {
                    NormalizationSpec::Standardize => Normalization::Standardize,
                    NormalizationSpec::None => Normalization::None,
                };
                cfg.time_budget = raw.time_budget;
                cfg.max_rounds = raw.rounds;
                cfg.replicas = raw.replicas;
                cfg.base_seed = raw.seed;
                cfg.forced_erasure = raw.forced_erasure;
                cfg.validate().map_err(|e| e.to_string())?;
                Ok(cfg)
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(Self { channel: raw.channel, experiments, sweep: raw.sweep })
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Applies `--seed` / `--replicas` and revalidates.
    pub fn apply_overrides(&mut self, seed: Option<u64>, replicas: Option<usize>) -> Result<(), String> {
        for cfg in &mut self.experiments {
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            if let Some(replicas) = replicas {
                cfg.replicas = replicas;
            }
            cfg.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}
