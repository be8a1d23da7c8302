//! Round loop, Monte Carlo replication and parameter sweeps.
//!
//! Time is counted in symbol durations `T_s`. One communication round lasts
//! one uplink packet, `n` symbols; the downlink broadcast is error-free and
//! takes no airtime. A time budget of `T` symbols therefore buys
//! `floor(T / n)` rounds.

mod data;
pub mod seed;
mod sweep;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use data::{generate_noniid_datasets, DatasetSpec, DEFAULT_NOISE_VARIANCE};
pub use sweep::{sweep, SweepRow, SweepSpec};

use crate::aggregation::{AggregatorState, RoundReception, SchemeKind};
use crate::channel::{sample_erasure, LinkBudget};
use crate::error::{config, Result};
use crate::learning::{local_update, pooled_loss, Dataset, FeatureMap, LearnerConfig, ModelParams};
use seed::{stream_rng, Stream};

/// How inputs are normalized before the polynomial features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Raw monomials of `x`.
    None,
    /// Zero mean and unit variance over the population range `[0, U w)`.
    #[default]
    Standardize,
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DatasetSpec,
    pub feature_degree: usize,
    pub normalization: Normalization,
    pub learner: LearnerConfig,
    pub scheme: SchemeKind,
    pub link: LinkBudget,
    /// Symbol budget; rounds = floor(budget / n).
    pub time_budget: Option<u64>,
    /// Round cap; combined with a time budget the smaller count wins.
    pub max_rounds: Option<usize>,
    pub replicas: usize,
    pub base_seed: u64,
    /// Replaces the channel's erasure probability for every packet.
    pub forced_erasure: Option<f64>,
}

impl ExperimentConfig {
    /// Degree-2 standardized features, one replica, seed 0, no round limit
    /// set yet.
    pub fn new(data: DatasetSpec, learner: LearnerConfig, scheme: SchemeKind, link: LinkBudget) -> Self {
        Self {
            data,
            feature_degree: 2,
            normalization: Normalization::Standardize,
            learner,
            scheme,
            link,
            time_budget: None,
            max_rounds: None,
            replicas: 1,
            base_seed: 0,
            forced_erasure: None,
        }
    }

    pub fn num_users(&self) -> usize {
        self.data.users
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.replicas == 0 {
            return config("at least one Monte Carlo replica is required");
        }
        if let Some(eps) = self.forced_erasure {
            if !(0.0..=1.0).contains(&eps) {
                return config(format!("forced erasure probability must lie in [0, 1], got {eps}"));
            }
        }
        self.rounds().map(|_| ())
    }

    /// Number of rounds the budget (and cap) allows.
    pub fn rounds(&self) -> Result<usize> {
        let n = self.link.n_symbols();
        let by_budget = self.time_budget.map(|t| (t / n) as usize);
        let rounds = match (by_budget, self.max_rounds) {
            (Some(b), Some(c)) => b.min(c),
            (Some(b), None) => b,
            (None, Some(c)) => c,
            (None, None) => return config("either a time budget or a round cap is required"),
        };
        if rounds == 0 {
            return match self.time_budget {
                Some(t) if by_budget == Some(0) => config(format!(
                    "time budget of {t} symbols is shorter than one packet ({n} symbols at rate {}); no round fits",
                    self.link.rate()
                )),
                _ => config("round cap is zero; no round would run"),
            };
        }
        Ok(rounds)
    }

    pub fn feature_map(&self) -> Result<FeatureMap> {
        match self.normalization {
            Normalization::None => Ok(FeatureMap::polynomial(self.feature_degree)),
            Normalization::Standardize => {
                let (lo, hi) = self.data.x_range();
                FeatureMap::standardized_uniform(self.feature_degree, lo, hi)
            }
        }
    }

    /// The training data shared by every replica.
    pub fn datasets(&self) -> Result<Vec<Dataset>> {
        self.data.generate(&mut stream_rng(self.base_seed, Stream::Dataset, 0))
    }
}

/// Record of one communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    /// 0-based round index.
    pub round: usize,
    /// Symbols elapsed at the end of the round, `(round + 1) n`.
    pub elapsed_symbols: u64,
    pub indicators: Vec<bool>,
    pub participation: usize,
    /// Pooled loss of the new global model over all users' data.
    pub mse: f64,
    /// Instantaneous uplink SNR of each user's packet.
    pub snr: Vec<f64>,
}

/// One replica's evolving state.
pub struct Experiment<'a> {
    config: &'a ExperimentConfig,
    datasets: &'a [Dataset],
    features: FeatureMap,
    sizes: Vec<usize>,
    state: AggregatorState,
    rng: ChaCha8Rng,
    round: usize,
}

impl<'a> Experiment<'a> {
    pub fn new(config: &'a ExperimentConfig, datasets: &'a [Dataset], replica: u64) -> Result<Self> {
        config.validate()?;
        if datasets.len() != config.num_users() {
            return crate::error::config(format!("{} datasets for {} users", datasets.len(), config.num_users()));
        }
        let features = config.feature_map()?;
        let initial = ModelParams::zeros(features.dim());
        let state = AggregatorState::new(config.scheme.clone(), initial, config.num_users())?;
        Ok(Self {
            config,
            datasets,
            features,
            sizes: datasets.iter().map(Dataset::len).collect(),
            state,
            rng: stream_rng(config.base_seed, Stream::Channel, replica),
            round: 0,
        })
    }

    pub fn state(&self) -> &AggregatorState {
        &self.state
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    /// Local training, uplink, aggregation and evaluation of one round.
    pub fn run_round(&mut self) -> Result<RoundLog> {
        let link = &self.config.link;
        let users = self.config.num_users();
        let mut snr = Vec::with_capacity(users);
        let mut indicators = Vec::with_capacity(users);
        for _ in 0..users {
            let received = match self.config.forced_erasure {
                Some(eps) => {
                    snr.push(link.sample_fading(&mut self.rng).gamma);
                    sample_erasure(&mut self.rng, eps)?
                }
                None => {
                    let (fading, received) = link.transmit(&mut self.rng)?;
                    snr.push(fading.gamma);
                    received
                }
            };
            indicators.push(received);
        }
        if matches!(self.config.scheme, SchemeKind::ErrorFree) {
            indicators.iter_mut().for_each(|i| *i = true);
        }

        let global = self.state.current_global().clone();
        let updates = indicators
            .iter()
            .zip(self.datasets)
            .map(|(&received, data)| {
                received
                    .then(|| local_update(&global, &self.features, data, &self.config.learner))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        let reception = RoundReception::new(updates, self.sizes.clone())?;
        let participation = reception.participation();
        let next = self.state.aggregate(&reception)?;
        let mse = pooled_loss(next, &self.features, self.datasets)?;

        let log = RoundLog {
            round: self.round,
            elapsed_symbols: (self.round as u64 + 1) * link.n_symbols(),
            indicators,
            participation,
            mse,
            snr,
        };
        self.round += 1;
        Ok(log)
    }

    pub fn run(mut self, rounds: usize) -> Result<Vec<RoundLog>> {
        (0..rounds).map(|_| self.run_round()).collect()
    }
}

/// Runs replica 0 of `config` for its full round count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RoundLog>> {
    let datasets = config.datasets()?;
    run_replica(config, &datasets, 0)
}

/// Runs one replica against pre-generated datasets.
pub fn run_replica(config: &ExperimentConfig, datasets: &[Dataset], replica: u64) -> Result<Vec<RoundLog>> {
    let rounds = config.rounds()?;
    Experiment::new(config, datasets, replica)?.run(rounds)
}

/// Output of [`run_monte_carlo`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    /// Per-round MSE averaged over replicas.
    pub mean_mse: Vec<f64>,
    /// Logs of every replica, in replica order.
    pub replicas: Vec<Vec<RoundLog>>,
}

impl MonteCarloResult {
    pub fn rounds(&self) -> usize {
        self.mean_mse.len()
    }

    pub fn final_mse_mean(&self) -> f64 {
        self.mean_mse.last().copied().unwrap_or(f64::NAN)
    }

    /// Unbiased variance of the final MSE across replicas (0 for one replica).
    pub fn final_mse_var(&self) -> f64 {
        let finals: Vec<f64> = self.replicas.iter().filter_map(|r| r.last().map(|l| l.mse)).collect();
        if finals.len() < 2 {
            return 0.0;
        }
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        finals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (finals.len() - 1) as f64
    }

    pub fn mse_series(&self, replica: usize) -> Vec<f64> {
        self.replicas[replica].iter().map(|l| l.mse).collect()
    }
}

/// Runs `config.replicas` independent replicas (in parallel on the current
/// rayon pool) and averages their MSE in replica order.
pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<MonteCarloResult> {
    config.validate()?;
    let datasets = config.datasets()?;
    let replicas = (0..config.replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(config, &datasets, r))
        .collect::<Result<Vec<_>>>()?;
    let rounds = config.rounds()?;
    let mut mean_mse = vec![0.0; rounds];
    for logs in &replicas {
        for (acc, log) in mean_mse.iter_mut().zip(logs) {
            *acc += log.mse;
        }
    }
    let inv = 1.0 / replicas.len() as f64;
    mean_mse.iter_mut().for_each(|m| *m *= inv);
    Ok(MonteCarloResult { mean_mse, replicas })
}
