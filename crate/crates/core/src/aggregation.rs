//! Central-node aggregation under uplink erasures.
//!
//! Four schemes are supported:
//!
//! | scheme            | erased user `u` contributes                          |
//! |-------------------|------------------------------------------------------|
//! | `ErrorFree`       | never erased                                         |
//! | `NoMemory`        | nothing; the average runs over received users only  |
//! | `PerUserMemory`   | its last successfully received local update         |
//! | `GlobalMemory`    | `sum_i alpha_i w^(t-i)` over the last `m` globals     |
//!
//! All schemes weight user `u` by its dataset size `D_u`.

use std::collections::VecDeque;

use crate::error::{config, Error, Result};
use crate::learning::ModelParams;

const ALPHA_SUM_TOLERANCE: f64 = 1e-12;

/// Aggregation scheme and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeKind {
    ErrorFree,
    NoMemory,
    PerUserMemory,
    /// `alphas[i]` weights the `i`-th most recent global parameter; the
    /// memory depth `m` is `alphas.len()`.
    GlobalMemory { alphas: Vec<f64> },
}

impl SchemeKind {
    pub fn global_memory(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return config("global memory depth must be at least 1");
        }
        if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return config("global memory weights must be finite and nonnegative");
        }
        let sum: f64 = alphas.iter().sum();
        if (sum - 1.0).abs() > ALPHA_SUM_TOLERANCE {
            return config(format!("global memory weights must sum to 1, got {sum}"));
        }
        Ok(Self::GlobalMemory { alphas })
    }

    /// `m` equal weights `1/m`.
    pub fn global_memory_equal(m: usize) -> Result<Self> {
        if m == 0 {
            return config("global memory depth must be at least 1");
        }
        Ok(Self::GlobalMemory { alphas: vec![1.0 / m as f64; m] })
    }

    /// Memory depth, or 0 for schemes without a global history.
    pub fn depth(&self) -> usize {
        match self {
            Self::GlobalMemory { alphas } => alphas.len(),
            _ => 0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::ErrorFree => "error_free",
            Self::NoMemory => "no_memory",
            Self::PerUserMemory => "per_user_memory",
            Self::GlobalMemory { .. } => "global_memory",
        }
    }
}

/// What the central node got in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReception {
    updates: Vec<Option<ModelParams>>,
    dataset_sizes: Vec<f64>,
}

impl RoundReception {
    /// `updates[u]` is `Some` exactly when user `u`'s packet arrived.
    pub fn new(updates: Vec<Option<ModelParams>>, dataset_sizes: Vec<usize>) -> Result<Self> {
        if updates.len() != dataset_sizes.len() {
            return config(format!(
                "{} updates but {} dataset sizes",
                updates.len(),
                dataset_sizes.len()
            ));
        }
        if updates.is_empty() {
            return config("a round needs at least one user");
        }
        if dataset_sizes.contains(&0) {
            return config("dataset sizes must be positive");
        }
        let dataset_sizes = dataset_sizes.into_iter().map(|d| d as f64).collect();
        Ok(Self { updates, dataset_sizes })
    }

    pub fn num_users(&self) -> usize {
        self.updates.len()
    }

    pub fn indicators(&self) -> Vec<bool> {
        self.updates.iter().map(Option::is_some).collect()
    }

    pub fn participation(&self) -> usize {
        self.updates.iter().filter(|u| u.is_some()).count()
    }

    pub fn update(&self, user: usize) -> Option<&ModelParams> {
        self.updates[user].as_ref()
    }

    fn users(&self) -> impl Iterator<Item = (f64, Option<&ModelParams>)> + '_ {
        self.dataset_sizes.iter().copied().zip(self.updates.iter().map(Option::as_ref))
    }
}

/// Running weighted sum. Every scheme funnels through this so that equal
/// inputs produce bitwise-equal outputs across schemes.
struct WeightedSum {
    acc: ModelParams,
    total: f64,
}

impl WeightedSum {
    fn new(dim: usize) -> Self {
        Self { acc: ModelParams::zeros(dim), total: 0.0 }
    }

    fn add(&mut self, weight: f64, params: &ModelParams) {
        self.acc.axpy(weight, params);
        self.total += weight;
    }

    fn finish(mut self) -> Option<ModelParams> {
        if self.total == 0.0 {
            return None;
        }
        let inv = 1.0 / self.total;
        self.acc.scale(inv);
        Some(self.acc)
    }
}

/// `w = (1/D) sum_u D_u w_u`; every user must be present.
pub fn aggregate_error_free(reception: &RoundReception, dim: usize) -> Result<ModelParams> {
    let mut sum = WeightedSum::new(dim);
    for (u, (weight, update)) in reception.users().enumerate() {
        let update =
            update.ok_or_else(|| Error::Contract(format!("error-free round is missing user {u}")))?;
        sum.add(weight, update);
    }
    sum.finish().ok_or_else(|| Error::Contract("no users in round".into()))
}

/// Weighted average over received users; an all-erased round keeps `current`.
pub fn aggregate_no_memory(reception: &RoundReception, current: &ModelParams) -> ModelParams {
    let mut sum = WeightedSum::new(current.dim());
    for (weight, update) in reception.users() {
        if let Some(update) = update {
            sum.add(weight, update);
        }
    }
    sum.finish().unwrap_or_else(|| current.clone())
}

/// Substitutes each erased user's cached update and refreshes the cache for
/// received users.
pub fn aggregate_per_user_memory(reception: &RoundReception, cache: &mut [ModelParams]) -> Result<ModelParams> {
    if cache.len() != reception.num_users() {
        return config(format!(
            "user cache holds {} entries for {} users",
            cache.len(),
            reception.num_users()
        ));
    }
    let dim = cache[0].dim();
    let mut sum = WeightedSum::new(dim);
    for ((weight, update), cached) in reception.users().zip(cache.iter_mut()) {
        if let Some(update) = update {
            cached.clone_from(update);
        }
        sum.add(weight, cached);
    }
    sum.finish().ok_or_else(|| Error::Contract("no users in round".into()))
}

/// The last `m` global parameters, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalHistory {
    entries: VecDeque<ModelParams>,
    capacity: usize,
}

impl GlobalHistory {
    pub fn new(capacity: usize, initial: ModelParams) -> Self {
        let capacity = capacity.max(1);
        let mut entries = VecDeque::with_capacity(capacity);
        entries.push_front(initial);
        Self { entries, capacity }
    }

    pub fn push(&mut self, params: ModelParams) {
        if self.entries.len() == self.capacity {
            self.entries.pop_back();
        }
        self.entries.push_front(params);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModelParams> {
        self.entries.iter()
    }

    pub fn latest(&self) -> Option<&ModelParams> {
        self.entries.front()
    }

    /// `sum_i alphas[i] h_i / sum_i alphas[i]` over the stored entries.
    ///
    /// While fewer than `m` rounds have elapsed the weights of the missing
    /// entries are dropped and the rest renormalized.
    pub fn weighted_mean(&self, alphas: &[f64]) -> Option<ModelParams> {
        let dim = self.entries.front()?.dim();
        let mut sum = WeightedSum::new(dim);
        for (alpha, entry) in alphas.iter().zip(&self.entries) {
            sum.add(*alpha, entry);
        }
        match sum.finish() {
            Some(mean) => Some(mean),
            // all available weights are zero: fall back to the latest global
            None => self.entries.front().cloned(),
        }
    }
}

/// Substitutes the weighted mean of the stored globals for every erased user
/// and pushes the result onto the history.
pub fn aggregate_global_memory(
    reception: &RoundReception,
    history: &mut GlobalHistory,
    alphas: &[f64],
) -> Result<ModelParams> {
    let substitute = history
        .weighted_mean(alphas)
        .ok_or_else(|| Error::Contract("global history is empty".into()))?;
    let mut sum = WeightedSum::new(substitute.dim());
    for (weight, update) in reception.users() {
        sum.add(weight, update.unwrap_or(&substitute));
    }
    let global = sum.finish().ok_or_else(|| Error::Contract("no users in round".into()))?;
    history.push(global.clone());
    Ok(global)
}

/// Per-scheme memory held by the central node.
#[derive(Debug, Clone, PartialEq)]
enum Memory {
    None,
    Users(Vec<ModelParams>),
    Globals { history: GlobalHistory, alphas: Vec<f64> },
}

/// Central-node state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorState {
    scheme: SchemeKind,
    current: ModelParams,
    memory: Memory,
    round: usize,
    num_users: usize,
}

impl AggregatorState {
    /// Starts from the broadcast initial model. Per-user caches and the
    /// global history are seeded with it.
    pub fn new(scheme: SchemeKind, initial: ModelParams, num_users: usize) -> Result<Self> {
        if num_users == 0 {
            return config("at least one user is required");
        }
        let memory = match &scheme {
            SchemeKind::ErrorFree | SchemeKind::NoMemory => Memory::None,
            SchemeKind::PerUserMemory => Memory::Users(vec![initial.clone(); num_users]),
            SchemeKind::GlobalMemory { alphas } => {
                // revalidate: the variant is constructible without the helper
                let SchemeKind::GlobalMemory { alphas } = SchemeKind::global_memory(alphas.clone())? else {
                    unreachable!()
                };
                Memory::Globals { history: GlobalHistory::new(alphas.len(), initial.clone()), alphas }
            }
        };
        Ok(Self { scheme, current: initial, memory, round: 0, num_users })
    }

    pub fn scheme(&self) -> &SchemeKind {
        &self.scheme
    }

    pub fn current_global(&self) -> &ModelParams {
        &self.current
    }

    /// Number of aggregations performed so far.
    pub fn round_index(&self) -> usize {
        self.round
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn user_cache(&self) -> Option<&[ModelParams]> {
        match &self.memory {
            Memory::Users(cache) => Some(cache),
            _ => None,
        }
    }

    pub fn global_history(&self) -> Option<&GlobalHistory> {
        match &self.memory {
            Memory::Globals { history, .. } => Some(history),
            _ => None,
        }
    }

    /// Aggregates one round and makes the result the current global model.
    pub fn aggregate(&mut self, reception: &RoundReception) -> Result<&ModelParams> {
        if reception.num_users() != self.num_users {
            return config(format!(
                "reception has {} users, aggregator expects {}",
                reception.num_users(),
                self.num_users
            ));
        }
        let dim = self.current.dim();
        if let Some(bad) = reception.updates.iter().flatten().find(|p| p.dim() != dim) {
            return config(format!("update of dimension {} for a model of dimension {dim}", bad.dim()));
        }
        let next = match (&self.scheme, &mut self.memory) {
            (SchemeKind::ErrorFree, _) => aggregate_error_free(reception, dim)?,
            (SchemeKind::NoMemory, _) => aggregate_no_memory(reception, &self.current),
            (SchemeKind::PerUserMemory, Memory::Users(cache)) => aggregate_per_user_memory(reception, cache)?,
            (SchemeKind::GlobalMemory { .. }, Memory::Globals { history, alphas }) => {
                aggregate_global_memory(reception, history, alphas)?
            }
            _ => unreachable!("memory layout always matches the scheme"),
        };
        self.current = next;
        self.round += 1;
        Ok(&self.current)
    }
}
