//! Grid sweeps over code rate, average SNR and memory depth at a fixed
//! time budget.

use crate::aggregation::SchemeKind;
use crate::channel::LinkBudget;
use crate::error::{config, Result};

use super::{run_monte_carlo, ExperimentConfig};

/// Sweep axes. An empty `memory` axis keeps the base scheme; each listed
/// depth `m` runs the global-memory scheme with equal weights `1/m`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSpec {
    pub rates: Vec<f64>,
    pub gamma0_db: Vec<f64>,
    pub memory: Vec<usize>,
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub rate: f64,
    pub gamma0_db: f64,
    /// Memory depth of the scheme that ran (0 without a global history).
    pub m: usize,
    pub rounds: usize,
    pub final_mse: f64,
}

fn dedup_f64(values: &mut Vec<f64>) -> usize {
    let before = values.len();
    let mut seen: Vec<f64> = Vec::with_capacity(before);
    values.retain(|v| {
        if seen.iter().any(|s| s.to_bits() == v.to_bits()) {
            false
        } else {
            seen.push(*v);
            true
        }
    });
    before - values.len()
}

impl SweepSpec {
    /// Removes repeated axis values, keeping first occurrences; returns how
    /// many were dropped.
    pub fn dedup(&mut self) -> usize {
        let mut dropped = dedup_f64(&mut self.rates) + dedup_f64(&mut self.gamma0_db);
        let before = self.memory.len();
        let mut seen = Vec::with_capacity(before);
        self.memory.retain(|m| {
            if seen.contains(m) {
                false
            } else {
                seen.push(*m);
                true
            }
        });
        dropped += before - self.memory.len();
        dropped
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.gamma0_db.is_empty() {
            return config("sweep needs at least one rate and one SNR value");
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return config(format!("sweep rate {r} is outside (0, 1]"));
        }
        if let Some(g) = self.gamma0_db.iter().find(|g| !g.is_finite()) {
            return config(format!("sweep SNR {g} dB is not finite"));
        }
        if self.memory.contains(&0) {
            return config("sweep memory depths must be at least 1");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rates.len() * self.gamma0_db.len() * self.memory.len().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs the Monte Carlo experiment at every grid point, in
/// rate-major, then SNR, then memory order.
pub fn sweep(spec: &SweepSpec, base: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let schemes: Vec<SchemeKind> = if spec.memory.is_empty() {
        vec![base.scheme.clone()]
    } else {
        spec.memory.iter().map(|&m| SchemeKind::global_memory_equal(m)).collect::<Result<_>>()?
    };
    let mut rows = Vec::with_capacity(spec.len());
    for &rate in &spec.rates {
        for &gamma0_db in &spec.gamma0_db {
            let link = LinkBudget::from_db(gamma0_db, base.link.k_bits(), rate, base.link.regime())?;
            for scheme in &schemes {
                let mut cfg = base.clone();
                cfg.link = link;
                cfg.scheme = scheme.clone();
                let result = run_monte_carlo(&cfg)?;
                rows.push(SweepRow {
                    rate,
                    gamma0_db,
                    m: scheme.depth(),
                    rounds: result.rounds(),
                    final_mse: result.final_mse_mean(),
                });
            }
        }
    }
    Ok(rows)
}
