//! Probabilistic diagnostics for the no-memory scheme.
//!
//! With independent erasures `I_u ~ Ber(1 - eps_u)` the participation count
//! `S = sum_u I_u` is Poisson-binomial. Le Cam's inequality bounds its
//! distance to `Poisson(lambda)`, `lambda = sum_u (1 - eps_u)`:
//!
//! ```text
//! sum_j |Pr[S = j] - lambda^j e^-lambda / j!| < 2 sum_u (1 - eps_u)^2
//! ```

use crate::error::{domain, Error, Result};
use crate::learning::ModelParams;

/// Largest user count [`outcome_pmf`] will enumerate.
pub const MAX_ENUMERATED_USERS: usize = 20;

/// Per-user erasure probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ErasureProfile {
    eps: Vec<f64>,
}

impl ErasureProfile {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() {
            return domain("erasure profile needs at least one user");
        }
        if let Some(bad) = eps.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return domain(format!("erasure probability {bad} is outside [0, 1]"));
        }
        Ok(Self { eps })
    }

    pub fn num_users(&self) -> usize {
        self.eps.len()
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    fn success(&self) -> impl Iterator<Item = f64> + '_ {
        self.eps.iter().map(|e| 1.0 - e)
    }
}

/// Probability mass over `0..=U`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    mass: Vec<f64>,
}

impl Pmf {
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, j: usize) -> f64 {
        self.mass.get(j).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(j, m)| j as f64 * m).sum()
    }
}

/// Exact distribution of the participation count by iterated convolution,
/// `O(U^2)`.
pub fn poisson_binomial_pmf(profile: &ErasureProfile) -> Pmf {
    let mut mass = Vec::with_capacity(profile.num_users() + 1);
    mass.push(1.0);
    for (eps, p) in profile.eps.iter().zip(profile.success()) {
        mass.push(0.0);
        for j in (1..mass.len()).rev() {
            mass[j] = mass[j] * eps + mass[j - 1] * p;
        }
        mass[0] *= eps;
    }
    Pmf { mass }
}

/// Value of the global model for one indicator pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeValue {
    /// Mean of the received local parameters.
    Average(ModelParams),
    /// Every packet erased; the central node keeps its previous global.
    RetainPrevious,
}

/// One indicator pattern of the no-memory update with equal dataset sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pattern: Vec<bool>,
    pub probability: f64,
    pub value: OutcomeValue,
}

impl Outcome {
    pub fn participation(&self) -> usize {
        self.pattern.iter().filter(|b| **b).count()
    }
}

/// Enumerates all `2^U` reception patterns with their probabilities
/// `prod_u eps_u^(1 - I_u) (1 - eps_u)^I_u` and resulting global models.
///
/// Pattern `i` has user `u` received iff bit `u` of `i` is set.
pub fn outcome_pmf(profile: &ErasureProfile, local_params: &[ModelParams]) -> Result<Vec<Outcome>> {
    let users = profile.num_users();
    if users > MAX_ENUMERATED_USERS {
        return Err(Error::Size(format!(
            "{users} users would need 2^{users} outcomes; at most {MAX_ENUMERATED_USERS} are enumerated"
        )));
    }
    if local_params.len() != users {
        return domain(format!("{} local models for {users} users", local_params.len()));
    }
    let dim = local_params[0].dim();
    if local_params.iter().any(|p| p.dim() != dim) {
        return domain("local models have differing dimensions");
    }
    let outcomes = (0u32..1 << users)
        .map(|bits| {
            let pattern: Vec<bool> = (0..users).map(|u| bits >> u & 1 == 1).collect();
            let probability = pattern
                .iter()
                .zip(&profile.eps)
                .map(|(&received, &eps)| if received { 1.0 - eps } else { eps })
                .product();
            let count = pattern.iter().filter(|b| **b).count();
            let value = if count == 0 {
                OutcomeValue::RetainPrevious
            } else {
                let mut sum = ModelParams::zeros(dim);
                for (params, _) in local_params.iter().zip(&pattern).filter(|(_, r)| **r) {
                    sum.axpy(1.0, params);
                }
                sum.scale(1.0 / count as f64);
                OutcomeValue::Average(sum)
            };
            Outcome { pattern, probability, value }
        })
        .collect();
    Ok(outcomes)
}

/// Result of checking Le Cam's inequality on one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeCamReport {
    pub lambda: f64,
    pub tv_sum: f64,
    pub bound: f64,
    pub holds: bool,
}

const POISSON_TAIL_CUTOFF: f64 = 1e-16;

/// Computes both sides of Le Cam's inequality exactly.
///
/// The Poisson-binomial mass vanishes beyond `U`, so the infinite sum is the
/// finite sum up to `U` plus the Poisson tail, accumulated term by term until
/// terms drop below 1e-16. With `lambda = 0` both sides are 0 and `holds`
/// uses `<=`.
pub fn le_cam_check(profile: &ErasureProfile) -> LeCamReport {
    let pmf = poisson_binomial_pmf(profile);
    let lambda: f64 = profile.success().sum();
    let bound = 2.0 * profile.success().map(|p| p * p).sum::<f64>();

    // j = 0: prod(1 - p_u) - e^-lambda = e^-lambda expm1(sum ln(1 - p_u) + lambda),
    // accurate when every p_u is tiny and both terms are close to 1.
    let log_empty: f64 = profile.success().map(|p| (-p).ln_1p()).sum();
    let poisson0 = (-lambda).exp();
    let mut tv_sum = if log_empty.is_finite() {
        (poisson0 * (log_empty + lambda).exp_m1()).abs()
    } else {
        poisson0
    };

    let mut poisson = poisson0;
    let users = profile.num_users();
    for j in 1..=users {
        poisson *= lambda / j as f64;
        tv_sum += (pmf.get(j) - poisson).abs();
    }
    let mut j = users;
    while poisson >= POISSON_TAIL_CUTOFF {
        j += 1;
        poisson *= lambda / j as f64;
        tv_sum += poisson;
    }

    let holds = if lambda == 0.0 { tv_sum <= bound } else { tv_sum < bound };
    LeCamReport { lambda, tv_sum, bound, holds }
}

/// Sample mean and unbiased variance of a trailing window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationStats {
    pub mean: f64,
    pub variance: f64,
}

/// Statistics of the last `window` entries of `series` (Welford update).
pub fn fluctuation_stats(series: &[f64], window: usize) -> Result<FluctuationStats> {
    if window < 2 {
        return domain(format!("window must cover at least 2 rounds, got {window}"));
    }
    if window > series.len() {
        return domain(format!("window {window} exceeds series length {}", series.len()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &v) in series[series.len() - window..].iter().enumerate() {
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    Ok(FluctuationStats { mean, variance: m2 / (window - 1) as f64 })
}
