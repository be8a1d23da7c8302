//! Device-side regression model: polynomial features, squared loss and
//! full-batch gradient descent.

use std::ops::{Index, IndexMut};

use crate::error::{config, domain, Result};

/// A device's local training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return domain("dataset must contain at least one sample");
        }
        if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return domain("dataset values must be finite");
        }
        let (xs, ys) = samples.into_iter().unzip();
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }
}

/// Polynomial feature map `phi(x) = [1, t, t^2, ..., t^d]` with
/// `t = (x - center) / scale`.
///
/// The identity normalization (`center = 0`, `scale = 1`) gives the raw
/// monomials of `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMap {
    degree: usize,
    center: f64,
    scale: f64,
}

impl FeatureMap {
    pub fn polynomial(degree: usize) -> Self {
        Self { degree, center: 0.0, scale: 1.0 }
    }

    pub fn normalized(degree: usize, center: f64, scale: f64) -> Result<Self> {
        if !center.is_finite() || !scale.is_finite() || scale <= 0.0 {
            return config(format!(
                "feature normalization needs finite center and positive scale, got ({center}, {scale})"
            ));
        }
        Ok(Self { degree, center, scale })
    }

    /// Standardizes against a uniform population on `[lo, hi)`: zero mean,
    /// unit variance.
    pub fn standardized_uniform(degree: usize, lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || hi <= lo {
            return config(format!("empty feature range [{lo}, {hi})"));
        }
        Self::normalized(degree, 0.5 * (lo + hi), (hi - lo) / 12f64.sqrt())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    /// Writes `phi(x)` into `out`, which must have length [`FeatureMap::dim`].
    pub fn fill(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        let t = (x - self.center) / self.scale;
        let mut power = 1.0;
        for slot in out.iter_mut() {
            *slot = power;
            power *= t;
        }
    }

    pub fn features(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.fill(x, &mut out);
        out
    }

    fn check(&self, omega: &ModelParams) -> Result<()> {
        if omega.dim() != self.dim() {
            return config(format!(
                "parameter dimension {} does not match feature dimension {}",
                omega.dim(),
                self.dim()
            ));
        }
        Ok(())
    }
}

/// Dense model parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams(Vec<f64>);

impl ModelParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }
}

impl From<Vec<f64>> for ModelParams {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Index<usize> for ModelParams {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ModelParams {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Local optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    eta: f64,
    local_iterations: usize,
}

impl LearnerConfig {
    pub fn new(eta: f64, local_iterations: usize) -> Result<Self> {
        if !eta.is_finite() || eta <= 0.0 {
            return config(format!("learning rate must be positive, got {eta}"));
        }
        if local_iterations == 0 {
            return config("at least one local iteration is required");
        }
        Ok(Self { eta, local_iterations })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn local_iterations(&self) -> usize {
        self.local_iterations
    }
}

/// `f(omega, x, y) = 1/2 (y - omega . phi(x))^2`
pub fn pointwise_loss(omega: &ModelParams, features: &FeatureMap, x: f64, y: f64) -> Result<f64> {
    features.check(omega)?;
    let phi = features.features(x);
    let residual = y - omega.dot(&phi);
    Ok(0.5 * residual * residual)
}

/// Mean pointwise loss over a dataset.
pub fn local_loss(omega: &ModelParams, features: &FeatureMap, data: &Dataset) -> Result<f64> {
    features.check(omega)?;
    Ok(loss_sum(omega, features, data) / data.len() as f64)
}

fn loss_sum(omega: &ModelParams, features: &FeatureMap, data: &Dataset) -> f64 {
    let mut phi = vec![0.0; features.dim()];
    let mut total = 0.0;
    for (x, y) in data.samples() {
        features.fill(x, &mut phi);
        let residual = y - omega.dot(&phi);
        total += 0.5 * residual * residual;
    }
    total
}

/// Mean pointwise loss over the union of several datasets.
pub fn pooled_loss(omega: &ModelParams, features: &FeatureMap, data: &[Dataset]) -> Result<f64> {
    features.check(omega)?;
    let count: usize = data.iter().map(Dataset::len).sum();
    if count == 0 {
        return domain("no samples to evaluate");
    }
    let total: f64 = data.iter().map(|d| loss_sum(omega, features, d)).sum();
    Ok(total / count as f64)
}

/// Gradient of [`local_loss`]: `(1/D) sum -(y - omega . phi) phi`.
pub fn local_gradient(omega: &ModelParams, features: &FeatureMap, data: &Dataset) -> Result<ModelParams> {
    features.check(omega)?;
    let mut grad = vec![0.0; features.dim()];
    let mut phi = vec![0.0; features.dim()];
    for (x, y) in data.samples() {
        features.fill(x, &mut phi);
        let residual = y - omega.dot(&phi);
        for (g, p) in grad.iter_mut().zip(&phi) {
            *g -= residual * p;
        }
    }
    let inv = 1.0 / data.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(ModelParams(grad))
}

/// Runs `local_iterations` gradient steps from the broadcast global model.
pub fn local_update(
    omega_global: &ModelParams,
    features: &FeatureMap,
    data: &Dataset,
    learner: &LearnerConfig,
) -> Result<ModelParams> {
    let mut omega = omega_global.clone();
    for _ in 0..learner.local_iterations {
        let grad = local_gradient(&omega, features, data)?;
        omega.axpy(-learner.eta, &grad);
    }
    Ok(omega)
}
