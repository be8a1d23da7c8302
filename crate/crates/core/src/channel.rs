//! Packet-erasure channel models.
//!
//! Each uplink packet of `k` message bits is coded at rate `R` into `n`
//! channel uses. The channel is Rayleigh block fading, `h ~ CN(0, 1)`, held
//! constant over one packet and redrawn independently for the next, so the
//! instantaneous SNR is `gamma = gamma0 * |h|^2` with `|h|^2 ~ Exp(1)`.
//!
//! Two erasure models are provided:
//!
//! - short packets: the normal approximation
//!   `eps = Q((n C(gamma) - k + 0.5 log2 n) / sqrt(n V(gamma)))`
//! - long packets: outage, the packet is lost iff `gamma < 2^R - 1`.

use std::f64::consts::{LOG2_E, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Which erasure model a link uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ShortPacket,
    LongPacket,
}

/// Per-experiment channel configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    gamma0: f64,
    k_bits: u64,
    rate: f64,
    n_symbols: u64,
    regime: Regime,
}

/// One block-fading realization for one packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingDraw {
    /// `|h|^2`, unit-mean exponential.
    pub gain_sq: f64,
    /// Instantaneous received SNR, `gamma0 * gain_sq`.
    pub gamma: f64,
}

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Blocklength for `k_bits` at the requested rate, `ceil(k / R)`.
///
/// Quotients within a relative 1e-9 of an integer are rounded to it, so a
/// rate like `0.1` whose binary value is not exact still yields `n = 10 k`.
pub fn blocklength(k_bits: u64, rate: f64) -> Result<u64> {
    if !(rate > 0.0 && rate <= 1.0) {
        return domain(format!("code rate must lie in (0, 1], got {rate}"));
    }
    if k_bits == 0 {
        return domain("message length must be at least one bit");
    }
    let q = k_bits as f64 / rate;
    let nearest = q.round();
    let n = if (q - nearest).abs() <= 1e-9 * q { nearest } else { q.ceil() };
    Ok(n as u64)
}

impl LinkBudget {
    pub fn new(gamma0: f64, k_bits: u64, rate: f64, regime: Regime) -> Result<Self> {
        if gamma0.is_nan() || gamma0 <= 0.0 {
            return domain(format!("average SNR must be positive, got {gamma0}"));
        }
        let n_symbols = blocklength(k_bits, rate)?;
        Ok(Self { gamma0, k_bits, rate, n_symbols, regime })
    }

    /// Same as [`LinkBudget::new`] with the average SNR given in dB.
    pub fn from_db(gamma0_db: f64, k_bits: u64, rate: f64, regime: Regime) -> Result<Self> {
        if !gamma0_db.is_finite() {
            return domain(format!("average SNR in dB must be finite, got {gamma0_db}"));
        }
        Self::new(db_to_linear(gamma0_db), k_bits, rate, regime)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn gamma0_db(&self) -> f64 {
        10.0 * self.gamma0.log10()
    }

    pub fn k_bits(&self) -> u64 {
        self.k_bits
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn n_symbols(&self) -> u64 {
        self.n_symbols
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Draws the fading state of one packet.
    pub fn sample_fading<R: Rng + ?Sized>(&self, rng: &mut R) -> FadingDraw {
        let gain_sq = sample_gain_sq(rng);
        FadingDraw { gain_sq, gamma: self.gamma0 * gain_sq }
    }

    /// Erasure probability of a packet that sees instantaneous SNR `gamma`.
    ///
    /// For long packets this is the outage indicator (0 or 1).
    pub fn erasure_given_gamma(&self, gamma: f64) -> Result<f64> {
        match self.regime {
            Regime::ShortPacket => per_short(gamma, self.k_bits, self.n_symbols),
            Regime::LongPacket => {
                if gamma.is_nan() || gamma < 0.0 {
                    return domain(format!("SNR must be nonnegative, got {gamma}"));
                }
                Ok(if gamma < outage_threshold(self.rate)? { 1.0 } else { 0.0 })
            }
        }
    }

    /// Erasure probability averaged over the fading distribution, where a
    /// closed form exists (long packets).
    pub fn average_erasure(&self) -> Option<f64> {
        match self.regime {
            Regime::LongPacket => erasure_prob_long(self.gamma0, self.rate).ok(),
            Regime::ShortPacket => None,
        }
    }

    /// Sends one packet: draws fading, then the erasure event.
    ///
    /// Returns the fading draw and whether the packet was received.
    pub fn transmit<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(FadingDraw, bool)> {
        let fading = self.sample_fading(rng);
        let received = match self.regime {
            Regime::ShortPacket => {
                let eps = per_short(fading.gamma, self.k_bits, self.n_symbols)?;
                sample_erasure(rng, eps)?
            }
            Regime::LongPacket => fading.gamma >= outage_threshold(self.rate)?,
        };
        Ok((fading, received))
    }
}

fn check_snr(gamma: f64) -> Result<()> {
    if gamma.is_nan() || gamma < 0.0 {
        return domain(format!("SNR must be nonnegative, got {gamma}"));
    }
    Ok(())
}

/// `C(gamma) = log2(1 + gamma)` in bits per channel use.
pub fn shannon_capacity(gamma: f64) -> Result<f64> {
    check_snr(gamma)?;
    Ok(gamma.ln_1p() * LOG2_E)
}

/// `V(gamma) = log2(e)^2 (1 - (1 + gamma)^-2)` in bits^2 per channel use.
pub fn channel_dispersion(gamma: f64) -> Result<f64> {
    check_snr(gamma)?;
    // 1 - (1+g)^-2 = g (2 + g) / (1 + g)^2, well conditioned near g = 0.
    let one_plus = 1.0 + gamma;
    let factor = if gamma.is_infinite() {
        1.0
    } else {
        gamma * (2.0 + gamma) / (one_plus * one_plus)
    };
    Ok(LOG2_E * LOG2_E * factor)
}

/// Standard normal tail probability `Pr[N(0,1) > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Short-packet erasure probability from the normal approximation.
///
/// `gamma = 0` returns 1: capacity and dispersion both vanish and the
/// approximation tends to 1 as `gamma -> 0`.
pub fn per_short(gamma: f64, k_bits: u64, n_symbols: u64) -> Result<f64> {
    check_snr(gamma)?;
    if k_bits == 0 {
        return domain("message length must be at least one bit");
    }
    if n_symbols < k_bits {
        return domain(format!(
            "blocklength {n_symbols} is shorter than the message ({k_bits} bits)"
        ));
    }
    if gamma == 0.0 {
        return Ok(1.0);
    }
    let n = n_symbols as f64;
    let numerator = n * shannon_capacity(gamma)? - k_bits as f64 + 0.5 * n.log2();
    let denominator = (n * channel_dispersion(gamma)?).sqrt();
    if denominator == 0.0 {
        // gamma so small that V underflows; the numerator is then negative.
        return Ok(if numerator > 0.0 { 0.0 } else { 1.0 });
    }
    Ok(q_function(numerator / denominator))
}

/// Outage SNR threshold `2^R - 1`.
pub fn outage_threshold(rate: f64) -> Result<f64> {
    if !rate.is_finite() || rate <= 0.0 {
        return domain(format!("rate must be positive, got {rate}"));
    }
    Ok(rate.exp2() - 1.0)
}

/// Long-packet erasure probability under Rayleigh fading,
/// `Pr[gamma0 |h|^2 < 2^R - 1] = 1 - exp(-(2^R - 1) / gamma0)`.
pub fn erasure_prob_long(gamma0: f64, rate: f64) -> Result<f64> {
    if gamma0.is_nan() || gamma0 <= 0.0 {
        return domain(format!("average SNR must be positive, got {gamma0}"));
    }
    let threshold = outage_threshold(rate)?;
    Ok(-(-threshold / gamma0).exp_m1())
}

/// Draws `|h|^2` for `h ~ CN(0, 1)`: the real and imaginary parts are
/// independent `N(0, 1/2)`.
pub fn sample_gain_sq<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    0.5 * (re * re + im * im)
}

/// Bernoulli reception indicator: `true` with probability `1 - eps`.
pub fn sample_erasure<R: Rng + ?Sized>(rng: &mut R, eps: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&eps) {
        return domain(format!("erasure probability must lie in [0, 1], got {eps}"));
    }
    // One uniform is always consumed so stream alignment does not depend on eps.
    let u: f64 = rng.random();
    Ok(u >= eps)
}
