//! Effective-SNR model of a multi-span WDM link.
//!
//! ASE noise accumulates linearly in the number of spans. Nonlinear
//! interference (NLIN) grows with the cube of the launch power and carries a
//! modulation-dependent weight
//!
//! ```text
//! eta = chi1 + chi2 (mu4 - 2) + chi3 (mu6 - 6 mu4 + 6),   clamped at 0
//! snr = P / (Ns s_ase + P^3 eta Ns^(1 + eps))
//! ```
//!
//! All powers are in normalised units: a unit-power constellation launched at
//! `P = 1` has unit symbol energy.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constellation::Moments;
use crate::rate_adapt::FecRate;
use crate::{Error, Result};

/// Parameters of the span-based link model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub n_spans: u32,
    pub span_length_km: f64,
    /// ASE variance contributed by each span.
    pub ase_var_per_span: f64,
    /// Modulation-independent NLIN coefficient.
    pub chi1: f64,
    /// Weight of the excess-kurtosis term `mu4 - 2`.
    pub chi2: f64,
    /// Weight of the sixth-moment term `mu6 - 6 mu4 + 6`.
    pub chi3: f64,
    /// Super-linear NLIN accumulation exponent.
    pub eps_accum: f64,
    /// Number of WDM channels; documentary only.
    pub n_channels: u32,
    pub fec_rate: FecRate,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            n_spans: 10,
            span_length_km: 100.0,
            ase_var_per_span: 4.1e-3,
            chi1: 0.3,
            chi2: 0.1,
            chi3: 0.0,
            eps_accum: 0.0,
            n_channels: 5,
            fec_rate: FecRate::new(3, 4).expect("3/4 is a valid rate"),
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_spans == 0 {
            return Err(Error::param("link needs at least one span"));
        }
        if !(self.ase_var_per_span >= 0.0) || !self.ase_var_per_span.is_finite() {
            return Err(Error::param(format!("ASE variance per span must be finite and non-negative, got {}", self.ase_var_per_span)));
        }
        if !(self.chi1 >= 0.0) || !self.chi2.is_finite() || !self.chi3.is_finite() {
            return Err(Error::param("NLIN coefficients must be finite with chi1 >= 0"));
        }
        if !(self.eps_accum >= 0.0) {
            return Err(Error::param("NLIN accumulation exponent must be non-negative"));
        }
        if !(self.span_length_km > 0.0) {
            return Err(Error::param("span length must be positive"));
        }
        Ok(())
    }

    /// Copy of this link with a different span count.
    pub fn with_spans(&self, n_spans: u32) -> LinkConfig {
        LinkConfig { n_spans, ..self.clone() }
    }

    pub fn distance_km(&self) -> f64 {
        self.n_spans as f64 * self.span_length_km
    }

    /// Modulation-dependent NLIN weight, clamped below at zero.
    pub fn eta(&self, mom: &Moments) -> f64 {
        let eta = self.chi1
            + self.chi2 * (mom.mu4_hat - 2.0)
            + self.chi3 * (mom.mu6_hat - 6.0 * mom.mu4_hat + 6.0);
        eta.max(0.0)
    }

    /// Total ASE variance over all spans.
    pub fn ase_variance(&self) -> f64 {
        self.n_spans as f64 * self.ase_var_per_span
    }

    /// NLIN variance at launch power `p`.
    pub fn nlin_variance(&self, launch_power: f64, mom: &Moments) -> f64 {
        let ns = self.n_spans as f64;
        launch_power.powi(3) * self.eta(mom) * ns.powf(1.0 + self.eps_accum)
    }
}

/// The link as seen by a unit-power constellation: an AWGN channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveChannel {
    pub snr_linear: f64,
    /// Total complex noise variance, `1 / snr_linear`.
    pub noise_variance: f64,
}

impl EffectiveChannel {
    pub fn from_snr(snr_linear: f64) -> Result<Self> {
        if !(snr_linear > 0.0) || !snr_linear.is_finite() {
            return Err(Error::param(format!("SNR must be positive and finite, got {snr_linear}")));
        }
        Ok(EffectiveChannel {
            snr_linear,
            noise_variance: snr_linear.recip(),
        })
    }

    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        Self::from_snr(db_to_linear(snr_db))
    }

    pub fn snr_db(&self) -> f64 {
        linear_to_db(self.snr_linear)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn effective_snr(link: &LinkConfig, launch_power: f64, mom: &Moments) -> Result<EffectiveChannel> {
    link.validate()?;
    if !(launch_power > 0.0) || !launch_power.is_finite() {
        return Err(Error::param(format!("launch power must be positive, got {launch_power}")));
    }
    let noise = link.ase_variance() + link.nlin_variance(launch_power, mom);
    if noise <= 0.0 {
        return Err(Error::InfiniteSnr);
    }
    EffectiveChannel::from_snr(launch_power / noise)
}

/// Launch power maximising the effective SNR, and the SNR it achieves.
///
/// At the optimum the NLIN variance is exactly half the ASE variance.
pub fn optimal_launch_power(link: &LinkConfig, mom: &Moments) -> Result<(f64, EffectiveChannel)> {
    link.validate()?;
    let eta = link.eta(mom);
    if !(eta > 0.0) {
        return Err(Error::UnboundedOptimum(eta));
    }
    let ns = link.n_spans as f64;
    let p = (link.ase_variance() / (2.0 * eta * ns.powf(1.0 + link.eps_accum))).cbrt();
    Ok((p, effective_snr(link, p, mom)?))
}

/// One circularly-symmetric complex Gaussian draw with `E|n|² = 1`.
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Passes `x` through an AWGN channel of total variance `noise_variance`.
pub fn awgn_sample<R: Rng + ?Sized>(rng: &mut R, x: Complex64, noise_variance: f64) -> Result<Complex64> {
    if !(noise_variance >= 0.0) {
        return Err(Error::param(format!("noise variance must be non-negative, got {noise_variance}")));
    }
    if noise_variance == 0.0 {
        return Ok(x);
    }
    Ok(x + standard_complex_normal(rng) * noise_variance.sqrt())
}
