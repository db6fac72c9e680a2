//! Central finite-difference gradient verification.

use rand::seq::index::sample;
use rand::Rng;

use crate::{Error, Result};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientProbe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic - numeric| / max(1e-8, |numeric|)`.
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheckReport {
    pub probes: Vec<GradientProbe>,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
}

impl GradientCheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &GradientProbe> {
        self.probes.iter().filter(move |p| p.rel_error >= self.tolerance)
    }
}

/// Compares `analytic` against central differences of `loss` on `probes`
/// randomly chosen coordinates (all of them if there are fewer).
pub fn check_gradient<F, R>(
    params: &[f64],
    analytic: &[f64],
    mut loss: F,
    probes: usize,
    tolerance: f64,
    rng: &mut R,
) -> Result<GradientCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    if !(tolerance > 0.0) {
        return Err(Error::param(format!("tolerance must be positive, got {tolerance}")));
    }
    if params.len() != analytic.len() {
        return Err(Error::param("gradient and parameter vectors differ in length"));
    }
    let mut indices = sample(rng, params.len(), probes.min(params.len())).into_vec();
    indices.sort_unstable();

    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(indices.len());
    for index in indices {
        work[index] = params[index] + FD_STEP;
        let up = loss(&work)?;
        work[index] = params[index] - FD_STEP;
        let down = loss(&work)?;
        work[index] = params[index];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel_error = (analytic[index] - numeric).abs() / numeric.abs().max(1e-8);
        out.push(GradientProbe {
            index,
            analytic: analytic[index],
            numeric,
            rel_error,
        });
    }
    let max_rel_error = out.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradientCheckReport {
        passed: max_rel_error < tolerance,
        probes: out,
        tolerance,
        max_rel_error,
    })
}
