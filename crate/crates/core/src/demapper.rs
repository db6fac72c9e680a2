//! Gaussian bit-metric demapping and GMI estimation.
//!
//! LLRs follow the convention `L_k = ln P(y | b_k = 0) - ln P(y | b_k = 1)`
//! under uniform symbol priors, so a positive value favours a zero bit.
//! The per-bit GMI is the usual BICM bound
//!
//! ```text
//! I_k = 1 - E[ log2(1 + exp(-(1 - 2 b_k) L_k)) ]
//! ```
//!
//! estimated either by stratified Monte Carlo ([`per_bit_gmi_mc`]) or by a
//! deterministic 2-D trapezoidal rule ([`gmi_oracle_quadrature`]).

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::standard_complex_normal;
use crate::constellation::{label_bit, Constellation};
use crate::{Error, Result};

/// LLR magnitude limit.
pub const LLR_CLIP: f64 = 50.0;

/// Largest constellation accepted by the quadrature oracle.
pub const QUADRATURE_MAX_ORDER: usize = 64;

/// Per-bit log-likelihood ratios for one received sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LlrVector {
    pub values: Vec<f64>,
}

/// `log2(1 + e^x)` without overflow.
#[inline]
pub fn softplus2(x: f64) -> f64 {
    (x.max(0.0) + (-x.abs()).exp().ln_1p()) / std::f64::consts::LN_2
}

/// Bit penalty `log2(1 + exp(-(1 - 2b) L))` of one LLR.
#[inline]
pub fn bit_penalty(bit: u8, llr: f64) -> f64 {
    let sign = if bit == 0 { 1.0 } else { -1.0 };
    softplus2(-sign * llr)
}

/// Precomputed label partitions for one constellation.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct BitSets {
    m: u32,
    /// `zeros[k]` lists the labels with bit k clear, `ones[k]` those with it set.
    zeros: Vec<Vec<usize>>,
    ones: Vec<Vec<usize>>,
}

impl BitSets {
    pub(crate) fn new(m: u32) -> Self {
        let order = 1usize << m;
        let (zeros, ones) = (0..m)
            .map(|k| (0..order).partition::<Vec<usize>, _>(|&l| label_bit(l, k, m) == 0))
            .unzip();
        BitSets { m, zeros, ones }
    }

    pub(crate) fn zeros(&self, k: usize) -> &[usize] {
        &self.zeros[k]
    }

    pub(crate) fn ones(&self, k: usize) -> &[usize] {
        &self.ones[k]
    }

    /// Writes clipped LLRs for received sample `y` into `out`; `metric` is
    /// scratch space of length `M`.
    fn llrs(&self, y: Complex64, points: &[Complex64], noise_variance: f64, max_log: bool, metric: &mut [f64], out: &mut [f64]) {
        for (a, x) in metric.iter_mut().zip(points) {
            *a = -(y - x).norm_sqr() / noise_variance;
        }
        for ((zeros, ones), o) in self.zeros.iter().zip(&self.ones).zip(out.iter_mut()) {
            let (l0, l1) = if max_log {
                (max_of(metric, zeros), max_of(metric, ones))
            } else {
                (log_sum_exp(metric, zeros), log_sum_exp(metric, ones))
            };
            *o = (l0 - l1).clamp(-LLR_CLIP, LLR_CLIP);
        }
    }
}

fn max_of(values: &[f64], subset: &[usize]) -> f64 {
    subset.iter().map(|&j| values[j]).fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn log_sum_exp(values: &[f64], subset: &[usize]) -> f64 {
    let top = max_of(values, subset);
    top + subset.iter().map(|&j| (values[j] - top).exp()).sum::<f64>().ln()
}

fn check_variance(noise_variance: f64) -> Result<()> {
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return Err(Error::param(format!("noise variance must be positive and finite, got {noise_variance}")));
    }
    Ok(())
}

fn llr_with(y: Complex64, c: &Constellation, noise_variance: f64, max_log: bool) -> Result<LlrVector> {
    check_variance(noise_variance)?;
    let sets = BitSets::new(c.m());
    let mut metric = vec![0.0; c.order()];
    let mut values = vec![0.0; c.m() as usize];
    sets.llrs(y, c.points(), noise_variance, max_log, &mut metric, &mut values);
    Ok(LlrVector { values })
}

/// Exact (log-MAP) Gaussian bit-metric LLRs.
pub fn llr_exact(y: Complex64, c: &Constellation, noise_variance: f64) -> Result<LlrVector> {
    llr_with(y, c, noise_variance, false)
}

/// Max-log approximation of [`llr_exact`].
pub fn llr_maxlog(y: Complex64, c: &Constellation, noise_variance: f64) -> Result<LlrVector> {
    llr_with(y, c, noise_variance, true)
}

/// Per-bit and total GMI estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmiReport {
    pub per_bit: Vec<f64>,
    pub total: f64,
    /// Polarisation X levels `0..m` followed by Y levels `m..2m`.
    pub per_bit_dualpol: Vec<f64>,
    pub total_dualpol: f64,
    pub n_samples: u64,
    /// Monte Carlo standard error of `total`.
    pub stderr_total: f64,
}

impl GmiReport {
    /// Builds a report from single-polarisation per-bit values; the second
    /// polarisation is a copy of the first.
    pub fn from_per_bit(per_bit: Vec<f64>, n_samples: u64, stderr_total: f64) -> Self {
        let total = per_bit.iter().sum::<f64>();
        let per_bit_dualpol: Vec<f64> = per_bit.iter().chain(per_bit.iter()).copied().collect();
        let total_dualpol = per_bit_dualpol.iter().sum::<f64>();
        GmiReport {
            per_bit,
            total,
            per_bit_dualpol,
            total_dualpol,
            n_samples,
            stderr_total,
        }
    }

    /// Bits per symbol of one polarisation.
    pub fn m(&self) -> usize {
        self.per_bit.len()
    }

    /// Standard error of the dual-polarisation total.
    pub fn stderr_dualpol(&self) -> f64 {
        2.0 * self.stderr_total
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: GmiReport = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if report.per_bit_dualpol.len() != 2 * report.per_bit.len() || report.per_bit.is_empty() {
            return Err(Error::format(path, "per_bit_dualpol must hold two copies of per_bit"));
        }
        Ok(report)
    }
}

/// Stratified Monte Carlo estimate of the per-bit GMI.
///
/// `n_samples` is rounded up to a multiple of `M`; every label is sent the
/// same number of times.
pub fn per_bit_gmi_mc<R: Rng + ?Sized>(
    c: &Constellation,
    noise_variance: f64,
    n_samples: u64,
    rng: &mut R,
) -> Result<GmiReport> {
    check_variance(noise_variance)?;
    let order = c.order();
    if n_samples < order as u64 {
        return Err(Error::param(format!("need at least M = {order} samples, got {n_samples}")));
    }
    let m = c.m() as usize;
    let rounds = n_samples.div_ceil(order as u64);
    let total_samples = rounds * order as u64;
    let sets = BitSets::new(c.m());
    let sigma = noise_variance.sqrt();

    let mut metric = vec![0.0; order];
    let mut llr = vec![0.0; m];
    let mut penalty_sum = vec![0.0; m];
    let (mut info_sum, mut info_sq) = (0.0, 0.0);
    for _ in 0..rounds {
        for (label, &x) in c.points().iter().enumerate() {
            let y = x + standard_complex_normal(rng) * sigma;
            sets.llrs(y, c.points(), noise_variance, false, &mut metric, &mut llr);
            let mut info = 0.0;
            for k in 0..m {
                let p = bit_penalty(label_bit(label, k as u32, c.m()), llr[k]);
                penalty_sum[k] += p;
                info += 1.0 - p;
            }
            info_sum += info;
            info_sq += info * info;
        }
    }

    let s = total_samples as f64;
    let per_bit = penalty_sum.iter().map(|p| (1.0 - p / s).clamp(0.0, 1.0)).collect();
    let mean = info_sum / s;
    let var = ((info_sq - s * mean * mean) / (s - 1.0).max(1.0)).max(0.0);
    Ok(GmiReport::from_per_bit(per_bit, total_samples, (var / s).sqrt()))
}

/// Grid used by [`gmi_oracle_quadrature`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    /// Trapezoid nodes per real dimension.
    pub nodes_per_axis: usize,
    /// Half-width of the grid, in per-dimension noise standard deviations.
    pub half_width_sigmas: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes_per_axis: 64,
            half_width_sigmas: 6.0,
        }
    }
}

/// Normalised trapezoid nodes and weights for a standard normal variable
/// truncated to `±half_width`.
fn normal_trapezoid(spec: &QuadratureSpec) -> (Vec<f64>, Vec<f64>) {
    let n = spec.nodes_per_axis;
    let a = spec.half_width_sigmas;
    let step = 2.0 * a / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|i| -a + step * i as f64).collect();
    let mut weights: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let edge = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            edge * (-0.5 * t * t).exp()
        })
        .collect();
    let norm: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= norm);
    (nodes, weights)
}

/// Per-bit GMI by 2-D trapezoidal integration over the noise around every
/// transmitted point.
pub fn gmi_quadrature_per_bit(c: &Constellation, noise_variance: f64, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    check_variance(noise_variance)?;
    if c.order() > QUADRATURE_MAX_ORDER {
        return Err(Error::Capability(format!(
            "quadrature oracle supports at most {QUADRATURE_MAX_ORDER} points, got {}",
            c.order()
        )));
    }
    if spec.nodes_per_axis < 3 || !(spec.half_width_sigmas > 0.0) {
        return Err(Error::param("quadrature grid needs at least 3 nodes and a positive width"));
    }
    let m = c.m() as usize;
    let sets = BitSets::new(c.m());
    let sigma_axis = (noise_variance / 2.0).sqrt();
    let (nodes, weights) = normal_trapezoid(spec);

    let mut metric = vec![0.0; c.order()];
    let mut llr = vec![0.0; m];
    let mut penalty = vec![0.0; m];
    for (label, &x) in c.points().iter().enumerate() {
        for (tr, wr) in nodes.iter().zip(&weights) {
            for (ti, wi) in nodes.iter().zip(&weights) {
                let y = x + Complex64::new(tr * sigma_axis, ti * sigma_axis);
                sets.llrs(y, c.points(), noise_variance, false, &mut metric, &mut llr);
                let w = wr * wi;
                for k in 0..m {
                    penalty[k] += w * bit_penalty(label_bit(label, k as u32, c.m()), llr[k]);
                }
            }
        }
    }
    let order = c.order() as f64;
    Ok(penalty.iter().map(|p| (1.0 - p / order).clamp(0.0, 1.0)).collect())
}

/// Total GMI by deterministic quadrature; the reference for [`per_bit_gmi_mc`].
pub fn gmi_oracle_quadrature(c: &Constellation, noise_variance: f64, spec: &QuadratureSpec) -> Result<f64> {
    Ok(gmi_quadrature_per_bit(c, noise_variance, spec)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::db_to_linear;
    use crate::constellation::{uniform_qam, Metadata};
    use rand::Rng;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn bpsk_closed_form() {
        let c = uniform_qam(1).unwrap();
        let l = llr_exact(c64(0.5, 0.0), &c, 1.0).unwrap();
        assert!((l.values[0] - 2.0).abs() < 1e-12);
        assert_eq!(llr_maxlog(c64(0.5, 0.0), &c, 1.0).unwrap(), l);
    }

    #[test]
    fn llr_sign_on_points() {
        let c = uniform_qam(4).unwrap();
        for label in 0..16 {
            let l = llr_exact(c.point(label), &c, 1e-4).unwrap();
            for k in 0..4u32 {
                let bit = label_bit(label, k, 4);
                assert_eq!(l.values[k as usize] > 0.0, bit == 0, "label {label} bit {k}");
            }
        }
    }

    #[test]
    fn qpsk_against_direct_sum() {
        let c = uniform_qam(2).unwrap();
        let y = c64(0.5, -0.3);
        let var = 1.0;
        let lik: Vec<f64> = c.points().iter().map(|x| (-(y - x).norm_sqr() / var).exp()).collect();
        let l0 = ((lik[0] + lik[1]) / (lik[2] + lik[3])).ln();
        let l1 = ((lik[0] + lik[2]) / (lik[1] + lik[3])).ln();
        let l = llr_exact(y, &c, var).unwrap();
        assert!((l.values[0] - l0).abs() < 1e-12);
        assert!((l.values[1] - l1).abs() < 1e-12);
    }

    #[test]
    fn maxlog_bound_and_limit() {
        let c = uniform_qam(4).unwrap();
        let mut rng = crate::rng::stream(5);
        let bound = (8.0f64).ln();
        for _ in 0..10_000 {
            let y = c64(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let var = rng.random_range(0.01..2.0);
            let e = llr_exact(y, &c, var).unwrap();
            let a = llr_maxlog(y, &c, var).unwrap();
            for (x, z) in e.values.iter().zip(&a.values) {
                assert!((x - z).abs() <= bound + 1e-12);
            }
        }
        let y = c.point(5) + c64(0.01, -0.02);
        let e = llr_exact(y, &c, 1e-4).unwrap();
        let a = llr_maxlog(y, &c, 1e-4).unwrap();
        for (x, z) in e.values.iter().zip(&a.values) {
            assert!((x - z).abs() < 1e-6);
        }
    }

    #[test]
    fn llr_rejects_bad_variance() {
        let c = uniform_qam(2).unwrap();
        assert!(llr_exact(c64(0.0, 0.0), &c, 0.0).is_err());
        assert!(llr_maxlog(c64(0.0, 0.0), &c, -1.0).is_err());
    }

    #[test]
    fn llrs_are_clipped() {
        let c = uniform_qam(1).unwrap();
        let l = llr_exact(c64(10.0, 0.0), &c, 1e-3).unwrap();
        assert_eq!(l.values[0], LLR_CLIP);
    }

    #[test]
    fn mc_limits() {
        let mut rng = crate::rng::stream(11);
        let q = uniform_qam(2).unwrap();
        let r = per_bit_gmi_mc(&q, 1e-8, 4096, &mut rng).unwrap();
        assert!((r.total - 2.0).abs() < 1e-3);
        let r = per_bit_gmi_mc(&uniform_qam(4).unwrap(), 1e6, 20_000, &mut rng).unwrap();
        assert!(r.total < 0.05);
        assert!(per_bit_gmi_mc(&q, 1.0, 3, &mut rng).is_err());
    }

    #[test]
    fn mc_rounds_up_to_whole_label_sets() {
        let mut rng = crate::rng::stream(2);
        let r = per_bit_gmi_mc(&uniform_qam(4).unwrap(), 0.1, 100, &mut rng).unwrap();
        assert_eq!(r.n_samples, 112);
        assert_eq!(r.per_bit_dualpol.len(), 8);
        assert!((r.total_dualpol - 2.0 * r.total).abs() < 1e-12);
    }

    #[test]
    fn quadrature_noiseless_qpsk() {
        let g = gmi_oracle_quadrature(&uniform_qam(2).unwrap(), 1e-8, &QuadratureSpec::default()).unwrap();
        assert!((g - 2.0).abs() < 1e-6);
    }

    #[test]
    fn quadrature_bpsk_matches_1d_integral() {
        // 0 dB: sigma^2 = 1. Only the real noise component matters; integrate
        // it with a fine midpoint rule over ±10 sigma.
        let var = 1.0;
        let sd = (var / 2.0f64).sqrt();
        let n = 200_000;
        let (lo, hi) = (-10.0 * sd, 10.0 * sd);
        let h = (hi - lo) / n as f64;
        let mut penalty = 0.0;
        for i in 0..n {
            let t = lo + (i as f64 + 0.5) * h;
            let pdf = (-(t * t) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            // send +1 (bit 0); by symmetry the -1 branch is identical
            let llr = 4.0 * (1.0 + t) / var;
            penalty += pdf * h * softplus2(-llr);
        }
        let expected = 1.0 - penalty;
        let got = gmi_oracle_quadrature(&uniform_qam(1).unwrap(), var, &QuadratureSpec::default()).unwrap();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }

    #[test]
    fn quadrature_converges() {
        let c = uniform_qam(4).unwrap();
        for db in [0.0, 10.0] {
            let var = 1.0 / db_to_linear(db);
            let coarse = gmi_oracle_quadrature(&c, var, &QuadratureSpec::default()).unwrap();
            let fine = gmi_oracle_quadrature(
                &c,
                var,
                &QuadratureSpec {
                    nodes_per_axis: 127,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!((coarse - fine).abs() < 1e-4, "{db} dB: {coarse} vs {fine}");
        }
    }

    #[test]
    fn quadrature_capability_limit() {
        let c = uniform_qam(7).unwrap();
        assert!(matches!(
            gmi_oracle_quadrature(&c, 0.1, &QuadratureSpec::default()),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn collapsed_pair_carries_no_information_on_its_bit() {
        // labels 0/1 and 2/3 share points; bit 1 is unresolvable
        let pts = vec![c64(1.0, 0.0), c64(1.0, 0.0), c64(-1.0, 0.0), c64(-1.0, 0.0)];
        let c = Constellation::new(2, pts, Metadata::default()).unwrap();
        let mut rng = crate::rng::stream(3);
        let r = per_bit_gmi_mc(&c, 0.2, 100_000, &mut rng).unwrap();
        assert!(r.per_bit[1] < 0.02, "{:?}", r.per_bit);
        assert!(r.per_bit[0] > 0.9);
    }
}
