//! Trainable mapper/demapper pair, its loss and hand-written reverse pass.
//!
//! The mapper is a table of `M` raw complex points. The forward pass
//! normalises them to unit average power, sends the batch labels through the
//! channel (`y = x + sigma z` with fixed unit-variance draws `z`) and scores
//! the demapper's LLRs with the bit-metric surrogate
//!
//! ```text
//! loss = (1/S) Σ_s Σ_k log2(1 + exp(-(1 - 2 b_sk) L_sk))
//! ```
//!
//! which equals `m` minus the per-symbol GMI estimate.

use num_complex::Complex64;
use rand::Rng;

use super::mlp::{Mlp, MlpTrace};
use crate::channel::standard_complex_normal;
use crate::constellation::label_bit;
use crate::demapper::{bit_penalty, log_sum_exp, BitSets, LLR_CLIP};
use crate::{Error, Result};

/// Trainable mapper: one free complex value per label.
#[derive(Clone, Debug, PartialEq)]
pub struct MapperParams {
    pub raw_points: Vec<Complex64>,
}

impl MapperParams {
    /// Unit-power points and the normalisation factor applied to the raw table.
    pub fn normalized(&self) -> (Vec<Complex64>, f64) {
        let power = self.raw_points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.raw_points.len() as f64;
        let scale = power.sqrt().recip();
        (self.raw_points.iter().map(|p| p * scale).collect(), scale)
    }
}

/// Demapper used during training.
#[derive(Clone, Debug, PartialEq)]
pub enum Demapper {
    /// Exact Gaussian bit metric at the current points and true noise variance.
    Gaussian,
    /// Learned network from `(Re y, Im y)` to `m` LLRs.
    Mlp(Mlp),
}

/// One training batch: labels and the unit-variance noise added to them.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub labels: Vec<usize>,
    pub noise: Vec<Complex64>,
}

impl Batch {
    /// Every label appears `symbols / order` times; fresh noise per symbol.
    pub fn sample<R: Rng + ?Sized>(order: usize, symbols: usize, rng: &mut R) -> Self {
        let labels: Vec<usize> = (0..symbols).map(|s| s % order).collect();
        let noise = (0..symbols).map(|_| standard_complex_normal(rng)).collect();
        Batch { labels, noise }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The differentiable end-to-end system.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    m: u32,
    pub mapper: MapperParams,
    pub demapper: Demapper,
    bits: BitSets,
}

enum DemapperTrace {
    Gaussian { metric: Vec<f64>, lse0: Vec<f64>, lse1: Vec<f64> },
    Mlp(MlpTrace),
}

/// Forward-pass result with everything the reverse pass needs.
pub struct ForwardPass<'a> {
    pub loss: f64,
    /// `m - loss`.
    pub surrogate_gmi: f64,
    pub points: Vec<Complex64>,
    pub received: Vec<Complex64>,
    /// Clipped LLRs, `S × m`.
    pub llrs: Vec<f64>,
    scale: f64,
    noise_variance: f64,
    /// Unclipped LLRs.
    raw_llrs: Vec<f64>,
    batch: &'a Batch,
    trace: DemapperTrace,
}

fn first_non_finite(name: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    match values.into_iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numerical(format!("non-finite {name} at index {i}"))),
        None => Ok(()),
    }
}

impl Autoencoder {
    pub fn new(m: u32, mapper: MapperParams, demapper: Demapper) -> Result<Self> {
        if mapper.raw_points.len() != 1usize << m {
            return Err(Error::param("mapper table size must be 2^m"));
        }
        if let Demapper::Mlp(net) = &demapper {
            if net.input_width() != 2 || net.output_width() != m as usize {
                return Err(Error::param("MLP demapper must map 2 inputs to m outputs"));
            }
        }
        Ok(Autoencoder {
            m,
            mapper,
            demapper,
            bits: BitSets::new(m),
        })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn order(&self) -> usize {
        1usize << self.m
    }

    pub fn num_params(&self) -> usize {
        2 * self.order()
            + match &self.demapper {
                Demapper::Gaussian => 0,
                Demapper::Mlp(net) => net.num_params(),
            }
    }

    /// Flat parameter vector: raw points as interleaved (re, im), then MLP weights.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for p in &self.mapper.raw_points {
            out.push(p.re);
            out.push(p.im);
        }
        if let Demapper::Mlp(net) = &self.demapper {
            net.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "parameter vector length");
        let n = self.order();
        for (p, pair) in self.mapper.raw_points.iter_mut().zip(flat[..2 * n].chunks(2)) {
            *p = Complex64::new(pair[0], pair[1]);
        }
        if let Demapper::Mlp(net) = &mut self.demapper {
            net.read_params(&flat[2 * n..]);
        }
    }

    /// Evaluates the surrogate loss on a batch.
    pub fn forward_loss<'a>(&self, batch: &'a Batch, noise_variance: f64) -> Result<ForwardPass<'a>> {
        if !(noise_variance > 0.0) || !noise_variance.is_finite() {
            return Err(Error::param(format!("noise variance must be positive, got {noise_variance}")));
        }
        if batch.is_empty() || batch.labels.len() != batch.noise.len() {
            return Err(Error::param("batch must be non-empty with one noise draw per label"));
        }
        let m = self.m as usize;
        let order = self.order();
        let samples = batch.len();
        let (points, scale) = self.mapper.normalized();
        first_non_finite("normalised point coordinate", points.iter().flat_map(|p| [p.re, p.im]))?;

        let sigma = noise_variance.sqrt();
        let received: Vec<Complex64> = batch.labels.iter().zip(&batch.noise).map(|(&l, z)| points[l] + z * sigma).collect();

        let mut raw_llrs = vec![0.0; samples * m];
        let trace = match &self.demapper {
            Demapper::Gaussian => {
                let mut metric = vec![0.0; samples * order];
                let mut lse0 = vec![0.0; samples * m];
                let mut lse1 = vec![0.0; samples * m];
                for s in 0..samples {
                    let a = &mut metric[s * order..(s + 1) * order];
                    for (aj, x) in a.iter_mut().zip(&points) {
                        *aj = -(received[s] - x).norm_sqr() / noise_variance;
                    }
                    for k in 0..m {
                        let l0 = log_sum_exp(a, self.bits.zeros(k));
                        let l1 = log_sum_exp(a, self.bits.ones(k));
                        lse0[s * m + k] = l0;
                        lse1[s * m + k] = l1;
                        raw_llrs[s * m + k] = l0 - l1;
                    }
                }
                DemapperTrace::Gaussian { metric, lse0, lse1 }
            }
            Demapper::Mlp(net) => {
                let inputs: Vec<f64> = received.iter().flat_map(|y| [y.re, y.im]).collect();
                let trace = net.forward_batch(inputs, samples);
                raw_llrs.copy_from_slice(trace.activations.last().expect("network has layers"));
                DemapperTrace::Mlp(trace)
            }
        };
        first_non_finite("LLR", raw_llrs.iter().copied())?;

        let llrs: Vec<f64> = raw_llrs.iter().map(|l| l.clamp(-LLR_CLIP, LLR_CLIP)).collect();
        let mut total = 0.0;
        for (s, &label) in batch.labels.iter().enumerate() {
            for k in 0..m {
                total += bit_penalty(label_bit(label, k as u32, self.m), llrs[s * m + k]);
            }
        }
        let loss = total / samples as f64;
        first_non_finite("loss", [loss])?;
        Ok(ForwardPass {
            loss,
            surrogate_gmi: m as f64 - loss,
            points,
            received,
            llrs,
            scale,
            noise_variance,
            raw_llrs,
            batch,
            trace,
        })
    }

    /// Gradient of the loss with respect to [`Autoencoder::params`].
    pub fn backward(&self, pass: &ForwardPass<'_>) -> Result<Vec<f64>> {
        let m = self.m as usize;
        let order = self.order();
        let samples = pass.batch.len();
        let inv_s = 1.0 / samples as f64;

        // d loss / d L_sk; clipped LLRs pass no gradient
        let mut grad_llr = vec![0.0; samples * m];
        for (s, &label) in pass.batch.labels.iter().enumerate() {
            for k in 0..m {
                let i = s * m + k;
                if pass.raw_llrs[i].abs() >= LLR_CLIP {
                    continue;
                }
                let sign = if label_bit(label, k as u32, self.m) == 0 { 1.0 } else { -1.0 };
                let sig = 1.0 / (1.0 + (sign * pass.llrs[i]).exp());
                grad_llr[i] = -sign * sig / std::f64::consts::LN_2 * inv_s;
            }
        }

        let mut grad = vec![0.0; self.num_params()];
        let mut grad_points = vec![Complex64::new(0.0, 0.0); order];
        let mut grad_received = vec![Complex64::new(0.0, 0.0); samples];

        match (&self.demapper, &pass.trace) {
            (Demapper::Gaussian, DemapperTrace::Gaussian { metric, lse0, lse1 }) => {
                let mut grad_metric = vec![0.0; order];
                for s in 0..samples {
                    let a = &metric[s * order..(s + 1) * order];
                    grad_metric.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..m {
                        let g = grad_llr[s * m + k];
                        if g == 0.0 {
                            continue;
                        }
                        for &j in self.bits.zeros(k) {
                            grad_metric[j] += g * (a[j] - lse0[s * m + k]).exp();
                        }
                        for &j in self.bits.ones(k) {
                            grad_metric[j] -= g * (a[j] - lse1[s * m + k]).exp();
                        }
                    }
                    // a_j = -|y - x_j|² / var
                    let y = pass.received[s];
                    for j in 0..order {
                        let coef = 2.0 * grad_metric[j] / pass.noise_variance;
                        let diff = y - pass.points[j];
                        grad_points[j] += diff * coef;
                        grad_received[s] -= diff * coef;
                    }
                }
            }
            (Demapper::Mlp(net), DemapperTrace::Mlp(trace)) => {
                let offset = 2 * order;
                let grad_in = net.backward_batch(trace, &grad_llr, samples, &mut grad[offset..]);
                for (g, pair) in grad_received.iter_mut().zip(grad_in.chunks(2)) {
                    *g = Complex64::new(pair[0], pair[1]);
                }
            }
            _ => unreachable!("trace always matches the demapper"),
        }

        // y_s = x_{label_s} + sigma z_s
        for (&label, g) in pass.batch.labels.iter().zip(&grad_received) {
            grad_points[label] += g;
        }

        // x_j = r_j s, s = (mean |r|²)^(-1/2)
        let raw = &self.mapper.raw_points;
        let projection: f64 = grad_points.iter().zip(raw).map(|(g, r)| g.re * r.re + g.im * r.im).sum();
        let shrink = pass.scale.powi(3) * projection / order as f64;
        for (j, (g, r)) in grad_points.iter().zip(raw).enumerate() {
            let gr = g * pass.scale - r * shrink;
            grad[2 * j] = gr.re;
            grad[2 * j + 1] = gr.im;
        }
        first_non_finite("gradient", grad.iter().copied())?;
        Ok(grad)
    }

    /// Loss at a flat parameter vector, for finite differences.
    pub fn loss_at(&self, flat: &[f64], batch: &Batch, noise_variance: f64) -> Result<f64> {
        let mut probe = self.clone();
        probe.set_params(flat);
        Ok(probe.forward_loss(batch, noise_variance)?.loss)
    }
}
