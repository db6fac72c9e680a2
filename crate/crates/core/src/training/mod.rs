//! End-to-end constellation learning.
//!
//! [`train`] runs a fixed number of Adam steps on the bit-metric surrogate
//! loss of an [`Autoencoder`]: a direct table of `M` trainable points, power
//! normalised in the forward pass, followed by either the exact Gaussian
//! demapper or an MLP. Noise is drawn fresh every iteration and every label
//! appears equally often in each batch.
//!
//! When the target is a fiber link, the noise variance depends on the
//! constellation's own moments through the NLIN term. It is re-evaluated
//! every `refresh_every` iterations and held constant in between; the
//! channel model itself is not differentiated.

mod adam;
mod gradcheck;
mod mlp;
mod model;

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use adam::{adam_step, AdamHyper, AdamState};
pub use gradcheck::{check_gradient, GradientCheckReport, GradientProbe, FD_STEP};
pub use mlp::{Activation, Dense, Mlp, MlpSpec};
pub use model::{Autoencoder, Batch, Demapper, ForwardPass, MapperParams};

use crate::channel::{effective_snr, linear_to_db, optimal_launch_power, standard_complex_normal, LinkConfig};
use crate::constellation::{moments, normalize, uniform_qam, Constellation, Metadata};
use crate::rng::{stream, Stream};
use crate::{Error, Result};

/// Launch power of a link target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LaunchPower {
    Fixed(f64),
    /// Re-optimised for the constellation's current moments.
    Optimal,
}

impl Serialize for LaunchPower {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LaunchPower::Fixed(p) => s.serialize_f64(*p),
            LaunchPower::Optimal => s.serialize_str("optimal"),
        }
    }
}

impl<'de> Deserialize<'de> for LaunchPower {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(LaunchPower::Fixed(p)),
            Raw::Str(s) if s == "optimal" => Ok(LaunchPower::Optimal),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("launch power must be a number or \"optimal\", got {s:?}"))),
        }
    }
}

/// What the constellation is trained for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Snr { snr_db: f64 },
    Link { link: LinkConfig, launch_power: LaunchPower },
}

impl Target {
    /// Noise variance seen by constellation `c` under this target, with the
    /// launch power used (if any).
    pub fn resolve(&self, c: &Constellation) -> Result<(f64, Option<f64>)> {
        match self {
            Target::Snr { snr_db } => {
                let ch = crate::channel::EffectiveChannel::from_snr_db(*snr_db)?;
                Ok((ch.noise_variance, None))
            }
            Target::Link { link, launch_power } => {
                let mom = moments(c);
                let (p, ch) = match launch_power {
                    LaunchPower::Fixed(p) => (*p, effective_snr(link, *p, &mom)?),
                    LaunchPower::Optimal => optimal_launch_power(link, &mom)?,
                };
                Ok((ch.noise_variance, Some(p)))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemapperMode {
    #[default]
    Gaussian,
    Mlp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Random,
    #[default]
    Qam,
}

/// Hyperparameters that fully determine a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub m: u32,
    pub target: Target,
    pub demapper_mode: DemapperMode,
    pub mlp: MlpSpec,
    pub iterations: u64,
    /// Symbols per batch; a multiple of `2^m`.
    pub batch_symbols: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub init: Init,
    /// Standard deviation of the jitter added to a QAM initialisation.
    pub init_jitter: f64,
    /// Iterations between noise-variance refreshes for link targets.
    pub refresh_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let hyper = AdamHyper::default();
        TrainConfig {
            m: 4,
            target: Target::Snr { snr_db: 10.0 },
            demapper_mode: DemapperMode::Gaussian,
            mlp: MlpSpec::default(),
            iterations: 2000,
            batch_symbols: 1024,
            learning_rate: hyper.learning_rate,
            adam_beta1: hyper.beta1,
            adam_beta2: hyper.beta2,
            adam_eps: hyper.eps,
            seed: 0,
            init: Init::Qam,
            init_jitter: 0.01,
            refresh_every: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > crate::constellation::MAX_BITS {
            return Err(Error::param(format!("m must be in 1..={}, got {}", crate::constellation::MAX_BITS, self.m)));
        }
        let order = 1usize << self.m;
        if self.batch_symbols < order || !self.batch_symbols.is_multiple_of(order) {
            return Err(Error::param(format!("batch_symbols must be a positive multiple of M = {order}")));
        }
        if !(self.learning_rate >= 0.0) || !(self.init_jitter >= 0.0) {
            return Err(Error::param("learning rate and jitter must be non-negative"));
        }
        if self.refresh_every == 0 {
            return Err(Error::param("refresh_every must be at least 1"));
        }
        if self.demapper_mode == DemapperMode::Mlp && self.mlp.hidden.contains(&0) {
            return Err(Error::param("MLP hidden layers must be non-empty"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: u64,
    /// Surrogate penalty in bits per symbol.
    pub loss: f64,
    pub surrogate_gmi: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<TrainRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,loss,surrogate_gmi,grad_norm")?;
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.iteration, r.loss, r.surrogate_gmi, r.grad_norm)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Initial mapper table.
pub fn init_mapper<R: Rng + ?Sized>(config: &TrainConfig, rng: &mut R) -> Result<MapperParams> {
    config.validate()?;
    let order = 1usize << config.m;
    let raw: Vec<Complex64> = match config.init {
        Init::Random => (0..order).map(|_| standard_complex_normal(rng)).collect(),
        Init::Qam => {
            let qam = uniform_qam(config.m)?;
            qam.points()
                .iter()
                .map(|&p| {
                    if config.init_jitter > 0.0 {
                        p + standard_complex_normal(rng) * (config.init_jitter * std::f64::consts::SQRT_2)
                    } else {
                        p
                    }
                })
                .collect()
        }
    };
    let c = normalize(&Constellation::new(config.m, raw, Metadata::default())?)?;
    if c.points().iter().all(|p| *p == c.point(0)) {
        return Err(Error::Degenerate("initial mapper has no two distinct points".into()));
    }
    Ok(MapperParams {
        raw_points: c.points().to_vec(),
    })
}

/// Builds the initial trainable system and the stream that drives the run.
pub fn init_autoencoder(config: &TrainConfig) -> Result<(Autoencoder, Stream)> {
    let mut rng = stream(config.seed);
    let mapper = init_mapper(config, &mut rng)?;
    let demapper = match config.demapper_mode {
        DemapperMode::Gaussian => Demapper::Gaussian,
        DemapperMode::Mlp => Demapper::Mlp(Mlp::new(2, &config.mlp.hidden, config.m as usize, &mut rng)),
    };
    Ok((Autoencoder::new(config.m, mapper, demapper)?, rng))
}

/// Finite-difference check of [`Autoencoder::backward`] on one batch.
pub fn gradient_check<R: Rng + ?Sized>(
    model: &Autoencoder,
    batch: &Batch,
    noise_variance: f64,
    probes: usize,
    tolerance: f64,
    rng: &mut R,
) -> Result<GradientCheckReport> {
    let pass = model.forward_loss(batch, noise_variance)?;
    let analytic = model.backward(&pass)?;
    let params = model.params();
    check_gradient(&params, &analytic, |p| model.loss_at(p, batch, noise_variance), probes, tolerance, rng)
}

fn constellation_of(model: &Autoencoder) -> Result<Constellation> {
    let (points, _) = model.mapper.normalized();
    Constellation::new(model.m(), points, Metadata::generator("autoencoder"))
}

/// Trains a constellation according to `config`.
pub fn train(config: &TrainConfig) -> Result<(Constellation, TrainHistory)> {
    let (mut model, mut rng) = init_autoencoder(config)?;
    let hyper = config.adam();
    let mut params = model.params();
    let mut state = AdamState::new(params.len());
    let mut history = TrainHistory::default();

    let (mut noise_variance, mut launch_power) = config.target.resolve(&constellation_of(&model)?)?;
    for it in 0..config.iterations {
        if it > 0 && it % config.refresh_every == 0 && matches!(config.target, Target::Link { .. }) {
            (noise_variance, launch_power) = config.target.resolve(&constellation_of(&model)?)?;
        }
        let batch = Batch::sample(model.order(), config.batch_symbols, &mut rng);
        let step = || -> Result<(f64, f64, Vec<f64>)> {
            let pass = model.forward_loss(&batch, noise_variance)?;
            let grads = model.backward(&pass)?;
            Ok((pass.loss, pass.surrogate_gmi, grads))
        };
        let (loss, surrogate_gmi, grads) = step().map_err(|e| match e {
            Error::Numerical(msg) => Error::Numerical(format!("iteration {it}: {msg}")),
            other => other,
        })?;
        let grad_norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        history.records.push(TrainRecord {
            iteration: it,
            loss,
            surrogate_gmi,
            grad_norm,
        });
        adam_step(&mut params, &grads, &mut state, &hyper);
        model.set_params(&params);
    }

    let mut out = constellation_of(&model)?;
    if matches!(config.target, Target::Link { .. }) {
        (noise_variance, launch_power) = config.target.resolve(&out)?;
    }
    out.metadata.trained_snr_db = Some(linear_to_db(noise_variance.recip()));
    out.metadata.seed = Some(config.seed);
    let extra = &mut out.metadata.extra;
    let mode = match config.demapper_mode {
        DemapperMode::Gaussian => "gaussian",
        DemapperMode::Mlp => "mlp",
    };
    extra.insert("demapper_mode".into(), mode.into());
    extra.insert("noise_variance".into(), noise_variance.into());
    extra.insert("iterations".into(), config.iterations.into());
    if let Some(p) = launch_power {
        extra.insert("launch_power".into(), p.into());
    }
    Ok((out, history))
}
