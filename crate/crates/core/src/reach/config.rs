use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::LinkConfig;
use crate::constellation::DEFAULT_MOM_EPSILON;
use crate::training::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ae,
    Qam,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Ae => "ae",
            Scheme::Qam => "qam",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    Fixed,
    #[default]
    Optimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Span counts to visit, strictly increasing.
    pub span_grid: Vec<u32>,
    pub power_mode: PowerMode,
    /// Launch power used when `power_mode` is fixed.
    pub launch_power: f64,
    pub schemes: Vec<Scheme>,
    /// QAM orders (bits per symbol) for the baseline; empty means `{m, m-1}`.
    pub qam_m_list: Vec<u32>,
    /// Let the QAM baseline choose dummy bits like the learned scheme. When
    /// off, QAM rows use `n_d = 0` (or `2m` if even that is infeasible).
    pub qam_dummy_bits: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            span_grid: vec![4, 8, 12, 16, 20, 24],
            power_mode: PowerMode::Optimal,
            launch_power: 0.2,
            schemes: vec![Scheme::Ae, Scheme::Qam],
            qam_m_list: Vec::new(),
            qam_dummy_bits: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_samples: u64,
    pub seed: u64,
    pub epsilon_mom: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_samples: 200_000,
            seed: 1,
            epsilon_mom: DEFAULT_MOM_EPSILON,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub results_csv: Option<String>,
    /// Where trained sweep constellations are written, if anywhere.
    pub constellation_dir: Option<String>,
}

/// The whole run configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub link: LinkConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.train.validate()?;
        let grid = &self.sweep.span_grid;
        if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("span_grid must be non-empty, positive and strictly increasing"));
        }
        if self.sweep.power_mode == PowerMode::Fixed && !(self.sweep.launch_power > 0.0) {
            return Err(Error::param("fixed power mode needs a positive launch_power"));
        }
        if self.sweep.qam_m_list.iter().any(|&m| m == 0 || m > crate::constellation::MAX_BITS) {
            return Err(Error::param("qam_m_list entries must be valid bits-per-symbol values"));
        }
        if !(self.eval.epsilon_mom > 0.0) {
            return Err(Error::param("epsilon_mom must be positive"));
        }
        if self.eval.n_samples == 0 {
            return Err(Error::param("eval.n_samples must be positive"));
        }
        Ok(())
    }

    /// QAM orders used by the baseline.
    pub fn qam_orders(&self) -> Vec<u32> {
        if !self.sweep.qam_m_list.is_empty() {
            return self.sweep.qam_m_list.clone();
        }
        let m = self.train.m;
        if m > 1 {
            vec![m, m - 1]
        } else {
            vec![m]
        }
    }
}
