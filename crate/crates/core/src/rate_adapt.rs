//! Dummy-bit rate adaptation.
//!
//! A dual-polarisation symbol carries `2m` bit levels (X: `0..m`, Y:
//! `m..2m`). Placing random dummy bits on `n_d` of them leaves a net rate of
//! `(2m - n_d) R` information bits per dual-polarisation symbol for an FEC of
//! rate `R`. The dummy levels are the ones with the smallest per-bit GMI.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::demapper::GmiReport;
use crate::{Error, Result};

/// FEC code rate `K / N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FecRate {
    k: u32,
    n: u32,
}

impl FecRate {
    pub fn new(k: u32, n: u32) -> Result<Self> {
        if k == 0 || n == 0 || k > n {
            return Err(Error::param(format!("FEC rate must satisfy 0 < K <= N, got {k}/{n}")));
        }
        Ok(FecRate { k, n })
    }

    pub fn value(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

impl fmt::Display for FecRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.k, self.n)
    }
}

impl FromStr for FecRate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::param(format!("FEC rate must look like K/N, got {s:?}")))
        };
        match s.split_once('/') {
            Some((k, n)) => FecRate::new(parse(k)?, parse(n)?),
            None if s.trim() == "1" => FecRate::new(1, 1),
            None => Err(Error::param(format!("FEC rate must look like K/N, got {s:?}"))),
        }
    }
}

impl Serialize for FecRate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FecRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `(2m - n_d) R`.
pub fn net_rate(m: u32, n_d: u32, fec_rate: FecRate) -> Result<f64> {
    if n_d > 2 * m {
        return Err(Error::param(format!("n_d = {n_d} exceeds the 2m = {} dual-pol bit levels", 2 * m)));
    }
    Ok((2 * m - n_d) as f64 * fec_rate.value())
}

/// Which dual-polarisation bit levels carry dummy bits, and what is left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateAdaptPlan {
    pub m: u32,
    pub fec_rate: FecRate,
    pub n_d: u32,
    /// Ascending indices into `0..2m`.
    pub dummy_positions: Vec<u32>,
    pub net_rate: f64,
    /// GMI of the data-carrying levels, both polarisations.
    pub data_gmi: f64,
    /// Data GMI of polarisation X and Y.
    pub per_pol_data_gmi: (f64, f64),
}

impl RateAdaptPlan {
    pub fn is_feasible(&self) -> bool {
        self.data_gmi >= self.net_rate
    }

    pub fn is_dummy(&self, dual_pol_position: u32) -> bool {
        self.dummy_positions.binary_search(&dual_pol_position).is_ok()
    }

    /// Dummy mask of one polarisation (`0` = X, `1` = Y) as `m` flags.
    pub fn pol_mask(&self, pol: u32) -> Vec<bool> {
        (0..self.m).map(|k| self.is_dummy(pol * self.m + k)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: RateAdaptPlan = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if plan.dummy_positions.len() != plan.n_d as usize || plan.dummy_positions.iter().any(|&p| p >= 2 * plan.m) {
            return Err(Error::format(path, "dummy positions inconsistent with n_d and m"));
        }
        Ok(plan)
    }
}

/// Indices of the `count` smallest values, ties by lowest index, ascending.
fn weakest(values: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut chosen = order[..count].to_vec();
    chosen.sort_unstable();
    chosen
}

fn build_plan(report: &GmiReport, x_dummies: usize, y_dummies: usize, fec_rate: FecRate) -> Result<RateAdaptPlan> {
    let m = report.m();
    let (x, y) = report.per_bit_dualpol.split_at(m);
    let x_pick = weakest(x, x_dummies);
    let y_pick = weakest(y, y_dummies);
    let data = |vals: &[f64], pick: &[usize]| -> f64 {
        vals.iter().enumerate().filter(|(i, _)| !pick.contains(i)).map(|(_, v)| v).sum()
    };
    let per_pol = (data(x, &x_pick), data(y, &y_pick));
    let dummy_positions: Vec<u32> = x_pick
        .iter()
        .map(|&i| i as u32)
        .chain(y_pick.iter().map(|&i| (m + i) as u32))
        .collect();
    let n_d = dummy_positions.len() as u32;
    Ok(RateAdaptPlan {
        m: m as u32,
        fec_rate,
        n_d,
        dummy_positions,
        net_rate: net_rate(m as u32, n_d, fec_rate)?,
        data_gmi: per_pol.0 + per_pol.1,
        per_pol_data_gmi: per_pol,
    })
}

/// Puts `n_d` dummy bits on the weakest bit levels.
///
/// Even `n_d` splits evenly between polarisations. Odd `n_d` gives the extra
/// dummy to whichever polarisation leaves the two data GMIs closest, X on a
/// tie.
pub fn select_dummy_bits(report: &GmiReport, n_d: u32, fec_rate: FecRate) -> Result<RateAdaptPlan> {
    let m = report.m();
    if report.per_bit_dualpol.len() != 2 * m {
        return Err(Error::param("report must carry 2m dual-polarisation levels"));
    }
    if n_d as usize > 2 * m {
        return Err(Error::param(format!("n_d = {n_d} exceeds the 2m = {} dual-pol bit levels", 2 * m)));
    }
    let half = n_d as usize / 2;
    if n_d.is_multiple_of(2) {
        return build_plan(report, half, half, fec_rate);
    }
    let extra_x = build_plan(report, half + 1, half, fec_rate)?;
    let extra_y = build_plan(report, half, half + 1, fec_rate)?;
    let imbalance = |p: &RateAdaptPlan| (p.per_pol_data_gmi.0 - p.per_pol_data_gmi.1).abs();
    Ok(if imbalance(&extra_y) < imbalance(&extra_x) {
        extra_y
    } else {
        extra_x
    })
}

/// The feasible plan with the largest net rate.
///
/// A plan is feasible when its data GMI is at least its net rate. Every
/// `n_d` is tried; `n_d = 2m` (net rate zero) is always feasible.
pub fn best_plan(report: &GmiReport, fec_rate: FecRate) -> Result<RateAdaptPlan> {
    let m = report.m() as u32;
    let mut best: Option<RateAdaptPlan> = None;
    for n_d in 0..=2 * m {
        let plan = select_dummy_bits(report, n_d, fec_rate)?;
        if plan.is_feasible() && best.as_ref().is_none_or(|b| plan.net_rate > b.net_rate) {
            best = Some(plan);
        }
    }
    match best {
        Some(plan) => Ok(plan),
        None => select_dummy_bits(report, 2 * m, fec_rate),
    }
}

/// A dual-polarisation symbol: X and Y labels.
pub type LabelPair = (usize, usize);

/// Frames data bits into dual-polarisation label pairs, filling dummy levels
/// with uniform random bits.
///
/// Each symbol consumes `2m - n_d` data bits, placed on the non-dummy levels
/// in index order.
pub fn assemble_labels<R: Rng + ?Sized>(data_bits: &[u8], plan: &RateAdaptPlan, rng: &mut R) -> Result<Vec<LabelPair>> {
    let m = plan.m;
    let per_symbol = (2 * m - plan.n_d) as usize;
    if per_symbol == 0 {
        if data_bits.is_empty() {
            return Ok(Vec::new());
        }
        return Err(Error::Framing("plan carries no data bits".into()));
    }
    if !data_bits.len().is_multiple_of(per_symbol) {
        return Err(Error::Framing(format!(
            "{} data bits do not fill whole symbols of {per_symbol} bits",
            data_bits.len()
        )));
    }
    let dummy: Vec<bool> = (0..2 * m).map(|p| plan.is_dummy(p)).collect();
    let mut out = Vec::with_capacity(data_bits.len() / per_symbol);
    for chunk in data_bits.chunks(per_symbol) {
        let mut data = chunk.iter();
        let mut word = 0usize;
        for &is_dummy in &dummy {
            let bit = if is_dummy {
                rng.random::<bool>() as usize
            } else {
                (*data.next().expect("chunk sized to the data levels") & 1) as usize
            };
            word = (word << 1) | bit;
        }
        let y_mask = (1usize << m) - 1;
        out.push((word >> m, word & y_mask));
    }
    Ok(out)
}

/// Inverse of [`assemble_labels`]: drops the dummy levels.
pub fn strip_dummies(symbols: &[LabelPair], plan: &RateAdaptPlan) -> Vec<u8> {
    let m = plan.m;
    let mut out = Vec::with_capacity(symbols.len() * (2 * m - plan.n_d) as usize);
    for &(x, y) in symbols {
        let word = (x << m) | y;
        for p in 0..2 * m {
            if !plan.is_dummy(p) {
                out.push(((word >> (2 * m - 1 - p)) & 1) as u8);
            }
        }
    }
    out
}
