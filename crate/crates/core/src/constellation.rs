//! Bit-labelled constellations.
//!
//! A [`Constellation`] stores `M = 2^m` complex points in label order: the
//! point at index `i` is the symbol transmitted for the label whose unsigned
//! integer value is `i`. Bit position 0 is the most significant label bit.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::{Error, Result};

/// Largest supported label width.
pub const MAX_BITS: u32 = 10;

/// Default single-linkage threshold for many-to-one cluster detection.
pub const DEFAULT_MOM_EPSILON: f64 = 0.01;

const FILE_VERSION: u32 = 1;

/// Returns bit `k` (0 = most significant) of an `m`-bit label.
#[inline]
pub fn label_bit(label: usize, k: u32, m: u32) -> u8 {
    ((label >> (m - 1 - k)) & 1) as u8
}

/// Provenance record carried alongside the points.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default)]
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Anything else a producer wants to record.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Metadata {
    pub fn generator(name: impl Into<String>) -> Self {
        Metadata {
            generator: name.into(),
            ..Default::default()
        }
    }
}

/// A bit-labelled constellation of `2^m` points.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    m: u32,
    points: Vec<Complex64>,
    pub metadata: Metadata,
}

impl Constellation {
    /// Builds a constellation from points in label order.
    ///
    /// The points are not rescaled; call [`normalize`] for unit average power.
    pub fn new(m: u32, points: Vec<Complex64>, metadata: Metadata) -> Result<Self> {
        if m == 0 || m > MAX_BITS {
            return Err(Error::param(format!("bits per symbol must be in 1..={MAX_BITS}, got {m}")));
        }
        if points.len() != 1usize << m {
            return Err(Error::param(format!(
                "expected {} points for m = {m}, got {}",
                1usize << m,
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::param(format!("point for label {i} is not finite")));
        }
        Ok(Constellation { m, points, metadata })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Number of points, `2^m`.
    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Average power `(1/M) Σ |x|²`.
    pub fn average_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order() as f64
    }

    /// Serialises to the constellation JSON document.
    pub fn to_json(&self) -> Result<String> {
        let file = ConstellationFile {
            version: FILE_VERSION,
            m: self.m,
            points: self
                .points
                .iter()
                .map(|p| Ok([raw_float(p.re)?, raw_float(p.im)?]))
                .collect::<Result<Vec<_>>>()?,
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a constellation JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConstellationInput = serde_json::from_str(text)?;
        if file.version != FILE_VERSION {
            return Err(Error::param(format!("unsupported constellation file version {}", file.version)));
        }
        let points = file.points.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        Constellation::new(file.m, points, file.metadata)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Constellation::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::format(path, j.to_string()),
            other => other,
        })
    }
}

// Coordinates are written with 17 significant digits so every f64 survives
// a save/load cycle exactly.
fn raw_float(x: f64) -> Result<Box<RawValue>> {
    Ok(RawValue::from_string(format!("{x:.16e}"))?)
}

#[derive(Serialize)]
struct ConstellationFile {
    version: u32,
    m: u32,
    points: Vec<[Box<RawValue>; 2]>,
    metadata: Metadata,
}

#[derive(Deserialize)]
struct ConstellationInput {
    version: u32,
    m: u32,
    points: Vec<[f64; 2]>,
    #[serde(default)]
    metadata: Metadata,
}

/// Power moments of a constellation under a uniform label distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// Mean `|x|²`.
    pub mu2: f64,
    /// `μ4 / μ2²`.
    pub mu4_hat: f64,
    /// `μ6 / μ2³`.
    pub mu6_hat: f64,
}

/// A group of labels whose points (nearly) coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct MomCluster {
    /// Member labels in ascending order.
    pub member_labels: Vec<usize>,
    pub centroid: Complex64,
    /// Bit positions that differ between members, ascending.
    pub ambiguous_bit_positions: Vec<u32>,
    /// Bit positions shared by all members, ascending.
    pub shared_bit_positions: Vec<u32>,
}

impl MomCluster {
    pub fn len(&self) -> usize {
        self.member_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_labels.is_empty()
    }
}

fn gray_inverse(mut g: usize) -> usize {
    let mut v = g;
    while g > 0 {
        g >>= 1;
        v ^= g;
    }
    v
}

/// Amplitude of the level selected by Gray word `word` on an axis with
/// `levels` levels: position 0 is the most positive level.
fn axis_level(word: usize, levels: usize) -> f64 {
    let pos = gray_inverse(word);
    (levels as f64 - 1.0) - 2.0 * pos as f64
}

/// Gray-labelled rectangular grid: the first `i_bits` label bits pick the
/// in-phase level, the remaining bits the quadrature level.
fn rectangular_gray(m: u32, i_bits: u32) -> Vec<Complex64> {
    let q_bits = m - i_bits;
    let (i_levels, q_levels) = (1usize << i_bits, 1usize << q_bits);
    (0..1usize << m)
        .map(|label| {
            let i_word = label >> q_bits;
            let q_word = label & (q_levels - 1);
            let q = if q_bits == 0 { 0.0 } else { axis_level(q_word, q_levels) };
            Complex64::new(axis_level(i_word, i_levels), q)
        })
        .collect()
}

/// Cross constellation for odd `m ≥ 5`: a Gray-labelled `2b × b` rectangle
/// whose outermost in-phase columns are folded into the vacant top and
/// bottom rows of the cross.
fn cross_quasi_gray(m: u32) -> Vec<Complex64> {
    let b = 1i64 << ((m - 1) / 2);
    let side = 3 * b / 2;
    rectangular_gray(m, m.div_ceil(2))
        .into_iter()
        .map(|p| {
            let (i, q) = (p.re as i64, p.im as i64);
            if i.abs() < side {
                return p;
            }
            let column = (i.abs() - side - 1) / 2;
            let row = (q.abs() - 1) / 2;
            let new_i = i.signum() * (1 + 2 * row);
            let new_q = q.signum() * (b + 1 + 2 * column);
            Complex64::new(new_i as f64, new_q as f64)
        })
        .collect()
}

/// Uniform QAM baseline with unit average power.
///
/// Even `m` gives square QAM with per-axis binary-reflected Gray labels. Odd
/// `m ≥ 5` gives a cross constellation with a quasi-Gray labelling; `m = 1`
/// and `m = 3` use the `2^⌈m/2⌉ × 2^⌊m/2⌋` Gray rectangle (BPSK and 8-QAM).
pub fn uniform_qam(m: u32) -> Result<Constellation> {
    if m == 0 || m > MAX_BITS {
        return Err(Error::param(format!("uniform QAM needs 1 <= m <= {MAX_BITS}, got {m}")));
    }
    let points = if m.is_multiple_of(2) || m < 5 {
        rectangular_gray(m, m.div_ceil(2))
    } else {
        cross_quasi_gray(m)
    };
    let c = Constellation::new(m, points, Metadata::generator(format!("uniform_qam_{}", 1usize << m)))?;
    normalize(&c)
}

/// Rescales by one positive factor so the average power is 1.
pub fn normalize(c: &Constellation) -> Result<Constellation> {
    let power = c.average_power();
    if power <= 0.0 || !power.is_finite() {
        return Err(Error::Degenerate("cannot normalise a constellation with zero power".into()));
    }
    let scale = power.sqrt().recip();
    let mut out = c.clone();
    out.points.iter_mut().for_each(|p| *p *= scale);
    Ok(out)
}

pub fn moments(c: &Constellation) -> Moments {
    let n = c.order() as f64;
    let (mut s2, mut s4, mut s6) = (0.0, 0.0, 0.0);
    for p in c.points() {
        let r2 = p.norm_sqr();
        s2 += r2;
        s4 += r2 * r2;
        s6 += r2 * r2 * r2;
    }
    let mu2 = s2 / n;
    Moments {
        mu2,
        mu4_hat: (s4 / n) / (mu2 * mu2),
        mu6_hat: (s6 / n) / (mu2 * mu2 * mu2),
    }
}

/// Smallest pairwise Euclidean distance; zero when two points coincide.
pub fn min_distance(c: &Constellation) -> f64 {
    let pts = c.points();
    let mut best = f64::INFINITY;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.min((a - b).norm());
        }
    }
    best
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage clusters of points lying within `epsilon` of each other.
///
/// Only clusters with at least two members are returned, largest first, ties
/// by smallest member label.
pub fn detect_mom_clusters(c: &Constellation, epsilon: f64) -> Result<Vec<MomCluster>> {
    if !(epsilon > 0.0) {
        return Err(Error::param(format!("cluster threshold must be positive, got {epsilon}")));
    }
    let pts = c.points();
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if (pts[i] - pts[j]).norm() <= epsilon {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for label in 0..pts.len() {
        let root = find(&mut parent, label);
        groups.entry(root).or_default().push(label);
    }

    let m = c.m();
    let mut clusters: Vec<MomCluster> = groups
        .into_values()
        .filter(|members| members.len() >= 2)
        .map(|members| {
            let centroid = members.iter().map(|&l| pts[l]).sum::<Complex64>() / members.len() as f64;
            let varying = members.iter().fold(0usize, |acc, &l| acc | (l ^ members[0]));
            let (ambiguous, shared): (Vec<u32>, Vec<u32>) =
                (0..m).partition(|&k| label_bit(varying, k, m) == 1);
            MomCluster {
                member_labels: members,
                centroid,
                ambiguous_bit_positions: ambiguous,
                shared_bit_positions: shared,
            }
        })
        .collect();
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a.member_labels[0].cmp(&b.member_labels[0])));
    Ok(clusters)
}
