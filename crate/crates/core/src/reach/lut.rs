//! Transmitter look-up tables.
//!
//! ```text
//! # shapegain-lut m=2 fec_rate=3/4 n_d=2
//! # dual_pol_dummy_mask=0101
//! # table=XY
//! label_bits,i,q,dummy_mask
//! 00,7.0710678118654757e-1,7.0710678118654757e-1,01
//! ...
//! ```
//!
//! One table (`XY`) is written when both polarisations share a dummy mask,
//! otherwise an `X` table followed by a `Y` table. Coordinates use 17
//! significant digits and read back exactly.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::constellation::{Constellation, Metadata};
use crate::rate_adapt::RateAdaptPlan;
use crate::{Error, Result};

pub const LUT_HEADER: &str = "label_bits,i,q,dummy_mask";

/// One parsed table.
#[derive(Clone, Debug, PartialEq)]
pub struct LutTable {
    /// "XY", "X" or "Y".
    pub polarization: String,
    pub constellation: Constellation,
    /// Single-polarisation dummy flags.
    pub dummy_mask: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lut {
    pub m: u32,
    pub dual_pol_mask: Vec<bool>,
    pub tables: Vec<LutTable>,
}

fn mask_string(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn parse_mask(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

/// Renders the LUT for constellation `c` under `plan`.
pub fn render_lut(c: &Constellation, plan: &RateAdaptPlan) -> Result<String> {
    if plan.m != c.m() {
        return Err(Error::param(format!("plan is for m = {} but the constellation has m = {}", plan.m, c.m())));
    }
    let m = c.m() as usize;
    let x_mask = plan.pol_mask(0);
    let y_mask = plan.pol_mask(1);
    let dual: Vec<bool> = x_mask.iter().chain(&y_mask).copied().collect();

    let mut out = String::new();
    writeln!(out, "# shapegain-lut m={} fec_rate={} n_d={}", plan.m, plan.fec_rate, plan.n_d).unwrap();
    writeln!(out, "# dual_pol_dummy_mask={}", mask_string(&dual)).unwrap();
    let tables: Vec<(&str, &[bool])> = if x_mask == y_mask {
        vec![("XY", &x_mask)]
    } else {
        vec![("X", &x_mask), ("Y", &y_mask)]
    };
    for (name, mask) in tables {
        writeln!(out, "# table={name}").unwrap();
        writeln!(out, "{LUT_HEADER}").unwrap();
        let mask = mask_string(mask);
        for (label, p) in c.points().iter().enumerate() {
            writeln!(out, "{label:0m$b},{:.16e},{:.16e},{mask}", p.re, p.im).unwrap();
        }
    }
    Ok(out)
}

pub fn export_lut(c: &Constellation, plan: &RateAdaptPlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_lut(c, plan)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a LUT written by [`render_lut`].
pub fn parse_lut(text: &str) -> Result<Lut> {
    let bad = |msg: String| Error::param(format!("malformed LUT: {msg}"));
    let mut m: Option<u32> = None;
    let mut dual_pol_mask = None;
    // (marker, rows, mask) per table, in file order
    type Pending = (String, Vec<(usize, Complex64)>, Option<Vec<bool>>);
    let mut tables: Vec<Pending> = Vec::new();

    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            for field in comment.split_whitespace() {
                match field.split_once('=') {
                    Some(("m", v)) => m = Some(v.parse().map_err(|_| bad(format!("line {lineno}: bad m")))?),
                    Some(("dual_pol_dummy_mask", v)) => {
                        dual_pol_mask = Some(parse_mask(v).ok_or_else(|| bad(format!("line {lineno}: bad mask")))?)
                    }
                    Some(("table", v)) => tables.push((v.to_string(), Vec::new(), None)),
                    _ => {}
                }
            }
            continue;
        }
        if line == LUT_HEADER {
            continue;
        }
        let table = tables.last_mut().ok_or_else(|| bad(format!("line {lineno}: row before any table marker")))?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad(format!("line {lineno}: expected 4 columns")));
        }
        let label = usize::from_str_radix(cols[0], 2).map_err(|_| bad(format!("line {lineno}: bad label")))?;
        let re: f64 = cols[1].parse().map_err(|_| bad(format!("line {lineno}: bad i")))?;
        let im: f64 = cols[2].parse().map_err(|_| bad(format!("line {lineno}: bad q")))?;
        let mask = parse_mask(cols[3]).ok_or_else(|| bad(format!("line {lineno}: bad dummy mask")))?;
        match &table.2 {
            Some(existing) if *existing != mask => return Err(bad(format!("line {lineno}: mask changes within a table"))),
            _ => table.2 = Some(mask),
        }
        table.1.push((label, Complex64::new(re, im)));
    }

    let m = m.ok_or_else(|| bad("missing m".into()))?;
    let dual_pol_mask = dual_pol_mask.ok_or_else(|| bad("missing dual-pol mask".into()))?;
    if dual_pol_mask.len() != 2 * m as usize || tables.is_empty() {
        return Err(bad("mask width or table count inconsistent with m".into()));
    }
    let tables = tables
        .into_iter()
        .map(|(polarization, mut rows, mask)| {
            rows.sort_by_key(|r| r.0);
            if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
                return Err(bad(format!("table {polarization} does not list every label once")));
            }
            let constellation = Constellation::new(m, rows.into_iter().map(|r| r.1).collect(), Metadata::generator("lut"))?;
            Ok(LutTable {
                polarization,
                constellation,
                dummy_mask: mask.unwrap_or_default(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Lut {
        m,
        dual_pol_mask,
        tables,
    })
}

pub fn load_lut(path: impl AsRef<Path>) -> Result<Lut> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lut(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::uniform_qam;
    use crate::demapper::GmiReport;
    use crate::rate_adapt::{select_dummy_bits, FecRate};

    fn plan_for(per_bit: &[f64], n_d: u32) -> RateAdaptPlan {
        let r = GmiReport::from_per_bit(per_bit.to_vec(), 100, 0.0);
        select_dummy_bits(&r, n_d, FecRate::new(3, 4).unwrap()).unwrap()
    }

    #[test]
    fn qpsk_without_dummies() {
        let c = uniform_qam(2).unwrap();
        let text = render_lut(&c, &plan_for(&[1.0, 1.0], 0)).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#') && *l != LUT_HEADER).collect();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.ends_with(",00")));
        assert!(text.contains("# dual_pol_dummy_mask=0000"));
    }

    #[test]
    fn odd_plan_emits_two_tables() {
        let c = uniform_qam(2).unwrap();
        let plan = plan_for(&[0.9, 0.2], 1);
        let lut = parse_lut(&render_lut(&c, &plan).unwrap()).unwrap();
        assert_eq!(lut.tables.len(), 2);
        assert_eq!(lut.tables[0].dummy_mask, vec![false, true]);
        assert_eq!(lut.tables[1].dummy_mask, vec![false, false]);
        assert_eq!(lut.dual_pol_mask, vec![false, true, false, false]);
    }

    #[test]
    fn round_trip_exact_and_stable() {
        let c = uniform_qam(4).unwrap();
        let plan = plan_for(&[0.9, 0.8, 0.3, 0.1], 2);
        let text = render_lut(&c, &plan).unwrap();
        let lut = parse_lut(&text).unwrap();
        assert_eq!(lut.tables[0].constellation.points(), c.points());
        assert_eq!(render_lut(&lut.tables[0].constellation, &plan).unwrap(), text);
    }

    #[test]
    fn mismatched_m_rejected() {
        let c = uniform_qam(4).unwrap();
        assert!(matches!(render_lut(&c, &plan_for(&[1.0, 1.0], 0)), Err(Error::Parameter(_))));
    }
}
