//! Net rate versus distance for learned and uniform constellations.

use std::io::Write;
use std::path::Path;

use super::config::{PowerMode, RunConfig, Scheme};
use crate::channel::{effective_snr, optimal_launch_power, EffectiveChannel, LinkConfig};
use crate::constellation::{moments, uniform_qam, Constellation};
use crate::demapper::{per_bit_gmi_mc, GmiReport};
use crate::rate_adapt::{best_plan, select_dummy_bits, FecRate, RateAdaptPlan};
use crate::rng::{derive_seed, stream};
use crate::training::{train, LaunchPower, Target};
use crate::{Error, Result};

/// Results CSV header.
pub const RESULTS_HEADER: &str = "scheme,n_spans,distance_km,launch_power,snr_eff_db,n_d,data_gmi,net_rate,feasible";

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "SHAPEGAIN_THREADS";

/// One (scheme, distance) operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub n_spans: u32,
    pub distance_km: f64,
    pub launch_power: f64,
    pub snr_eff_db: f64,
    pub n_d: u32,
    pub data_gmi: f64,
    pub net_rate: f64,
    pub feasible: bool,
    /// Bits per symbol of the constellation behind the row (not in the CSV).
    pub m: u32,
    /// Standard error of the dual-polarisation GMI total (not in the CSV).
    pub gmi_stderr: f64,
}

/// Rows plus the grid points that failed under `keep_going`.
#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<Error>,
}

/// Everything computed at one operating point, for callers that want more
/// than the row.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub constellation: Constellation,
    pub launch_power: f64,
    pub channel: EffectiveChannel,
    pub report: GmiReport,
    pub plan: RateAdaptPlan,
}

/// Launch power for constellation `c` on `link` under the sweep's power mode.
pub fn resolve_power(config: &RunConfig, link: &LinkConfig, c: &Constellation) -> Result<(f64, EffectiveChannel)> {
    let mom = moments(c);
    match config.sweep.power_mode {
        PowerMode::Fixed => {
            let p = config.sweep.launch_power;
            Ok((p, effective_snr(link, p, &mom)?))
        }
        PowerMode::Optimal => optimal_launch_power(link, &mom),
    }
}

/// Plan restricted to plain transmission (`n_d = 0`) or nothing (`n_d = 2m`).
fn plain_plan(report: &GmiReport, fec_rate: FecRate) -> Result<RateAdaptPlan> {
    let full = select_dummy_bits(report, 0, fec_rate)?;
    if full.is_feasible() {
        Ok(full)
    } else {
        select_dummy_bits(report, 2 * report.m() as u32, fec_rate)
    }
}

fn eval_seed(config: &RunConfig, n_spans: u32) -> u64 {
    derive_seed(config.eval.seed, n_spans as u64)
}

/// Evaluates constellation `c` at `n_spans`; the same routine backs both
/// schemes.
pub fn evaluate_point(config: &RunConfig, c: &Constellation, n_spans: u32, allow_dummies: bool) -> Result<Evaluation> {
    let link = config.link.with_spans(n_spans);
    let (launch_power, channel) = resolve_power(config, &link, c)?;
    let mut rng = stream(eval_seed(config, n_spans));
    let report = per_bit_gmi_mc(c, channel.noise_variance, config.eval.n_samples, &mut rng)?;
    let plan = if allow_dummies {
        best_plan(&report, link.fec_rate)?
    } else {
        plain_plan(&report, link.fec_rate)?
    };
    Ok(Evaluation {
        constellation: c.clone(),
        launch_power,
        channel,
        report,
        plan,
    })
}

fn row_from(scheme: Scheme, config: &RunConfig, n_spans: u32, ev: &Evaluation) -> SweepRow {
    SweepRow {
        scheme,
        n_spans,
        distance_km: n_spans as f64 * config.link.span_length_km,
        launch_power: ev.launch_power,
        snr_eff_db: ev.channel.snr_db(),
        n_d: ev.plan.n_d,
        data_gmi: ev.plan.data_gmi,
        net_rate: ev.plan.net_rate,
        feasible: ev.plan.is_feasible(),
        m: ev.constellation.m(),
        gmi_stderr: ev.report.stderr_dualpol(),
    }
}

/// Trains the learned constellation for one grid point.
pub fn train_for_spans(config: &RunConfig, n_spans: u32) -> Result<Constellation> {
    let mut tc = config.train.clone();
    tc.seed = derive_seed(config.train.seed, n_spans as u64);
    tc.target = Target::Link {
        link: config.link.with_spans(n_spans),
        launch_power: match config.sweep.power_mode {
            PowerMode::Fixed => LaunchPower::Fixed(config.sweep.launch_power),
            PowerMode::Optimal => LaunchPower::Optimal,
        },
    };
    Ok(train(&tc)?.0)
}

/// Computes one row; for "ae" also returns the trained constellation.
pub fn sweep_point(config: &RunConfig, scheme: Scheme, n_spans: u32) -> Result<(SweepRow, Option<Constellation>)> {
    let wrap = |e: Error| Error::AtGridPoint {
        scheme: scheme.name().into(),
        n_spans,
        source: Box::new(e),
    };
    match scheme {
        Scheme::Ae => {
            let c = train_for_spans(config, n_spans).map_err(wrap)?;
            let ev = evaluate_point(config, &c, n_spans, true).map_err(wrap)?;
            Ok((row_from(scheme, config, n_spans, &ev), Some(c)))
        }
        Scheme::Qam => {
            let mut best: Option<SweepRow> = None;
            for m in config.qam_orders() {
                let c = uniform_qam(m).map_err(wrap)?;
                let ev = evaluate_point(config, &c, n_spans, config.sweep.qam_dummy_bits).map_err(wrap)?;
                let row = row_from(scheme, config, n_spans, &ev);
                if best.as_ref().is_none_or(|b| row.net_rate > b.net_rate) {
                    best = Some(row);
                }
            }
            Ok((best.ok_or_else(|| wrap(Error::param("no QAM orders to evaluate")))?, None))
        }
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse::<usize>().ok().filter(|&n| n > 1)
}

/// Runs the full sweep. Rows come back ordered by (scheme, n_spans).
///
/// With `keep_going`, failing grid points are collected in
/// [`SweepOutcome::failures`] instead of aborting the sweep.
pub fn run_sweep(config: &RunConfig, keep_going: bool) -> Result<SweepOutcome> {
    config.validate()?;
    let mut schemes = config.sweep.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let tasks: Vec<(Scheme, u32)> = schemes
        .iter()
        .flat_map(|&s| config.sweep.span_grid.iter().map(move |&n| (s, n)))
        .collect();

    let run = |&(scheme, n): &(Scheme, u32)| -> Result<SweepRow> {
        let (row, trained) = sweep_point(config, scheme, n)?;
        if let (Some(dir), Some(c)) = (&config.output.constellation_dir, trained) {
            let path = Path::new(dir).join(format!("ae_{n:03}_spans.json"));
            c.save(&path).map_err(|e| Error::AtGridPoint {
                scheme: scheme.name().into(),
                n_spans: n,
                source: Box::new(e),
            })?;
        }
        Ok(row)
    };

    let results: Vec<Result<SweepRow>> = match thread_cap() {
        Some(threads) => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Capability(format!("cannot start worker pool: {e}")))?;
            pool.install(|| tasks.par_iter().map(run).collect())
        }
        None => tasks.iter().map(run).collect(),
    };

    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) if keep_going => failures.push(e),
            Err(e) => return Err(e),
        }
    }
    Ok(SweepOutcome { rows, failures })
}

/// Largest distance at which `scheme` is feasible with at least
/// `target_net_rate`.
pub fn max_reach(rows: &[SweepRow], target_net_rate: f64, scheme: Scheme) -> Option<f64> {
    rows.iter()
        .filter(|r| r.scheme == scheme && r.feasible && r.net_rate >= target_net_rate)
        .map(|r| r.distance_km)
        .reduce(f64::max)
}

/// Formats with six significant digits, `%g` style but without trimming.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..6).contains(&exp) {
        format!("{x:.*}", (5 - exp) as usize)
    } else {
        sci
    }
}

pub fn write_results_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.n_spans,
            sig6(r.distance_km),
            sig6(r.launch_power),
            sig6(r.snr_eff_db),
            r.n_d,
            sig6(r.data_gmi),
            sig6(r.net_rate),
            r.feasible
        )?;
    }
    Ok(())
}

pub fn save_results_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_results_csv(rows, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n_spans: u32, net_rate: f64, feasible: bool) -> SweepRow {
        SweepRow {
            scheme: Scheme::Ae,
            n_spans,
            distance_km: n_spans as f64 * 100.0,
            launch_power: 0.2,
            snr_eff_db: 10.0,
            n_d: 0,
            data_gmi: net_rate,
            net_rate,
            feasible,
            m: 8,
            gmi_stderr: 0.0,
        }
    }

    #[test]
    fn reach_lookup() {
        let rows = vec![row(5, 12.0, true), row(10, 10.5, true), row(15, 9.0, true)];
        assert_eq!(max_reach(&rows, 10.5, Scheme::Ae), Some(1000.0));
        assert_eq!(max_reach(&rows, 12.5, Scheme::Ae), None);
        assert_eq!(max_reach(&rows, 0.0, Scheme::Ae), Some(1500.0));
        assert_eq!(max_reach(&rows, 0.0, Scheme::Qam), None);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1000.0), "1000.00");
        assert_eq!(sig6(0.75), "0.750000");
        assert_eq!(sig6(-1.23456789), "-1.23457");
        assert_eq!(sig6(999.9996), "1000.00");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
        assert_eq!(sig6(0.0), "0");
    }
}
