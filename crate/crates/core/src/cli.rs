//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or parameter error, 2 numerical failure,
//! 3 I/O or file-format error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgGroup, Parser, Subcommand};

use crate::channel::{EffectiveChannel, LinkConfig};
use crate::constellation::{detect_mom_clusters, uniform_qam, Constellation, DEFAULT_MOM_EPSILON};
use crate::demapper::{per_bit_gmi_mc, GmiReport};
use crate::rate_adapt::{best_plan, select_dummy_bits, FecRate, RateAdaptPlan};
use crate::reach::{export_lut, max_reach, resolve_power, run_sweep, save_results_csv, RunConfig, Scheme};
use crate::rng::stream;
use crate::training::train;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "shapegain", version, about = "Learned constellation shaping with dummy-bit rate adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a constellation from the `train` section of a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Estimate per-bit GMI of a constellation.
    #[command(group(ArgGroup::new("channel").required(true).args(["snr_db", "link_from"])))]
    Eval {
        #[arg(long)]
        constellation: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        snr_db: Option<f64>,
        /// Run config whose link section (and sweep power mode) sets the SNR.
        #[arg(long)]
        link_from: Option<PathBuf>,
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print the report as JSON instead of a summary.
        #[arg(long)]
        json: bool,
        /// Distance below which points count as merged in the summary.
        #[arg(long, default_value_t = DEFAULT_MOM_EPSILON)]
        mom_epsilon: f64,
    },
    /// Choose dummy bit positions from a GMI report.
    #[command(group(ArgGroup::new("mode").required(true).args(["nd", "best"])))]
    Adapt {
        #[arg(long)]
        constellation: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        nd: Option<u32>,
        #[arg(long)]
        best: bool,
        #[arg(long, default_value = "3/4")]
        fec_rate: FecRate,
        /// Write the plan here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Net rate versus distance for the learned and QAM schemes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip failing grid points instead of aborting.
        #[arg(long)]
        keep_going: bool,
    },
    /// Write the transmitter look-up table for a constellation and plan.
    ExportLut {
        #[arg(long)]
        constellation: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a Gray-labelled uniform QAM constellation.
    Qam {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) | Error::Degenerate(_) | Error::Capability(_) | Error::Framing(_) => 1,
        Error::Numerical(_) | Error::InfiniteSnr | Error::UnboundedOptimum(_) => 2,
        Error::Format { .. } | Error::Io { .. } | Error::Json(_) => 3,
        Error::AtGridPoint { source, .. } => exit_code(source),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Errors go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_or_print(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn eval_channel(c: &Constellation, snr_db: Option<f64>, link_from: Option<&PathBuf>) -> Result<(EffectiveChannel, Option<f64>, Option<LinkConfig>)> {
    match (snr_db, link_from) {
        (Some(db), _) => Ok((EffectiveChannel::from_snr_db(db)?, None, None)),
        (None, Some(path)) => {
            let cfg = RunConfig::load(path)?;
            let (p, ch) = resolve_power(&cfg, &cfg.link, c)?;
            Ok((ch, Some(p), Some(cfg.link)))
        }
        (None, None) => Err(Error::param("eval needs --snr-db or --link-from")),
    }
}

fn print_summary(c: &Constellation, report: &GmiReport, ch: &EffectiveChannel, launch: Option<(f64, LinkConfig)>, eps: f64) -> Result<()> {
    if let Some((p, link)) = launch {
        println!(
            "link: {} spans, {} km, launch power {:.6} ({:.3} dB)",
            link.n_spans,
            link.distance_km(),
            p,
            crate::channel::linear_to_db(p)
        );
    }
    println!("snr_eff_db: {:.4}", ch.snr_db());
    let per_bit: Vec<String> = report.per_bit.iter().map(|g| format!("{g:.4}")).collect();
    println!("per_bit_gmi: [{}]", per_bit.join(", "));
    println!("total: {:.4} +/- {:.4} bits (single pol)", report.total, report.stderr_total);
    println!("total_dualpol: {:.4} bits", report.total_dualpol);
    let clusters = detect_mom_clusters(c, eps)?;
    if clusters.is_empty() {
        println!("merged points: none at epsilon {eps}");
    }
    for cl in &clusters {
        println!(
            "merged points: labels {:?}, ambiguous bits {:?}",
            cl.member_labels, cl.ambiguous_bit_positions
        );
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, out, history } => {
            let cfg = RunConfig::load(&config)?;
            let (c, hist) = train(&cfg.train)?;
            c.save(&out)?;
            if let Some(h) = history {
                hist.save_csv(&h)?;
            }
            if let Some(last) = hist.records.last() {
                eprintln!("trained {} iterations, surrogate GMI {:.4}", last.iteration + 1, last.surrogate_gmi);
            }
            Ok(())
        }
        Command::Eval {
            constellation,
            snr_db,
            link_from,
            samples,
            seed,
            json,
            mom_epsilon,
        } => {
            let c = Constellation::load(&constellation)?;
            let (ch, power, link) = eval_channel(&c, snr_db, link_from.as_ref())?;
            let report = per_bit_gmi_mc(&c, ch.noise_variance, samples, &mut stream(seed))?;
            if json {
                println!("{}", report.to_json()?);
                Ok(())
            } else {
                print_summary(&c, &report, &ch, power.zip(link), mom_epsilon)
            }
        }
        Command::Adapt {
            constellation,
            report,
            nd,
            best,
            fec_rate,
            out,
        } => {
            let c = Constellation::load(&constellation)?;
            let report = GmiReport::load(&report)?;
            if report.m() != c.m() as usize {
                return Err(Error::param(format!(
                    "report has {} bit levels but the constellation has m = {}",
                    report.m(),
                    c.m()
                )));
            }
            let plan = match (nd, best) {
                (Some(n_d), _) => select_dummy_bits(&report, n_d, fec_rate)?,
                (None, true) => best_plan(&report, fec_rate)?,
                (None, false) => return Err(Error::param("adapt needs --nd or --best")),
            };
            if !plan.is_feasible() {
                eprintln!(
                    "warning: plan is infeasible (data GMI {:.4} < net rate {:.4})",
                    plan.data_gmi, plan.net_rate
                );
            }
            write_or_print(&plan.to_json()?, out.as_ref())
        }
        Command::Sweep { config, out, keep_going } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = run_sweep(&cfg, keep_going)?;
            for e in outcome.failures.iter().skip(1) {
                eprintln!("error: {e}");
            }
            save_results_csv(&outcome.rows, &out)?;
            for scheme in [Scheme::Ae, Scheme::Qam] {
                if let Some(best) = outcome.rows.iter().filter(|r| r.scheme == scheme).map(|r| r.net_rate).reduce(f64::max) {
                    if let Some(d) = max_reach(&outcome.rows, best, scheme) {
                        eprintln!("{scheme}: peak net rate {best:.4} bits/symbol reaches {d} km");
                    }
                }
            }
            // rows that succeeded are on disk; still report the first failure
            match outcome.failures.into_iter().next() {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::ExportLut { constellation, plan, out } => {
            let c = Constellation::load(&constellation)?;
            let plan = RateAdaptPlan::load(&plan)?;
            export_lut(&c, &plan, &out)
        }
        Command::Qam { m, out } => uniform_qam(m)?.save(&out),
    }
}
