//! Orchestration: run configuration, distance sweeps, reach lookup and LUT
//! export.

mod config;
mod lut;
mod sweep;

pub use config::{EvalConfig, OutputConfig, PowerMode, RunConfig, Scheme, SweepConfig};
pub use lut::{export_lut, load_lut, parse_lut, render_lut, Lut, LutTable, LUT_HEADER};
pub use sweep::{
    evaluate_point, max_reach, resolve_power, run_sweep, save_results_csv, sig6, sweep_point, train_for_spans,
    write_results_csv, Evaluation, SweepOutcome, SweepRow, RESULTS_HEADER, THREADS_ENV,
};
