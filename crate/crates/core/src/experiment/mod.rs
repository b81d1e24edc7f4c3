//! Experiment configs, scenario sweeps and CSV output.
//!
//! Output files written by [`write_outputs`]:
//!
//! * `<scenario>.csv`: `method,seed,epoch,inner_iter,residual_sq_rel,cum_uplink_bits_per_device`,
//!   one row per logged iterate, floats with 17 significant digits.
//! * `summary.csv`: per (scenario, method): derived `γ` and `K`, seed and
//!   divergence counts, seed-averaged bits to reach `residual_sq_rel` of
//!   1e-2 / 1e-4 / 1e-6, mean final residual.
//! * `manifest.json`: crate version, config hash, seeds, problem fingerprints
//!   and constants.

mod config;
mod suite;
mod trace;

pub use config::{
    load_config, ConfigError, ExperimentConfig, MethodConfig, ProblemSettings, Scenario,
    DEFAULT_EPOCHS,
};
pub use suite::{
    bits_to_threshold, config_hash, run_suite, write_outputs, write_summary_csv, CellOutcome,
    CellResult, ExperimentError, ScenarioResult, SuiteResult, SummaryRow, SUMMARY_HEADER,
    THRESHOLDS,
};
pub use trace::{
    emit_trace_csv, format_f64, read_trace_csv, Trace, TraceIoError, TraceRow, TRACE_HEADER,
};
