use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ExperimentConfig, MethodConfig, Scenario};
use super::trace::{emit_trace_csv, format_f64, Trace, TraceIoError, TraceRow};
use crate::compressor::CompressorSpec;
use crate::linalg;
use crate::problem::{generate_bilinear, ProblemConstants, ProblemError, VIProblem};
use crate::solver::{derive_hyperparams, Solver, SolverConfig, SolverError, TracePoint};

/// Residual levels reported in the summary.
pub const THRESHOLDS: [f64; 3] = [1e-2, 1e-4, 1e-6];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("problem generation failed for scenario {scenario}: {source}")]
    Problem {
        scenario: Scenario,
        #[source]
        source: ProblemError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Trace(#[from] TraceIoError),
    #[error("solver setup failed: {0}")]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Finished {
        final_residual_sq_rel: f64,
        /// `‖z − z*‖ / ‖z*‖` for the final iterate.
        final_distance_rel: f64,
    },
    Diverged {
        message: String,
    },
}

/// One (scenario, method, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub method: String,
    pub seed: u64,
    pub gamma: f64,
    pub inner_iters: usize,
    pub epochs: usize,
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, CellOutcome::Diverged { .. })
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub target_ell: f64,
    pub constants: ProblemConstants,
    pub problem_fingerprint: String,
    pub trace: Trace,
    pub cells: Vec<CellResult>,
}

/// Seed-averaged figures for one (scenario, method).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub method: String,
    pub gamma: f64,
    pub inner_iters: usize,
    pub epochs: usize,
    pub seeds: usize,
    pub diverged: usize,
    /// Mean cumulative per-device uplink bits at the first logged point with
    /// `residual_sq_rel ≤ THRESHOLDS[j]`. `None` unless every non-diverged
    /// seed got there.
    pub bits_to: [Option<f64>; 3],
    pub final_residual_sq_rel_mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub scenarios: Vec<ScenarioResult>,
    pub summary: Vec<SummaryRow>,
}

impl SuiteResult {
    pub fn diverged_cells(&self) -> usize {
        self.scenarios
            .iter()
            .flat_map(|s| &s.cells)
            .filter(|c| c.diverged())
            .count()
    }

    pub fn scenario(&self, s: Scenario) -> Option<&ScenarioResult> {
        self.scenarios.iter().find(|r| r.scenario == s)
    }

    pub fn summary_row(&self, s: Scenario, method: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.scenario == s && r.method == method)
    }
}

/// Cumulative per-device bits at the first point with residual at or below
/// `threshold`.
pub fn bits_to_threshold<'a>(
    rows: impl IntoIterator<Item = &'a TraceRow>,
    threshold: f64,
) -> Option<u64> {
    rows.into_iter()
        .find(|r| r.residual_sq_rel <= threshold)
        .map(|r| r.cum_uplink_bits_per_device)
}

struct Job<'a> {
    method: &'a MethodConfig,
    spec: CompressorSpec,
    seed: u64,
    /// Seeds that share this job's output (compressors that draw no randomness).
    seeds: Vec<u64>,
}

struct JobOutput {
    cell: CellResult,
    points: Vec<TracePoint>,
}

fn run_job(
    problem: &VIProblem,
    constants: &ProblemConstants,
    z_star: &[f64],
    epochs: usize,
    job: &Job<'_>,
) -> Result<JobOutput, SolverError> {
    let derived = derive_hyperparams(constants, &job.spec, problem.n());
    let gamma = job.method.gamma.unwrap_or(derived.gamma);
    let inner_iters = job.method.inner_iters.unwrap_or(derived.inner_iters);
    let mut cfg = SolverConfig::new(gamma, inner_iters, epochs, job.spec, job.seed);
    cfg.record_events = false;
    let solver = Solver::new(problem, cfg)?;
    let (outcome, points) = match solver.run(None) {
        Ok(out) => {
            let last = out.trace.last().map_or(1.0, |p| p.residual_sq_rel);
            let dist = linalg::norm(&linalg::sub(&out.final_iterate, z_star));
            let scale = linalg::norm(z_star);
            let rel = if scale > 0.0 { dist / scale } else { dist };
            (
                CellOutcome::Finished {
                    final_residual_sq_rel: last,
                    final_distance_rel: rel,
                },
                out.trace,
            )
        }
        Err(SolverError::Diverged(div)) => (
            CellOutcome::Diverged {
                message: div.to_string(),
            },
            div.partial_trace,
        ),
        Err(e) => return Err(e),
    };
    Ok(JobOutput {
        cell: CellResult {
            method: job.method.name.clone(),
            seed: job.seed,
            gamma,
            inner_iters,
            epochs,
            outcome,
        },
        points,
    })
}

fn run_scenario(
    config: &ExperimentConfig,
    scenario: Scenario,
) -> Result<ScenarioResult, ExperimentError> {
    let p = &config.problem;
    let target_ell = p.target_ell[&scenario];
    let problem: VIProblem = generate_bilinear(p.n, p.d_half, p.lambda, target_ell, p.problem_seed)
        .map_err(|source| ExperimentError::Problem { scenario, source })?
        .into();
    let wrap = |source| ExperimentError::Problem { scenario, source };
    let constants = problem.exact_constants().map_err(wrap)?;
    let z_star = problem.exact_solution().map_err(wrap)?;
    let epochs = config.epochs_for(scenario);

    let mut jobs = Vec::new();
    for method in &config.methods {
        let spec = CompressorSpec::new(method.compressor, p.dim())
            .expect("compressor validated with the config");
        if spec.is_deterministic() {
            jobs.push(Job {
                method,
                spec,
                seed: config.seeds[0],
                seeds: config.seeds.clone(),
            });
        } else {
            jobs.extend(config.seeds.iter().map(|&seed| Job {
                method,
                spec,
                seed,
                seeds: vec![seed],
            }));
        }
    }

    let outputs: Vec<JobOutput> = jobs
        .par_iter()
        .map(|job| run_job(&problem, &constants, &z_star, epochs, job))
        .collect::<Result<_, _>>()?;

    let mut trace = Trace::default();
    let mut cells = Vec::new();
    for (job, out) in jobs.iter().zip(outputs) {
        for &seed in &job.seeds {
            trace.rows.extend(out.points.iter().map(|pt| TraceRow {
                method: job.method.name.clone(),
                seed,
                epoch: pt.epoch,
                inner_iter: pt.inner_iter,
                residual_sq_rel: pt.residual_sq_rel,
                cum_uplink_bits_per_device: pt.cum_uplink_bits,
            }));
            cells.push(CellResult {
                seed,
                ..out.cell.clone()
            });
        }
    }

    Ok(ScenarioResult {
        scenario,
        target_ell,
        constants,
        problem_fingerprint: problem.fingerprint(),
        trace,
        cells,
    })
}

fn summarize(result: &ScenarioResult, methods: &[MethodConfig]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|m| {
            let cells: Vec<&CellResult> =
                result.cells.iter().filter(|c| c.method == m.name).collect();
            let ok: Vec<&CellResult> = cells.iter().copied().filter(|c| !c.diverged()).collect();
            let mut bits_to = [None; 3];
            for (slot, &thr) in bits_to.iter_mut().zip(&THRESHOLDS) {
                let reached: Option<Vec<u64>> = ok
                    .iter()
                    .map(|c| bits_to_threshold(result.trace.series(&m.name, c.seed), thr))
                    .collect();
                *slot = reached
                    .filter(|v| !v.is_empty())
                    .map(|v| v.iter().map(|&b| b as f64).sum::<f64>() / v.len() as f64);
            }
            let finals: Vec<f64> = ok
                .iter()
                .filter_map(|c| match c.outcome {
                    CellOutcome::Finished {
                        final_residual_sq_rel,
                        ..
                    } => Some(final_residual_sq_rel),
                    CellOutcome::Diverged { .. } => None,
                })
                .collect();
            let first = cells.first();
            SummaryRow {
                scenario: result.scenario,
                method: m.name.clone(),
                gamma: first.map_or(f64::NAN, |c| c.gamma),
                inner_iters: first.map_or(0, |c| c.inner_iters),
                epochs: first.map_or(0, |c| c.epochs),
                seeds: cells.len(),
                diverged: cells.len() - ok.len(),
                bits_to,
                final_residual_sq_rel_mean: (!finals.is_empty())
                    .then(|| finals.iter().sum::<f64>() / finals.len() as f64),
            }
        })
        .collect()
}

/// Runs every (scenario × method × seed) cell for the requested scenarios.
///
/// Cells run in parallel; output does not depend on the thread count.
/// Divergent cells are recorded and do not stop the sweep.
pub fn run_suite(
    config: &ExperimentConfig,
    scenarios: &[Scenario],
) -> Result<SuiteResult, ExperimentError> {
    let mut results = Vec::new();
    let mut summary = Vec::new();
    for &s in scenarios {
        if !config.problem.target_ell.contains_key(&s) {
            continue;
        }
        let r = run_scenario(config, s)?;
        summary.extend(summarize(&r, &config.methods));
        results.push(r);
    }
    Ok(SuiteResult {
        scenarios: results,
        summary,
    })
}

pub const SUMMARY_HEADER: &str = "scenario,method,gamma,inner_iters,epochs,seeds,diverged,\
bits_to_1e-2,bits_to_1e-4,bits_to_1e-6,final_residual_sq_rel_mean";

/// Summary table as CSV; unreached thresholds are left empty.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), TraceIoError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(out);
    w.write_record(SUMMARY_HEADER.split(','))?;
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.scenario.to_string(),
            r.method.clone(),
            format_f64(r.gamma),
            r.inner_iters.to_string(),
            r.epochs.to_string(),
            r.seeds.to_string(),
            r.diverged.to_string(),
            opt(r.bits_to[0]),
            opt(r.bits_to[1]),
            opt(r.bits_to[2]),
            opt(r.final_residual_sq_rel_mean),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ManifestScenario<'a> {
    name: Scenario,
    target_ell: f64,
    ell: f64,
    mu: f64,
    ell_coupling: Option<f64>,
    problem_fingerprint: &'a str,
    trace_csv: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config_sha256: String,
    seeds: &'a [u64],
    scenarios: Vec<ManifestScenario<'a>>,
    summary_csv: &'static str,
    diverged_cells: usize,
}

/// SHA-256 of the config's canonical JSON serialization.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Writes `<scenario>.csv` per scenario, `summary.csv` and `manifest.json`
/// into `out_dir`, returning the written paths.
pub fn write_outputs(
    result: &SuiteResult,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();
    for s in &result.scenarios {
        let path = out_dir.join(format!("{}.csv", s.scenario));
        emit_trace_csv(&s.trace, &path)?;
        written.push(path);
    }
    let summary_path = out_dir.join("summary.csv");
    let file = fs::File::create(&summary_path).map_err(io(&summary_path))?;
    write_summary_csv(&result.summary, std::io::BufWriter::new(file))?;
    written.push(summary_path);

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: config_hash(config),
        seeds: &config.seeds,
        scenarios: result
            .scenarios
            .iter()
            .map(|s| ManifestScenario {
                name: s.scenario,
                target_ell: s.target_ell,
                ell: s.constants.ell,
                mu: s.constants.mu,
                ell_coupling: s.constants.ell_coupling,
                problem_fingerprint: &s.problem_fingerprint,
                trace_csv: format!("{}.csv", s.scenario),
            })
            .collect(),
        summary_csv: "summary.csv",
        diverged_cells: result.diverged_cells(),
    };
    let manifest_path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io(&manifest_path))?;
    written.push(manifest_path);
    Ok(written)
}
