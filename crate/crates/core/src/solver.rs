//! Epoch-restarted MARINA for distributed cocoercive variational inequalities.
//!
//! One epoch, starting from the anchor `z̃`:
//!
//! ```text
//! z⁰ = z̃,  g⁰ = F(z⁰),  z¹ = z⁰ − γ g⁰
//! for k = 1 .. K−1:
//!     server broadcasts g^{k−1}
//!     device i sends  m_i = C(F_i(z^k) − F_i(z^{k−1}))
//!     g^k     = g^{k−1} + (1/n) Σ_i m_i
//!     z^{k+1} = z^k − γ g^k
//! z̃ ← z^K
//! ```
//!
//! An epoch therefore makes exactly `K` iterate updates. Device randomness
//! comes from [`crate::streams::device_rng`], keyed by
//! `(master_seed, device, epoch, k)`.

use thiserror::Error;

use crate::compressor::{self, CompressorError, CompressorKind, CompressorSpec};
use crate::ledger::CommLedger;
use crate::linalg::{self, norm_sq};
use crate::problem::{ProblemConstants, VIProblem};
use crate::streams::device_rng;

/// Residuals are logged at every inner iteration up to this many per epoch.
pub const MAX_LOGGED_PER_EPOCH: usize = 10_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Diverged(Box<Divergence>),
}

/// Diagnostics of a run that produced a non-finite value.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub epoch: usize,
    pub inner_iter: usize,
    /// `‖g‖` of the last finite estimator.
    pub g_norm: f64,
    pub last_finite: SolverState,
    /// Trace up to the last finite iterate; empty when raised outside `run`.
    pub partial_trace: Vec<TracePoint>,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "diverged at epoch {} inner iteration {} (last finite ‖g‖ = {:e})",
            self.epoch, self.inner_iter, self.g_norm
        )
    }
}

/// Step size and epoch length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub gamma: f64,
    pub inner_iters: usize,
}

/// `γ = 1/(8ℓ(1+α/n))` and `K = ⌈30ℓ(1+α/n)/μ⌉`.
///
/// The ceiling ignores relative noise below 1e-9 so that values like
/// `30·100·1.9` land on 5700 rather than 5701.
pub fn derive_hyperparams(
    constants: &ProblemConstants,
    spec: &CompressorSpec,
    n: usize,
) -> Hyperparams {
    let factor = constants.ell * (1.0 + spec.alpha() / n as f64);
    let raw = 30.0 * factor / constants.mu;
    let nearest = raw.round();
    let inner_iters = if (raw - nearest).abs() <= 1e-9 * raw.abs().max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    Hyperparams {
        gamma: 1.0 / (8.0 * factor),
        inner_iters: (inner_iters as usize).max(1),
    }
}

/// Largest step size covered by the estimator-decay bound, `1/(2ℓ(1+α/n))`.
pub fn max_admissible_gamma(constants: &ProblemConstants, spec: &CompressorSpec, n: usize) -> f64 {
    1.0 / (2.0 * constants.ell * (1.0 + spec.alpha() / n as f64))
}

/// Residual logging stride: 1 up to [`MAX_LOGGED_PER_EPOCH`] inner
/// iterations, then `⌈K / 10⁴⌉`.
pub fn default_log_stride(inner_iters: usize) -> usize {
    if inner_iters <= MAX_LOGGED_PER_EPOCH {
        1
    } else {
        inner_iters.div_ceil(MAX_LOGGED_PER_EPOCH)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub gamma: f64,
    pub inner_iters: usize,
    pub epochs: usize,
    pub compressor: CompressorSpec,
    pub master_seed: u64,
    /// Overrides [`default_log_stride`].
    pub log_stride: Option<usize>,
    /// Keep the full communication event log (memory grows with `S·K·n`).
    pub record_events: bool,
}

impl SolverConfig {
    pub fn new(
        gamma: f64,
        inner_iters: usize,
        epochs: usize,
        compressor: CompressorSpec,
        master_seed: u64,
    ) -> Self {
        Self {
            gamma,
            inner_iters,
            epochs,
            compressor,
            master_seed,
            log_stride: None,
            record_events: true,
        }
    }

    /// Config with `γ` and `K` from [`derive_hyperparams`].
    pub fn auto(
        constants: &ProblemConstants,
        compressor: CompressorSpec,
        n: usize,
        epochs: usize,
        master_seed: u64,
    ) -> Self {
        let h = derive_hyperparams(constants, &compressor, n);
        Self::new(h.gamma, h.inner_iters, epochs, compressor, master_seed)
    }

    pub fn log_stride(&self) -> usize {
        self.log_stride
            .unwrap_or_else(|| default_log_stride(self.inner_iters))
    }

    pub fn validate(&self, problem: &VIProblem) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            ));
        }
        if self.inner_iters == 0 {
            return bad("inner_iters (K) must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs (S) must be at least 1".into());
        }
        if self.log_stride == Some(0) {
            return bad("log_stride must be at least 1".into());
        }
        if self.compressor.d() != problem.dim() {
            return bad(format!(
                "compressor dimension {} does not match problem dimension {}",
                self.compressor.d(),
                problem.dim()
            ));
        }
        Ok(())
    }
}

/// Iterate/estimator pair inside an epoch.
///
/// After [`Solver::init_epoch`] and `j` inner steps, `z_curr = z^{j+1}`,
/// `z_prev = z^j`, `g_curr = g^j` and `inner_index = j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub z_prev: Vec<f64>,
    pub z_curr: Vec<f64>,
    pub g_curr: Vec<f64>,
    pub epoch_index: usize,
    pub inner_index: usize,
    pub epoch_anchor: Vec<f64>,
    // F_i(z_prev) for every device, plus a same-shaped scratch buffer.
    // Both are empty on the sparse RAND-K path.
    local_prev: Vec<Vec<f64>>,
    local_next: Vec<Vec<f64>>,
}

/// One logged point of a residual trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub epoch: usize,
    pub inner_iter: usize,
    /// `‖F(z^k)‖² / ‖F(z̃⁰)‖²`.
    pub residual_sq_rel: f64,
    /// Cumulative uplink bits of one device.
    pub cum_uplink_bits: u64,
}

/// Per-epoch diagnostics. All norms are squared and absolute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// `‖F(z⁰)‖² = ‖g⁰‖²`
    pub residual_start: f64,
    /// `‖F(z^K)‖²`
    pub residual_end: f64,
    /// `‖g^K‖²`, from one extra uncharged estimator update at `z^K`.
    pub estimator_end: f64,
    /// `‖F(z^K) − g^K‖²`
    pub drift_end: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_iterate: Vec<f64>,
    pub trace: Vec<TracePoint>,
    pub ledger: CommLedger,
    /// `‖F(z̃^s)‖²` for `s = 0..=S`, evaluated as `(1/n) Σ F_i`.
    pub epoch_residuals: Vec<f64>,
    pub epoch_stats: Vec<EpochStats>,
}

/// Runs `config` from `z0` (the zero vector when `None`).
pub fn run(
    problem: &VIProblem,
    config: &SolverConfig,
    z0: Option<&[f64]>,
) -> Result<RunOutput, SolverError> {
    Solver::new(problem, config.clone())?.run(z0)
}

pub struct Solver<'a> {
    problem: &'a VIProblem,
    aggregate: VIProblem,
    config: SolverConfig,
    sparse: Option<usize>,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a VIProblem, config: SolverConfig) -> Result<Self, SolverError> {
        config.validate(problem)?;
        // RAND-K only needs k coordinates of each local difference.
        let sparse = match config.compressor.kind() {
            CompressorKind::RandK { k } if k < problem.dim() => Some(k),
            _ => None,
        };
        Ok(Self {
            problem,
            aggregate: problem.aggregate(),
            config,
            sparse,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn new_ledger(&self) -> CommLedger {
        if self.config.record_events {
            CommLedger::new(self.problem.n())
        } else {
            CommLedger::counters_only(self.problem.n())
        }
    }

    /// Diagnostic `‖F(z)‖²` through the pre-averaged operator. Costs no bits.
    pub fn residual_sq(&self, z: &[f64]) -> f64 {
        let mut out = vec![0.0; z.len()];
        self.aggregate.eval_local_into(0, z, &mut out);
        norm_sq(&out)
    }

    /// Epoch start: full synchronization `g⁰ = F(z̃)` and the first step.
    pub fn init_epoch(
        &self,
        epoch: usize,
        anchor: &[f64],
        ledger: &mut CommLedger,
    ) -> Result<SolverState, SolverError> {
        if anchor.len() != self.problem.dim() {
            return Err(SolverError::InvalidConfig(format!(
                "anchor has length {}, expected {}",
                anchor.len(),
                self.problem.dim()
            )));
        }
        let d = self.problem.dim();
        let mut locals = vec![vec![0.0; d]; self.problem.n()];
        let g = self.problem.eval_full_with_locals(anchor, &mut locals);
        ledger.record_epoch_start(epoch, d);
        let mut z_next = anchor.to_vec();
        linalg::axpy(-self.config.gamma, &g, &mut z_next);
        let state = SolverState {
            z_prev: anchor.to_vec(),
            z_curr: z_next,
            g_curr: g,
            epoch_index: epoch,
            inner_index: 1,
            epoch_anchor: anchor.to_vec(),
            local_next: if self.sparse.is_some() {
                Vec::new()
            } else {
                vec![vec![0.0; d]; locals.len()]
            },
            local_prev: if self.sparse.is_some() {
                Vec::new()
            } else {
                locals
            },
        };
        if !linalg::all_finite(&state.g_curr) || !linalg::all_finite(&state.z_curr) {
            return Err(diverged(epoch, 0, f64::NAN, state));
        }
        Ok(state)
    }

    /// `(1/n) Σ_i C(F_i(z_curr) − F_i(z_prev))`, using the streams of
    /// iteration `k`. On the dense path `F_i(z_curr)` is left in `next_locals`.
    fn mean_message(
        &self,
        state: &SolverState,
        k: usize,
        next_locals: &mut [Vec<f64>],
    ) -> Result<Vec<f64>, CompressorError> {
        let n = self.problem.n();
        let d = self.problem.dim();
        let seed = self.config.master_seed;
        let epoch = state.epoch_index;
        let mut sum = vec![0.0; d];
        match self.sparse {
            Some(kk) => {
                let scale = compressor::rand_k_scale(kk, d);
                let mut support = Vec::with_capacity(d);
                for i in 0..n {
                    let mut rng = device_rng(seed, i, epoch, k);
                    compressor::sample_support(kk, d, &mut rng, &mut support);
                    for &j in &support {
                        let diff = self.problem.eval_local_coord(i, j, &state.z_curr)
                            - self.problem.eval_local_coord(i, j, &state.z_prev);
                        if !diff.is_finite() {
                            return Err(CompressorError::NonFinite);
                        }
                        sum[j] += scale * diff;
                    }
                }
            }
            None => {
                for (i, current) in next_locals.iter_mut().enumerate() {
                    self.problem.eval_local_into(i, &state.z_curr, current);
                    let diff = linalg::sub(current, &state.local_prev[i]);
                    let mut rng = device_rng(seed, i, epoch, k);
                    let msg = self.config.compressor.compress(&diff, &mut rng)?;
                    for (s, p) in sum.iter_mut().zip(&msg.payload) {
                        *s += p;
                    }
                }
            }
        }
        let nf = n as f64;
        sum.iter_mut().for_each(|s| *s /= nf);
        Ok(sum)
    }

    /// One compressed round `k = inner_index`. On error `state` is unchanged.
    pub fn inner_step(
        &self,
        state: &mut SolverState,
        ledger: &mut CommLedger,
    ) -> Result<(), SolverError> {
        let k = state.inner_index;
        let mut next_locals = std::mem::take(&mut state.local_next);
        let message = match self.mean_message(state, k, &mut next_locals) {
            Ok(m) => m,
            Err(_) => {
                state.local_next = next_locals;
                return Err(diverged(
                    state.epoch_index,
                    k,
                    linalg::norm_scaled(&state.g_curr),
                    state.clone(),
                ));
            }
        };
        let mut g_next = state.g_curr.clone();
        for (g, m) in g_next.iter_mut().zip(&message) {
            *g += m;
        }
        let mut z_next = state.z_curr.clone();
        linalg::axpy(-self.config.gamma, &g_next, &mut z_next);
        if !linalg::all_finite(&g_next) || !linalg::all_finite(&z_next) {
            state.local_next = next_locals;
            return Err(diverged(
                state.epoch_index,
                k,
                linalg::norm_scaled(&state.g_curr),
                state.clone(),
            ));
        }
        ledger.record_inner_round(state.epoch_index, k, &self.config.compressor);
        state.local_next = std::mem::replace(&mut state.local_prev, next_locals);
        state.z_prev = std::mem::replace(&mut state.z_curr, z_next);
        state.g_curr = g_next;
        state.inner_index = k + 1;
        Ok(())
    }

    /// `g^K` that the next compressed round would produce, without charging
    /// bits or moving the iterate. Uses the streams of iteration `K`.
    pub fn probe_estimator(&self, state: &SolverState) -> Result<Vec<f64>, SolverError> {
        let k = state.inner_index;
        let mut scratch = vec![vec![0.0; self.problem.dim()]; state.local_prev.len()];
        let message = self.mean_message(state, k, &mut scratch).map_err(|_| {
            diverged(
                state.epoch_index,
                k,
                linalg::norm_scaled(&state.g_curr),
                state.clone(),
            )
        })?;
        Ok(state
            .g_curr
            .iter()
            .zip(&message)
            .map(|(g, m)| g + m)
            .collect())
    }

    pub fn run(&self, z0: Option<&[f64]>) -> Result<RunOutput, SolverError> {
        let d = self.problem.dim();
        let z0 = match z0 {
            Some(z) if z.len() != d => {
                return Err(SolverError::InvalidConfig(format!(
                    "initial point has length {}, expected {d}",
                    z.len()
                )))
            }
            Some(z) => z.to_vec(),
            None => vec![0.0; d],
        };
        let big_k = self.config.inner_iters;
        let stride = self.config.log_stride();
        let mut ledger = self.new_ledger();

        let r0 = self.residual_sq(&z0);
        let norm0 = if r0 > 0.0 { r0 } else { 1.0 };
        let mut trace = vec![TracePoint {
            epoch: 1,
            inner_iter: 0,
            residual_sq_rel: 1.0,
            cum_uplink_bits: 0,
        }];
        let mut epoch_residuals = vec![norm_sq(&self.eval_full(&z0))];
        let mut epoch_stats = Vec::with_capacity(self.config.epochs);
        let mut anchor = z0;

        let attach = |err: SolverError, trace: &Vec<TracePoint>| match err {
            SolverError::Diverged(mut div) => {
                div.partial_trace = trace.clone();
                SolverError::Diverged(div)
            }
            other => other,
        };

        for epoch in 1..=self.config.epochs {
            let mut state = self
                .init_epoch(epoch, &anchor, &mut ledger)
                .map_err(|e| attach(e, &trace))?;
            let residual_start = norm_sq(&state.g_curr);
            loop {
                let k = state.inner_index;
                if k % stride == 0 || k == big_k {
                    trace.push(TracePoint {
                        epoch,
                        inner_iter: k,
                        residual_sq_rel: self.residual_sq(&state.z_curr) / norm0,
                        cum_uplink_bits: ledger.max_device_uplink_bits(),
                    });
                }
                if k >= big_k {
                    break;
                }
                self.inner_step(&mut state, &mut ledger)
                    .map_err(|e| attach(e, &trace))?;
            }
            let full_end = self.eval_full(&state.z_curr);
            let g_end = self
                .probe_estimator(&state)
                .map_err(|e| attach(e, &trace))?;
            let residual_end = norm_sq(&full_end);
            epoch_stats.push(EpochStats {
                epoch,
                residual_start,
                residual_end,
                estimator_end: norm_sq(&g_end),
                drift_end: norm_sq(&linalg::sub(&full_end, &g_end)),
            });
            epoch_residuals.push(residual_end);
            anchor = state.z_curr;
        }

        Ok(RunOutput {
            final_iterate: anchor,
            trace,
            ledger,
            epoch_residuals,
            epoch_stats,
        })
    }

    fn eval_full(&self, z: &[f64]) -> Vec<f64> {
        let mut locals = vec![vec![0.0; z.len()]; self.problem.n()];
        self.problem.eval_full_with_locals(z, &mut locals)
    }
}

fn diverged(epoch: usize, inner_iter: usize, g_norm: f64, last_finite: SolverState) -> SolverError {
    SolverError::Diverged(Box::new(Divergence {
        epoch,
        inner_iter,
        g_norm,
        last_finite,
        partial_trace: Vec::new(),
    }))
}
