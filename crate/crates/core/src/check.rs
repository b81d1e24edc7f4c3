//! Fast invariant suite behind `marina-vi --check`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::compressor::{exhaustive_randk_moments, CompressorSpec};
use crate::experiment::{ExperimentConfig, Scenario};
use crate::linalg::{self, norm_sq};
use crate::problem::{generate_bilinear, VIProblem};
use crate::solver::{Solver, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

fn compressor_unbiasedness() -> CheckResult {
    let d = 20;
    let draws = 20_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut worst = 0.0f64;
    for spec in [
        CompressorSpec::identity(d).unwrap(),
        CompressorSpec::rand_k(5, d).unwrap(),
        CompressorSpec::int8_quant(d).unwrap(),
    ] {
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for _ in 0..draws {
            let p = spec.compress(&u, &mut rng).unwrap().payload;
            for j in 0..d {
                let e = p[j] - u[j];
                sum[j] += e;
                sum_sq[j] += e * e;
            }
        }
        let nf = draws as f64;
        for j in 0..d {
            let mean = sum[j] / nf;
            let var = (sum_sq[j] / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
            let se = (var / nf).sqrt();
            let z = if se > 0.0 {
                mean.abs() / se
            } else if mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }
    result(
        "compressor unbiasedness",
        worst <= 4.0,
        format!("worst |mean error| = {worst:.2} standard errors (limit 4)"),
    )
}

fn randk_variance_identity() -> CheckResult {
    let mut worst = 0.0f64;
    for d in 1..=6usize {
        let u: Vec<f64> = (0..d)
            .map(|j| (j as f64 + 1.0) * if j % 2 == 0 { 1.0 } else { -0.5 })
            .collect();
        for k in 1..=d {
            let (_, err) = exhaustive_randk_moments(k, &u).unwrap();
            let expected = (d as f64 / k as f64 - 1.0) * norm_sq(&u);
            worst = worst.max((err - expected).abs() / norm_sq(&u));
        }
    }
    result(
        "rand_k variance identity",
        worst <= 1e-12,
        format!("max relative deviation {worst:e}"),
    )
}

fn telescoping(problem: &VIProblem) -> CheckResult {
    let c = problem.exact_constants().unwrap();
    let spec = CompressorSpec::identity(problem.dim()).unwrap();
    let cfg = SolverConfig::auto(&c, spec, problem.n(), 1, 0);
    let solver = Solver::new(problem, cfg.clone()).unwrap();
    let mut ledger = solver.new_ledger();
    let mut state = solver
        .init_epoch(1, &vec![0.0; problem.dim()], &mut ledger)
        .unwrap();
    let scale = 1.0 + linalg::norm(&state.g_curr);
    let mut worst = 0.0f64;
    while state.inner_index < cfg.inner_iters {
        solver.inner_step(&mut state, &mut ledger).unwrap();
        let f = problem.eval_full(&state.z_prev).unwrap();
        worst = worst.max(linalg::norm(&linalg::sub(&f, &state.g_curr)));
    }
    result(
        "identity telescoping",
        worst <= 1e-12 * scale,
        format!("max ‖g^k − F(z^k)‖ = {worst:e}"),
    )
}

fn contraction(problem: &VIProblem) -> CheckResult {
    let c = problem.exact_constants().unwrap();
    let spec = CompressorSpec::identity(problem.dim()).unwrap();
    let mut cfg = SolverConfig::auto(&c, spec, problem.n(), 3, 0);
    cfg.record_events = false;
    let out = crate::solver::run(problem, &cfg, None).unwrap();
    let ratios: Vec<f64> = out
        .epoch_residuals
        .windows(2)
        .map(|w| w[1] / w[0])
        .collect();
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    result(
        "per-epoch halving (identity)",
        worst <= 0.5,
        format!("worst epoch ratio {worst:e}"),
    )
}

fn ledger_conservation(problem: &VIProblem) -> CheckResult {
    let c = problem.exact_constants().unwrap();
    let spec = CompressorSpec::rand_k((problem.dim() / 4).max(1), problem.dim()).unwrap();
    let mut cfg = SolverConfig::auto(&c, spec, problem.n(), 2, 3);
    cfg.inner_iters = cfg.inner_iters.min(200);
    let out = crate::solver::run(problem, &cfg, None).unwrap();
    let s = cfg.epochs as u64;
    let k = cfg.inner_iters as u64;
    let n = problem.n() as u64;
    let expected = s * n * 32 * problem.dim() as u64 + s * (k - 1) * n * spec.payload_bits();
    let (replayed, _) = out.ledger.replay().unwrap();
    let ok = out.ledger.total_uplink_bits() == expected
        && replayed == out.ledger.per_device_uplink_bits();
    result(
        "ledger conservation",
        ok,
        format!(
            "total uplink {} bits, expected {expected}",
            out.ledger.total_uplink_bits()
        ),
    )
}

fn cocoercivity_bound(problem: &VIProblem) -> CheckResult {
    let ell = problem.exact_constants().unwrap().ell;
    let est = problem.estimate_cocoercivity(200, 5);
    result(
        "sampled cocoercivity below exact",
        est <= ell * (1.0 + 1e-9),
        format!("estimate {est:.6} vs exact {ell:.6}"),
    )
}

/// Runs the invariant checks on a problem shaped like the config's
/// lowest-ℓ scenario (with `d_half` capped at 8 to keep it fast).
pub fn run_checks(config: &ExperimentConfig) -> Vec<CheckResult> {
    let p = &config.problem;
    let scenario = config.scenarios().first().copied().unwrap_or(Scenario::Low);
    let ell = p
        .target_ell
        .get(&scenario)
        .copied()
        .unwrap_or(p.lambda * 10.0);
    let problem: VIProblem = generate_bilinear(p.n, p.d_half.min(8), p.lambda, ell, p.problem_seed)
        .expect("validated config generates a problem")
        .into();
    vec![
        compressor_unbiasedness(),
        randk_variance_identity(),
        telescoping(&problem),
        contraction(&problem),
        ledger_conservation(&problem),
        cocoercivity_bound(&problem),
    ]
}
