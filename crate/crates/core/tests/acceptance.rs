//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Built with `harness = false` so the lines are
//! always shown by `cargo test`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use marina_vi::compressor::{exhaustive_randk_moments, quantize_int8};
use marina_vi::experiment::{load_config, run_suite, Scenario};
use marina_vi::ledger::{gradient_equivalents, Direction};
use marina_vi::linalg::{self, norm, norm_sq};
use marina_vi::problem::generate_bilinear;
use marina_vi::solver::{derive_hyperparams, run, Solver};
use marina_vi::{CompressorSpec, SolverConfig, VIProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 10;
const D_HALF: usize = 50;
const LOW_ELL: f64 = 100.0;
const PROBLEM_SEED: u64 = 2024;

type Outcome = Result<String, String>;

fn low_problem() -> VIProblem {
    generate_bilinear(N, D_HALF, 1.0, LOW_ELL, PROBLEM_SEED)
        .unwrap()
        .into()
}

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/bilinear_sweep.json")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn deterministic_contraction() -> Outcome {
    let p = low_problem();
    let c = p.exact_constants().unwrap();
    let mut cfg = SolverConfig::auto(&c, CompressorSpec::identity(p.dim()).unwrap(), N, 10, 0);
    cfg.record_events = false;
    let out = run(&p, &cfg, None).unwrap();
    let r = &out.epoch_residuals;
    let mut violations = Vec::new();
    for s in 1..r.len() {
        if r[s] > 0.5 * r[s - 1] + 1e-12 {
            violations.push(s);
        }
    }
    let ratios: Vec<String> = r
        .windows(2)
        .map(|w| format!("{:.1e}", w[1] / w[0]))
        .collect();
    check(
        violations.is_empty(),
        format!(
            "K={}, ‖F‖² {:.3e} → {:.3e}, epoch ratios [{}], violating epochs {violations:?}",
            cfg.inner_iters,
            r[0],
            r[r.len() - 1],
            ratios.join(", ")
        ),
    )
}

struct StochasticStats {
    gamma: f64,
    inner_iters: usize,
    contraction: f64,
    decay: f64,
    drift: f64,
}

/// One epoch of RAND-K (k = 10) from the zero point for 32 master seeds.
fn stochastic_epoch() -> StochasticStats {
    let p = low_problem();
    let c = p.exact_constants().unwrap();
    let spec = CompressorSpec::rand_k(10, p.dim()).unwrap();
    let seeds = 32;
    let (mut contraction, mut decay, mut drift) = (0.0, 0.0, 0.0);
    let mut cfg = SolverConfig::auto(&c, spec, N, 1, 0);
    cfg.record_events = false;
    for seed in 0..seeds {
        cfg.master_seed = 1000 + seed;
        let out = run(&p, &cfg, None).unwrap();
        let st = out.epoch_stats[0];
        contraction += out.epoch_residuals[1] / out.epoch_residuals[0];
        decay += st.estimator_end / st.residual_start;
        drift += st.drift_end / st.residual_start;
    }
    let sf = seeds as f64;
    StochasticStats {
        gamma: cfg.gamma,
        inner_iters: cfg.inner_iters,
        contraction: contraction / sf,
        decay: decay / sf,
        drift: drift / sf,
    }
}

fn stochastic_contraction(s: &StochasticStats) -> Outcome {
    check(
        s.contraction <= 0.6,
        format!(
            "mean ‖F(z̃¹)‖²/‖F(z̃⁰)‖² = {:.4e} over 32 seeds (limit 0.6)",
            s.contraction
        ),
    )
}

fn estimator_decay(s: &StochasticStats) -> Outcome {
    let mu = 1.0;
    let bound = (1.0 - 2.0 * s.gamma * mu / 3.0).powi(s.inner_iters as i32) * 1.2;
    check(
        s.decay <= bound,
        format!("mean ‖g^K‖²/‖g⁰‖² = {:.4e}, bound {bound:.4e}", s.decay),
    )
}

fn estimator_drift(s: &StochasticStats) -> Outcome {
    let spec = CompressorSpec::rand_k(10, 2 * D_HALF).unwrap();
    let q = s.gamma * LOW_ELL * (1.0 + spec.alpha() / N as f64);
    let bound = q / (1.0 - q) * 1.2;
    check(
        s.drift <= bound,
        format!(
            "mean ‖F(z^K) − g^K‖²/‖F(z⁰)‖² = {:.4e}, bound {bound:.4e}",
            s.drift
        ),
    )
}

fn compressor_contract() -> Outcome {
    let d = 10;
    let draws = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut worst_z = 0.0f64;
    let mut int8_var = 0.0;
    for spec in [
        CompressorSpec::identity(d).unwrap(),
        CompressorSpec::rand_k(3, d).unwrap(),
        CompressorSpec::int8_quant(d).unwrap(),
    ] {
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        let mut err_sq = 0.0;
        for _ in 0..draws {
            let payload = spec.compress(&u, &mut rng).unwrap().payload;
            for j in 0..d {
                let e = payload[j] - u[j];
                sum[j] += e;
                sum_sq[j] += e * e;
                err_sq += e * e;
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
            worst_z = worst_z.max(z);
        }
        if spec.payload_bits() == 8 * d as u64 + 32 {
            int8_var = err_sq / nf;
        }
    }

    let mut worst_identity = 0.0f64;
    for d in 1..=8usize {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        for k in 1..=d {
            let (mean, err) = exhaustive_randk_moments(k, &u).unwrap();
            let expected = (d as f64 / k as f64 - 1.0) * norm_sq(&u);
            let bias = norm(&linalg::sub(&mean, &u));
            worst_identity = worst_identity.max((err - expected).abs().max(bias) / norm_sq(&u));
        }
    }

    // Worst case for stochastic rounding: every level sits halfway between grid points.
    let dq = 64;
    let mut u_half = vec![0.5 / 127.0; dq];
    u_half[0] = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let reps = 20_000;
    let mut var_half = 0.0;
    for _ in 0..reps {
        let q = quantize_int8(&u_half, &mut rng).dequantize();
        var_half += norm_sq(&linalg::sub(&q, &u_half));
    }
    var_half /= reps as f64;
    let int8_bound = d as f64 / (4.0 * 127.0 * 127.0) * norm_sq(&u);
    let half_bound = dq as f64 / (4.0 * 127.0 * 127.0) * norm_sq(&u_half);

    check(
        worst_z <= 4.0 && worst_identity <= 1e-12 && int8_var <= int8_bound && var_half <= half_bound,
        format!(
            "worst bias {worst_z:.2} SE (limit 4); rand_k variance identity max rel. error {worst_identity:.1e}; \
             int8 variance {int8_var:.3e} ≤ {int8_bound:.3e}, halfway input {var_half:.3e} ≤ {half_bound:.3e}"
        ),
    )
}

fn telescoping_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut steps = 0usize;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let n = rng.gen_range(2..=8);
        let d_half = rng.gen_range(2..=12);
        let lambda = rng.gen_range(0.5..2.0);
        let ell = lambda * rng.gen_range(2.0..30.0);
        let p: VIProblem = generate_bilinear(n, d_half, lambda, ell, seed)
            .unwrap()
            .into();
        let c = p.exact_constants().unwrap();
        let cfg = SolverConfig::auto(&c, CompressorSpec::identity(p.dim()).unwrap(), n, 1, 0);
        let solver = Solver::new(&p, cfg.clone()).unwrap();
        let mut ledger = solver.new_ledger();
        let z0: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut state = solver.init_epoch(1, &z0, &mut ledger).unwrap();
        loop {
            let exact = p.eval_full(&state.z_prev).unwrap();
            worst = worst.max(norm(&linalg::sub(&exact, &state.g_curr)));
            steps += 1;
            if state.inner_index >= cfg.inner_iters {
                break;
            }
            solver.inner_step(&mut state, &mut ledger).unwrap();
        }
    }
    check(
        worst <= 1e-12,
        format!("max ‖g^k − F(z^k)‖ = {worst:.3e} over {steps} iterations on 5 problems"),
    )
}

fn solution_convergence() -> Outcome {
    let p = low_problem();
    let c = p.exact_constants().unwrap();
    let mut cfg = SolverConfig::auto(&c, CompressorSpec::identity(p.dim()).unwrap(), N, 10, 0);
    cfg.record_events = false;
    let out = run(&p, &cfg, None).unwrap();
    let best = out
        .trace
        .iter()
        .map(|t| t.residual_sq_rel)
        .fold(f64::INFINITY, f64::min);
    let z_star = p.exact_solution().unwrap();
    let dist = norm(&linalg::sub(&out.final_iterate, &z_star)) / norm(&z_star);
    check(
        best <= 1e-8 && dist <= 1e-3,
        format!("identity: min residual_sq_rel {best:.3e}, final relative distance {dist:.3e}"),
    )
}

fn bit_ordering() -> Outcome {
    let text = std::fs::read_to_string(config_path()).unwrap();
    let cfg = load_config(&text).unwrap();
    let result = run_suite(&cfg, &[Scenario::Low]).unwrap();
    let bits = |method: &str| {
        result
            .summary_row(Scenario::Low, method)
            .and_then(|row| row.bits_to[2])
            .unwrap_or(f64::INFINITY)
    };
    let (rand_k, int8, identity) = (bits("MARINA-RandK"), bits("Q-MARINA"), bits("MARINA"));
    check(
        rand_k < int8 && int8 < identity,
        format!(
            "mean bits to 1e-6 over {} seeds: rand_k {rand_k:.4e}, int8 {int8:.4e}, identity {identity:.4e} \
             (required rand_k < int8 < identity)",
            cfg.seeds.len()
        ),
    )
}

fn gradient_equivalent_accounting() -> Outcome {
    let p: VIProblem = generate_bilinear(4, 6, 1.0, 8.0, 11).unwrap().into();
    let d = p.dim();
    let c = p.exact_constants().unwrap();
    let mut report = Vec::new();
    let mut ok = true;
    for spec in [
        CompressorSpec::identity(d).unwrap(),
        CompressorSpec::rand_k(3, d).unwrap(),
        CompressorSpec::int8_quant(d).unwrap(),
    ] {
        let h = derive_hyperparams(&c, &spec, p.n());
        let epochs = 3;
        let cfg = SolverConfig::new(h.gamma, h.inner_iters, epochs, spec, 5);
        let out = run(&p, &cfg, None).unwrap();
        let events = out.ledger.events().unwrap();
        for i in 0..p.n() {
            let mine = events
                .iter()
                .filter(|e| e.direction == Direction::Uplink && e.device == Some(i));
            let (mut full, mut compressed, mut bits) = (0u64, 0u64, 0u64);
            for e in mine {
                bits += e.bits;
                if e.inner_iter == 0 {
                    ok &= e.bits == 32 * d as u64;
                    full += 1;
                } else {
                    ok &= e.bits == spec.payload_bits();
                    compressed += 1;
                }
            }
            let k = h.inner_iters as u64;
            let s = epochs as u64;
            ok &= full == s && compressed == s * (k - 1);
            ok &= bits == out.ledger.per_device_uplink_bits()[i];
            ok &= bits == s * 32 * d as u64 + s * (k - 1) * spec.payload_bits();
            let equivalents = full as f64 + spec.delta() * compressed as f64;
            let formula = epochs as f64 * gradient_equivalents(&spec, h.inner_iters);
            ok &= (equivalents - formula).abs() <= 1e-12 * formula;
            if i == 0 {
                report.push(format!(
                    "{:?}: {equivalents:.4} equivalents/device",
                    spec.kind()
                ));
            }
        }
    }
    check(ok, report.join("; "))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_marina-vi");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let status = Command::new(bin)
            .arg("--config")
            .arg(config_path())
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap();
        if !status.status.success() {
            return Err(format!("run exited with {:?}", status.status.code()));
        }
    }
    let mut compared = Vec::new();
    for name in ["low.csv", "mid.csv", "high.csv", "summary.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        if a != b {
            return Err(format!("{name} differs between runs"));
        }
        compared.push(format!("{name} ({} bytes)", a.len()));
    }
    Ok(format!("identical: {}", compared.join(", ")))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {id:>2} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id:>2} {name} ({secs:.1}s): {detail}");
            }
        }
    };

    let t = Instant::now();
    report(
        1,
        "deterministic per-epoch halving",
        t,
        deterministic_contraction(),
    );
    let t = Instant::now();
    let stats = stochastic_epoch();
    report(
        2,
        "stochastic per-epoch contraction",
        t,
        stochastic_contraction(&stats),
    );
    report(
        3,
        "estimator decay within an epoch",
        t,
        estimator_decay(&stats),
    );
    report(
        4,
        "estimator drift within an epoch",
        t,
        estimator_drift(&stats),
    );
    let t = Instant::now();
    report(5, "compressor contract", t, compressor_contract());
    let t = Instant::now();
    report(6, "telescoping oracle", t, telescoping_oracle());
    let t = Instant::now();
    report(7, "solution convergence", t, solution_convergence());
    let t = Instant::now();
    report(8, "bit ordering on the low-ell scenario", t, bit_ordering());
    let t = Instant::now();
    report(
        9,
        "gradient-equivalent accounting",
        t,
        gradient_equivalent_accounting(),
    );
    let t = Instant::now();
    report(10, "byte-identical reruns", t, determinism());

    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
