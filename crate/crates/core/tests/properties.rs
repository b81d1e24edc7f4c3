use marina_vi::compressor::{quantize_int8, CompressorKind};
use marina_vi::experiment::{load_config, run_suite, Scenario, Trace, TraceRow};
use marina_vi::linalg::{dot, norm, norm_sq, sub};
use marina_vi::problem::{generate_bilinear, generate_quadratic};
use marina_vi::{CompressorSpec, VIProblem};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, d)
}

fn bilinear(n: usize, d_half: usize, seed: u64) -> VIProblem {
    generate_bilinear(n, d_half, 1.5, 12.0, seed)
        .unwrap()
        .into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_matches_its_affine_system(seed in 0u64..1000, z in point(8)) {
        for p in [bilinear(3, 4, seed), generate_quadratic(3, 8, seed).unwrap().into()] {
            let (m, q) = p.affine_system();
            let mut expected = m.matvec(&z);
            for (e, qi) in expected.iter_mut().zip(&q) {
                *e += qi;
            }
            let f = p.eval_full(&z).unwrap();
            prop_assert!(norm(&sub(&f, &expected)) <= 1e-10 * (1.0 + norm(&f)));
        }
    }

    #[test]
    fn bilinear_monotonicity_is_exactly_lambda(seed in 0u64..1000, u in point(10), v in point(10)) {
        let p = bilinear(4, 5, seed);
        let df = sub(&p.eval_full(&u).unwrap(), &p.eval_full(&v).unwrap());
        let dz = sub(&u, &v);
        let lhs = dot(&df, &dz);
        let rhs = 1.5 * norm_sq(&dz);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs + norm(&df) * norm(&dz)));
    }

    #[test]
    fn exact_solution_zeroes_the_operator(seed in 0u64..1000) {
        let p = bilinear(5, 6, seed);
        let z = p.exact_solution().unwrap();
        let f = p.eval_full(&z).unwrap();
        prop_assert!(norm(&f) <= 1e-9 * (1.0 + norm(&z)));
    }

    #[test]
    fn rand_k_keeps_k_coordinates(d in 1usize..40, k_frac in 0.0..1.0f64, seed: u64, u in point(40)) {
        let k = 1 + ((d - 1) as f64 * k_frac) as usize;
        let u: Vec<f64> = u[..d].iter().map(|v| if *v == 0.0 { 1.0 } else { *v }).collect();
        let spec = CompressorSpec::rand_k(k, d).unwrap();
        let msg = spec.compress(&u, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let kept: Vec<usize> = (0..d).filter(|&j| msg.payload[j] != 0.0).collect();
        prop_assert_eq!(kept.len(), k);
        for j in kept {
            prop_assert!((msg.payload[j] - d as f64 / k as f64 * u[j]).abs() <= 1e-12 * u[j].abs());
        }
        prop_assert_eq!(msg.wire_bits, spec.payload_bits());
    }

    #[test]
    fn int8_levels_bracket_the_input(seed: u64, u in point(24)) {
        let q = quantize_int8(&u, &mut ChaCha8Rng::seed_from_u64(seed));
        let max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(q.levels.iter().all(|&l| (-127..=127).contains(&l)));
        for (j, &l) in q.levels.iter().enumerate() {
            let t = if max > 0.0 { u[j] / q.scale } else { 0.0 };
            prop_assert!((l as f64 - t).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn compression_is_a_function_of_the_seed(seed: u64, u in point(16), kind in 0usize..3) {
        let spec = match kind {
            0 => CompressorSpec::identity(16),
            1 => CompressorSpec::rand_k(5, 16),
            _ => CompressorSpec::int8_quant(16),
        }
        .unwrap();
        let a = spec.compress(&u, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = spec.compress(&u, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(
            a.payload.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.payload.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn trace_csv_roundtrips_bit_for_bit(
        rows in prop::collection::vec(
            ("[a-zA-Z, \"-]{1,12}", any::<u64>(), 1usize..50, 0usize..1000, any::<f64>(), any::<u64>()),
            0..20,
        )
    ) {
        let trace = Trace {
            rows: rows
                .into_iter()
                .map(|(method, seed, epoch, inner_iter, r, bits)| TraceRow {
                    method,
                    seed,
                    epoch,
                    inner_iter,
                    residual_sq_rel: if r.is_nan() { 0.0 } else { r },
                    cum_uplink_bits_per_device: bits,
                })
                .collect(),
        };
        let mut buf = Vec::new();
        trace.write_to(&mut buf).unwrap();
        prop_assert!(!buf.contains(&b'\r'));
        let back = Trace::read_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.rows.len(), trace.rows.len());
        for (a, b) in back.rows.iter().zip(&trace.rows) {
            prop_assert_eq!(&a.method, &b.method);
            prop_assert_eq!(a.residual_sq_rel.to_bits(), b.residual_sq_rel.to_bits());
            prop_assert_eq!((a.seed, a.epoch, a.inner_iter, a.cum_uplink_bits_per_device),
                            (b.seed, b.epoch, b.inner_iter, b.cum_uplink_bits_per_device));
        }
    }
}

#[test]
fn scenario_runs_concatenate_to_the_full_run() {
    let cfg = load_config(
        r#"{
          "problem": { "n": 3, "d_half": 3, "lambda": 1.0,
                       "target_ell": { "low": 4.0, "mid": 8.0, "high": 16.0 }, "problem_seed": 9 },
          "methods": [
            { "name": "rk", "compressor": { "kind": "rand_k", "k": 2 } },
            { "name": "q", "compressor": { "kind": "int8_quant" } },
            { "name": "id", "compressor": { "kind": "identity" } }
          ],
          "epochs": 2,
          "seeds": [1, 2]
        }"#,
    )
    .unwrap();
    let all = run_suite(&cfg, &Scenario::ALL).unwrap();
    let mut pieces = Vec::new();
    for s in Scenario::ALL {
        pieces.extend(run_suite(&cfg, &[s]).unwrap().scenarios);
    }
    assert_eq!(all.scenarios.len(), pieces.len());
    for (a, b) in all.scenarios.iter().zip(&pieces) {
        assert_eq!(a.scenario, b.scenario);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.problem_fingerprint, b.problem_fingerprint);
    }
    assert!(matches!(
        cfg.methods[0].compressor,
        CompressorKind::RandK { k: 2 }
    ));
}
