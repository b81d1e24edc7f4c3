use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_marina-vi");

const SMALL_CONFIG: &str = r#"{
  "problem": { "n": 3, "d_half": 4, "lambda": 1.0,
               "target_ell": { "low": 5.0, "mid": 10.0 }, "problem_seed": 3 },
  "methods": [
    { "name": "MARINA-RandK", "compressor": { "kind": "rand_k", "k": 2 } },
    { "name": "Q-MARINA", "compressor": { "kind": "int8_quant" } },
    { "name": "MARINA", "compressor": { "kind": "identity" } }
  ],
  "epochs": 3,
  "seeds": [1, 2]
}"#;

fn marina(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = marina(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn help_exits_cleanly() {
    let out = marina(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--scenario"));
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "problem": { "n": 0 } }"#);
    let out = marina(&["--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let nonexistent = dir.path().join("nope.json");
    let out = marina(&["--config", nonexistent.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn single_scenario_writes_its_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let out_dir = dir.path().join("out");
    let out = marina(&[
        "--config",
        &cfg,
        "--scenario",
        "low",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("low.csv").exists());
    assert!(out_dir.join("summary.csv").exists());
    assert!(!out_dir.join("mid.csv").exists());
    let trace = std::fs::read_to_string(out_dir.join("low.csv")).unwrap();
    assert!(trace
        .starts_with("method,seed,epoch,inner_iter,residual_sq_rel,cum_uplink_bits_per_device\n"));
    assert!(trace.lines().skip(1).all(|l| l.split(',').count() == 6));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert!(manifest.get("config_sha256").is_some());
}

#[test]
fn missing_scenario_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let out_dir = dir.path().join("out");
    let out = marina(&[
        "--config",
        &cfg,
        "--scenario",
        "high",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seeds_flag_overrides_the_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let out_dir = dir.path().join("out");
    let out = marina(&[
        "--config",
        &cfg,
        "--scenario",
        "low",
        "--seeds",
        "4",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(
        summary
            .lines()
            .skip(1)
            .all(|l| l.split(',').nth(5) == Some("4")),
        "{summary}"
    );
}

#[test]
fn check_mode_passes_on_the_bundled_config() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/bilinear_sweep.json");
    let out = marina(&["--check", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("[PASS]")));
}

#[test]
fn divergent_cells_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_CONFIG.replace(
        r#""compressor": { "kind": "identity" } }"#,
        r#""compressor": { "kind": "identity" }, "gamma": 50.0, "inner_iters": 400 }"#,
    );
    let cfg = write_config(dir.path(), &text);
    let out_dir = dir.path().join("out");
    let out = marina(&[
        "--config",
        &cfg,
        "--scenario",
        "low",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("summary.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = marina(&["--config", &cfg, "--out-dir", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["low.csv", "mid.csv", "summary.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}
