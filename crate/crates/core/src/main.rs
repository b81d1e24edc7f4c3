use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use marina_vi::check::run_checks;
use marina_vi::experiment::{load_config, run_suite, write_outputs, Scenario};

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    Low,
    Mid,
    High,
    All,
}

/// Run MARINA compressed-communication experiments on bilinear saddle-point problems.
#[derive(Debug, Parser)]
#[command(name = "marina-vi", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory for traces, summary and manifest.
    #[arg(long, value_name = "PATH", default_value = "./out")]
    out_dir: PathBuf,
    /// Use this many seeds instead of the config's list.
    #[arg(long, value_name = "N")]
    seeds: Option<usize>,
    /// Which scenario(s) to run.
    #[arg(long, value_enum, default_value = "all")]
    scenario: ScenarioArg,
    /// Run the invariant suite instead of the experiments.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let config = match load_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let config = match cli.seeds {
        Some(n) => match config.with_seed_count(n) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => config,
    };

    if cli.check {
        let results = run_checks(&config);
        let mut all = true;
        for r in &results {
            println!(
                "[{}] {}: {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.detail
            );
            all &= r.passed;
        }
        return if all {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(EXIT_CHECK_FAILED)
        };
    }

    let scenarios: Vec<Scenario> = match cli.scenario {
        ScenarioArg::Low => vec![Scenario::Low],
        ScenarioArg::Mid => vec![Scenario::Mid],
        ScenarioArg::High => vec![Scenario::High],
        ScenarioArg::All => Scenario::ALL.to_vec(),
    };
    if let Some(missing) = scenarios
        .iter()
        .find(|s| !config.problem.target_ell.contains_key(s))
    {
        if cli.scenario != ScenarioArg::All {
            eprintln!(
                "error: scenario `{missing}` has no target_ell in {}",
                cli.config.display()
            );
            return ExitCode::from(EXIT_CONFIG);
        }
    }

    let result = match run_suite(&config, &scenarios) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match write_outputs(&result, &config, &cli.out_dir) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let diverged = result.diverged_cells();
    if diverged > 0 {
        eprintln!("{diverged} cell(s) diverged; see summary.csv");
        return ExitCode::from(EXIT_DIVERGED);
    }
    ExitCode::SUCCESS
}
