use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pfons_bench::experiment::{loss_checks, prepare, run_prepared, write_outputs, CheckResult};
use pfons_bench::output::Sig17;
use pfons_bench::sweep::{parse_grid, run_sweep};
use pfons_bench::{BenchError, RunConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "pfons", version, about = "Projection-free Online Newton Step experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json and blocks.csv.
    Run {
        config: PathBuf,
        /// Output directory (defaults to the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of experiments, e.g. `--grid T=1000,2000,4000 --grid seed=1,2`.
    Sweep {
        config: PathBuf,
        #[arg(long, required = true)]
        grid: Vec<String>,
        /// Worker threads (defaults to available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suites only; writes no files.
    Verify {
        config: PathBuf,
        /// Sampled pairs for the block curvature check.
        #[arg(long, default_value_t = 10_000)]
        curvature_samples: usize,
        /// Points for the finite-difference gradient check.
        #[arg(long, default_value_t = 100)]
        gradient_points: usize,
    },
    /// Print the tuned parameters for a config without running.
    Info { config: PathBuf },
}

fn load(path: &PathBuf, out: Option<PathBuf>) -> Result<RunConfig, BenchError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn print_checks(checks: &[CheckResult]) {
    for c in checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn fail_on(checks: &[CheckResult]) -> Result<(), BenchError> {
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(BenchError::Invariant(format!("failed checks: {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct InfoJson {
    horizon: usize,
    block_len: usize,
    eta: Sig17,
    eps: Sig17,
    eps_init: Sig17,
    mode: String,
    g: Sig17,
    beta: Sig17,
    alpha: Sig17,
    radius: Sig17,
    loo_call_budget: Sig17,
    theorem_call_budget: Sig17,
    notes: Vec<String>,
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config, out)?;
            let outcome = run_prepared(prepare(&cfg)?)?;
            let (report, blocks) = write_outputs(&outcome, &cfg.output_dir)?;
            print_checks(&outcome.checks);
            println!(
                "regret {:.6e} over T={} with {} LOO calls",
                outcome.regret(),
                outcome.prepared.params.horizon,
                outcome.run.total_loo_calls
            );
            println!("wrote {} and {}", report.display(), blocks.display());
            fail_on(&outcome.checks)
        }
        Command::Sweep { config, grid, jobs, out } => {
            let cfg = load(&config, out)?;
            let grid = parse_grid(&grid)?;
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let summary = run_sweep(&cfg, &grid, jobs)?;
            for r in &summary.rows {
                println!(
                    "seed={} T={} K={} regret={:.6e} regret/T={:.6e} loo={} {}",
                    r.seed,
                    r.horizon,
                    r.block_len,
                    r.regret.0,
                    r.regret_per_round.0,
                    r.loo_calls,
                    if r.passed { "ok" } else { "FAILED" }
                );
            }
            for t in &summary.trends {
                let slope = t.log_log_slope.map_or("n/a".to_string(), |s| format!("{:.4}", s.0));
                println!(
                    "seed={} slope={} regret_nondecreasing={} regret_per_round_decreasing={}",
                    t.seed, slope, t.regret_nondecreasing, t.regret_per_round_decreasing
                );
            }
            println!("wrote {}", cfg.output_dir.join("sweep.json").display());
            let failed: Vec<String> = summary
                .rows
                .iter()
                .filter(|r| !r.passed)
                .map(|r| format!("T={} seed={}: {}", r.horizon, r.seed, r.failed_checks.join(", ")))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(BenchError::Invariant(failed.join("; ")))
            }
        }
        Command::Verify {
            config,
            curvature_samples,
            gradient_points,
        } => {
            let cfg = load(&config, None)?;
            let prepared = prepare(&cfg)?;
            let mut checks = loss_checks(&prepared, curvature_samples, gradient_points)?;
            let outcome = run_prepared(prepared)?;
            checks.extend(outcome.checks);
            print_checks(&checks);
            fail_on(&checks)
        }
        Command::Info { config } => {
            let cfg = load(&config, None)?;
            let p = prepare(&cfg)?;
            let c = p.constants;
            let r = p.set.radius();
            let info = InfoJson {
                horizon: p.params.horizon,
                block_len: p.params.block_len,
                eta: Sig17(p.params.eta),
                eps: Sig17(p.params.eps),
                eps_init: Sig17(p.params.eps_init),
                mode: format!("{:?}", p.params.mode),
                g: Sig17(c.g),
                beta: Sig17(c.beta),
                alpha: Sig17(c.alpha),
                radius: Sig17(r),
                loo_call_budget: Sig17(pfons_core::loo_call_budget(&p.params, c.g, r)),
                theorem_call_budget: Sig17(pfons_core::theorem_call_budget(p.params.horizon, p.effective_dim())),
                notes: p.notes,
            };
            let json =
                serde_json::to_string_pretty(&info).map_err(|e| BenchError::Runtime(format!("cannot serialize: {e}")))?;
            println!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pfons: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
