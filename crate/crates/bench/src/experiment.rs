//! End-to-end experiment: tune, run, measure regret, verify, report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pfons_core::sets::sample_ball;
use pfons_core::vecops::{norm, sub};
use pfons_core::{
    check_block_curvature, compute_regret, energy_bound_exact, energy_bound_sketch, gradient_fd_error,
    loo_call_budget, run_online_observed, stream_constants, theorem_call_budget,
    theoretical_regret_bound, tune_params_fullrank, tune_params_lowdim, BlockEvent, BlockObserver,
    FeasibleSet, LossConstants, MetricStrategy, Mode, OfflineSolution, Params,
    RegretBoundTerms, RegretOptions, RunOptions, RunReport,
};
use serde::Serialize;

use crate::baselines::{run_baseline_exact_ons_ball, run_baseline_ogd, BaselineReport};
use crate::config::{Baseline, ModeSpec, RunConfig};
use crate::error::BenchError;
use crate::output::{sig17, write_atomic, Sig17};
use crate::stream::{generate_lowdim_stream, sub_rng, LossStream, VERIFY_STREAM};

const CAP_RTOL: f64 = 1e-9;
const ENERGY_RTOL: f64 = 1e-6;
/// Covariance tracking costs `n²` per round.
const COVARIANCE_DIM_LIMIT: usize = 200;

/// Everything needed to start a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub set: FeasibleSet,
    pub stream: LossStream,
    pub constants: LossConstants,
    pub params: Params,
    pub tuned: bool,
    pub notes: Vec<String>,
    pub strategy: MetricStrategy,
}

impl Prepared {
    /// Dimension entering the tuning formulas and budgets.
    pub fn effective_dim(&self) -> usize {
        self.params.mode.rho().unwrap_or(self.set.dim())
    }
}

pub fn prepare(config: &RunConfig) -> Result<Prepared, BenchError> {
    config.check()?;
    let set = config.build_set()?;
    let stream = generate_lowdim_stream(&set, config.horizon, &config.loss, config.seed)?;
    let constants = stream_constants(&stream.losses).ok_or_else(|| BenchError::Config("empty loss stream".into()))?;
    let (params, notes) = tuned_params(config, &set, &constants)?;
    let strategy = match params.mode {
        Mode::Sketch { rho } => MetricStrategy::FdSketch { rho },
        _ => MetricStrategy::Exact,
    };
    Ok(Prepared {
        config: config.clone(),
        set,
        stream,
        constants,
        params,
        tuned: config.overrides.is_empty(),
        notes,
        strategy,
    })
}

fn tuned_params(
    config: &RunConfig,
    set: &FeasibleSet,
    c: &LossConstants,
) -> Result<(Params, Vec<String>), BenchError> {
    let r = set.radius();
    let t = config.horizon;
    let tuning = match config.mode {
        ModeSpec::Fullrank => tune_params_fullrank(t, set.dim(), c.g, r, c.alpha),
        ModeSpec::Lowdim { rho } => tune_params_lowdim(t, rho, c.g, r, c.alpha, false),
        ModeSpec::Sketch { rho } => tune_params_lowdim(t, rho, c.g, r, c.alpha, true),
    }
    .map_err(BenchError::from)?;
    let mut params = tuning.params;
    let o = &config.overrides;
    if let Some(k) = o.block_len {
        params.block_len = k;
    }
    if let Some(v) = o.eta {
        params.eta = v;
    }
    if let Some(v) = o.eps {
        params.eps = v;
    }
    if let Some(v) = o.eps_init {
        params.eps_init = v;
    }
    params
        .validate(c.g, r, c.alpha)
        .map_err(|v| BenchError::Config(format!("parameter invariant violated: {} ({v})", v.name())))?;
    let notes = if o.is_empty() {
        tuning.notes
    } else {
        vec!["parameters overridden by the config".into()]
    };
    Ok((params, notes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Largest Euclidean distance from an AFP output `ỹ` to the set.
#[derive(Default)]
struct AnchorDistance {
    set: Option<FeasibleSet>,
    max_dist: f64,
}

impl BlockObserver for AnchorDistance {
    fn on_block(&mut self, event: &BlockEvent<'_>) -> pfons_core::Result<()> {
        if let Some(set) = &self.set {
            let p = set.euclid_project(&event.afp.y_tilde)?;
            self.max_dist = self.max_dist.max(norm(&sub(&event.afp.y_tilde, &p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub prepared: Prepared,
    pub run: RunReport,
    pub offline: OfflineSolution,
    pub baselines: Vec<BaselineReport>,
    pub bounds: Bounds,
    pub checks: Vec<CheckResult>,
    pub wallclock_seconds: f64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn regret(&self) -> f64 {
        self.run.final_regret().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct Bounds {
    pub loo_budget: f64,
    pub theorem_budget: f64,
    pub regret: RegretBoundTerms,
    /// `Ω_ρ` of the observed gradient covariance, when tracked.
    pub omega: Option<f64>,
    /// Energy bound for the run's mode (minimized over `ρ` for the exact metric).
    pub energy: Option<f64>,
}

/// Tail eigenvalue masses `Ω_0, Ω_1, …, Ω_n` of a PSD matrix.
pub fn tail_masses(cov: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let mut eig: Vec<f64> = cov.clone().symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let mut tails = vec![0.0; eig.len() + 1];
    for i in (0..eig.len()).rev() {
        tails[i] = tails[i + 1] + eig[i];
    }
    tails
}

pub fn run_prepared(prepared: Prepared) -> Result<Outcome, BenchError> {
    let start = Instant::now();
    let set = &prepared.set;
    let losses = &prepared.stream.losses;
    let c = prepared.constants;
    let r = set.radius();
    let params = prepared.params.clone();
    let options = RunOptions {
        track_gradient_covariance: set.dim() <= COVARIANCE_DIM_LIMIT,
        initial_point: None,
    };
    let mut observer = AnchorDistance {
        set: Some(set.clone()),
        max_dist: 0.0,
    };
    let mut run = run_online_observed(losses, set, &params, prepared.strategy, &options, &mut observer)?;
    let offline = compute_regret(&mut run, losses, set, &RegretOptions::default())?;

    let mut baselines = Vec::new();
    for b in &prepared.config.baselines {
        baselines.push(match b {
            Baseline::Ogd => run_baseline_ogd(losses, set)?,
            Baseline::ExactOnsBall => run_baseline_exact_ons_ball(losses, set)?,
        });
    }

    let d = prepared.effective_dim();
    let tails = run.grad_covariance.as_ref().map(tail_masses);
    let omega = tails.as_ref().map(|t| t[d.min(t.len() - 1)]);
    let energy = tails.as_ref().map(|t| match params.mode {
        Mode::Sketch { rho } => energy_bound_sketch(&params, c.g, rho, t[rho.min(t.len() - 1)]),
        _ => (1..t.len())
            .map(|k| energy_bound_exact(&params, c.g, k, t[k]))
            .fold(f64::INFINITY, f64::min),
    });
    let bounds = Bounds {
        loo_budget: loo_call_budget(&params, c.g, r),
        theorem_budget: theorem_call_budget(params.horizon, d),
        regret: theoretical_regret_bound(
            &params,
            c.g,
            r,
            c.alpha,
            c.beta,
            set.dim(),
            omega.unwrap_or(0.0),
            prepared.config.regret_bound_c,
        ),
        omega,
        energy,
    };
    let checks = invariant_checks(&prepared, &run, &bounds, observer.max_dist);
    Ok(Outcome {
        prepared,
        run,
        offline,
        baselines,
        bounds,
        checks,
        wallclock_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_experiment(config: &RunConfig) -> Result<Outcome, BenchError> {
    run_prepared(prepare(config)?)
}

fn invariant_checks(p: &Prepared, run: &RunReport, bounds: &Bounds, max_anchor_dist: f64) -> Vec<CheckResult> {
    let params = &p.params;
    let r = p.set.radius();
    let total = run.total_loo_calls;
    let mut out = Vec::new();

    out.push(CheckResult::new(
        "params_valid",
        params.validate(p.constants.g, r, p.constants.alpha).is_ok(),
        format!("K={} eta={} eps={} eps_init={}", params.block_len, sig17(params.eta), sig17(params.eps), sig17(params.eps_init)),
    ));
    out.push(CheckResult::new(
        "loo_budget",
        total as f64 <= bounds.loo_budget,
        format!("{total} calls, budget {}", sig17(bounds.loo_budget)),
    ));
    if p.tuned {
        out.push(CheckResult::new(
            "theorem_budget",
            total as f64 <= bounds.theorem_budget,
            format!("{total} calls, budget {}", sig17(bounds.theorem_budget)),
        ));
    }
    let fw_breach = run.rows.iter().find(|row| row.fw_soft_cap_exceeded);
    out.push(CheckResult::new(
        "fw_iteration_caps",
        fw_breach.is_none(),
        match fw_breach {
            Some(row) => format!("block {} exceeded the iteration cap", row.m),
            None => format!("max {} iterations per call", run.rows.iter().map(|r| r.max_fw_iters).max().unwrap_or(0)),
        },
    ));
    let pull_breach = run.rows.iter().find(|row| row.pull_iters as f64 > row.pull_bound + 1.0);
    out.push(CheckResult::new(
        "afp_pull_caps",
        pull_breach.is_none(),
        match pull_breach {
            Some(row) => format!("block {}: {} pulls, bound {}", row.m, row.pull_iters, sig17(row.pull_bound)),
            None => format!(
                "max {} pulls; slack used in {} blocks",
                run.rows.iter().map(|r| r.pull_iters).max().unwrap_or(0),
                run.rows.iter().filter(|r| r.used_pull_slack).count()
            ),
        },
    ));
    let worst = run.rows.iter().map(|row| row.afp_dist_sq).fold(0.0, f64::max);
    out.push(CheckResult::new(
        "afp_proximity",
        worst <= 3.0 * params.eps * (1.0 + CAP_RTOL),
        format!("max |x - y~|_A^2 = {}, 3 eps = {}", sig17(worst), sig17(3.0 * params.eps)),
    ));
    out.push(CheckResult::new(
        "anchor_in_3r_ball",
        run.max_anchor_norm <= 3.0 * r * (1.0 + CAP_RTOL),
        format!("max |y~| = {}, 3R = {}", sig17(run.max_anchor_norm), sig17(3.0 * r)),
    ));
    let dist_bound = (3.0 * params.eps / params.eps_init).sqrt();
    out.push(CheckResult::new(
        "anchor_distance_to_set",
        max_anchor_dist <= dist_bound * (1.0 + CAP_RTOL),
        format!("max dist = {}, sqrt(3 eps / eps_init) = {}", sig17(max_anchor_dist), sig17(dist_bound)),
    ));
    out.push(CheckResult::new(
        "loo_accounting",
        total == run.counter.loo_calls && total == run.counter.fw_iterations,
        format!("total {total}, oracle {}, fw {}", run.counter.loo_calls, run.counter.fw_iterations),
    ));
    if let Some(e) = bounds.energy {
        out.push(CheckResult::new(
            "energy_bound",
            run.energy_total <= e * (1.0 + ENERGY_RTOL),
            format!("energy {}, bound {}", sig17(run.energy_total), sig17(e)),
        ));
    }
    out
}

/// Loss-level checks used by `verify`: block curvature and finite-difference gradients.
pub fn loss_checks(p: &Prepared, samples: usize, points: usize) -> Result<Vec<CheckResult>, BenchError> {
    let mut rng = sub_rng(p.config.seed, VERIFY_STREAM);
    let r = p.set.radius();
    let losses = &p.stream.losses;
    let k = p.params.block_len;
    let blocks: Vec<_> = losses.chunks(k).take(8).collect();
    let per_block = samples.div_ceil(blocks.len().max(1));
    let mut violations = 0;
    for b in &blocks {
        violations += check_block_curvature(b, r, p.params.eta, per_block, &mut rng)?;
    }
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let l = &losses[i * losses.len() / points.max(1) % losses.len()];
        let x = sample_ball(&mut rng, p.set.dim(), 3.0 * r);
        worst = worst.max(gradient_fd_error(l, &x)?);
    }
    Ok(vec![
        CheckResult::new(
            "block_curvature",
            violations == 0,
            format!("{violations} violations in {} pairs", per_block * blocks.len()),
        ),
        CheckResult::new("gradient_fd", worst <= 1e-5, format!("max relative error {}", sig17(worst))),
    ])
}

pub const BLOCKS_HEADER: &str = "m,block_len,fw_iters,pull_iters,loo_calls_cum,loss_cum,regret_cum,afp_dist_sq";

pub fn render_blocks_csv(run: &RunReport) -> String {
    let mut s = String::with_capacity(64 * (run.rows.len() + 1));
    s.push_str(BLOCKS_HEADER);
    s.push('\n');
    for row in &run.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.m,
            row.block_len,
            row.fw_iters,
            row.pull_iters,
            row.loo_calls_cum,
            sig17(row.loss_cum),
            sig17(row.regret_cum),
            sig17(row.afp_dist_sq)
        ));
    }
    s
}

#[derive(Serialize)]
struct ParamsJson {
    horizon: usize,
    block_len: usize,
    eta: Sig17,
    eps: Sig17,
    eps_init: Sig17,
    mode: &'static str,
    rho: Option<usize>,
    strategy: &'static str,
    tuned: bool,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct ConstantsJson {
    g: Sig17,
    beta: Sig17,
    alpha: Sig17,
    radius: Sig17,
    dim: usize,
    effective_dim: usize,
}

#[derive(Serialize)]
struct TotalsJson {
    total_loss: Sig17,
    offline_value: Sig17,
    regret: Sig17,
    regret_per_round: Sig17,
    offline_converged: bool,
    offline_residual: Sig17,
    loo_calls: u64,
    pull_iterations: u64,
    blocks: usize,
    energy: Sig17,
    max_anchor_norm: Sig17,
    final_play: Vec<Sig17>,
}

#[derive(Serialize)]
struct RegretBoundJson {
    smoothness: Sig17,
    blocking: Sig17,
    curvature: Sig17,
    tail: Sig17,
    total: Sig17,
    c: Sig17,
}

#[derive(Serialize)]
struct BoundsJson {
    loo_call_budget: Sig17,
    theorem_call_budget: Sig17,
    regret: RegretBoundJson,
    omega: Option<Sig17>,
    energy: Option<Sig17>,
}

#[derive(Serialize)]
struct BaselineJson {
    name: &'static str,
    total_loss: Sig17,
    regret: Sig17,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    config: &'a RunConfig,
    params: ParamsJson,
    constants: ConstantsJson,
    totals: TotalsJson,
    bounds: BoundsJson,
    baselines: Vec<BaselineJson>,
    checks: &'a [CheckResult],
    passed: bool,
    notes: &'a [String],
    wallclock_seconds: Sig17,
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::FullRank => "fullrank",
        Mode::LowDim { .. } => "lowdim",
        Mode::Sketch { .. } => "sketch",
    }
}

pub fn render_report_json(o: &Outcome) -> Result<String, BenchError> {
    let p = &o.prepared;
    let c = p.constants;
    let t = p.params.horizon as f64;
    let regret = o.regret();
    let rb = &o.bounds.regret;
    let report = ReportJson {
        config: &p.config,
        params: ParamsJson {
            horizon: p.params.horizon,
            block_len: p.params.block_len,
            eta: Sig17(p.params.eta),
            eps: Sig17(p.params.eps),
            eps_init: Sig17(p.params.eps_init),
            mode: mode_name(p.params.mode),
            rho: p.params.mode.rho(),
            strategy: match p.strategy {
                MetricStrategy::Exact => "exact",
                MetricStrategy::FdSketch { .. } => "fd_sketch",
            },
            tuned: p.tuned,
            notes: p.notes.clone(),
        },
        constants: ConstantsJson {
            g: Sig17(c.g),
            beta: Sig17(c.beta),
            alpha: Sig17(c.alpha),
            radius: Sig17(p.set.radius()),
            dim: p.set.dim(),
            effective_dim: p.effective_dim(),
        },
        totals: TotalsJson {
            total_loss: Sig17(o.run.total_loss()),
            offline_value: Sig17(o.offline.value),
            regret: Sig17(regret),
            regret_per_round: Sig17(regret / t),
            offline_converged: o.offline.converged,
            offline_residual: Sig17(o.offline.residual),
            loo_calls: o.run.total_loo_calls,
            pull_iterations: o.run.counter.pull_iterations,
            blocks: o.run.rows.len(),
            energy: Sig17(o.run.energy_total),
            max_anchor_norm: Sig17(o.run.max_anchor_norm),
            final_play: o.run.final_play.iter().map(|v| Sig17(*v)).collect(),
        },
        bounds: BoundsJson {
            loo_call_budget: Sig17(o.bounds.loo_budget),
            theorem_call_budget: Sig17(o.bounds.theorem_budget),
            regret: RegretBoundJson {
                smoothness: Sig17(rb.smoothness),
                blocking: Sig17(rb.blocking),
                curvature: Sig17(rb.curvature),
                tail: Sig17(rb.tail),
                total: Sig17(rb.total),
                c: Sig17(rb.c),
            },
            omega: o.bounds.omega.map(Sig17),
            energy: o.bounds.energy.map(Sig17),
        },
        baselines: o
            .baselines
            .iter()
            .map(|b| BaselineJson {
                name: b.name,
                total_loss: Sig17(b.total_loss),
                regret: Sig17(b.regret(o.offline.value)),
            })
            .collect(),
        checks: &o.checks,
        passed: o.passed(),
        notes: &o.run.notes,
        wallclock_seconds: Sig17(o.wallclock_seconds),
    };
    serde_json::to_string_pretty(&report).map_err(|e| BenchError::Runtime(format!("cannot serialize report: {e}")))
}

/// Writes `report.json` and `blocks.csv` into `dir`; returns their paths.
pub fn write_outputs(o: &Outcome, dir: &Path) -> Result<(PathBuf, PathBuf), BenchError> {
    let report = dir.join("report.json");
    let blocks = dir.join("blocks.csv");
    write_atomic(&blocks, render_blocks_csv(&o.run).as_bytes())?;
    let mut json = render_report_json(o)?;
    json.push('\n');
    write_atomic(&report, json.as_bytes())?;
    Ok((report, blocks))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(horizon: usize) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{"set": {{"kind": "simplex", "dim": 5}},
                "loss": {{"family": "quadratic", "rho": 2, "noise": 0.05}},
                "horizon": {horizon}, "mode": {{"kind": "lowdim", "rho": 2}},
                "seed": 3, "baselines": ["ogd"]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn small_run_passes_checks() {
        let o = run_experiment(&config(300)).unwrap();
        assert!(o.passed(), "{:?}", o.checks);
        assert_eq!(o.run.rows.iter().map(|r| r.block_len).sum::<usize>(), 300);
        assert_eq!(o.baselines.len(), 1);
        let csv = render_blocks_csv(&o.run);
        assert!(csv.starts_with(BLOCKS_HEADER));
        assert_eq!(csv.lines().count(), o.run.rows.len() + 1);
        let v: serde_json::Value = serde_json::from_str(&render_report_json(&o).unwrap()).unwrap();
        assert_eq!(v["params"]["block_len"], o.prepared.params.block_len);
        assert_eq!(v["passed"], true);
    }

    #[test]
    fn override_below_kg_squared_is_rejected() {
        let mut c = config(300);
        c.overrides.eps_init = Some(1e-6);
        match prepare(&c) {
            Err(BenchError::Config(m)) => assert!(m.contains("(K*G)^2"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tail_masses_of_diagonal() {
        let m = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let t = tail_masses(&m);
        assert_eq!(t.len(), 4);
        assert!((t[0] - 6.0).abs() < 1e-12 && (t[1] - 3.0).abs() < 1e-12 && (t[2] - 1.0).abs() < 1e-12);
        assert!(t[3].abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.7)).collect();
        assert!((log_log_slope(&xs, &ys) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn loss_checks_pass_on_generated_stream() {
        let p = prepare(&config(200)).unwrap();
        let checks = loss_checks(&p, 400, 20).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }
}
