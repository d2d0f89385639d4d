//! Blockwise Online Newton Step with approximately-feasible projections.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::afp::{approx_feasible_projection, AfpResult};
use crate::error::{invalid, Error, Result};
use crate::losses::{stream_constants, LossFunction};
use crate::metric::{ExactMetric, Metric};
use crate::params::Params;
use crate::sets::{FeasibleSet, OracleCounter};
use crate::sketch::SketchMetric;
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MetricStrategy {
    /// `Aₘ = Aₘ₋₁ + ∇̄ₘ∇̄ₘᵀ` with Sherman-Morrison inverse updates.
    Exact,
    /// Frequent Directions sketch of size `rho`.
    FdSketch { rho: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Accumulate `Σ_t ∇_t∇_tᵀ` over all rounds.
    pub track_gradient_covariance: bool,
    /// Feasible starting point; defaults to [`FeasibleSet::initial_point`].
    pub initial_point: Option<Vec<f64>>,
}

/// One block of the run. AFP columns describe the call made at the end of
/// the block, which produces the next play point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockRow {
    pub m: usize,
    pub block_len: usize,
    pub fw_iters: u64,
    pub pull_iters: u64,
    pub loo_calls_cum: u64,
    pub loss_cum: f64,
    /// Filled by [`crate::regret::compute_regret`].
    pub regret_cum: f64,
    /// `‖xₘ₊₁ − ỹₘ₊₁‖²_{Aₘ}`.
    pub afp_dist_sq: f64,
    /// `‖∇̄ₘ‖²_{Aₘ⁻¹}`.
    pub grad_energy: f64,
    /// `‖ỹₘ‖`.
    pub anchor_norm: f64,
    pub max_fw_iters: u64,
    pub pull_bound: f64,
    pub used_pull_slack: bool,
    pub fw_soft_cap_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub params: Params,
    pub strategy: MetricStrategy,
    pub rows: Vec<BlockRow>,
    pub round_losses: Vec<f64>,
    /// Cumulative regret after each round; empty until computed.
    pub regret_curve: Vec<f64>,
    pub counter: OracleCounter,
    pub total_loo_calls: u64,
    pub grad_covariance: Option<DMatrix<f64>>,
    /// `Σₘ ‖∇̄ₘ‖²_{Aₘ⁻¹}`.
    pub energy_total: f64,
    pub max_anchor_norm: f64,
    pub final_lambda_max_bound: f64,
    pub final_play: Vec<f64>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn total_loss(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.loss_cum)
    }

    pub fn final_regret(&self) -> Option<f64> {
        self.regret_curve.last().copied()
    }
}

/// What an observer sees after each block's metric update and AFP call.
pub struct BlockEvent<'a> {
    pub m: usize,
    pub block_len: usize,
    pub gbar: &'a [f64],
    /// `Aₘ₋₁`, present when the observer asks for it.
    pub previous: Option<&'a dyn Metric>,
    /// `Aₘ`.
    pub metric: &'a dyn Metric,
    pub anchor: &'a [f64],
    pub play: &'a [f64],
    pub afp: &'a AfpResult,
}

pub trait BlockObserver {
    fn wants_previous_metric(&self) -> bool {
        false
    }

    fn on_block(&mut self, event: &BlockEvent<'_>) -> Result<()>;
}

struct NoObserver;

impl BlockObserver for NoObserver {
    fn on_block(&mut self, _: &BlockEvent<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone)]
enum MetricState {
    Exact(ExactMetric),
    Sketch(SketchMetric),
}

impl MetricState {
    fn as_dyn(&self) -> &dyn Metric {
        match self {
            MetricState::Exact(m) => m,
            MetricState::Sketch(m) => m,
        }
    }

    fn as_dyn_mut(&mut self) -> &mut dyn Metric {
        match self {
            MetricState::Exact(m) => m,
            MetricState::Sketch(m) => m,
        }
    }
}

pub fn run_online<L: LossFunction>(
    losses: &[L],
    set: &FeasibleSet,
    params: &Params,
    strategy: MetricStrategy,
    options: &RunOptions,
) -> Result<RunReport> {
    run_online_observed(losses, set, params, strategy, options, &mut NoObserver)
}

pub fn run_online_observed<L: LossFunction>(
    losses: &[L],
    set: &FeasibleSet,
    params: &Params,
    strategy: MetricStrategy,
    options: &RunOptions,
    observer: &mut dyn BlockObserver,
) -> Result<RunReport> {
    let n = set.dim();
    let r = set.radius();
    if losses.len() != params.horizon {
        return Err(invalid(format!(
            "stream has {} losses but the horizon is {}",
            losses.len(),
            params.horizon
        )));
    }
    if let Some(bad) = losses.iter().find(|l| l.dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.dim(),
        });
    }
    if losses.iter().any(|l| l.domain_radius() < r * (1.0 - 1e-12)) {
        return Err(invalid("losses must be valid on the 3R ball of the feasible set"));
    }
    let c = stream_constants(losses).ok_or_else(|| invalid("empty loss stream"))?;
    params
        .validate(c.g, r, c.alpha)
        .map_err(Error::InvalidParams)?;

    let mut metric = match strategy {
        MetricStrategy::Exact => MetricState::Exact(ExactMetric::new(n, params.eps_init)?),
        MetricStrategy::FdSketch { rho } => {
            if rho == 0 {
                return Err(invalid("sketch size must be at least 1"));
            }
            MetricState::Sketch(SketchMetric::new(n, rho, params.eps_init)?)
        }
    };

    let mut x = match &options.initial_point {
        Some(p) => {
            if !set.contains(p, 1e-9) {
                return Err(invalid("initial point is not feasible"));
            }
            p.clone()
        }
        None => set.initial_point(),
    };
    let mut y_tilde = x.clone();
    let mut counter = OracleCounter::default();
    let mut cov = options
        .track_gradient_covariance
        .then(|| DMatrix::<f64>::zeros(n, n));
    let mut rows = Vec::with_capacity(params.num_blocks());
    let mut round_losses = Vec::with_capacity(params.horizon);
    let mut notes = Vec::new();
    let mut loss_cum = 0.0;
    let mut energy_total = 0.0;
    let mut max_anchor_norm: f64 = 0.0;
    let wants_prev = observer.wants_previous_metric();

    let mut start = 0;
    let mut m = 0;
    while start < params.horizon {
        m += 1;
        let len = params.block_len.min(params.horizon - start);
        let block = &losses[start..start + len];
        start += len;

        let anchor_norm = vecops::norm(&y_tilde);
        max_anchor_norm = max_anchor_norm.max(anchor_norm);
        if anchor_norm > 3.0 * r * (1.0 + 1e-12) {
            return Err(Error::ContractViolation(format!(
                "anchor of block {m} has norm {anchor_norm} > 3R = {}",
                3.0 * r
            )));
        }

        let mut gbar = vec![0.0; n];
        for f in block {
            let l = f.value(&x);
            round_losses.push(l);
            loss_cum += l;
            let g = f.grad(&y_tilde);
            if let Some(cov) = cov.as_mut() {
                cov.ger(1.0, &nalgebra::DVector::from_column_slice(&g), &nalgebra::DVector::from_column_slice(&g), 1.0);
            }
            vecops::axpy(1.0, &g, &mut gbar);
        }

        let previous = wants_prev.then(|| metric.clone());
        metric.as_dyn_mut().update(&gbar)?;
        let step = metric.as_dyn().inv_apply(&gbar)?;
        let energy = vecops::dot(&gbar, &step);
        energy_total += energy;
        let mut y_next = y_tilde.clone();
        vecops::axpy(-params.eta, &step, &mut y_next);

        let afp = approx_feasible_projection(set, metric.as_dyn(), &y_next, &x, params.eps, &mut counter)?;
        if afp.used_slack {
            notes.push(format!("block {m}: AFP needed the terminal-iteration slack"));
        }
        if afp.fw_soft_cap_exceeded {
            notes.push(format!("block {m}: a separation call exceeded its soft iteration cap"));
        }

        observer.on_block(&BlockEvent {
            m,
            block_len: len,
            gbar: &gbar,
            previous: previous.as_ref().map(MetricState::as_dyn),
            metric: metric.as_dyn(),
            anchor: &y_tilde,
            play: &x,
            afp: &afp,
        })?;

        rows.push(BlockRow {
            m,
            block_len: len,
            fw_iters: afp.fw_iterations_total,
            pull_iters: afp.pull_iterations,
            loo_calls_cum: counter.loo_calls,
            loss_cum,
            regret_cum: 0.0,
            afp_dist_sq: afp.final_dist_sq,
            grad_energy: energy,
            anchor_norm,
            max_fw_iters: afp.max_fw_iterations,
            pull_bound: afp.pull_bound,
            used_pull_slack: afp.used_slack,
            fw_soft_cap_exceeded: afp.fw_soft_cap_exceeded,
        });
        x = afp.x;
        y_tilde = afp.y_tilde;
    }

    if counter.loo_calls != counter.fw_iterations {
        return Err(Error::ContractViolation(String::from(
            "LOO calls and Frank-Wolfe iterations disagree",
        )));
    }
    Ok(RunReport {
        params: params.clone(),
        strategy,
        rows,
        round_losses,
        regret_curve: Vec::new(),
        total_loo_calls: counter.loo_calls,
        counter,
        grad_covariance: cov,
        energy_total,
        max_anchor_norm,
        final_lambda_max_bound: metric.as_dyn().lambda_max_bound(),
        final_play: x,
        notes,
    })
}
