//! Approximately-feasible projection built from separation steps.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};
use crate::metric::Metric;
use crate::separation::{leq_rel, separate_or_approach, SeparationStatus, FEAS_TOL};
use crate::sets::{FeasibleSet, OracleCounter};
use crate::vecops;

pub const PULL_STEP: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AfpResult {
    /// Feasible point.
    pub x: Vec<f64>,
    /// Pulled infeasible point, `‖x − ỹ‖²_A ≤ 3ε`.
    pub y_tilde: Vec<f64>,
    /// Separation rounds, including the final proximal one.
    pub pull_iterations: u64,
    pub fw_iterations_total: u64,
    pub final_dist_sq: f64,
    pub initial_dist_sq: f64,
    /// `max{2.25 ln(d₀/ε) + 1, 0}`; the enforced cap is this plus one.
    pub pull_bound: f64,
    /// Set when the round count exceeded `pull_bound` and needed the extra one.
    pub used_slack: bool,
    /// Largest FW iteration count among the separation calls.
    pub max_fw_iterations: u64,
    /// Whether any separation call ran past its soft iteration cap.
    pub fw_soft_cap_exceeded: bool,
}

/// `y − γ(y − x)`.
pub fn pull_step(y: &[f64], x: &[f64], gamma: f64) -> Vec<f64> {
    y.iter().zip(x).map(|(yi, xi)| yi - gamma * (yi - xi)).collect()
}

/// `max{2.25 ln(d₀/ε) + 1, 0}`.
pub fn pull_bound(initial_dist_sq: f64, eps: f64) -> f64 {
    (2.25 * libm::log(initial_dist_sq / eps) + 1.0).max(0.0)
}

/// Pulls `y1` towards the set until a feasible point within `3ε` (squared
/// `A`-norm) is found. `x0` warm-starts the first separation call.
pub fn approx_feasible_projection<M: Metric + ?Sized>(
    set: &FeasibleSet,
    metric: &M,
    y1: &[f64],
    x0: &[f64],
    eps: f64,
    counter: &mut OracleCounter,
) -> Result<AfpResult> {
    let n = set.dim();
    check_len(n, y1)?;
    check_len(n, x0)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid("eps must be positive and finite"));
    }
    if !set.contains(x0, FEAS_TOL) {
        return Err(invalid("initial point is not in the feasible set"));
    }
    if 3.0 * eps < f64::EPSILON * metric.norm_sq(y1)? {
        return Err(invalid("eps is below the resolution of the input point"));
    }

    let initial_dist_sq = metric.norm_sq(&vecops::sub(x0, y1))?;
    let bound = pull_bound(initial_dist_sq, eps);
    let mut result = AfpResult {
        x: x0.to_vec(),
        y_tilde: y1.to_vec(),
        pull_iterations: 0,
        fw_iterations_total: 0,
        final_dist_sq: initial_dist_sq,
        initial_dist_sq,
        pull_bound: bound,
        used_slack: false,
        max_fw_iterations: 0,
        fw_soft_cap_exceeded: false,
    };
    if leq_rel(initial_dist_sq, 3.0 * eps) {
        return Ok(result);
    }

    let cap = bound + 1.0;
    loop {
        let out = separate_or_approach(set, metric, &result.y_tilde, &result.x, eps, counter)?;
        result.pull_iterations += 1;
        result.fw_iterations_total += out.iterations;
        result.max_fw_iterations = result.max_fw_iterations.max(out.iterations);
        result.fw_soft_cap_exceeded |= out.exceeded_soft_cap;
        result.x = out.x_tilde;
        result.final_dist_sq = out.final_dist_sq;
        if result.pull_iterations as f64 > bound {
            result.used_slack = true;
        }
        match out.status {
            SeparationStatus::Proximal => return Ok(result),
            SeparationStatus::Separating => {
                if result.pull_iterations as f64 >= cap {
                    return Err(Error::CapExceeded {
                        routine: "approx_feasible_projection",
                        iterations: result.pull_iterations,
                        cap: libm::floor(cap) as u64,
                        detail: format!(
                            "initial dist_sq {initial_dist_sq:e}, current dist_sq {:e}, eps {eps:e}",
                            result.final_dist_sq
                        ),
                    });
                }
                result.y_tilde = pull_step(&result.y_tilde, &result.x, PULL_STEP);
                counter.pull_iterations += 1;
            }
        }
    }
}
