//! Frank-Wolfe on `g(x) = ½‖x − y‖²_A` that stops at either a point close to
//! `y` or a separating hyperplane with margin.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};
use crate::metric::Metric;
use crate::sets::{FeasibleSet, OracleCounter};
use crate::vecops;

/// Relative slack applied to the stopping comparisons.
pub(crate) const STOP_RTOL: f64 = 1e-12;
/// Feasibility tolerance for warm starts.
pub(crate) const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SeparationStatus {
    /// `‖x̃ − y‖²_A ≤ 3ε`.
    Proximal,
    /// Dual gap at `x̃` is at most `ε` while `‖x̃ − y‖²_A > 3ε`.
    Separating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationOutcome {
    pub x_tilde: Vec<f64>,
    pub status: SeparationStatus,
    pub final_gap: f64,
    pub final_dist_sq: f64,
    /// Loop iterations, one LOO call each.
    pub iterations: u64,
    pub soft_cap: u64,
    pub exceeded_soft_cap: bool,
}

/// `(⌈27 R² λ₁ / ε − 2⌉, ⌈27 R² λ₁ / ε⌉)`, both at least 1.
pub fn fw_iteration_cap(radius: f64, lambda_max: f64, eps: f64) -> (u64, u64) {
    let base = 27.0 * radius * radius * lambda_max / eps;
    let soft = libm::ceil(base - 2.0).max(1.0);
    let hard = libm::ceil(base).max(soft);
    (soft as u64, hard as u64)
}

/// Exact line search `argmin_{σ ∈ [0,1]} ‖y − x − σ(v − x)‖²_A`.
pub fn line_search_sigma<M: Metric + ?Sized>(
    metric: &M,
    y: &[f64],
    x: &[f64],
    v: &[f64],
) -> Result<f64> {
    let n = metric.dim();
    check_len(n, y)?;
    check_len(n, x)?;
    check_len(n, v)?;
    let d = vecops::sub(v, x);
    if degenerate(&d) {
        return Ok(0.0);
    }
    let num = metric.inner(&vecops::sub(y, x), &d)?;
    let den = metric.norm_sq(&d)?;
    Ok(clamp_sigma(num, den))
}

fn degenerate(d: &[f64]) -> bool {
    vecops::norm_inf(d) <= 1e-14
}

fn clamp_sigma(num: f64, den: f64) -> f64 {
    if den > 0.0 && num.is_finite() {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub(crate) fn leq_rel(a: f64, b: f64) -> bool {
    a <= b + STOP_RTOL * b.abs()
}

/// Runs Frank-Wolfe with line search from `x_init` towards `y`.
///
/// Returns `Proximal` once `‖xᵢ − y‖²_A ≤ 3ε`, or `Separating` once the dual
/// gap drops to `ε`. Every iteration makes exactly one LOO call.
pub fn separate_or_approach<M: Metric + ?Sized>(
    set: &FeasibleSet,
    metric: &M,
    y: &[f64],
    x_init: &[f64],
    eps: f64,
    counter: &mut OracleCounter,
) -> Result<SeparationOutcome> {
    let n = set.dim();
    check_len(n, y)?;
    check_len(n, x_init)?;
    if metric.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: metric.dim(),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid("eps must be positive and finite"));
    }
    if !vecops::all_finite(y) {
        return Err(invalid("target point has non-finite entries"));
    }
    if !set.contains(x_init, FEAS_TOL) {
        return Err(invalid("warm start is not in the feasible set"));
    }

    let (soft_cap, hard_cap) = fw_iteration_cap(set.radius(), metric.lambda_max_bound(), eps);
    let mut x = x_init.to_vec();
    let mut iterations = 0u64;
    loop {
        let d = vecops::sub(&x, y);
        let grad = metric.apply(&d)?;
        let v = set.loo(&grad, counter)?;
        counter.fw_iterations += 1;
        iterations += 1;

        let dist_sq = vecops::dot(&grad, &d);
        let step = vecops::sub(&v, &x);
        let gap = -vecops::dot(&grad, &step);

        let proximal = leq_rel(dist_sq, 3.0 * eps);
        if proximal || leq_rel(gap, eps) {
            return Ok(SeparationOutcome {
                x_tilde: x,
                status: if proximal {
                    SeparationStatus::Proximal
                } else {
                    SeparationStatus::Separating
                },
                final_gap: gap,
                final_dist_sq: dist_sq,
                iterations,
                soft_cap,
                exceeded_soft_cap: iterations > soft_cap,
            });
        }
        if iterations >= hard_cap {
            return Err(Error::CapExceeded {
                routine: "separate_or_approach",
                iterations,
                cap: hard_cap,
                detail: format!("gap {gap:e}, dist_sq {dist_sq:e}, eps {eps:e}"),
            });
        }

        let sigma = if degenerate(&step) {
            0.0
        } else {
            clamp_sigma(gap, metric.norm_sq(&step)?)
        };
        vecops::axpy(sigma, &step, &mut x);
    }
}
