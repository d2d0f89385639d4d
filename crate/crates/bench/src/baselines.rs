//! Reference algorithms run on the same loss stream.

use nalgebra::{DMatrix, DVector};
use pfons_core::vecops::{axpy, norm};
use pfons_core::{stream_constants, ExactMetric, FeasibleSet, LossFunction, Metric, SetKind};
use serde::Serialize;

use crate::error::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub name: &'static str,
    pub round_losses: Vec<f64>,
    pub total_loss: f64,
    pub final_play: Vec<f64>,
}

impl BaselineReport {
    fn new(name: &'static str, round_losses: Vec<f64>, final_play: Vec<f64>) -> Self {
        Self {
            name,
            total_loss: round_losses.iter().sum(),
            round_losses,
            final_play,
        }
    }

    /// Regret against a fixed comparator value `Σ_t f_t(x*)`.
    pub fn regret(&self, offline_value: f64) -> f64 {
        self.total_loss - offline_value
    }
}

/// Projected online gradient descent with `η_t = D / (G √t)` and `D = 2R`.
pub fn run_baseline_ogd<L: LossFunction>(losses: &[L], set: &FeasibleSet) -> Result<BaselineReport, BenchError> {
    let g = stream_constants(losses).map_or(1.0, |c| c.g).max(f64::MIN_POSITIVE);
    let d = 2.0 * set.radius();
    let mut x = set.initial_point();
    let mut round_losses = Vec::with_capacity(losses.len());
    for (t, f) in losses.iter().enumerate() {
        round_losses.push(f.value(&x));
        let grad = f.grad(&x);
        let step = d / (g * ((t + 1) as f64).sqrt());
        axpy(-step, &grad, &mut x);
        x = set.euclid_project(&x)?;
    }
    Ok(BaselineReport::new("ogd", round_losses, x))
}

/// Online Newton Step with exact `A`-norm projections onto a Euclidean ball.
/// Uses `γ = ½ min{1/(4GD), α}` and `A₀ = I/(γ²D²)`.
pub fn run_baseline_exact_ons_ball<L: LossFunction>(
    losses: &[L],
    set: &FeasibleSet,
) -> Result<BaselineReport, BenchError> {
    let radius = match set.kind() {
        SetKind::L2Ball { radius } => *radius,
        _ => return Err(BenchError::Config("exact ONS baseline needs an l2_ball set".into())),
    };
    let c = stream_constants(losses).ok_or_else(|| BenchError::Config("empty loss stream".into()))?;
    let d = 2.0 * radius;
    let gamma = 0.5 * (1.0 / (4.0 * c.g * d)).min(c.alpha);
    let mut a = ExactMetric::new(set.dim(), 1.0 / (gamma * gamma * d * d))?;
    let mut x = set.initial_point();
    let mut round_losses = Vec::with_capacity(losses.len());
    for f in losses {
        round_losses.push(f.value(&x));
        let grad = f.grad(&x);
        a.update(&grad)?;
        let step = a.inv_apply(&grad)?;
        let mut y = x.clone();
        axpy(-1.0 / gamma, &step, &mut y);
        x = project_ball_a_norm(a.matrix(), &y, radius)?;
    }
    Ok(BaselineReport::new("exact_ons_ball", round_losses, x))
}

/// `argmin_{‖x‖ ≤ r} ‖x − y‖²_A`, by bisection on the multiplier `λ` of
/// `x(λ) = (A + λI)⁻¹ A y` until `λ` is resolved to relative `1e-10`.
pub fn project_ball_a_norm(a: &DMatrix<f64>, y: &[f64], r: f64) -> Result<Vec<f64>, BenchError> {
    if norm(y) <= r {
        return Ok(y.to_vec());
    }
    let eig = a.clone().symmetric_eigen();
    let lam = &eig.eigenvalues;
    if lam.iter().any(|v| *v <= 0.0) {
        return Err(BenchError::Runtime("metric is not positive definite".into()));
    }
    let yhat = eig.eigenvectors.transpose() * DVector::from_column_slice(y);
    let norm_at = |mu: f64| -> f64 {
        lam.iter()
            .zip(yhat.iter())
            .map(|(l, v)| {
                let c = l * v / (l + mu);
                c * c
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut lo = 0.0;
    let mut hi = lam.max().max(1.0);
    while norm_at(hi) > r {
        hi *= 2.0;
    }
    while hi - lo > 1e-10 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let xhat = DVector::from_iterator(
        lam.len(),
        lam.iter().zip(yhat.iter()).map(|(l, v)| l * v / (l + hi)),
    );
    let x = &eig.eigenvectors * xhat;
    Ok(x.iter().cloned().collect())
}
