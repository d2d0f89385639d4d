//! Offline optimum in hindsight and the regret curve of a finished run.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{check_len, invalid, Result};
use crate::losses::LossFunction;
use crate::online::RunReport;
use crate::sets::FeasibleSet;
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretOptions {
    /// Target norm of the gradient mapping, relative to `max(1, Σ_t G_t)`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for RegretOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineSolution {
    pub x: Vec<f64>,
    /// `Σ_t f_t(x)` evaluated loss by loss.
    pub value: f64,
    /// Final gradient-mapping norm `L‖x − P(x − ∇/L)‖`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient of `Σ_t f_t`, with the quadratic losses aggregated into
/// `xᵀQx − 2cᵀx` and the remaining losses kept individually.
struct Objective<'a, L> {
    q: DMatrix<f64>,
    c: Vec<f64>,
    others: Vec<&'a L>,
    lipschitz: f64,
}

impl<'a, L: LossFunction> Objective<'a, L> {
    fn new(losses: &'a [L], n: usize) -> Result<Self> {
        let mut q = DMatrix::<f64>::zeros(n, n);
        let mut c = vec![0.0; n];
        let mut others = Vec::new();
        let mut beta_sum = 0.0;
        for l in losses {
            match l.as_quadratic() {
                Some((a, b)) => {
                    let av = nalgebra::DVector::from_column_slice(a);
                    q.ger(1.0, &av, &av, 1.0);
                    vecops::axpy(b, a, &mut c);
                }
                None => {
                    beta_sum += l.constants().beta;
                    others.push(l);
                }
            }
        }
        let lam = if n > 0 && q.iter().any(|v| *v != 0.0) {
            q.clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(0.0f64, |m, v| m.max(*v))
        } else {
            0.0
        };
        let lipschitz = 2.0 * lam + beta_sum;
        if !lipschitz.is_finite() {
            return Err(invalid("objective smoothness is not finite"));
        }
        Ok(Self {
            q,
            c,
            others,
            lipschitz,
        })
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.q_mul(x);
        for (gi, ci) in g.iter_mut().zip(&self.c) {
            *gi = 2.0 * *gi - 2.0 * ci;
        }
        for l in &self.others {
            vecops::axpy(1.0, &l.grad(x), &mut g);
        }
        g
    }

    fn q_mul(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.q[(i, j)] * x[j]).sum())
            .collect()
    }
}

/// Minimizes `Σ_t f_t` over the set by accelerated projected gradient with
/// backtracking on the step and gradient-based restarts. Stops once the
/// gradient mapping (at the global smoothness bound) is at most
/// `tol · max(1, Σ_t G_t)`.
pub fn offline_optimum<L: LossFunction>(
    losses: &[L],
    set: &FeasibleSet,
    options: &RegretOptions,
) -> Result<OfflineSolution> {
    let n = set.dim();
    if let Some(bad) = losses.iter().find(|l| l.dim() != n) {
        return Err(crate::Error::DimensionMismatch {
            expected: n,
            got: bad.dim(),
        });
    }
    let obj = Objective::new(losses, n)?;
    let x0 = set.initial_point();
    if obj.lipschitz == 0.0 {
        let value = losses.iter().map(|l| l.value(&x0)).sum();
        return Ok(OfflineSolution {
            x: x0,
            value,
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let l_max = obj.lipschitz;
    let l_min = l_max * 1e-8;
    let target = options.tol * losses.iter().map(|l| l.constants().g).sum::<f64>().max(1.0);
    let mut l = l_max;
    let mut x = x0;
    let mut z = x.clone();
    let mut theta = 1.0f64;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iters {
        iterations += 1;
        let gz = obj.grad(&z);
        l = (0.5 * l).max(l_min);
        // for convex F, <∇F(x⁺) − ∇F(z), d> bounds F(x⁺) − F(z) − <∇F(z), d>
        let x_new = loop {
            let mut trial = z.clone();
            vecops::axpy(-1.0 / l, &gz, &mut trial);
            let cand = set.euclid_project(&trial)?;
            let d = vecops::sub(&cand, &z);
            let curv = vecops::dot(&vecops::sub(&obj.grad(&cand), &gz), &d);
            if l >= l_max || curv <= 0.5 * l * vecops::norm_sq(&d) {
                break cand;
            }
            l = (2.0 * l).min(l_max);
        };

        // gradient restart: drop momentum when it points against progress
        let restart = vecops::dot(&vecops::sub(&z, &x_new), &vecops::sub(&x_new, &x)) > 0.0;
        let theta_new = if restart { 1.0 } else { 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * theta * theta)) };
        let beta = if restart { 0.0 } else { (theta - 1.0) / theta_new };
        z = x_new
            .iter()
            .zip(&x)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        theta = theta_new;
        x = x_new;

        residual = gradient_mapping_norm(&obj, set, &x, 1.0 / l_max)?;
        if residual <= target {
            converged = true;
            break;
        }
    }
    if !converged {
        residual = gradient_mapping_norm(&obj, set, &x, 1.0 / l_max)?;
        converged = residual <= target;
    }
    let value = losses.iter().map(|l| l.value(&x)).sum();
    Ok(OfflineSolution {
        x,
        value,
        residual,
        iterations,
        converged,
    })
}

fn gradient_mapping_norm<L: LossFunction>(
    obj: &Objective<'_, L>,
    set: &FeasibleSet,
    x: &[f64],
    step: f64,
) -> Result<f64> {
    let g = obj.grad(x);
    let mut trial = x.to_vec();
    vecops::axpy(-step, &g, &mut trial);
    let p = set.euclid_project(&trial)?;
    Ok(vecops::norm(&vecops::sub(x, &p)) / step)
}

/// Computes the offline optimum and fills the regret curve and the
/// `regret_cum` column of `report`.
pub fn compute_regret<L: LossFunction>(
    report: &mut RunReport,
    losses: &[L],
    set: &FeasibleSet,
    options: &RegretOptions,
) -> Result<OfflineSolution> {
    if losses.len() != report.round_losses.len() {
        return Err(invalid("loss stream does not match the run"));
    }
    let sol = offline_optimum(losses, set, options)?;
    check_len(set.dim(), &sol.x)?;
    let mut curve = Vec::with_capacity(losses.len());
    let mut acc = 0.0;
    for (l, played) in losses.iter().zip(&report.round_losses) {
        acc += played - l.value(&sol.x);
        curve.push(acc);
    }
    let mut t = 0;
    for row in &mut report.rows {
        t += row.block_len;
        row.regret_cum = curve[t - 1];
    }
    if !sol.converged {
        report.notes.push(alloc::format!(
            "offline solver stopped after {} iterations with residual {:e}",
            sol.iterations, sol.residual
        ));
    }
    report.regret_curve = curve;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{make_log_portfolio, make_quadratic, Loss, QuadraticLoss};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vertex_optimum() {
        let set = FeasibleSet::simplex(3).unwrap();
        let losses: Vec<QuadraticLoss> = (0..10)
            .map(|_| make_quadratic(vec![1.0, 0.0, 0.0], 1.0, 1.0).unwrap())
            .collect();
        let sol = offline_optimum(&losses, &set, &RegretOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.value.abs() < 1e-12);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_grid_search_in_two_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let set = FeasibleSet::l2_ball(2, 1.0).unwrap();
        let losses: Vec<QuadraticLoss> = (0..100)
            .map(|_| {
                let a = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                make_quadratic(a, rng.random_range(0.5..1.5), 1.0).unwrap()
            })
            .collect();
        let sol = offline_optimum(&losses, &set, &RegretOptions::default()).unwrap();
        let total = |x: &[f64]| losses.iter().map(|l| l.value(x)).sum::<f64>();
        // polar grid on the disc, refined around the best cell
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..720 {
                let r = i as f64 / 400.0;
                let th = j as f64 * core::f64::consts::PI / 360.0;
                best = best.min(total(&[r * libm::cos(th), r * libm::sin(th)]));
            }
        }
        assert!(sol.value <= best + 1e-9);
        assert!(best - sol.value < 1e-2);
    }

    #[test]
    fn not_worse_than_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let set = FeasibleSet::simplex(5).unwrap();
        let losses: Vec<Loss> = (0..100)
            .map(|i| {
                if i % 2 == 0 {
                    let a: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                    make_quadratic(a, rng.random_range(-1.0..1.0), 1.0).unwrap().into()
                } else {
                    let r: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..1.5)).collect();
                    make_log_portfolio(r, 10.0, 1.0).unwrap().into()
                }
            })
            .collect();
        let sol = offline_optimum(&losses, &set, &RegretOptions::default()).unwrap();
        for _ in 0..100 {
            let z = set.sample_point(&mut rng);
            let v: f64 = losses.iter().map(|l| l.value(&z)).sum();
            assert!(sol.value <= v + 1e-9);
        }
        // a much longer solve agrees
        let long = offline_optimum(&losses, &set, &RegretOptions { tol: 0.0, max_iters: 200_000 }).unwrap();
        assert!((long.value - sol.value).abs() <= 1e-6);
    }

    #[test]
    fn converges_on_rank_deficient_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10;
        let set = FeasibleSet::simplex(n).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let losses: Vec<QuadraticLoss> = (0..4000)
            .map(|_| {
                let (p, q) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let a: Vec<f64> = u.iter().zip(&v).map(|(x, y)| 0.3 * (p * x + q * y)).collect();
                make_quadratic(a, 0.5 + rng.random_range(-0.05..0.05), 1.0).unwrap()
            })
            .collect();
        let sol = offline_optimum(&losses, &set, &RegretOptions::default()).unwrap();
        assert!(sol.converged, "residual {}", sol.residual);
        for _ in 0..200 {
            let z = set.sample_point(&mut rng);
            let val: f64 = losses.iter().map(|l| l.value(&z)).sum();
            assert!(sol.value <= val + 1e-9);
        }
    }
}
