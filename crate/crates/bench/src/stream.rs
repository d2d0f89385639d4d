//! Seeded loss streams whose data vectors live in a low-dimensional subspace.

use nalgebra::DMatrix;
use pfons_core::{make_log_portfolio, make_quadratic, FeasibleSet, Loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::LossSpec;
use crate::error::BenchError;

/// Sub-stream labels derived from the master seed.
pub const DATA_STREAM: u64 = 1;
pub const SAMPLING_STREAM: u64 = 2;
pub const VERIFY_STREAM: u64 = 3;

pub fn sub_rng(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

#[derive(Debug, Clone)]
pub struct LossStream {
    pub losses: Vec<Loss>,
    /// `n × ρ` matrix with orthonormal columns spanning the data.
    pub basis: DMatrix<f64>,
    /// Point of the set used to generate labels (quadratic family only).
    pub planted: Option<Vec<f64>>,
}

/// `‖a‖` such that `2‖a‖(3R‖a‖ + |b|) ≤ g` whenever `|b| ≤ R‖a‖ + noise`.
pub fn quadratic_scale(radius: f64, grad_bound: f64, noise: f64) -> f64 {
    (-2.0 * noise + (4.0 * noise * noise + 32.0 * radius * grad_bound).sqrt()) / (16.0 * radius)
}

pub fn generate_lowdim_stream(
    set: &FeasibleSet,
    horizon: usize,
    spec: &LossSpec,
    seed: u64,
) -> Result<LossStream, BenchError> {
    let n = set.dim();
    let r = set.radius();
    let mut rng = sub_rng(seed, DATA_STREAM);
    let rho = match spec {
        LossSpec::Quadratic { rho, .. } | LossSpec::LogPortfolio { rho, .. } => *rho,
    };
    if rho == 0 || rho > n {
        return Err(BenchError::Config(format!("rho must lie in 1..={n}, got {rho}")));
    }
    let basis = orthonormal_basis(&mut rng, n, rho);
    let draw_direction = |rng: &mut ChaCha8Rng| loop {
        let z: Vec<f64> = (0..rho).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<f64> = (0..n)
            .map(|i| (0..rho).map(|j| basis[(i, j)] * z[j]).sum())
            .collect();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return a.into_iter().map(|v| v / norm).collect::<Vec<f64>>();
        }
    };

    match *spec {
        LossSpec::Quadratic { grad_bound, noise, .. } => {
            if !(grad_bound > 0.0) || !(noise >= 0.0) {
                return Err(BenchError::Config("grad_bound must be positive and noise nonnegative".into()));
            }
            let planted = set.sample_point(&mut rng);
            let s = quadratic_scale(r, grad_bound, noise);
            let mut losses = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let a: Vec<f64> = draw_direction(&mut rng).into_iter().map(|v| v * s).collect();
                let eps = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
                let b = a.iter().zip(&planted).map(|(x, y)| x * y).sum::<f64>() + eps;
                losses.push(make_quadratic(a, b, r)?.into());
            }
            Ok(LossStream {
                losses,
                basis,
                planted: Some(planted),
            })
        }
        LossSpec::LogPortfolio {
            volatility,
            wealth_floor,
            ..
        } => {
            if !(volatility >= 0.0) || !(wealth_floor > 0.0) {
                return Err(BenchError::Config("volatility must be nonnegative and wealth_floor positive".into()));
            }
            let mut losses = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let d = draw_direction(&mut rng);
                let scale: f64 = rng.sample(StandardNormal);
                let ret: Vec<f64> = d
                    .iter()
                    .map(|v| (1.0 + volatility * scale * v).max(0.05))
                    .collect();
                let norm = ret.iter().map(|v| v * v).sum::<f64>().sqrt();
                let shift = 3.0 * r * norm + wealth_floor;
                losses.push(make_log_portfolio(ret, shift, r)?.into());
            }
            Ok(LossStream {
                losses,
                basis,
                planted: None,
            })
        }
    }
}

fn orthonormal_basis(rng: &mut ChaCha8Rng, n: usize, rho: usize) -> DMatrix<f64> {
    loop {
        let g = DMatrix::<f64>::from_fn(n, rho, |_, _| rng.sample(StandardNormal));
        let qr = g.qr();
        let r = qr.r();
        if (0..rho).all(|i| r[(i, i)].abs() > 1e-8) {
            return qr.q();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pfons_core::LossFunction;

    fn quad(rho: usize) -> LossSpec {
        LossSpec::Quadratic {
            rho,
            grad_bound: 1.0,
            noise: 0.05,
        }
    }

    fn covariance(s: &LossStream, n: usize) -> DMatrix<f64> {
        let mut c = DMatrix::<f64>::zeros(n, n);
        for l in &s.losses {
            let (a, _) = l.as_quadratic().unwrap();
            let v = nalgebra::DVector::from_column_slice(a);
            c += &v * v.transpose();
        }
        c
    }

    #[test]
    fn data_has_rank_rho() {
        let set = FeasibleSet::simplex(10).unwrap();
        let s = generate_lowdim_stream(&set, 500, &quad(2), 7).unwrap();
        let mut eig: Vec<f64> = covariance(&s, 10).symmetric_eigen().eigenvalues.iter().cloned().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        assert!(eig[1] > 1e-3);
        assert!(eig[2..].iter().all(|v| v.abs() < 1e-10));
        let qtq = s.basis.transpose() * &s.basis;
        assert!((qtq - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn full_rho_is_full_rank() {
        let set = FeasibleSet::simplex(6).unwrap();
        let s = generate_lowdim_stream(&set, 2000, &quad(6), 3).unwrap();
        let eig = covariance(&s, 6).symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|v| *v > 1e-3));
    }

    #[test]
    fn gradient_bound_is_respected() {
        let set = FeasibleSet::l2_ball(5, 2.0).unwrap();
        let s = generate_lowdim_stream(&set, 300, &quad(3), 1).unwrap();
        for l in &s.losses {
            assert!(l.constants().g <= 1.0 + 1e-12);
        }
        assert!(set.contains(s.planted.as_ref().unwrap(), 1e-12));
    }

    #[test]
    fn same_seed_same_stream() {
        let set = FeasibleSet::simplex(4).unwrap();
        let a = generate_lowdim_stream(&set, 50, &quad(2), 9).unwrap();
        let b = generate_lowdim_stream(&set, 50, &quad(2), 9).unwrap();
        let c = generate_lowdim_stream(&set, 50, &quad(2), 10).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_ne!(a.losses, c.losses);
    }

    #[test]
    fn portfolio_stream_is_well_defined() {
        let set = FeasibleSet::simplex(4).unwrap();
        let spec = LossSpec::LogPortfolio {
            rho: 2,
            volatility: 0.3,
            wealth_floor: 1.0,
        };
        let s = generate_lowdim_stream(&set, 100, &spec, 5).unwrap();
        assert!(s.losses.iter().all(|l| l.value(&set.initial_point()).is_finite()));
        assert!(s.planted.is_none());
    }

    #[test]
    fn rejects_rho_above_dim() {
        let set = FeasibleSet::simplex(3).unwrap();
        assert!(matches!(generate_lowdim_stream(&set, 10, &quad(4), 1), Err(BenchError::Config(_))));
    }
}
