//! Feasible sets exposed through a linear optimization oracle.
//!
//! Every set is contained in the origin-centered ball of radius
//! [`FeasibleSet::radius`]. Exact Euclidean projections are provided for
//! baselines and tests; the projection-free path only calls [`FeasibleSet::loo`].

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{check_len, invalid, Result};
use crate::vecops;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SetKind {
    /// Probability simplex `{x >= 0, sum x = 1}`.
    Simplex,
    L2Ball { radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    L1Ball { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    kind: SetKind,
    dim: usize,
    radius: f64,
}

/// Oracle accounting for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleCounter {
    pub loo_calls: u64,
    pub fw_iterations: u64,
    pub pull_iterations: u64,
}

impl FeasibleSet {
    pub fn simplex(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            kind: SetKind::Simplex,
            dim,
            radius: 1.0,
        })
    }

    pub fn l2_ball(dim: usize, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        check_radius(radius)?;
        Ok(Self {
            kind: SetKind::L2Ball { radius },
            dim,
            radius,
        })
    }

    pub fn l1_ball(dim: usize, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        check_radius(radius)?;
        Ok(Self {
            kind: SetKind::L1Ball { radius },
            dim,
            radius,
        })
    }

    /// Axis-aligned box `lo <= x <= hi`. Empty boxes are rejected.
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len())?;
        check_len(lo.len(), &hi)?;
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(invalid("box bounds must be finite"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(invalid("empty box: lo > hi in some coordinate"));
        }
        let r2: f64 = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| (l * l).max(h * h))
            .sum();
        let radius = libm::sqrt(r2);
        if radius <= 0.0 {
            return Err(invalid("degenerate box: radius must be positive"));
        }
        Ok(Self {
            dim: lo.len(),
            kind: SetKind::Box { lo, hi },
            radius,
        })
    }

    pub fn from_kind(kind: SetKind, dim: usize) -> Result<Self> {
        match kind {
            SetKind::Simplex => Self::simplex(dim),
            SetKind::L2Ball { radius } => Self::l2_ball(dim, radius),
            SetKind::L1Ball { radius } => Self::l1_ball(dim, radius),
            SetKind::Box { lo, hi } => {
                check_len(dim, &lo)?;
                Self::new_box(lo, hi)
            }
        }
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Smallest `R` with the set inside `R B` (ball centered at the origin).
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `argmin_{v in K} <v, g>`. Ties go to the lowest coordinate index; `g = 0`
    /// yields the canonical point (simplex `e_1`, balls the origin, box `lo`).
    pub fn loo(&self, g: &[f64], counter: &mut OracleCounter) -> Result<Vec<f64>> {
        check_len(self.dim, g)?;
        counter.loo_calls += 1;
        let n = self.dim;
        let out = match &self.kind {
            SetKind::Simplex => {
                let mut best = 0;
                for i in 1..n {
                    if g[i] < g[best] {
                        best = i;
                    }
                }
                unit(n, best, 1.0)
            }
            SetKind::L2Ball { radius } => {
                let norm = vecops::norm(g);
                if norm == 0.0 {
                    vec![0.0; n]
                } else {
                    vecops::scale(-radius / norm, g)
                }
            }
            SetKind::Box { lo, hi } => g
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(gi, (l, h))| if *gi < 0.0 { *h } else { *l })
                .collect(),
            SetKind::L1Ball { radius } => {
                let mut best = 0;
                for i in 1..n {
                    if g[i].abs() > g[best].abs() {
                        best = i;
                    }
                }
                if g[best] == 0.0 {
                    vec![0.0; n]
                } else {
                    unit(n, best, -radius * g[best].signum())
                }
            }
        };
        Ok(out)
    }

    /// Exact Euclidean projection. Baselines and tests only.
    pub fn euclid_project(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, y)?;
        let out = match &self.kind {
            SetKind::Simplex => project_simplex(y, 1.0),
            SetKind::L2Ball { radius } => {
                let norm = vecops::norm(y);
                if norm <= *radius {
                    y.to_vec()
                } else {
                    vecops::scale(radius / norm, y)
                }
            }
            SetKind::Box { lo, hi } => y
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            SetKind::L1Ball { radius } => {
                if vecops::norm_l1(y) <= *radius {
                    y.to_vec()
                } else {
                    let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
                    project_simplex(&abs, *radius)
                        .into_iter()
                        .zip(y)
                        .map(|(p, v)| p.copysign(*v))
                        .collect()
                }
            }
        };
        Ok(out)
    }

    /// Membership with slack `tol` on every defining constraint. A wrong
    /// length is reported as not contained.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim || !vecops::all_finite(x) {
            return false;
        }
        match &self.kind {
            SetKind::Simplex => {
                x.iter().all(|v| *v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            SetKind::L2Ball { radius } => vecops::norm(x) <= radius + tol,
            SetKind::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            SetKind::L1Ball { radius } => vecops::norm_l1(x) <= radius + tol,
        }
    }

    /// A random point of the set: Dirichlet(1) on the simplex, uniform in
    /// balls and boxes.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim;
        match &self.kind {
            SetKind::Simplex => dirichlet_ones(rng, n),
            SetKind::L2Ball { radius } => sample_ball(rng, n, *radius),
            SetKind::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| if l == h { *l } else { rng.random_range(*l..=*h) })
                .collect(),
            SetKind::L1Ball { radius } => {
                // First n coordinates of a uniform point on the (n+1)-simplex,
                // with random signs, are uniform on the unit l1 ball.
                let w = dirichlet_ones(rng, n + 1);
                w[..n]
                    .iter()
                    .map(|v| {
                        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        radius * v * s
                    })
                    .collect()
            }
        }
    }

    /// Starting point of the online algorithm: simplex barycenter, box
    /// midpoint, origin for balls.
    pub fn initial_point(&self) -> Vec<f64> {
        match &self.kind {
            SetKind::Simplex => vec![1.0 / self.dim as f64; self.dim],
            SetKind::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            SetKind::L2Ball { .. } | SetKind::L1Ball { .. } => vec![0.0; self.dim],
        }
    }
}

/// Euclidean projection onto `{x >= 0, sum x = z}` by sorting.
pub fn project_simplex(y: &[f64], z: f64) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - z) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

fn unit(n: usize, i: usize, value: f64) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = value;
    e
}

fn dirichlet_ones<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.into_iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Uniform point in the centered ball of the given radius.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = vecops::norm(&dir);
        if norm > 0.0 {
            let u: f64 = rng.random();
            let r = radius * libm::pow(u, 1.0 / n as f64);
            return vecops::scale(r / norm, &dir);
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(invalid("set dimension must be at least 1"));
    }
    Ok(())
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("radius must be positive and finite"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loo_examples() {
        let mut c = OracleCounter::default();
        let s = FeasibleSet::simplex(3).unwrap();
        assert_eq!(s.loo(&[3.0, -1.0, 2.0], &mut c).unwrap(), vec![0.0, 1.0, 0.0]);
        let b = FeasibleSet::l2_ball(2, 2.0).unwrap();
        assert_eq!(b.loo(&[0.0, 3.0], &mut c).unwrap(), vec![0.0, -2.0]);
        let bx = FeasibleSet::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(bx.loo(&[1.0, -2.0], &mut c).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(c.loo_calls, 3);
    }

    #[test]
    fn loo_canonical_points_and_ties() {
        let mut c = OracleCounter::default();
        let z = [0.0; 3];
        assert_eq!(FeasibleSet::simplex(3).unwrap().loo(&z, &mut c).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(FeasibleSet::l2_ball(3, 1.0).unwrap().loo(&z, &mut c).unwrap(), vec![0.0; 3]);
        assert_eq!(FeasibleSet::l1_ball(3, 1.0).unwrap().loo(&z, &mut c).unwrap(), vec![0.0; 3]);
        let bx = FeasibleSet::new_box(vec![-1.0, 0.0, 2.0], vec![1.0, 1.0, 3.0]).unwrap();
        assert_eq!(bx.loo(&z, &mut c).unwrap(), vec![-1.0, 0.0, 2.0]);
        let s = FeasibleSet::simplex(3).unwrap();
        assert_eq!(s.loo(&[1.0, -2.0, -2.0], &mut c).unwrap(), vec![0.0, 1.0, 0.0]);
        let l1 = FeasibleSet::l1_ball(3, 2.0).unwrap();
        assert_eq!(l1.loo(&[1.0, -3.0, 3.0], &mut c).unwrap(), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn loo_rejects_wrong_length() {
        let mut c = OracleCounter::default();
        let s = FeasibleSet::simplex(3).unwrap();
        assert!(matches!(s.loo(&[1.0], &mut c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn radius_per_kind() {
        assert_eq!(FeasibleSet::simplex(4).unwrap().radius(), 1.0);
        assert_eq!(FeasibleSet::l2_ball(4, 2.5).unwrap().radius(), 2.5);
        assert_eq!(FeasibleSet::l1_ball(4, 0.5).unwrap().radius(), 0.5);
        let bx = FeasibleSet::new_box(vec![-3.0, 1.0], vec![1.0, 4.0]).unwrap();
        assert_eq!(bx.radius(), 5.0);
    }

    #[test]
    fn empty_box_rejected() {
        assert!(matches!(
            FeasibleSet::new_box(vec![0.0, 1.0], vec![1.0, 0.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn projection_examples() {
        let b = FeasibleSet::l2_ball(2, 1.0).unwrap();
        assert_eq!(b.euclid_project(&[2.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let s = FeasibleSet::simplex(3).unwrap();
        assert_eq!(s.euclid_project(&[0.5, 0.5, 0.0]).unwrap(), vec![0.5, 0.5, 0.0]);
        assert_eq!(s.euclid_project(&[1.0, 1.0, 0.0]).unwrap(), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn simplex_projection_matches_grid_search() {
        // brute force over a fine grid of the 2-simplex in R^3
        let s = FeasibleSet::simplex(3).unwrap();
        let y = [1.0, 1.0, 0.0];
        let steps = 400;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let p = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
                let d: f64 = p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, p);
                }
            }
        }
        let proj = s.euclid_project(&y).unwrap();
        for k in 0..3 {
            assert!((proj[k] - best.1[k]).abs() <= 1.0 / steps as f64);
        }
    }

    #[test]
    fn l1_projection_is_feasible_and_idempotent() {
        let l1 = FeasibleSet::l1_ball(3, 1.0).unwrap();
        let p = l1.euclid_project(&[2.0, -1.0, 0.5]).unwrap();
        assert!(l1.contains(&p, 1e-12));
        assert!((vecops::norm_l1(&p) - 1.0).abs() < 1e-12);
        assert_eq!(l1.euclid_project(&p).unwrap(), p);
        assert_eq!(p[1].signum(), -1.0);
    }

    #[test]
    fn contains_examples() {
        let s = FeasibleSet::simplex(3).unwrap();
        assert!(s.contains(&[1.0, 0.0, 0.0], 0.0));
        assert!(!s.contains(&[0.6, 0.6, 0.0], 1e-9));
        let b = FeasibleSet::l2_ball(2, 1.0).unwrap();
        assert!(b.contains(&[1.0 + 1e-10, 0.0], 1e-9));
        assert!(!b.contains(&[1.0], 1e-9));
    }

    #[test]
    fn samples_lie_in_the_set_and_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = FeasibleSet::simplex(5).unwrap();
        for _ in 0..200 {
            let p = s.sample_point(&mut rng);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(s.contains(&p, 1e-12));
        }
        let b = FeasibleSet::l2_ball(4, 2.0).unwrap();
        for _ in 0..1000 {
            assert!(vecops::norm(&b.sample_point(&mut rng)) <= 2.0);
        }
        let l1 = FeasibleSet::l1_ball(4, 2.0).unwrap();
        let bx = FeasibleSet::new_box(vec![-1.0, 0.0], vec![1.0, 0.0]).unwrap();
        for _ in 0..200 {
            assert!(l1.contains(&l1.sample_point(&mut rng), 1e-12));
            assert!(bx.contains(&bx.sample_point(&mut rng), 0.0));
        }
        let a = s.sample_point(&mut ChaCha8Rng::seed_from_u64(42));
        let b2 = s.sample_point(&mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b2);
    }

    #[test]
    fn initial_points_are_feasible() {
        let sets = [
            FeasibleSet::simplex(4).unwrap(),
            FeasibleSet::l2_ball(4, 1.0).unwrap(),
            FeasibleSet::l1_ball(4, 1.0).unwrap(),
            FeasibleSet::new_box(vec![0.0; 4], vec![1.0; 4]).unwrap(),
        ];
        for s in &sets {
            assert!(s.contains(&s.initial_point(), 1e-12));
        }
    }
}
