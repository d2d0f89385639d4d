//! Frequent Directions sketch of the aggregated-gradient stream.
//!
//! The metric is `A = eps_I I + S^T S` where `S` has `rho + 1` rows whose last
//! row is zero between inserts. `A` and `A^{-1}` are never formed on the run
//! path: products go through `S` and the diagonal `H = (eps_I I + S S^T)^{-1}`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{check_len, invalid, Result};
use crate::metric::Metric;
use crate::vecops;

/// Largest dimension [`SketchMetric::reconstruct_dense`] accepts by default.
pub const DEFAULT_DENSE_LIMIT: usize = 200;

#[derive(Debug, Clone)]
pub struct SketchMetric {
    eps_init: f64,
    dim: usize,
    rho: usize,
    /// `(rho + 1) x n`
    s: DMatrix<f64>,
    /// Diagonal of `H`.
    h: Vec<f64>,
    sigma_total: f64,
    lambda_max_bound: f64,
    inserts: usize,
    dense_limit: usize,
}

impl SketchMetric {
    pub fn new(dim: usize, rho: usize, eps_init: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("sketch dimension must be at least 1"));
        }
        if rho == 0 {
            return Err(invalid("sketch size rho must be at least 1"));
        }
        if !(eps_init > 0.0 && eps_init.is_finite()) {
            return Err(invalid("eps_init must be positive and finite"));
        }
        Ok(Self {
            eps_init,
            dim,
            rho,
            s: DMatrix::zeros(rho + 1, dim),
            h: vec![1.0 / eps_init; rho + 1],
            sigma_total: 0.0,
            lambda_max_bound: eps_init,
            inserts: 0,
            dense_limit: DEFAULT_DENSE_LIMIT,
        })
    }

    pub fn with_dense_limit(mut self, limit: usize) -> Self {
        self.dense_limit = limit;
        self
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    /// `rho >= n` makes the sketch exact up to shrinkage and buys nothing.
    pub fn is_oversized(&self) -> bool {
        self.rho >= self.dim
    }

    pub fn sketch(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn h_diag(&self) -> &[f64] {
        &self.h
    }

    /// Running total of the shrinkage values `sigma_m`.
    pub fn sigma_total(&self) -> f64 {
        self.sigma_total
    }

    pub fn inserts(&self) -> usize {
        self.inserts
    }

    /// Insert `gbar` as the last row, shrink by the `(rho + 1)`-th squared
    /// singular value and rebuild `H`. Returns the shrinkage `sigma_m`.
    pub fn insert(&mut self, gbar: &[f64]) -> Result<f64> {
        check_len(self.dim, gbar)?;
        if !vecops::all_finite(gbar) {
            return Err(invalid("sketch insert has non-finite entries"));
        }
        if vecops::is_zero(gbar) {
            return Ok(0.0);
        }
        let rows = self.rho + 1;
        for (j, g) in gbar.iter().enumerate() {
            self.s[(self.rho, j)] = *g;
        }
        self.lambda_max_bound += vecops::norm_sq(gbar);
        self.inserts += 1;

        let svd = self.s.clone().svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors were requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let eig: Vec<f64> = order
            .iter()
            .map(|&k| svd.singular_values[k] * svd.singular_values[k])
            .collect();
        // When n < rho + 1 the Gram matrix S S^T has a zero eigenvalue.
        let sigma = if eig.len() == rows { eig[rows - 1] } else { 0.0 };

        let mut s = DMatrix::zeros(rows, self.dim);
        let mut h = vec![1.0 / self.eps_init; rows];
        for (row, (&k, &lambda)) in order.iter().zip(&eig).enumerate().take(self.rho) {
            let shifted = (lambda - sigma).max(0.0);
            if shifted > 0.0 {
                let scale = libm::sqrt(shifted);
                for j in 0..self.dim {
                    s[(row, j)] = scale * v_t[(k, j)];
                }
            }
            h[row] = 1.0 / (self.eps_init + shifted);
        }
        self.s = s;
        self.h = h;
        self.sigma_total += sigma;
        Ok(sigma)
    }

    /// `A = eps_I I + S^T S` as a dense matrix, refused above the dense limit.
    pub fn reconstruct_dense(&self) -> Result<DMatrix<f64>> {
        if self.dim > self.dense_limit {
            return Err(invalid("dimension above the dense reconstruction limit"));
        }
        let mut a = self.s.transpose() * &self.s;
        for i in 0..self.dim {
            a[(i, i)] += self.eps_init;
        }
        Ok(a)
    }

    /// `S v`, length `rho + 1`.
    fn s_mul(&self, v: &[f64]) -> Vec<f64> {
        let rows = self.rho + 1;
        let mut out = vec![0.0; rows];
        for (j, col) in self.s.as_slice().chunks_exact(rows).enumerate() {
            vecops::axpy(v[j], col, &mut out);
        }
        out
    }

    /// `S^T w`, length `n`.
    fn st_mul(&self, w: &[f64]) -> Vec<f64> {
        let rows = self.rho + 1;
        self.s
            .as_slice()
            .chunks_exact(rows)
            .map(|col| vecops::dot(col, w))
            .collect()
    }
}

impl Metric for SketchMetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eps_init(&self) -> f64 {
        self.eps_init
    }

    fn lambda_max_bound(&self) -> f64 {
        self.lambda_max_bound
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, v)?;
        let sv = self.s_mul(v);
        let mut out = self.st_mul(&sv);
        vecops::axpy(self.eps_init, v, &mut out);
        Ok(out)
    }

    fn inv_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, v)?;
        let mut hsv = self.s_mul(v);
        for (x, h) in hsv.iter_mut().zip(&self.h) {
            *x *= h;
        }
        let corr = self.st_mul(&hsv);
        Ok(v.iter()
            .zip(&corr)
            .map(|(vi, ci)| (vi - ci) / self.eps_init)
            .collect())
    }

    fn norm_sq(&self, v: &[f64]) -> Result<f64> {
        check_len(self.dim, v)?;
        let sv = self.s_mul(v);
        Ok(self.eps_init * vecops::norm_sq(v) + vecops::norm_sq(&sv))
    }

    fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_len(self.dim, u)?;
        check_len(self.dim, v)?;
        Ok(self.eps_init * vecops::dot(u, v) + vecops::dot(&self.s_mul(u), &self.s_mul(v)))
    }

    fn update(&mut self, g: &[f64]) -> Result<()> {
        self.insert(g).map(|_| ())
    }

    fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.reconstruct_dense()
    }
}
