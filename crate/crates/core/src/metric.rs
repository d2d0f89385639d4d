//! The positive-definite metric `A` of the Newton step.
//!
//! [`Metric`] is the interface the Frank-Wolfe separation, the AFP oracle and
//! the online loop use. [`ExactMetric`] keeps `A` and `A^{-1}` densely and
//! applies rank-one updates to both; the sketched variant lives in
//! [`crate::sketch`].

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{check_len, invalid, Error, Result};
use crate::vecops;

/// Number of rank-one updates between dense re-factorizations of `A^{-1}`.
pub const REFRESH_INTERVAL: usize = 1024;

/// Access to a positive-definite matrix `A` with `A >= eps_init * I`.
pub trait Metric {
    fn dim(&self) -> usize;

    /// The initialization scale `eps_I`; also a lower bound on `lambda_min(A)`.
    fn eps_init(&self) -> f64;

    /// Running upper bound on `lambda_max(A)`: `eps_I + sum ||g||^2` over all
    /// inserted vectors.
    fn lambda_max_bound(&self) -> f64;

    /// `A v`
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;

    /// `A^{-1} v`
    fn inv_apply(&self, v: &[f64]) -> Result<Vec<f64>>;

    /// `v^T A v`
    fn norm_sq(&self, v: &[f64]) -> Result<f64>;

    /// `u^T A v`
    fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_len(self.dim(), u)?;
        let av = self.apply(v)?;
        Ok(vecops::dot(u, &av))
    }

    /// Fold one aggregated gradient into the metric.
    fn update(&mut self, g: &[f64]) -> Result<()>;

    /// Dense materialization of `A` (diagnostics and tests only).
    fn to_dense(&self) -> Result<DMatrix<f64>>;
}

/// Dense `A` and `A^{-1}`, updated by `A <- A + u u^T` and the
/// Sherman-Morrison identity.
#[derive(Debug, Clone)]
pub struct ExactMetric {
    eps_init: f64,
    dim: usize,
    mat: DMatrix<f64>,
    inv: DMatrix<f64>,
    lambda_max_bound: f64,
    update_count: usize,
}

impl ExactMetric {
    pub fn new(dim: usize, eps_init: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("metric dimension must be at least 1"));
        }
        if !(eps_init > 0.0 && eps_init.is_finite()) {
            return Err(invalid("eps_init must be positive and finite"));
        }
        Ok(Self {
            eps_init,
            dim,
            mat: DMatrix::from_diagonal_element(dim, dim, eps_init),
            inv: DMatrix::from_diagonal_element(dim, dim, 1.0 / eps_init),
            lambda_max_bound: eps_init,
            update_count: 0,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn update_count(&self) -> usize {
        self.update_count
    }

    /// `A <- A + u u^T`, with the inverse updated in `O(n^2)`.
    pub fn rank_one_update(&mut self, u: &[f64]) -> Result<()> {
        check_len(self.dim, u)?;
        if !vecops::all_finite(u) {
            return Err(invalid("update vector has non-finite entries"));
        }
        if vecops::is_zero(u) {
            return Ok(());
        }
        let n = self.dim;
        let w = sym_matvec(&self.inv, u);
        let denom = 1.0 + vecops::dot(u, &w);
        for j in 0..n {
            for i in 0..=j {
                self.mat[(i, j)] += u[i] * u[j];
                self.inv[(i, j)] -= w[i] * w[j] / denom;
            }
        }
        mirror_upper(&mut self.mat);
        mirror_upper(&mut self.inv);
        self.lambda_max_bound += vecops::norm_sq(u);
        self.update_count += 1;
        if self.update_count % REFRESH_INTERVAL == 0 {
            self.refresh_inverse()?;
        }
        Ok(())
    }

    /// Recompute `A^{-1}` from a Cholesky factorization of `A`.
    pub fn refresh_inverse(&mut self) -> Result<()> {
        let chol = self
            .mat
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let mut inv = chol.inverse();
        symmetrize(&mut inv);
        self.inv = inv;
        Ok(())
    }
}

impl Metric for ExactMetric {
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
        Ok(sym_matvec(&self.mat, v))
    }

    fn inv_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, v)?;
        Ok(sym_matvec(&self.inv, v))
    }

    fn norm_sq(&self, v: &[f64]) -> Result<f64> {
        check_len(self.dim, v)?;
        let av = sym_matvec(&self.mat, v);
        Ok(vecops::dot(v, &av).max(0.0))
    }

    fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_len(self.dim, u)?;
        check_len(self.dim, v)?;
        Ok(vecops::dot(u, &sym_matvec(&self.mat, v)))
    }

    fn update(&mut self, g: &[f64]) -> Result<()> {
        self.rank_one_update(g)
    }

    fn to_dense(&self) -> Result<DMatrix<f64>> {
        Ok(self.mat.clone())
    }
}

/// `(A^{-1} . (A - B), ln(det A / det B))` for positive-definite `A`, `B`.
///
/// For `B <= A` the first entry never exceeds the second.
pub fn logdet_ratio_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(invalid("log-det check needs two square matrices of equal size"));
    }
    let n = a.nrows();
    let ca = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let cb = b.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    // A^{-1} . (A - B) = n - tr(A^{-1} B)
    let a_inv_b = ca.solve(b);
    let lhs = n as f64 - a_inv_b.trace();
    let logdet = |l: &DMatrix<f64>| -> f64 { 2.0 * (0..n).map(|i| libm::log(l[(i, i)])).sum::<f64>() };
    let rhs = logdet(&ca.l()) - logdet(&cb.l());
    Ok((lhs, rhs))
}

/// `A v` for a symmetric column-major matrix.
pub(crate) fn sym_matvec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n];
    for (j, col) in m.as_slice().chunks_exact(n).enumerate() {
        vecops::axpy(v[j], col, &mut out);
    }
    out
}

fn mirror_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(i, j)] = m[(j, i)];
        }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
