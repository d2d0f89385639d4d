//! Smooth exp-concave losses defined on the enlarged ball `3R·B`, their
//! constants, and sampling checks for those constants.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use crate::error::{check_len, invalid, Result};
use crate::sets::sample_ball;
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossConstants {
    /// Gradient norm bound on `3R·B`.
    pub g: f64,
    /// Smoothness on `3R·B`.
    pub beta: f64,
    /// Curvature parameter used for tuning.
    pub alpha: f64,
}

pub trait LossFunction {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn grad(&self, x: &[f64]) -> Vec<f64>;

    fn constants(&self) -> LossConstants;

    /// The `R` for which the loss is valid on `3R·B`.
    fn domain_radius(&self) -> f64;

    /// `(a, b)` when the loss is `(aᵀx − b)²`.
    fn as_quadratic(&self) -> Option<(&[f64], f64)> {
        None
    }
}

/// `f(x) = (aᵀx − b)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    a: Vec<f64>,
    b: f64,
    radius: f64,
    constants: LossConstants,
}

/// `f(x) = −ln(rᵀx + c)` with `c > 3R‖r‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPortfolioLoss {
    r: Vec<f64>,
    shift: f64,
    radius: f64,
    constants: LossConstants,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    Quadratic(QuadraticLoss),
    LogPortfolio(LogPortfolioLoss),
}

pub fn make_quadratic(a: Vec<f64>, b: f64, radius: f64) -> Result<QuadraticLoss> {
    check_radius(radius)?;
    if a.is_empty() || !vecops::all_finite(&a) || !b.is_finite() {
        return Err(invalid("quadratic loss needs finite a and b"));
    }
    if vecops::is_zero(&a) {
        return Err(invalid("quadratic loss needs a nonzero vector a"));
    }
    let na = vecops::norm(&a);
    let d = 3.0 * radius * na + b.abs();
    let constants = LossConstants {
        g: 2.0 * d * na,
        beta: 2.0 * na * na,
        alpha: 1.0 / (2.0 * d * d),
    };
    Ok(QuadraticLoss {
        a,
        b,
        radius,
        constants,
    })
}

pub fn make_log_portfolio(r: Vec<f64>, shift: f64, radius: f64) -> Result<LogPortfolioLoss> {
    check_radius(radius)?;
    if r.is_empty() || !vecops::all_finite(&r) || !shift.is_finite() {
        return Err(invalid("portfolio loss needs finite returns and shift"));
    }
    if r.iter().any(|v| *v <= 0.0) {
        return Err(invalid("portfolio returns must be positive"));
    }
    let nr = vecops::norm(&r);
    let w_min = shift - 3.0 * radius * nr;
    if w_min <= 0.0 {
        return Err(invalid("portfolio shift must exceed 3R‖r‖"));
    }
    let g = nr / w_min;
    let constants = LossConstants {
        g,
        beta: g * g,
        alpha: portfolio_alpha(6.0 * radius * g),
    };
    Ok(LogPortfolioLoss {
        r,
        shift,
        radius,
        constants,
    })
}

/// Curvature parameter of `−ln(w)` restricted to a ball where the relative
/// change `rᵀ(y−x)/w(x)` is at most `z_max`: `min(1, 2/h(z_max))` with
/// `h(z) = z² / (2(z − ln(1+z)))`.
fn portfolio_alpha(z_max: f64) -> f64 {
    if z_max <= 0.0 {
        return 1.0;
    }
    let h = z_max * z_max / (2.0 * (z_max - libm::log1p(z_max)));
    (2.0 / h).min(1.0)
}

impl QuadraticLoss {
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

impl LogPortfolioLoss {
    pub fn returns(&self) -> &[f64] {
        &self.r
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// The exp-concavity parameter of `−ln`, before the curvature restriction.
    pub fn exp_concavity(&self) -> f64 {
        1.0
    }
}

impl LossFunction for QuadraticLoss {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r = vecops::dot(&self.a, x) - self.b;
        r * r
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let r = vecops::dot(&self.a, x) - self.b;
        vecops::scale(2.0 * r, &self.a)
    }

    fn constants(&self) -> LossConstants {
        self.constants
    }

    fn domain_radius(&self) -> f64 {
        self.radius
    }

    fn as_quadratic(&self) -> Option<(&[f64], f64)> {
        Some((&self.a, self.b))
    }
}

impl LossFunction for LogPortfolioLoss {
    fn dim(&self) -> usize {
        self.r.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        -libm::log(vecops::dot(&self.r, x) + self.shift)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let w = vecops::dot(&self.r, x) + self.shift;
        vecops::scale(-1.0 / w, &self.r)
    }

    fn constants(&self) -> LossConstants {
        self.constants
    }

    fn domain_radius(&self) -> f64 {
        self.radius
    }
}

impl LossFunction for Loss {
    fn dim(&self) -> usize {
        match self {
            Loss::Quadratic(l) => l.dim(),
            Loss::LogPortfolio(l) => l.dim(),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Loss::Quadratic(l) => l.value(x),
            Loss::LogPortfolio(l) => l.value(x),
        }
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Loss::Quadratic(l) => l.grad(x),
            Loss::LogPortfolio(l) => l.grad(x),
        }
    }

    fn constants(&self) -> LossConstants {
        match self {
            Loss::Quadratic(l) => l.constants(),
            Loss::LogPortfolio(l) => l.constants(),
        }
    }

    fn domain_radius(&self) -> f64 {
        match self {
            Loss::Quadratic(l) => l.domain_radius(),
            Loss::LogPortfolio(l) => l.domain_radius(),
        }
    }

    fn as_quadratic(&self) -> Option<(&[f64], f64)> {
        match self {
            Loss::Quadratic(l) => l.as_quadratic(),
            Loss::LogPortfolio(_) => None,
        }
    }
}

impl From<QuadraticLoss> for Loss {
    fn from(l: QuadraticLoss) -> Self {
        Loss::Quadratic(l)
    }
}

impl From<LogPortfolioLoss> for Loss {
    fn from(l: LogPortfolioLoss) -> Self {
        Loss::LogPortfolio(l)
    }
}

/// Stream-wide constants: largest `G` and `β`, smallest `α`.
pub fn stream_constants<L: LossFunction>(losses: &[L]) -> Option<LossConstants> {
    let mut it = losses.iter().map(LossFunction::constants);
    let first = it.next()?;
    Some(it.fold(first, |acc, c| LossConstants {
        g: acc.g.max(c.g),
        beta: acc.beta.max(c.beta),
        alpha: acc.alpha.min(c.alpha),
    }))
}

/// Counts sampled pairs in `3R·B` violating
/// `f(x) − f(y) ≤ ∇f(x)ᵀ(x−y) − (1/2η)(∇f(x)ᵀ(x−y))²` by more than `1e-9`.
/// Requires `η ≥ max{4GR, 2/α}`.
pub fn check_curvature<L: LossFunction, R: Rng + ?Sized>(
    loss: &L,
    radius: f64,
    eta: f64,
    samples: usize,
    rng: &mut R,
) -> Result<usize> {
    check_block_curvature(core::slice::from_ref(loss), radius, eta, samples, rng)
}

/// Same check for the block sum `h = Σᵢ fᵢ` of `k` losses, requiring
/// `η ≥ max{4kGR, 2k/α}`.
pub fn check_block_curvature<L: LossFunction, R: Rng + ?Sized>(
    losses: &[L],
    radius: f64,
    eta: f64,
    samples: usize,
    rng: &mut R,
) -> Result<usize> {
    let c = stream_constants(losses).ok_or_else(|| invalid("no losses to check"))?;
    check_radius(radius)?;
    let k = losses.len() as f64;
    let required = (4.0 * k * c.g * radius).max(2.0 * k / c.alpha);
    if !(eta >= required) {
        return Err(invalid("eta is below the curvature threshold max{4kGR, 2k/α}"));
    }
    let n = losses[0].dim();
    let mut violations = 0;
    for _ in 0..samples {
        let x = sample_ball(rng, n, 3.0 * radius);
        let y = sample_ball(rng, n, 3.0 * radius);
        let mut g = vec![0.0; n];
        let mut fx = 0.0;
        let mut fy = 0.0;
        for l in losses {
            vecops::axpy(1.0, &l.grad(&x), &mut g);
            fx += l.value(&x);
            fy += l.value(&y);
        }
        let lin = vecops::dot(&g, &vecops::sub(&x, &y));
        let rhs = lin - lin * lin / (2.0 * eta);
        if fx - fy > rhs + 1e-9 * (1.0 + fx.abs().max(fy.abs())) {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Relative error of `grad` against central differences with `h = 1e-6`.
pub fn gradient_fd_error<L: LossFunction + ?Sized>(loss: &L, x: &[f64]) -> Result<f64> {
    check_len(loss.dim(), x)?;
    let h = 1e-6;
    let g = loss.grad(x);
    let mut xp = x.to_vec();
    let mut err = 0.0;
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = loss.value(&xp);
        xp[i] = x[i] - h;
        let down = loss.value(&xp);
        xp[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        err += (g[i] - fd) * (g[i] - fd);
    }
    Ok(libm::sqrt(err) / vecops::norm(&g).max(1e-6))
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("domain radius must be positive and finite"));
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
    fn quadratic_constants_example() {
        let l = make_quadratic(vec![1.0, 0.0], 0.0, 1.0).unwrap();
        let c = l.constants();
        assert_eq!(c.g, 6.0);
        assert_eq!(c.beta, 2.0);
        assert!((c.alpha - 1.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_at_minimizer() {
        let l = make_quadratic(vec![1.0, 2.0], 3.0, 1.0).unwrap();
        let x = [1.0, 1.0];
        assert_eq!(l.value(&x), 0.0);
        assert_eq!(l.grad(&x), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(matches!(make_quadratic(vec![0.0, 0.0], 1.0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn portfolio_constants_example() {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let l = make_log_portfolio(vec![s, s], 4.0, 1.0).unwrap();
        // rᵀx over 3B ranges over [-3, 3], so rᵀx + 4 ranges over [1, 7]
        assert!((l.constants().g - 1.0).abs() < 1e-12);
        assert!((l.constants().beta - 1.0).abs() < 1e-12);
        assert!((l.value(&[1.0, -1.0]) + libm::log(4.0)).abs() < 1e-15);
        assert!(matches!(make_log_portfolio(vec![s, s], 3.0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn portfolio_alpha_matches_direct_scan() {
        // brute-force the smallest η with ln(1+z) − z + z²/(2η) ≤ 0 on (0, z_max]
        let z_max = 6.0;
        let mut need: f64 = 0.0;
        for k in 1..=60_000 {
            let z = z_max * k as f64 / 60_000.0;
            need = need.max(z * z / (2.0 * (z - libm::log1p(z))));
        }
        let alpha = portfolio_alpha(z_max);
        assert!((2.0 / alpha - need).abs() < 1e-9 * need);
        assert!(need > 4.0);
        assert_eq!(portfolio_alpha(0.5), 1.0);
    }

    #[test]
    fn curvature_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = make_quadratic(vec![1.0, 0.0], 0.0, 1.0).unwrap();
        assert_eq!(check_curvature(&l, 1.0, 36.0, 10_000, &mut rng).unwrap(), 0);
        assert!(matches!(check_curvature(&l, 1.0, 30.0, 10, &mut rng), Err(Error::InvalidArgument(_))));
        let block: Vec<QuadraticLoss> = (0..5)
            .map(|i| make_quadratic(vec![1.0, i as f64 * 0.1], 0.2, 1.0).unwrap())
            .collect();
        let c = stream_constants(&block).unwrap();
        let eta = (20.0 * c.g).max(10.0 / c.alpha);
        assert_eq!(check_block_curvature(&block, 1.0, eta, 10_000, &mut rng).unwrap(), 0);
    }

    #[test]
    fn portfolio_curvature_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = make_log_portfolio(vec![0.5, 1.0, 1.5], 8.0, 1.0).unwrap();
        let c = l.constants();
        let eta = (4.0 * c.g).max(2.0 / c.alpha);
        assert_eq!(check_curvature(&l, 1.0, eta, 10_000, &mut rng).unwrap(), 0);
        for _ in 0..100 {
            let x = sample_ball(&mut rng, 3, 3.0);
            assert!(gradient_fd_error(&l, &x).unwrap() <= 1e-5);
            assert!(vecops::norm(&l.grad(&x)) <= c.g + 1e-9);
        }
    }

    #[test]
    fn quadratic_gradients_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = make_quadratic(vec![0.3, -0.7, 0.2, 0.5], 0.4, 1.0).unwrap();
        let c = l.constants();
        for _ in 0..100 {
            let x = sample_ball(&mut rng, 4, 3.0);
            let y = sample_ball(&mut rng, 4, 3.0);
            assert!(gradient_fd_error(&l, &x).unwrap() <= 1e-5);
            assert!(vecops::norm(&l.grad(&x)) <= c.g + 1e-9);
            let dg = vecops::norm(&vecops::sub(&l.grad(&x), &l.grad(&y)));
            assert!(dg <= c.beta * vecops::norm(&vecops::sub(&x, &y)) + 1e-9);
        }
    }

    #[test]
    fn stream_constants_take_worst_case() {
        let a = make_quadratic(vec![1.0], 0.0, 1.0).unwrap();
        let b = make_quadratic(vec![2.0], 0.0, 1.0).unwrap();
        let c = stream_constants(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.g, b.constants().g);
        assert_eq!(c.alpha, b.constants().alpha);
        assert!(stream_constants::<QuadraticLoss>(&[]).is_none());
    }
}
