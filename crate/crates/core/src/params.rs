//! Parameters of the blockwise online algorithm, their tuned values, and the
//! closed-form regret, energy and oracle-call bounds.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, ParamsViolation, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Mode {
    FullRank,
    /// Exact metric, parameters tuned for a `rho`-dimensional gradient span.
    LowDim { rho: usize },
    /// Frequent Directions metric with sketch size `rho`.
    Sketch { rho: usize },
}

impl Mode {
    pub fn rho(&self) -> Option<usize> {
        match self {
            Mode::FullRank => None,
            Mode::LowDim { rho } | Mode::Sketch { rho } => Some(*rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Params {
    pub horizon: usize,
    pub block_len: usize,
    pub eta: f64,
    pub eps: f64,
    pub eps_init: f64,
    pub mode: Mode,
}

/// Tuned parameters plus a note for each upward adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub params: Params,
    pub notes: Vec<String>,
}

impl Params {
    /// Number of blocks, counting a final short block.
    pub fn num_blocks(&self) -> usize {
        self.horizon.div_ceil(self.block_len.max(1))
    }

    /// Checks the four invariants for loss constants `g`, `alpha` and set
    /// radius `r`.
    pub fn validate(&self, g: f64, r: f64, alpha: f64) -> core::result::Result<(), ParamsViolation> {
        for (name, value) in [
            ("eta", self.eta),
            ("eps", self.eps),
            ("eps_init", self.eps_init),
            ("G", g),
            ("R", r),
            ("alpha", alpha),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ParamsViolation::NonPositive { name, value });
            }
        }
        if self.block_len == 0 || self.block_len > self.horizon {
            return Err(ParamsViolation::BlockLenOutOfRange {
                block_len: self.block_len,
                horizon: self.horizon,
            });
        }
        let k = self.block_len as f64;
        let required = eta_threshold(k, g, r, alpha);
        if self.eta < required {
            return Err(ParamsViolation::EtaTooSmall {
                eta: self.eta,
                required,
            });
        }
        let required = (k * g) * (k * g);
        if self.eps_init < required {
            return Err(ParamsViolation::EpsInitTooSmall {
                eps_init: self.eps_init,
                required,
            });
        }
        let ratio = 3.0 * self.eps / self.eps_init;
        let limit = 4.0 * r * r;
        if ratio > limit {
            return Err(ParamsViolation::EpsRatioTooLarge { ratio, limit });
        }
        Ok(())
    }
}

/// `max{12 K G R, 2K/α}`.
pub fn eta_threshold(k: f64, g: f64, r: f64, alpha: f64) -> f64 {
    (12.0 * k * g * r).max(2.0 * k / alpha)
}

pub fn tune_params_fullrank(horizon: usize, n: usize, g: f64, r: f64, alpha: f64) -> Result<Tuning> {
    tune(horizon, n, g, r, alpha, Mode::FullRank)
}

/// Same formulas with the effective dimension `rho`; `sketch` selects the
/// Frequent Directions mode.
pub fn tune_params_lowdim(
    horizon: usize,
    rho: usize,
    g: f64,
    r: f64,
    alpha: f64,
    sketch: bool,
) -> Result<Tuning> {
    let mode = if sketch {
        Mode::Sketch { rho }
    } else {
        Mode::LowDim { rho }
    };
    tune(horizon, rho, g, r, alpha, mode)
}

fn tune(horizon: usize, d: usize, g: f64, r: f64, alpha: f64, mode: Mode) -> Result<Tuning> {
    if horizon == 0 || d == 0 {
        return Err(invalid("horizon and dimension must be at least 1"));
    }
    for (name, v) in [("G", g), ("R", r), ("alpha", alpha)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParams(ParamsViolation::NonPositive { name, value: v }));
        }
    }
    let t = horizon as f64;
    let df = d as f64;
    let t13 = libm::cbrt(t);
    let t23 = t13 * t13;
    let d13 = libm::cbrt(df);

    let k_raw = 4.0 * t23 / d13;
    let k = (libm::round(k_raw) as usize).clamp(1, horizon);
    let kf = k as f64;
    let eta = 8.0 * (6.0 * g * r).max(1.0 / alpha) * kf / 4.0;
    let mut eps_init = 32.0 * g * g * t13 * t;
    let log_arg = 19.0 + 8.0 * (12.0 + 1.0 / (3.0 * r * r * g * g * alpha * alpha)) * t13 / (d13 * df);
    let eps = 96.0 * g * g * r * r * libm::log(log_arg) * t;

    let mut notes = Vec::new();
    let min_eps_init = (kf * g) * (kf * g);
    if eps_init < min_eps_init {
        notes.push(format!("eps_init raised from {eps_init:e} to (K G)^2 = {min_eps_init:e}"));
        eps_init = min_eps_init;
    }
    if 3.0 * eps / eps_init > 4.0 * r * r {
        let raised = 3.0 * eps / (4.0 * r * r) * (1.0 + 4.0 * f64::EPSILON);
        notes.push(format!("eps_init raised from {eps_init:e} to 3 eps / (4 R^2) = {raised:e}"));
        eps_init = raised;
    }
    let params = Params {
        horizon,
        block_len: k,
        eta: eta.max(eta_threshold(kf, g, r, alpha)),
        eps,
        eps_init,
        mode,
    };
    params.validate(g, r, alpha).map_err(Error::InvalidParams)?;
    Ok(Tuning { params, notes })
}

/// Bound on the total number of LOO calls:
/// `61 R² ln(19 + 4η²K²G²/(ε ε_I)) (ε_I + G²KT)/(Kε) · T`.
pub fn loo_call_budget(params: &Params, g: f64, r: f64) -> f64 {
    let k = params.block_len as f64;
    let t = params.horizon as f64;
    let (eta, eps, ei) = (params.eta, params.eps, params.eps_init);
    let log = libm::log(19.0 + 4.0 * eta * eta * k * k * g * g / (eps * ei));
    61.0 * r * r * log * (ei + g * g * k * t) / (k * eps) * t
}

/// `0.65 (8 d^{1/3} T^{2/3} + T)` with `d` the ambient or effective dimension.
pub fn theorem_call_budget(horizon: usize, d: usize) -> f64 {
    let t = horizon as f64;
    let t13 = libm::cbrt(t);
    0.65 * (8.0 * libm::cbrt(d as f64) * t13 * t13 + t)
}

/// Summands of the closed-form regret bound.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegretBoundTerms {
    /// `9βR²T^{2/3} L`.
    pub smoothness: f64,
    /// `2RG d^{1/3} T^{2/3}`.
    pub blocking: f64,
    /// `(36GR + 4/α) d^{2/3} T^{2/3} L` (with `(ρ+1)^{2/3}` in sketch mode).
    pub curvature: f64,
    /// Terms in `Ω_ρ`; zero in full-rank mode.
    pub tail: f64,
    pub total: f64,
    /// The universal constant used inside `L = ln((c + c/(R²G²α²)) T^{1/3})`.
    pub c: f64,
}

/// Closed-form regret bound. `d` is the ambient dimension in full-rank mode
/// and ignored otherwise (the mode's `rho` is used); `omega` is `Ω_ρ`.
pub fn theoretical_regret_bound(
    params: &Params,
    g: f64,
    r: f64,
    alpha: f64,
    beta: f64,
    d: usize,
    omega: f64,
    c: f64,
) -> RegretBoundTerms {
    let t = params.horizon as f64;
    let t13 = libm::cbrt(t);
    let t23 = t13 * t13;
    let ll = libm::log((c + c / (r * r * g * g * alpha * alpha)) * t13);
    let dim = params.mode.rho().unwrap_or(d) as f64;
    let smoothness = 9.0 * beta * r * r * t23 * ll;
    let blocking = 2.0 * r * g * libm::cbrt(dim) * t23;
    let (curv_dim, tail) = match params.mode {
        Mode::FullRank => (dim, 0.0),
        Mode::LowDim { .. } => (
            dim,
            5.0 * r * t13 * libm::sqrt(omega * ll)
                + (3.0 * g * r + 0.5 / alpha) * omega / (libm::cbrt(dim * dim) * g * g),
        ),
        Mode::Sketch { .. } => (
            dim + 1.0,
            5.0 * r * libm::sqrt(dim) * t13 * libm::sqrt(omega * ll)
                + (6.0 * g * r + 1.0 / alpha) * libm::cbrt(dim) * omega / (g * g),
        ),
    };
    let curvature = (36.0 * g * r + 4.0 / alpha) * libm::cbrt(curv_dim * curv_dim) * t23 * ll;
    RegretBoundTerms {
        smoothness,
        blocking,
        curvature,
        tail,
        total: smoothness + blocking + curvature + tail,
        c,
    }
}

/// Bound on `Σₘ ‖∇̄ₘ‖²_{Aₘ⁻¹}` for the exact metric, valid for every `rho`:
/// `ρ ln((TKG² + ε_I)/ε_I) + (K/ε_I) Ω_ρ`.
pub fn energy_bound_exact(params: &Params, g: f64, rho: usize, omega: f64) -> f64 {
    let k = params.block_len as f64;
    let t = params.horizon as f64;
    let ei = params.eps_init;
    rho as f64 * libm::log((t * k * g * g + ei) / ei) + k / ei * omega
}

/// Bound on `Σₘ ‖∇̄ₘ‖²_{Aₘ⁻¹}` for a sketch of size `rho`:
/// `ρ ln(1 + G²KT/ε_I) + (ρ+1) K Ω_ρ / ε_I`.
pub fn energy_bound_sketch(params: &Params, g: f64, rho: usize, omega: f64) -> f64 {
    let k = params.block_len as f64;
    let t = params.horizon as f64;
    let ei = params.eps_init;
    rho as f64 * libm::log1p(g * g * k * t / ei) + (rho as f64 + 1.0) * k * omega / ei
}
