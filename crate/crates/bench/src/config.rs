//! Run configuration, read from a single JSON document.

use std::path::{Path, PathBuf};

use pfons_core::{FeasibleSet, SetKind};
use serde::{Deserialize, Serialize};

use crate::error::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Simplex { dim: usize },
    L2Ball { dim: usize, radius: f64 },
    L1Ball { dim: usize, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    /// `(a_tᵀx − b_t)²` with `a_t` drawn from a `rho`-dimensional subspace.
    Quadratic {
        rho: usize,
        /// Target bound on the gradient norm over `3R·B`.
        #[serde(default = "one")]
        grad_bound: f64,
        /// Half-width of the uniform label noise.
        #[serde(default)]
        noise: f64,
    },
    /// `−ln(r_tᵀx + c)` with returns `1 + vol · M z_t` clipped below.
    LogPortfolio {
        rho: usize,
        #[serde(default = "default_vol")]
        volatility: f64,
        /// Lower bound on `r_tᵀx + c` over `3R·B`.
        #[serde(default = "one")]
        wealth_floor: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_vol() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    Fullrank,
    Lowdim { rho: usize },
    Sketch { rho: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub block_len: Option<usize>,
    pub eta: Option<f64>,
    pub eps: Option<f64>,
    pub eps_init: Option<f64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self == &Overrides::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Ogd,
    ExactOnsBall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub set: SetSpec,
    pub loss: LossSpec,
    pub horizon: usize,
    pub mode: ModeSpec,
    #[serde(default)]
    pub overrides: Overrides,
    pub seed: u64,
    #[serde(default)]
    pub baselines: Vec<Baseline>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Constant `c` inside the logarithm of the regret bound.
    #[serde(default = "default_c")]
    pub regret_bound_c: f64,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_c() -> f64 {
    1e6
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| BenchError::Config(format!("bad config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn dim(&self) -> usize {
        match &self.set {
            SetSpec::Simplex { dim } | SetSpec::L2Ball { dim, .. } | SetSpec::L1Ball { dim, .. } => *dim,
            SetSpec::Box { lo, .. } => lo.len(),
        }
    }

    pub fn build_set(&self) -> Result<FeasibleSet, BenchError> {
        let kind = match &self.set {
            SetSpec::Simplex { .. } => SetKind::Simplex,
            SetSpec::L2Ball { radius, .. } => SetKind::L2Ball { radius: *radius },
            SetSpec::L1Ball { radius, .. } => SetKind::L1Ball { radius: *radius },
            SetSpec::Box { lo, hi } => SetKind::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
        };
        FeasibleSet::from_kind(kind, self.dim()).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Structural checks that do not need the generated stream.
    pub fn check(&self) -> Result<(), BenchError> {
        let n = self.dim();
        let cfg = |m: String| Err(BenchError::Config(m));
        if n == 0 {
            return cfg("set dimension must be at least 1".into());
        }
        if self.horizon == 0 {
            return cfg("horizon must be at least 1".into());
        }
        let rho = match self.loss {
            LossSpec::Quadratic { rho, .. } | LossSpec::LogPortfolio { rho, .. } => rho,
        };
        if rho == 0 || rho > n {
            return cfg(format!("loss rho must lie in 1..={n}, got {rho}"));
        }
        match self.mode {
            ModeSpec::Lowdim { rho } | ModeSpec::Sketch { rho } if rho == 0 || rho > n => {
                return cfg(format!("mode rho must lie in 1..={n}, got {rho}"));
            }
            _ => {}
        }
        if self.baselines.contains(&Baseline::ExactOnsBall) && !matches!(self.set, SetSpec::L2Ball { .. }) {
            return cfg("exact_ons_ball baseline requires an l2_ball set".into());
        }
        if !(self.regret_bound_c > 0.0) {
            return cfg("regret_bound_c must be positive".into());
        }
        self.build_set()?;
        Ok(())
    }
}
