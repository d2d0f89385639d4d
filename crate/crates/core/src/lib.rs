//! Projection-free Online Newton Step.
//!
//! The feasible set is only ever touched through a linear optimization
//! oracle (LOO). Matrix-norm projections are replaced by an
//! approximately-feasible projection (AFP) built from Frank-Wolfe
//! separation steps, and the Newton metric is kept either exactly
//! (rank-one inverse updates) or as a Frequent Directions sketch.
//!
//! The crate is `no_std` and only needs `alloc`. IO, configuration and the
//! experiment harness live in the companion `pfons-bench` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod afp;
pub mod error;
pub mod losses;
pub mod metric;
pub mod online;
pub mod params;
pub mod regret;
pub mod separation;
pub mod sets;
pub mod sketch;
pub mod vecops;

pub use afp::{approx_feasible_projection, pull_bound, pull_step, AfpResult, PULL_STEP};
pub use error::{Error, ParamsViolation, Result};
pub use losses::{
    check_block_curvature, check_curvature, gradient_fd_error, make_log_portfolio,
    make_quadratic, stream_constants, Loss, LossConstants, LossFunction, LogPortfolioLoss,
    QuadraticLoss,
};
pub use metric::{logdet_ratio_check, ExactMetric, Metric, REFRESH_INTERVAL};
pub use online::{
    run_online, run_online_observed, BlockEvent, BlockObserver, BlockRow, MetricStrategy,
    RunOptions, RunReport,
};
pub use params::{
    energy_bound_exact, energy_bound_sketch, eta_threshold, loo_call_budget, theorem_call_budget,
    theoretical_regret_bound, tune_params_fullrank,
    tune_params_lowdim, Mode, Params, RegretBoundTerms, Tuning,
};
pub use regret::{compute_regret, offline_optimum, OfflineSolution, RegretOptions};
pub use separation::{
    fw_iteration_cap, line_search_sigma, separate_or_approach, SeparationOutcome,
    SeparationStatus,
};
pub use sets::{FeasibleSet, OracleCounter, SetKind};
pub use sketch::SketchMetric;
