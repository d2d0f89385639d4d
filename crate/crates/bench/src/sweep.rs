//! Parameter sweeps over horizon and seed, run in parallel.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::config::{Baseline, RunConfig};
use crate::error::BenchError;
use crate::experiment::{log_log_slope, run_experiment, write_outputs, Outcome};
use crate::output::{write_atomic, Sig17};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Grid {
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
}

/// Parses `--grid` entries of the form `T=1000,2000` or `seed=1,2`.
pub fn parse_grid(entries: &[String]) -> Result<Grid, BenchError> {
    let mut grid = Grid::default();
    for e in entries {
        let (key, values) = e
            .split_once('=')
            .ok_or_else(|| BenchError::Config(format!("grid entry `{e}` is not KEY=V1,V2,...")))?;
        let bad = |v: &str| BenchError::Config(format!("bad value `{v}` for grid key {key}"));
        for v in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
            match key.trim() {
                "T" | "horizon" => grid.horizons.push(v.parse().map_err(|_| bad(v))?),
                "seed" => grid.seeds.push(v.parse().map_err(|_| bad(v))?),
                other => return Err(BenchError::Config(format!("unknown grid key `{other}`"))),
            }
        }
    }
    if grid.horizons.is_empty() && grid.seeds.is_empty() {
        return Err(BenchError::Config("empty sweep grid".into()));
    }
    Ok(grid)
}

impl Grid {
    /// Cartesian product with the base config; missing axes use the base value.
    pub fn configs(&self, base: &RunConfig) -> Vec<RunConfig> {
        let horizons = if self.horizons.is_empty() { vec![base.horizon] } else { self.horizons.clone() };
        let seeds = if self.seeds.is_empty() { vec![base.seed] } else { self.seeds.clone() };
        let mut out = Vec::new();
        for &seed in &seeds {
            for &t in &horizons {
                let mut c = base.clone();
                c.horizon = t;
                c.seed = seed;
                c.output_dir = base.output_dir.join(format!("T{t}-seed{seed}"));
                out.push(c);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub horizon: usize,
    pub seed: u64,
    pub block_len: usize,
    pub regret: Sig17,
    pub regret_per_round: Sig17,
    pub ogd_regret: Option<Sig17>,
    pub loo_calls: u64,
    pub passed: bool,
    pub failed_checks: Vec<&'static str>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedTrend {
    pub seed: u64,
    /// Least-squares slope of `ln regret` against `ln T`; absent if a regret is not positive.
    pub log_log_slope: Option<Sig17>,
    pub regret_nondecreasing: bool,
    pub regret_per_round_decreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub trends: Vec<SeedTrend>,
    pub passed: bool,
}

fn row(o: &Outcome) -> SweepRow {
    let p = &o.prepared;
    let regret = o.regret();
    let ogd = o
        .baselines
        .iter()
        .zip(&p.config.baselines)
        .find(|(_, b)| **b == Baseline::Ogd)
        .map(|(r, _)| Sig17(r.regret(o.offline.value)));
    SweepRow {
        horizon: p.params.horizon,
        seed: p.config.seed,
        block_len: p.params.block_len,
        regret: Sig17(regret),
        regret_per_round: Sig17(regret / p.params.horizon as f64),
        ogd_regret: ogd,
        loo_calls: o.run.total_loo_calls,
        passed: o.passed(),
        failed_checks: o.failed_checks(),
        output_dir: p.config.output_dir.clone(),
    }
}

pub fn trends(rows: &[SweepRow]) -> Vec<SeedTrend> {
    let mut by_seed: BTreeMap<u64, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        by_seed.entry(r.seed).or_default().push(r);
    }
    by_seed
        .into_iter()
        .map(|(seed, mut rs)| {
            rs.sort_by_key(|r| r.horizon);
            let ts: Vec<f64> = rs.iter().map(|r| r.horizon as f64).collect();
            let regs: Vec<f64> = rs.iter().map(|r| r.regret.0).collect();
            let slope = (rs.len() >= 2 && regs.iter().all(|v| *v > 0.0)).then(|| Sig17(log_log_slope(&ts, &regs)));
            SeedTrend {
                seed,
                log_log_slope: slope,
                regret_nondecreasing: regs.windows(2).all(|w| w[1] >= w[0]),
                regret_per_round_decreasing: rs.windows(2).all(|w| w[1].regret_per_round.0 < w[0].regret_per_round.0),
            }
        })
        .collect()
}

/// Runs every grid point, writing each run's outputs and `sweep.json` under
/// the base output directory. Runs share nothing; `jobs` threads pull work.
pub fn run_sweep(base: &RunConfig, grid: &Grid, jobs: usize) -> Result<SweepSummary, BenchError> {
    let configs = grid.configs(base);
    for c in &configs {
        c.check()?;
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SweepRow, BenchError>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    let workers = jobs.clamp(1, configs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let res = run_experiment(cfg).and_then(|o| {
                    write_outputs(&o, &cfg.output_dir)?;
                    Ok(row(&o))
                });
                results.lock().expect("sweep result lock")[i] = Some(res);
            });
        }
    });
    let mut rows = Vec::with_capacity(configs.len());
    for r in results.into_inner().expect("sweep result lock") {
        rows.push(r.expect("every grid point is visited")?);
    }
    let trends = trends(&rows);
    let summary = SweepSummary {
        passed: rows.iter().all(|r| r.passed),
        rows,
        trends,
    };
    write_summary(&summary, &base.output_dir)?;
    Ok(summary)
}

fn write_summary(summary: &SweepSummary, dir: &Path) -> Result<(), BenchError> {
    let mut json =
        serde_json::to_string_pretty(summary).map_err(|e| BenchError::Runtime(format!("cannot serialize sweep: {e}")))?;
    json.push('\n');
    write_atomic(&dir.join("sweep.json"), json.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grid_entries() {
        let g = parse_grid(&["T=100, 200".into(), "seed=3".into()]).unwrap();
        assert_eq!(g.horizons, vec![100, 200]);
        assert_eq!(g.seeds, vec![3]);
        assert!(parse_grid(&["K=4".into()]).is_err());
        assert!(parse_grid(&["T=abc".into()]).is_err());
        assert!(parse_grid(&["T".into()]).is_err());
    }

    #[test]
    fn grid_expands_with_distinct_dirs() {
        let base = RunConfig::from_json(
            r#"{"set": {"kind": "simplex", "dim": 3}, "loss": {"family": "quadratic", "rho": 2},
                "horizon": 50, "mode": {"kind": "fullrank"}, "seed": 1}"#,
        )
        .unwrap();
        let g = Grid {
            horizons: vec![10, 20],
            seeds: vec![1, 2],
        };
        let cs = g.configs(&base);
        assert_eq!(cs.len(), 4);
        let mut dirs: Vec<_> = cs.iter().map(|c| c.output_dir.clone()).collect();
        dirs.dedup();
        assert_eq!(dirs.len(), 4);
    }

    #[test]
    fn trend_flags() {
        let mk = |t: usize, reg: f64| SweepRow {
            horizon: t,
            seed: 0,
            block_len: 1,
            regret: Sig17(reg),
            regret_per_round: Sig17(reg / t as f64),
            ogd_regret: None,
            loo_calls: 0,
            passed: true,
            failed_checks: vec![],
            output_dir: PathBuf::new(),
        };
        let rows = vec![mk(200, 4.0), mk(100, 2.5), mk(400, 6.0)];
        let t = &trends(&rows)[0];
        assert!(t.regret_nondecreasing && t.regret_per_round_decreasing);
        assert!(t.log_log_slope.unwrap().0 > 0.0 && t.log_log_slope.unwrap().0 < 1.0);
    }
}
