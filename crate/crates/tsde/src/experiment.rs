//! Parallel Monte-Carlo runs and their aggregation.

use std::time::Instant;

use rayon::prelude::*;
use tsde_core::harness::{check_invariants, run_one, ExperimentConfig, HarnessError, InvariantViolation};

/// `points` roughly evenly spaced times in `1..=horizon`, always ending at
/// `horizon`.
pub fn downsample_grid(horizon: u64, points: usize) -> Vec<u64> {
    let p = points as u64;
    if p == 0 || horizon == 0 {
        return Vec::new();
    }
    if p >= horizon {
        return (1..=horizon).collect();
    }
    let mut grid: Vec<u64> = (1..=p).map(|i| (i * horizon).div_ceil(p)).collect();
    grid.dedup();
    grid
}

/// One run reduced to what gets written out.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: u64,
    pub seed: u64,
    pub k_t: usize,
    pub m: usize,
    pub j_star: f64,
    pub span: f64,
    pub final_regret: f64,
    /// Values at the grid times.
    pub cumulative_cost: Vec<f64>,
    pub regret: Vec<f64>,
    /// `sum_k T_k epsilon_k`.
    pub weighted_epsilon: f64,
    /// `J(theta_1)`, the gain of the first plan.
    pub first_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub label: String,
    pub grid: Vec<u64>,
    pub mean_regret: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Ordered by `run_id`.
    pub runs: Vec<RunRecord>,
    pub wall_seconds: f64,
}

impl AggregateResult {
    pub fn final_mean(&self) -> f64 {
        self.mean_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_stderr(&self) -> f64 {
        self.stderr.last().copied().unwrap_or(0.0)
    }

    pub fn max_k_t(&self) -> usize {
        self.runs.iter().map(|r| r.k_t).max().unwrap_or(0)
    }

    pub fn max_m(&self) -> usize {
        self.runs.iter().map(|r| r.m).max().unwrap_or(0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("run {run}: {source}")]
    Run { run: u64, source: HarnessError },
    #[error("{} invariant violations; first in run {}: {}", .0.len(), .0[0].0, .0[0].1)]
    Invariants(Vec<(u64, InvariantViolation)>),
    #[error("could not start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Sample mean and standard error of the mean (zero for a single sample).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn one(cfg: &ExperimentConfig, check: bool, grid: &[u64], run: u64) -> Result<(RunRecord, Vec<InvariantViolation>), ExperimentError> {
    let trace = run_one(cfg, run).map_err(|source| ExperimentError::Run { run, source })?;
    let violations = if check { check_invariants(&trace) } else { Vec::new() };
    let record = RunRecord {
        run_id: run,
        seed: trace.seed,
        k_t: trace.num_episodes(),
        m: trace.num_macro_episodes(),
        j_star: trace.j_star,
        span: trace.span,
        final_regret: trace.final_regret(),
        cumulative_cost: grid.iter().map(|&t| trace.cumulative_cost[(t - 1) as usize]).collect(),
        regret: grid.iter().map(|&t| trace.regret(t)).collect(),
        weighted_epsilon: trace.weighted_epsilon_sum(),
        first_gain: trace.episodes.first().map_or(f64::NAN, |e| e.gain),
    };
    Ok((record, violations))
}

/// Runs `cfg.num_runs` seeded runs on `jobs` threads (0 = all cores).
/// Results are ordered by run index whatever the completion order, so the
/// output is identical for any `jobs`. `progress` is called once per
/// finished run with the number finished so far.
pub fn run_experiment(
    label: &str,
    cfg: &ExperimentConfig,
    grid: &[u64],
    jobs: usize,
    progress: &(dyn Fn(u64) + Sync),
) -> Result<AggregateResult, ExperimentError> {
    let start = Instant::now();
    let mut inner = cfg.clone();
    inner.invariant_checks = false;
    let check = cfg.invariant_checks;
    let done = std::sync::atomic::AtomicU64::new(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let results: Vec<_> = pool.install(|| {
        (0..cfg.num_runs)
            .into_par_iter()
            .map(|run| {
                let r = one(&inner, check, grid, run);
                progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
                r
            })
            .collect()
    });
    aggregate(label, grid, results, start.elapsed().as_secs_f64())
}

fn aggregate(
    label: &str,
    grid: &[u64],
    results: Vec<Result<(RunRecord, Vec<InvariantViolation>), ExperimentError>>,
    wall_seconds: f64,
) -> Result<AggregateResult, ExperimentError> {
    let mut runs = Vec::with_capacity(results.len());
    let mut violations = Vec::new();
    for r in results {
        let (record, v) = r?;
        violations.extend(v.into_iter().map(|x| (record.run_id, x)));
        runs.push(record);
    }
    if !violations.is_empty() {
        return Err(ExperimentError::Invariants(violations));
    }
    let mut mean_regret = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    let mut column = Vec::with_capacity(runs.len());
    for i in 0..grid.len() {
        column.clear();
        column.extend(runs.iter().map(|r| r.regret[i]));
        let (m, se) = mean_and_stderr(&column);
        mean_regret.push(m);
        stderr.push(se);
    }
    Ok(AggregateResult { label: label.to_string(), grid: grid.to_vec(), mean_regret, stderr, runs, wall_seconds })
}
