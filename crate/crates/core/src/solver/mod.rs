//! Average-cost planning: relative value iteration, epsilon-approximate
//! solves, and an exhaustive policy-enumeration oracle.
//!
//! The optimality equation solved here is
//!
//! ```text
//! J + v(s) = min_a { c(s,a) + sum_s' theta(s'|s,a) v(s') },   min_s v(s) = 0
//! ```
//!
//! Relative value iteration runs on the aperiodic transform
//! `theta_tau = tau * theta + (1 - tau) * I` with `tau = 1/2`. The transform
//! leaves the gain and the optimal policies unchanged and scales the bias by
//! `1 / tau`, but it makes the iteration converge even when an optimal chain
//! is periodic.
//!
//! Nearly decomposable kernels (exit probabilities around 1e-8, common
//! under Dirichlet(0.1) draws) contract far too slowly for value iteration
//! alone. When the iteration budget runs out, policy iteration is started
//! from the current greedy policy, and its answer is accepted only if it
//! meets the same Bellman certificate.

mod bruteforce;
mod chain;
mod howard;

use alloc::vec;
use alloc::vec::Vec;

use crate::mdp::{Mdp, StationaryPolicy, Violation};

pub use bruteforce::{solve_bruteforce, BRUTEFORCE_POLICY_LIMIT};

/// Weight `tau` of the original kernel in the aperiodic transform.
pub const APERIODICITY_WEIGHT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct SolverOptions {
    /// Stop once the span of successive iterate changes is at most `tol`.
    pub tol: f64,
    pub max_iters: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    /// Optimal average cost per stage `J(theta)`.
    pub gain: f64,
    /// Relative values, shifted so that the minimum is zero.
    pub values: Vec<f64>,
    pub policy: StationaryPolicy,
    /// `max_s values[s]`.
    pub span: f64,
    pub iterations: u64,
    /// `max_s |gain + values[s] - min_a Q(s, a)|`.
    pub bellman_residual: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("invalid MDP ({} violations)", .0.len())]
    InvalidMdp(Vec<Violation>),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("epsilon must be non-negative and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("value iteration did not converge after {iterations} iterations (span gap {gap:e}); the model may not be weakly communicating")]
    NotConverged { iterations: u64, gap: f64 },
    #[error("value iteration produced a non-finite iterate")]
    NonFinite,
    #[error("{count} policies exceed the enumeration limit of {limit}")]
    TooManyPolicies { count: f64, limit: f64 },
    #[error("span of an empty vector")]
    EmptyValues,
    #[error("induced Markov chain produced a singular linear system")]
    SingularChain,
}

/// Per-episode slack schedule `epsilon_k` for approximate planning.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum EpsilonSchedule {
    /// Exact solves.
    #[default]
    None,
    Constant(f64),
    /// `epsilon_k = 1 / (k + 1)`.
    #[cfg_attr(feature = "serde", serde(rename = "one_over_k_plus_1"))]
    OneOverKPlusOne,
}

impl EpsilonSchedule {
    /// Slack for episode `k` (1-based).
    pub fn epsilon(&self, k: usize) -> f64 {
        match *self {
            EpsilonSchedule::None => 0.0,
            EpsilonSchedule::Constant(eps) => eps,
            EpsilonSchedule::OneOverKPlusOne => 1.0 / (k as f64 + 1.0),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, EpsilonSchedule::None)
    }
}

/// `max - min` of `values`.
pub fn span_of(values: &[f64]) -> Result<f64, SolveError> {
    if values.is_empty() {
        return Err(SolveError::EmptyValues);
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

/// `c(s,a) + sum_s' theta(s'|s,a) v(s')`.
#[inline]
pub fn q_value(mdp: &Mdp, values: &[f64], s: usize, a: usize) -> f64 {
    mdp.cost(s, a) + dot(mdp.kernel().row(s, a), values)
}

#[inline]
fn dot(row: &[f64], values: &[f64]) -> f64 {
    row.iter().zip(values).map(|(p, v)| p * v).sum()
}

/// Minimizing action and its Q value; the lowest index wins ties.
fn best_action(mdp: &Mdp, values: &[f64], s: usize) -> (usize, f64) {
    let mut best = (0, q_value(mdp, values, s, 0));
    for a in 1..mdp.num_actions() {
        let q = q_value(mdp, values, s, a);
        if q < best.1 {
            best = (a, q);
        }
    }
    best
}

/// Greedy policy for `values` (lowest action index on ties).
pub fn greedy_policy(mdp: &Mdp, values: &[f64]) -> StationaryPolicy {
    let actions = (0..mdp.num_states()).map(|s| best_action(mdp, values, s).0).collect();
    StationaryPolicy::new(actions, mdp.num_actions()).expect("greedy actions are in range")
}

/// `max_s |gain + values[s] - min_a Q(s, a)|`.
pub fn bellman_residual(mdp: &Mdp, gain: f64, values: &[f64]) -> f64 {
    (0..mdp.num_states())
        .map(|s| libm::fabs(gain + values[s] - best_action(mdp, values, s).1))
        .fold(0.0, f64::max)
}

/// Largest per-state slack `Q(s, pi(s)) - min_a Q(s, a)` of `policy`
/// against `values`.
pub fn policy_slack(mdp: &Mdp, policy: &StationaryPolicy, values: &[f64]) -> f64 {
    (0..mdp.num_states())
        .map(|s| q_value(mdp, values, s, policy.action(s)) - best_action(mdp, values, s).1)
        .fold(0.0, f64::max)
}

/// Solves the average-cost optimality equation to tolerance `opts.tol`.
pub fn solve(mdp: &Mdp, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    solve_from(mdp, opts, None)
}

/// [`solve`] started from `initial` instead of the zero vector.
///
/// Warm starts only change how many iterations are needed; any starting
/// vector yields a result meeting the same tolerance.
pub fn solve_from(mdp: &Mdp, opts: &SolverOptions, initial: Option<&[f64]>) -> Result<SolveResult, SolveError> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(SolveError::InvalidTolerance(opts.tol));
    }
    let violations = mdp.validate_tables();
    if !violations.is_empty() {
        return Err(SolveError::InvalidMdp(violations));
    }
    relative_value_iteration(mdp, opts.tol, opts.max_iters, initial)
}

/// Returns an `epsilon`-approximate solution by stopping value iteration as
/// soon as the span of the iterate change drops to `max(epsilon, opts.tol)`.
///
/// The returned policy is greedy for the returned values, and
/// `bellman_residual <= epsilon` certifies the slack. `epsilon = 0` gives
/// exactly [`solve`].
pub fn solve_approx(mdp: &Mdp, epsilon: f64, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    solve_approx_from(mdp, epsilon, opts, None)
}

pub fn solve_approx_from(
    mdp: &Mdp,
    epsilon: f64,
    opts: &SolverOptions,
    initial: Option<&[f64]>,
) -> Result<SolveResult, SolveError> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(SolveError::InvalidEpsilon(epsilon));
    }
    let tol = if epsilon > opts.tol { epsilon } else { opts.tol };
    solve_from(mdp, &SolverOptions { tol, ..*opts }, initial)
}

fn relative_value_iteration(
    mdp: &Mdp,
    tol: f64,
    max_iters: u64,
    initial: Option<&[f64]>,
) -> Result<SolveResult, SolveError> {
    let n = mdp.num_states();
    let m = mdp.num_actions();
    let tau = APERIODICITY_WEIGHT;
    let mut w = match initial {
        Some(init) if init.len() == n && init.iter().all(|x| x.is_finite()) => {
            let r = init[0];
            // stored in transformed units, i.e. divided by tau
            init.iter().map(|x| (x - r) / tau).collect()
        }
        _ => vec![0.0; n],
    };
    let mut next = vec![0.0; n];
    let kernel = mdp.kernel();
    let mut gap = f64::INFINITY;
    for iter in 1..=max_iters {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..n {
            let mut best = f64::INFINITY;
            for a in 0..m {
                let q = mdp.cost(s, a) + tau * dot(kernel.row(s, a), &w);
                if q < best {
                    best = q;
                }
            }
            let u = best + (1.0 - tau) * w[s];
            let d = u - w[s];
            lo = lo.min(d);
            hi = hi.max(d);
            next[s] = u;
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        gap = hi - lo;
        if gap <= tol {
            let gain = (0.5 * (lo + hi)).clamp(0.0, 1.0);
            let min_w = w.iter().copied().fold(f64::INFINITY, f64::min);
            let values: Vec<f64> = w.iter().map(|x| tau * (x - min_w)).collect();
            let span = values.iter().copied().fold(0.0, f64::max);
            let policy = greedy_policy(mdp, &values);
            let bellman_residual = bellman_residual(mdp, gain, &values);
            return Ok(SolveResult { gain, values, policy, span, iterations: iter, bellman_residual });
        }
        let r = next[0];
        for (wi, ni) in w.iter_mut().zip(&next) {
            *wi = ni - r;
        }
    }
    if let Some(result) = finish_with_policy_iteration(mdp, tol, max_iters, &w) {
        return Ok(result);
    }
    Err(SolveError::NotConverged { iterations: max_iters, gap })
}

/// Maximum improvement rounds of the policy-iteration finish.
const POLICY_ITERATION_ROUNDS: usize = 1_000;

fn finish_with_policy_iteration(mdp: &Mdp, tol: f64, iterations: u64, w: &[f64]) -> Option<SolveResult> {
    let tau = APERIODICITY_WEIGHT;
    let scaled: Vec<f64> = w.iter().map(|x| tau * x).collect();
    let start = greedy_policy(mdp, &scaled).as_slice().to_vec();
    let (gain, raw) = howard::policy_iteration(mdp, start, POLICY_ITERATION_ROUNDS)?;
    if !(-tol..=1.0 + tol).contains(&gain) {
        return None;
    }
    let gain = gain.clamp(0.0, 1.0);
    let min_v = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let values: Vec<f64> = raw.iter().map(|x| x - min_v).collect();
    let residual = bellman_residual(mdp, gain, &values);
    if residual > tol {
        return None;
    }
    let span = values.iter().copied().fold(0.0, f64::max);
    let policy = greedy_policy(mdp, &values);
    Some(SolveResult { gain, values, policy, span, iterations, bellman_residual: residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_riverswim;
    use crate::rng::{dirichlet_into, stream, uniform, Stream};

    fn random_mdp(seed: u64, s: usize, a: usize, alpha: f64) -> Mdp {
        let mut rng = stream(seed, Stream::Truth);
        let cost: Vec<f64> = (0..s * a).map(|_| uniform(&mut rng)).collect();
        let mut kernel = vec![0.0; s * a * s];
        let prior = vec![alpha; s];
        for row in kernel.chunks_mut(s) {
            dirichlet_into(&mut rng, &prior, row);
        }
        Mdp::new(s, a, cost, kernel, 0).unwrap()
    }

    #[test]
    fn constant_cost_gives_constant_gain_and_flat_values() {
        let s = 4;
        let mut rng = stream(11, Stream::Truth);
        let mut kernel = vec![0.0; s * 2 * s];
        let mut row = vec![0.0; s];
        for st in 0..s {
            dirichlet_into(&mut rng, &[1.0; 4], &mut row);
            for a in 0..2 {
                kernel[(st * 2 + a) * s..(st * 2 + a + 1) * s].copy_from_slice(&row);
            }
        }
        let mdp = Mdp::new(s, 2, vec![0.5; s * 2], kernel, 0).unwrap();
        let r = solve(&mdp, &SolverOptions::default()).unwrap();
        assert!((r.gain - 0.5).abs() < 1e-12);
        assert!(r.values.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(r.span, 0.0);
        assert_eq!(r.policy, StationaryPolicy::constant(s, 0));
    }

    #[test]
    fn riverswim_optimal_policy_swims_right() {
        let r = solve(&make_riverswim(), &SolverOptions::default()).unwrap();
        assert_eq!(r.policy, StationaryPolicy::constant(6, 1));
        assert!(r.span > 0.0 && r.span.is_finite());
        assert!(r.bellman_residual <= 1e-8);
    }

    #[test]
    fn certificate_and_normalization_hold() {
        for seed in 0..50 {
            let mdp = random_mdp(seed, 5, 3, 0.5);
            let r = solve(&mdp, &SolverOptions::default()).unwrap();
            assert!(r.bellman_residual <= 1e-8, "seed {seed}: {}", r.bellman_residual);
            let min = r.values.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(min, 0.0);
            assert_eq!(r.span, r.values.iter().copied().fold(0.0, f64::max));
            assert!((0.0..=1.0).contains(&r.gain));
        }
    }

    #[test]
    fn periodic_optimal_chain_still_converges() {
        // Two states that swap deterministically under every action.
        let mdp = Mdp::new(2, 2, vec![0.0, 0.2, 1.0, 0.9], vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0], 0).unwrap();
        let r = solve(&mdp, &SolverOptions::default()).unwrap();
        assert!((r.gain - 0.45).abs() < 1e-8);
        assert_eq!(r.policy.as_slice(), &[0, 1]);
    }

    #[test]
    fn non_convergence_is_reported() {
        // Two absorbing states with different costs: not weakly communicating.
        let mdp = Mdp::new(2, 2, vec![0.1, 0.2, 0.7, 0.8], vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0], 0).unwrap();
        let err = solve(&mdp, &SolverOptions { tol: 1e-8, max_iters: 10_000 }).unwrap_err();
        assert!(matches!(err, SolveError::NotConverged { iterations: 10_000, .. }));
    }

    #[test]
    fn short_budget_is_finished_by_policy_iteration() {
        let mdp = random_mdp(3, 4, 2, 0.5);
        let full = solve(&mdp, &SolverOptions::default()).unwrap();
        let r = solve(&mdp, &SolverOptions { tol: 1e-8, max_iters: 2 }).unwrap();
        assert_eq!(r.iterations, 2);
        assert!(r.bellman_residual <= 1e-8);
        assert!((r.gain - full.gain).abs() < 1e-8);
        assert_eq!(r.policy, full.policy);
    }

    #[test]
    fn nearly_decomposable_kernel_matches_the_oracle() {
        let (p, q) = (3e-10, 4e-8);
        let kernel = vec![1.0 - p, p, 1.0 - q, q, 2e-2, 1.0 - 2e-2, q, 1.0 - q];
        let mdp = Mdp::new(2, 2, vec![0.67, 0.18, 0.37, 0.02], kernel, 0).unwrap();
        let r = solve(&mdp, &SolverOptions::default()).unwrap();
        let o = solve_bruteforce(&mdp).unwrap();
        assert!((r.gain - o.gain).abs() < 1e-9, "{} vs {}", r.gain, o.gain);
        assert!(r.bellman_residual <= 1e-8);
        assert_eq!(r.policy, o.policy);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mdp = make_riverswim();
        assert!(matches!(solve(&mdp, &SolverOptions { tol: 0.0, ..Default::default() }), Err(SolveError::InvalidTolerance(_))));
        assert!(matches!(solve_approx(&mdp, -0.1, &SolverOptions::default()), Err(SolveError::InvalidEpsilon(_))));
        let bad = Mdp::new_unchecked(2, 2, vec![0.0; 4], vec![0.4; 8], 0).unwrap();
        assert!(matches!(solve(&bad, &SolverOptions::default()), Err(SolveError::InvalidMdp(_))));
    }

    #[test]
    fn shift_of_the_initial_iterate_is_invisible() {
        for seed in 0..20 {
            let mdp = random_mdp(100 + seed, 4, 2, 1.0);
            let opts = SolverOptions::default();
            let base = solve(&mdp, &opts).unwrap();
            let shifted: Vec<f64> = vec![123.456; 4];
            let other = solve_from(&mdp, &opts, Some(&shifted)).unwrap();
            assert!((base.gain - other.gain).abs() < 1e-12);
            assert_eq!(base.policy, other.policy);
            for (x, y) in base.values.iter().zip(&other.values) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn approx_with_zero_epsilon_is_exact_solve() {
        let mdp = make_riverswim();
        let opts = SolverOptions::default();
        assert_eq!(solve_approx(&mdp, 0.0, &opts).unwrap(), solve(&mdp, &opts).unwrap());
    }

    #[test]
    fn approx_residual_is_certified() {
        let mdp = make_riverswim();
        let r = solve_approx(&mdp, 0.1, &SolverOptions::default()).unwrap();
        assert!(r.bellman_residual <= 0.1);
        for k in 1..=50 {
            let eps = EpsilonSchedule::OneOverKPlusOne.epsilon(k);
            assert_eq!(eps, 1.0 / (k as f64 + 1.0));
            let r = solve_approx(&mdp, eps, &SolverOptions::default()).unwrap();
            assert!(r.bellman_residual <= eps);
            assert_eq!(policy_slack(&mdp, &r.policy, &r.values), 0.0);
        }
    }

    #[test]
    fn span_examples() {
        assert_eq!(span_of(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(span_of(&[0.0, 2.5, 1.0]).unwrap(), 2.5);
        assert_eq!(span_of(&[]), Err(SolveError::EmptyValues));
    }

    #[test]
    fn epsilon_schedules() {
        assert_eq!(EpsilonSchedule::None.epsilon(3), 0.0);
        assert_eq!(EpsilonSchedule::Constant(0.2).epsilon(9), 0.2);
        assert_eq!(EpsilonSchedule::OneOverKPlusOne.epsilon(1), 0.5);
    }
}
