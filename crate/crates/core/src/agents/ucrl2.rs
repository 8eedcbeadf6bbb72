//! UCRL2 with extended value iteration, adapted to costs: each episode plans
//! for the most optimistic (lowest-gain) model inside an L1 confidence set.

use alloc::vec;
use alloc::vec::Vec;

use super::{Agent, AgentError, AgentKind, EpisodeInfo, WidthConvention};
use crate::mdp::{Kernel, KnownStructure, StationaryPolicy};
use crate::posterior::VisitCounts;
use crate::rng::SimRng;
use crate::schedule::{doubling_criterion, EpisodeSchedule};
use crate::solver::{SolverOptions, APERIODICITY_WEIGHT};

/// `sqrt(14 S ln(2 A t_k / delta) / max(1, n))`.
pub fn confidence_width(num_states: usize, num_actions: usize, t_k: u64, delta: f64, n: u64) -> f64 {
    let log_term = libm::log(2.0 * num_actions as f64 * t_k as f64 / delta);
    libm::sqrt(14.0 * num_states as f64 * log_term / n.max(1) as f64)
}

/// Empirical kernel and per-pair L1 radii at the start of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceSet {
    pub centers: Kernel,
    /// Radius per pair, indexed `s * A + a`.
    pub beta: Vec<f64>,
    pub delta: f64,
}

impl ConfidenceSet {
    /// Rows never visited are centered on the uniform distribution; their
    /// radius is at least 2, so the set is the whole simplex either way.
    pub fn build(counts: &VisitCounts, t_k: u64, delta: f64) -> Self {
        let s_n = counts.num_states();
        let a_n = counts.num_actions();
        let mut probs = counts.empirical_mean();
        let mut beta = Vec::with_capacity(s_n * a_n);
        for z in 0..s_n * a_n {
            let n = counts.visit_table()[z];
            if n == 0 {
                probs[z * s_n..(z + 1) * s_n].fill(1.0 / s_n as f64);
            }
            beta.push(confidence_width(s_n, a_n, t_k, delta, n));
        }
        let centers = Kernel::from_flat(s_n, a_n, probs).expect("empirical kernel has the right shape");
        Self { centers, beta, delta }
    }
}

/// Minimizes `p . u` over `{p in simplex : |p - center|_1 <= beta}`.
///
/// `order` lists the states by ascending `u`. Mass `beta / 2` is moved onto
/// `order[0]`, taken from the highest-valued states first.
pub fn optimistic_row(center: &[f64], beta: f64, order: &[usize], out: &mut [f64]) {
    out.copy_from_slice(center);
    let best = order[0];
    out[best] = (center[best] + 0.5 * beta).min(1.0);
    let mut excess: f64 = out.iter().sum::<f64>() - 1.0;
    for &s in order.iter().rev() {
        if excess <= 0.0 {
            break;
        }
        if s == best {
            continue;
        }
        let take = out[s].min(excess);
        out[s] -= take;
        excess -= take;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EviResult {
    pub policy: StationaryPolicy,
    /// Relative values with minimum zero.
    pub values: Vec<f64>,
    /// Optimistic gain estimate.
    pub gain: f64,
    pub iterations: u64,
    /// Span of the last iterate change.
    pub gap: f64,
    pub converged: bool,
}

/// Extended value iteration over the confidence set, on the same aperiodic
/// transform as the exact solver. Stops once the span of the iterate change
/// is at most `tol`; if `max_iters` is hit first, the last greedy policy is
/// returned with `converged = false`.
pub fn extended_value_iteration(
    known: &KnownStructure,
    conf: &ConfidenceSet,
    tol: f64,
    max_iters: u64,
    warm: Option<&[f64]>,
) -> EviResult {
    let n = known.num_states;
    let m = known.num_actions;
    let tau = APERIODICITY_WEIGHT;
    let mut w = match warm {
        Some(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => v.iter().map(|x| (x - v[0]) / tau).collect(),
        _ => vec![0.0; n],
    };
    let mut next = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut row = vec![0.0; n];
    let mut actions = vec![0usize; n];
    let mut gap = f64::INFINITY;
    let mut lo = 0.0;
    let mut hi = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        order.sort_by(|&x, &y| w[x].total_cmp(&w[y]).then(x.cmp(&y)));
        lo = f64::INFINITY;
        hi = f64::NEG_INFINITY;
        for s in 0..n {
            let mut best = f64::INFINITY;
            let mut best_a = 0;
            for a in 0..m {
                optimistic_row(conf.centers.row(s, a), conf.beta[s * m + a], &order, &mut row);
                let ev: f64 = row.iter().zip(&w).map(|(p, v)| p * v).sum();
                let q = known.cost(s, a) + tau * ev;
                if q < best {
                    best = q;
                    best_a = a;
                }
            }
            actions[s] = best_a;
            let u = best + (1.0 - tau) * w[s];
            let d = u - w[s];
            lo = lo.min(d);
            hi = hi.max(d);
            next[s] = u;
        }
        gap = hi - lo;
        if gap <= tol {
            converged = true;
            break;
        }
        let r = next[0];
        for (wi, ni) in w.iter_mut().zip(&next) {
            *wi = ni - r;
        }
    }
    let min_w = next.iter().copied().fold(f64::INFINITY, f64::min);
    let values = next.iter().map(|x| tau * (x - min_w)).collect();
    EviResult {
        policy: StationaryPolicy::new(actions, m).expect("greedy actions are in range"),
        values,
        gain: 0.5 * (lo + hi),
        iterations,
        gap,
        converged,
    }
}

/// Builds the confidence set at `t_k` and runs extended value iteration to
/// accuracy `1 / sqrt(t_k)`.
pub fn ucrl2_plan(
    known: &KnownStructure,
    counts: &VisitCounts,
    t_k: u64,
    delta: f64,
    solver: &SolverOptions,
    warm: Option<&[f64]>,
) -> EviResult {
    let conf = ConfidenceSet::build(counts, t_k, delta);
    let tol = (1.0 / libm::sqrt(t_k as f64)).max(solver.tol);
    extended_value_iteration(known, &conf, tol, solver.max_iters, warm)
}

#[derive(Debug, Clone)]
pub struct Ucrl2Agent {
    known: KnownStructure,
    /// Effective `delta` in the width after applying the convention.
    delta: f64,
    counts: VisitCounts,
    snapshot: VisitCounts,
    schedule: EpisodeSchedule,
    policy: StationaryPolicy,
    values: Vec<f64>,
    solver: SolverOptions,
    episodes: Vec<EpisodeInfo>,
}

impl Ucrl2Agent {
    pub fn new(
        known: KnownStructure,
        delta: f64,
        width: WidthConvention,
        horizon: u64,
        solver: SolverOptions,
    ) -> Self {
        let delta = match width {
            WidthConvention::Experiment => delta,
            WidthConvention::Analysis => 1.0 / horizon.max(1) as f64,
        };
        let counts = VisitCounts::new(known.num_states, known.num_actions);
        Self {
            policy: StationaryPolicy::constant(known.num_states, 0),
            snapshot: counts.clone(),
            counts,
            delta,
            schedule: EpisodeSchedule::new(),
            values: Vec::new(),
            solver,
            episodes: Vec::new(),
            known,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn counts(&self) -> &VisitCounts {
        &self.counts
    }

    pub fn policy(&self) -> &StationaryPolicy {
        &self.policy
    }

    fn begin_episode(&mut self, t: u64) {
        let k = self.schedule.num_episodes() + 1;
        let macro_start = k == 1 || self.counts.more_than_doubled_since(&self.snapshot);
        self.schedule.begin(t, macro_start);
        self.snapshot.clone_from(&self.counts);
        let warm = if self.values.is_empty() { None } else { Some(self.values.as_slice()) };
        let plan = ucrl2_plan(&self.known, &self.counts, t, self.delta, &self.solver, warm);
        self.episodes.push(EpisodeInfo {
            start: t,
            gain: plan.gain,
            epsilon: 0.0,
            residual: plan.gap,
            iterations: plan.iterations,
            resamples: 0,
        });
        self.policy = plan.policy;
        self.values = plan.values;
    }
}

impl Agent for Ucrl2Agent {
    fn kind(&self) -> AgentKind {
        AgentKind::Ucrl2
    }

    fn act(&mut self, t: u64, state: usize, _rng: &mut SimRng) -> Result<usize, AgentError> {
        match self.schedule.current_start() {
            None => self.begin_episode(t),
            Some(start) if start < t && doubling_criterion(&self.counts, &self.snapshot) => self.begin_episode(t),
            _ => {}
        }
        Ok(self.policy.action(state))
    }

    fn observe(&mut self, state: usize, action: usize, next_state: usize) -> Result<(), AgentError> {
        self.counts.record(state, action, next_state)?;
        Ok(())
    }

    fn schedule(&self) -> &EpisodeSchedule {
        &self.schedule
    }

    fn episodes(&self) -> &[EpisodeInfo] {
        &self.episodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_riverswim, RIGHT};
    use crate::rng::{stream, Stream};
    use crate::solver::solve;

    #[test]
    fn width_with_no_visits() {
        let b = confidence_width(6, 2, 1, 0.05, 0);
        assert!((b - (84.0 * libm::log(80.0)).sqrt()).abs() < 1e-12);
        assert!((b - 19.18568).abs() < 1e-5);
        assert!(confidence_width(6, 2, 10, 0.05, 4) < b);
    }

    #[test]
    fn optimistic_row_moves_mass_to_cheapest_state() {
        let center = [0.25, 0.25, 0.5];
        let order = [2, 0, 1];
        let mut out = [0.0; 3];
        optimistic_row(&center, 0.0, &order, &mut out);
        assert_eq!(out, center);
        optimistic_row(&center, 0.4, &order, &mut out);
        assert!((out[2] - 0.7).abs() < 1e-12);
        assert!((out[1] - 0.05).abs() < 1e-12);
        assert!((out[0] - 0.25).abs() < 1e-12);
        optimistic_row(&center, 2.0, &order, &mut out);
        assert_eq!(out, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_radius_matches_exact_solver() {
        let truth = make_riverswim();
        let known = truth.known_structure();
        let conf = ConfidenceSet { centers: truth.kernel().clone(), beta: vec![0.0; 12], delta: 0.05 };
        let evi = extended_value_iteration(&known, &conf, 1e-10, 1_000_000, None);
        let exact = solve(&truth, &SolverOptions::default()).unwrap();
        assert!(evi.converged);
        assert!((evi.gain - exact.gain).abs() < 1e-8);
        assert_eq!(evi.policy, exact.policy);
        for (a, b) in evi.values.iter().zip(&exact.values) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn optimism_never_exceeds_the_true_gain() {
        let truth = make_riverswim();
        let known = truth.known_structure();
        let exact = solve(&truth, &SolverOptions::default()).unwrap();
        for r in [0.01, 0.1, 0.5, 1.0] {
            let conf = ConfidenceSet { centers: truth.kernel().clone(), beta: vec![r; 12], delta: 0.05 };
            let evi = extended_value_iteration(&known, &conf, 1e-9, 1_000_000, None);
            assert!(evi.converged);
            assert!(evi.gain <= exact.gain + 1e-8, "radius {r}");
        }
    }

    #[test]
    fn analysis_convention_uses_one_over_horizon() {
        let known = make_riverswim().known_structure();
        let a = Ucrl2Agent::new(known.clone(), 0.05, WidthConvention::Analysis, 1000, SolverOptions::default());
        assert_eq!(a.delta(), 1e-3);
        let b = Ucrl2Agent::new(known, 0.05, WidthConvention::Experiment, 1000, SolverOptions::default());
        assert_eq!(b.delta(), 0.05);
    }

    #[test]
    fn learns_riverswim() {
        let truth = make_riverswim();
        let mut a = Ucrl2Agent::new(truth.known_structure(), 0.05, WidthConvention::Experiment, 20_000, SolverOptions::default());
        let mut rng = stream(0, Stream::Agent);
        let mut env = stream(0, Stream::Environment);
        let mut s = truth.initial_state();
        for t in 1..=20_000 {
            let act = a.act(t, s, &mut rng).unwrap();
            let (next, _) = truth.step(s, act, &mut env).unwrap();
            a.observe(s, act, next).unwrap();
            s = next;
        }
        assert!(a.schedule().num_episodes() > 1);
        assert_eq!(a.policy().action(5), RIGHT);
    }
}
