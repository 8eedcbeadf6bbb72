//! Tabular MDP model: costs, transition kernel, validation and simulation.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_core::RngCore;

use crate::rng;

/// Maximum allowed deviation of a kernel row sum from one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Dense transition kernel `theta(s' | s, a)` stored row-major as
/// `[(s * A + a) * S + s']`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Kernel {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Kernel {
    /// Wraps a flat probability table. Only the table length is checked here;
    /// stochasticity is checked by [`Mdp::validate`].
    pub fn from_flat(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        let expected = num_states * num_actions * num_states;
        if probs.len() != expected {
            return Err(MdpError::Shape { what: "kernel", expected, found: probs.len() });
        }
        Ok(Self { num_states, num_actions, probs })
    }

    /// Kernel whose every row is uniform over the states.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_states as f64;
        Self { num_states, num_actions, probs: vec![p; num_states * num_actions * num_states] }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &mut self.probs[start..start + self.num_states]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    /// Largest L1 distance between corresponding rows of two kernels.
    pub fn max_row_l1(&self, other: &Kernel) -> f64 {
        assert_eq!(self.probs.len(), other.probs.len());
        self.probs
            .chunks(self.num_states)
            .zip(other.probs.chunks(self.num_states))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| libm::fabs(p - q)).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// A single invariant violation reported by [`Mdp::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    TooFewStates { found: usize },
    TooFewActions { found: usize },
    InitialStateOutOfRange { initial_state: usize, num_states: usize },
    CostOutOfRange { state: usize, action: usize, value: f64 },
    NegativeProbability { state: usize, action: usize, next_state: usize, value: f64 },
    /// `deficit = 1 - sum`; negative when the row sums to more than one.
    RowSum { state: usize, action: usize, sum: f64, deficit: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::TooFewStates { found } => write!(f, "need at least 2 states, found {found}"),
            Violation::TooFewActions { found } => write!(f, "need at least 2 actions, found {found}"),
            Violation::InitialStateOutOfRange { initial_state, num_states } => {
                write!(f, "initial state {initial_state} out of range for {num_states} states")
            }
            Violation::CostOutOfRange { state, action, value } => {
                write!(f, "cost out of [0,1] at (s={state}, a={action}): {value}")
            }
            Violation::NegativeProbability { state, action, next_state, value } => {
                write!(f, "negative probability at (s={state}, a={action}, s'={next_state}): {value}")
            }
            Violation::RowSum { state, action, sum, deficit } => {
                write!(f, "kernel row (s={state}, a={action}) sums to {sum} (deficit {deficit})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MdpError {
    #[error("{what} has {found} entries, expected {expected}")]
    Shape { what: &'static str, expected: usize, found: usize },
    #[error("invalid MDP: {}", summarize(.0))]
    Invalid(Vec<Violation>),
    #[error("state {state} out of range for {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("action {action} out of range for {num_actions} actions")]
    ActionOutOfRange { action: usize, num_actions: usize },
    #[error("rollout horizon must be at least 1")]
    EmptyHorizon,
}

fn summarize(violations: &[Violation]) -> alloc::string::String {
    use alloc::string::ToString;
    let mut out = alloc::string::String::new();
    for (i, v) in violations.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&v.to_string());
    }
    out
}

/// What an agent is allowed to know about the system: the sizes and the
/// cost table, but not the kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct KnownStructure {
    pub num_states: usize,
    pub num_actions: usize,
    /// Row-major `[s * A + a]`.
    pub cost: Vec<f64>,
    pub initial_state: usize,
}

impl KnownStructure {
    #[inline]
    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.num_actions + a]
    }

    /// Pairs the known structure with a kernel. Shapes must agree.
    pub fn with_kernel(&self, kernel: Kernel) -> Mdp {
        assert_eq!(kernel.num_states(), self.num_states);
        assert_eq!(kernel.num_actions(), self.num_actions);
        Mdp {
            num_states: self.num_states,
            num_actions: self.num_actions,
            cost: self.cost.clone(),
            kernel,
            initial_state: self.initial_state,
        }
    }
}

/// Finite MDP `(S, A, c, theta, s_1)` with costs in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    cost: Vec<f64>,
    kernel: Kernel,
    initial_state: usize,
}

impl Mdp {
    /// Builds and validates an MDP. `cost` is row-major `[s * A + a]`,
    /// `kernel` is `[(s * A + a) * S + s']`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        cost: Vec<f64>,
        kernel: Vec<f64>,
        initial_state: usize,
    ) -> Result<Self, MdpError> {
        let mdp = Self::new_unchecked(num_states, num_actions, cost, kernel, initial_state)?;
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(MdpError::Invalid(violations))
        }
    }

    /// Shape-checked construction without value validation.
    pub fn new_unchecked(
        num_states: usize,
        num_actions: usize,
        cost: Vec<f64>,
        kernel: Vec<f64>,
        initial_state: usize,
    ) -> Result<Self, MdpError> {
        if cost.len() != num_states * num_actions {
            return Err(MdpError::Shape { what: "cost", expected: num_states * num_actions, found: cost.len() });
        }
        let kernel = Kernel::from_flat(num_states, num_actions, kernel)?;
        Ok(Self { num_states, num_actions, cost, kernel, initial_state })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.num_actions + a]
    }

    pub fn cost_table(&self) -> &[f64] {
        &self.cost
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Replaces the kernel, keeping costs and the initial state.
    pub fn with_kernel(&self, kernel: Kernel) -> Mdp {
        self.known_structure().with_kernel(kernel)
    }

    pub fn with_initial_state(mut self, initial_state: usize) -> Mdp {
        self.initial_state = initial_state;
        self
    }

    pub fn known_structure(&self) -> KnownStructure {
        KnownStructure {
            num_states: self.num_states,
            num_actions: self.num_actions,
            cost: self.cost.clone(),
            initial_state: self.initial_state,
        }
    }

    /// Every invariant violation; empty iff the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.num_states < 2 {
            out.push(Violation::TooFewStates { found: self.num_states });
        }
        if self.num_actions < 2 {
            out.push(Violation::TooFewActions { found: self.num_actions });
        }
        self.validate_tables_into(&mut out);
        out
    }

    /// Checks costs, kernel rows and the initial state, but not the
    /// `S >= 2, A >= 2` standing assumption. This is what the solvers need.
    pub fn validate_tables(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        self.validate_tables_into(&mut out);
        out
    }

    fn validate_tables_into(&self, out: &mut Vec<Violation>) {
        if self.initial_state >= self.num_states {
            out.push(Violation::InitialStateOutOfRange {
                initial_state: self.initial_state,
                num_states: self.num_states,
            });
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let c = self.cost(s, a);
                // NaN fails both comparisons and is reported too.
                if !(0.0..=1.0).contains(&c) {
                    out.push(Violation::CostOutOfRange { state: s, action: a, value: c });
                }
                let row = self.kernel.row(s, a);
                let mut sum = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    if !(p >= 0.0) {
                        out.push(Violation::NegativeProbability { state: s, action: a, next_state: next, value: p });
                    }
                    sum += p;
                }
                if !(libm::fabs(sum - 1.0) <= ROW_SUM_TOLERANCE) {
                    out.push(Violation::RowSum { state: s, action: a, sum, deficit: 1.0 - sum });
                }
            }
        }
    }

    fn check_indices(&self, s: usize, a: usize) -> Result<(), MdpError> {
        if s >= self.num_states {
            return Err(MdpError::StateOutOfRange { state: s, num_states: self.num_states });
        }
        if a >= self.num_actions {
            return Err(MdpError::ActionOutOfRange { action: a, num_actions: self.num_actions });
        }
        Ok(())
    }

    /// Samples `s' ~ theta(. | s, a)` and returns it with the stage cost.
    #[inline]
    pub fn step<R: RngCore + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<(usize, f64), MdpError> {
        self.check_indices(s, a)?;
        let next = rng::categorical(rng, self.kernel.row(s, a));
        Ok((next, self.cost(s, a)))
    }

    /// Follows `policy` for `horizon` steps from the initial state.
    pub fn rollout<R: RngCore + ?Sized>(
        &self,
        policy: &StationaryPolicy,
        horizon: usize,
        rng: &mut R,
    ) -> Result<Trajectory, MdpError> {
        if horizon == 0 {
            return Err(MdpError::EmptyHorizon);
        }
        if policy.num_states() != self.num_states {
            return Err(MdpError::Shape { what: "policy", expected: self.num_states, found: policy.num_states() });
        }
        let mut states = Vec::with_capacity(horizon + 1);
        let mut actions = Vec::with_capacity(horizon);
        let mut costs = Vec::with_capacity(horizon);
        let mut s = self.initial_state;
        states.push(s);
        for _ in 0..horizon {
            let a = policy.action(s);
            let (next, c) = self.step(s, a, rng)?;
            actions.push(a);
            costs.push(c);
            states.push(next);
            s = next;
        }
        Ok(Trajectory { states, actions, costs })
    }
}

/// Deterministic stationary policy `pi: S -> A`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct StationaryPolicy(Vec<usize>);

impl StationaryPolicy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self, MdpError> {
        if let Some(&action) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(MdpError::ActionOutOfRange { action, num_actions });
        }
        Ok(Self(actions))
    }

    /// The policy taking `action` everywhere.
    pub fn constant(num_states: usize, action: usize) -> Self {
        Self(vec![action; num_states])
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn num_states(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Simulated history: `T + 1` states, `T` actions, `T` costs.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub costs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use alloc::string::ToString;

    fn two_state() -> Mdp {
        Mdp::new(2, 2, vec![0.0, 0.5, 1.0, 0.25], vec![1.0, 0.0, 0.5, 0.5, 0.2, 0.8, 0.0, 1.0], 0).unwrap()
    }

    #[test]
    fn valid_model_has_no_violations() {
        assert!(two_state().validate().is_empty());
    }

    #[test]
    fn short_row_is_reported_with_its_deficit() {
        let err = Mdp::new(2, 2, vec![0.0; 4], vec![1.0, 0.0, 0.5, 0.48, 0.2, 0.8, 0.0, 1.0], 0).unwrap_err();
        let MdpError::Invalid(v) = err else { panic!("expected violations") };
        assert_eq!(v.len(), 1);
        match v[0] {
            Violation::RowSum { state, action, deficit, .. } => {
                assert_eq!((state, action), (0, 1));
                assert!((deficit - 0.02).abs() < 1e-12);
            }
            ref other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cost_above_one_is_reported() {
        let mdp = Mdp::new_unchecked(2, 2, vec![0.0, 1.5, 0.0, 0.0], two_state().kernel().as_flat().to_vec(), 0)
            .unwrap();
        let v = mdp.validate();
        assert_eq!(v, vec![Violation::CostOutOfRange { state: 0, action: 1, value: 1.5 }]);
        assert!(v[0].to_string().contains("cost out of [0,1]"));
    }

    #[test]
    fn degenerate_sizes_are_reported_but_tables_may_still_be_fine() {
        let mdp = Mdp::new_unchecked(2, 1, vec![0.0, 1.0], vec![0.0, 1.0, 1.0, 0.0], 0).unwrap();
        assert_eq!(mdp.validate(), vec![Violation::TooFewActions { found: 1 }]);
        assert!(mdp.validate_tables().is_empty());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(matches!(Mdp::new(2, 2, vec![0.0; 3], vec![0.5; 8], 0), Err(MdpError::Shape { what: "cost", .. })));
    }

    #[test]
    fn point_mass_row_is_deterministic() {
        let mut kernel = vec![0.0; 5 * 2 * 5];
        for s in 0..5 {
            for a in 0..2 {
                kernel[(s * 2 + a) * 5 + 3] = 1.0;
            }
        }
        let mdp = Mdp::new(5, 2, vec![0.5; 10], kernel, 0).unwrap();
        for seed in 0..50 {
            let mut rng = stream(seed, Stream::Environment);
            assert_eq!(mdp.step(1, 1, &mut rng).unwrap(), (3, 0.5));
        }
    }

    #[test]
    fn step_rejects_bad_indices() {
        let mdp = two_state();
        let mut rng = stream(0, Stream::Environment);
        assert!(matches!(mdp.step(2, 0, &mut rng), Err(MdpError::StateOutOfRange { .. })));
        assert!(matches!(mdp.step(0, 2, &mut rng), Err(MdpError::ActionOutOfRange { .. })));
    }

    #[test]
    fn rollout_length_contract() {
        let mdp = two_state();
        let mut rng = stream(0, Stream::Environment);
        let tr = mdp.rollout(&StationaryPolicy::constant(2, 0), 1, &mut rng).unwrap();
        assert_eq!((tr.states.len(), tr.actions.len(), tr.costs.len()), (2, 1, 1));
        assert!(matches!(mdp.rollout(&StationaryPolicy::constant(2, 0), 0, &mut rng), Err(MdpError::EmptyHorizon)));
    }

    #[test]
    fn self_loops_never_leave_the_initial_state() {
        let s = 4;
        let mut kernel = vec![0.0; s * 2 * s];
        for st in 0..s {
            for a in 0..2 {
                kernel[(st * 2 + a) * s + st] = 1.0;
            }
        }
        let mdp = Mdp::new(s, 2, vec![0.3; s * 2], kernel, 2).unwrap();
        let mut rng = stream(9, Stream::Environment);
        let tr = mdp.rollout(&StationaryPolicy::new(vec![0, 1, 1, 0], 2).unwrap(), 100, &mut rng).unwrap();
        assert!(tr.states.iter().all(|&x| x == 2));
    }

    #[test]
    fn trajectory_costs_match_the_table() {
        let mdp = two_state();
        let mut rng = stream(3, Stream::Environment);
        let tr = mdp.rollout(&StationaryPolicy::new(vec![1, 0], 2).unwrap(), 500, &mut rng).unwrap();
        for t in 0..tr.len() {
            assert_eq!(tr.costs[t], mdp.cost(tr.states[t], tr.actions[t]));
        }
    }

    #[test]
    fn policy_rejects_out_of_range_actions() {
        assert!(StationaryPolicy::new(vec![0, 2], 2).is_err());
    }
}
