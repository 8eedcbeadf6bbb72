//! Benchmark environments: the RiverSwim chain and random Dirichlet MDPs.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::mdp::{Mdp, MdpError};
use crate::rng::{dirichlet_into, stream, uniform, Stream};

/// Swim with the current (always succeeds).
pub const LEFT: usize = 0;
/// Swim against the current (may fail).
pub const RIGHT: usize = 1;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("Dirichlet parameter must be positive and finite, got {0}")]
    InvalidDirichletParam(f64),
    #[error("cost table has {found} entries, expected {expected}")]
    CostShape { expected: usize, found: usize },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// RiverSwim transition and cost parameters.
///
/// Action `LEFT` moves one state left deterministically (staying put in the
/// leftmost state). Action `RIGHT` is stochastic, with separate outcome
/// probabilities for the leftmost, interior and rightmost states.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct RiverSwimParams {
    pub num_states: usize,
    /// Interior states under `RIGHT`: (move left, stay, move right).
    pub right_interior: [f64; 3],
    /// Leftmost state under `RIGHT`: (stay, move right).
    pub right_first: [f64; 2],
    /// Rightmost state under `RIGHT`: (move left, stay).
    pub right_last: [f64; 2],
    /// Cost of `LEFT` in the leftmost state.
    pub cost_first_left: f64,
    /// Cost of `RIGHT` in the rightmost state.
    pub cost_last_right: f64,
    /// Cost of every other pair.
    pub cost_other: f64,
}

impl Default for RiverSwimParams {
    fn default() -> Self {
        Self {
            num_states: 6,
            right_interior: [0.1, 0.6, 0.3],
            right_first: [0.7, 0.3],
            right_last: [0.3, 0.7],
            cost_first_left: 0.8,
            cost_last_right: 0.0,
            cost_other: 1.0,
        }
    }
}

/// The default six-state RiverSwim, starting in the leftmost state.
pub fn make_riverswim() -> Mdp {
    make_riverswim_with(&RiverSwimParams::default()).expect("default RiverSwim parameters are valid")
}

pub fn make_riverswim_with(p: &RiverSwimParams) -> Result<Mdp, MdpError> {
    let n = p.num_states;
    let a = 2;
    let mut cost = vec![p.cost_other; n * a];
    let mut kernel = vec![0.0; n * a * n];
    let idx = |s: usize, act: usize, next: usize| (s * a + act) * n + next;
    for s in 0..n {
        kernel[idx(s, LEFT, s.saturating_sub(1))] = 1.0;
        if n == 1 {
            kernel[idx(s, RIGHT, s)] = 1.0;
        } else if s == 0 {
            kernel[idx(s, RIGHT, 0)] += p.right_first[0];
            kernel[idx(s, RIGHT, 1)] += p.right_first[1];
        } else if s == n - 1 {
            kernel[idx(s, RIGHT, s - 1)] += p.right_last[0];
            kernel[idx(s, RIGHT, s)] += p.right_last[1];
        } else {
            kernel[idx(s, RIGHT, s - 1)] += p.right_interior[0];
            kernel[idx(s, RIGHT, s)] += p.right_interior[1];
            kernel[idx(s, RIGHT, s + 1)] += p.right_interior[2];
        }
    }
    cost[LEFT] = p.cost_first_left;
    if n > 0 {
        cost[(n - 1) * a + RIGHT] = p.cost_last_right;
    }
    Mdp::new(n, a, cost, kernel, 0)
}

/// Seed of the stream that generated [`RANDOM_MDP_COST`].
pub const FIXED_COST_SEED: u64 = 20_170_529;

/// Fixed 6x2 cost table shared by every generated random MDP:
/// `fixed_cost_table(6, 2)`, frozen so benchmarks stay comparable.
pub const RANDOM_MDP_COST: [f64; 12] = [
    0.8519188910345661, 0.18158244620003283,
    0.24666810233958558, 0.9609287751671884,
    0.43292184555573665, 0.3686872771322963,
    0.38789887900988673, 0.6070233129672205,
    0.3417589932922407, 0.6466262591335507,
    0.18170413853689904, 0.3569921011340832,
];

/// `S * A` uniform `[0, 1)` draws from the `Truth` stream of
/// [`FIXED_COST_SEED`], row-major `[s * A + a]`.
pub fn fixed_cost_table(num_states: usize, num_actions: usize) -> Vec<f64> {
    let mut rng = stream(FIXED_COST_SEED, Stream::Truth);
    (0..num_states * num_actions).map(|_| uniform(&mut rng)).collect()
}

/// Family of MDPs whose kernel rows are i.i.d. `Dirichlet(dirichlet_param)`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct RandomMdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub dirichlet_param: f64,
    /// `None` selects [`RANDOM_MDP_COST`] for 6x2 and
    /// [`fixed_cost_table`] otherwise.
    pub cost: Option<Vec<f64>>,
    pub initial_state: usize,
    /// Used by [`RandomMdpSpec::generate`].
    pub seed: u64,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        Self { num_states: 6, num_actions: 2, dirichlet_param: 0.1, cost: None, initial_state: 0, seed: 0 }
    }
}

impl RandomMdpSpec {
    pub fn cost_table(&self) -> Result<Vec<f64>, EnvError> {
        let expected = self.num_states * self.num_actions;
        match &self.cost {
            Some(c) if c.len() != expected => Err(EnvError::CostShape { expected, found: c.len() }),
            Some(c) => Ok(c.clone()),
            None if self.num_states == 6 && self.num_actions == 2 => Ok(RANDOM_MDP_COST.to_vec()),
            None => Ok(fixed_cost_table(self.num_states, self.num_actions)),
        }
    }

    /// `make_random_mdp` on the `Truth` stream of `self.seed`.
    pub fn generate(&self) -> Result<Mdp, EnvError> {
        make_random_mdp(self, &mut stream(self.seed, Stream::Truth))
    }
}

/// Draws one MDP from the family (truth kernel from the prior).
pub fn make_random_mdp<R: RngCore + ?Sized>(spec: &RandomMdpSpec, rng: &mut R) -> Result<Mdp, EnvError> {
    if !(spec.dirichlet_param > 0.0 && spec.dirichlet_param.is_finite()) {
        return Err(EnvError::InvalidDirichletParam(spec.dirichlet_param));
    }
    let cost = spec.cost_table()?;
    let n = spec.num_states;
    let alpha = vec![spec.dirichlet_param; n];
    let mut kernel = vec![0.0; n * spec.num_actions * n];
    if n > 0 {
        for row in kernel.chunks_mut(n) {
            dirichlet_into(rng, &alpha, row);
        }
    }
    Ok(Mdp::new(n, spec.num_actions, cost, kernel, spec.initial_state)?)
}
