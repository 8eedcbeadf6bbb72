//! Exhaustive oracle: evaluate every deterministic stationary policy
//! through its induced chain and keep the best.

use alloc::vec::Vec;

use super::chain::analyze;
use super::{bellman_residual, SolveError, SolveResult};
use crate::linalg::Matrix;
use crate::mdp::{Mdp, StationaryPolicy};

/// Largest `A^S` the oracle will enumerate.
pub const BRUTEFORCE_POLICY_LIMIT: f64 = 1e6;

/// Finds the optimal policy by enumerating all `A^S` stationary policies.
///
/// Each policy is scored by its worst long-run average cost over starting
/// states, computed from the Cesàro limit of the induced chain; ties go to
/// the earlier policy in enumeration order (state 0 is the least significant
/// digit). The reported gain is the winner's average cost from the initial
/// state and the values are its bias, shifted to a zero minimum.
pub fn solve_bruteforce(mdp: &Mdp) -> Result<SolveResult, SolveError> {
    let violations = mdp.validate_tables();
    if !violations.is_empty() {
        return Err(SolveError::InvalidMdp(violations));
    }
    let n = mdp.num_states();
    let m = mdp.num_actions();
    let count = libm::pow(m as f64, n as f64);
    if count > BRUTEFORCE_POLICY_LIMIT {
        return Err(SolveError::TooManyPolicies { count, limit: BRUTEFORCE_POLICY_LIMIT });
    }
    let count = count as u64;

    let mut best: Option<(f64, Vec<usize>, Vec<f64>, Vec<f64>)> = None;
    let mut actions = alloc::vec![0usize; n];
    for index in 0..count {
        let mut rest = index;
        for a in actions.iter_mut() {
            *a = (rest % m as u64) as usize;
            rest /= m as u64;
        }
        let mut p = Matrix::zeros(n);
        let mut cost = Vec::with_capacity(n);
        for (s, &a) in actions.iter().enumerate() {
            for (j, &prob) in mdp.kernel().row(s, a).iter().enumerate() {
                p.set(s, j, prob);
            }
            cost.push(mdp.cost(s, a));
        }
        let chain = analyze(&p, &cost).map_err(|_| SolveError::SingularChain)?;
        let worst = chain.gain.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let better = match &best {
            None => true,
            Some((key, ..)) => worst < key - 1e-12,
        };
        if better {
            best = Some((worst, actions.clone(), chain.gain, chain.bias));
        }
    }

    let (_, actions, gains, bias) = best.expect("at least one policy");
    let gain = gains[mdp.initial_state()];
    let min = bias.iter().copied().fold(f64::INFINITY, f64::min);
    let values: Vec<f64> = bias.iter().map(|h| h - min).collect();
    let span = values.iter().copied().fold(0.0, f64::max);
    let bellman_residual = bellman_residual(mdp, gain, &values);
    Ok(SolveResult {
        gain,
        values,
        policy: StationaryPolicy::new(actions, m).expect("enumerated actions are in range"),
        span,
        iterations: count,
        bellman_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_action_returns_its_chain_cost() {
        // P = [[0.9, 0.1], [0.5, 0.5]], c = (0, 1): gain 1/6.
        let mdp = Mdp::new_unchecked(2, 1, vec![0.0, 1.0], vec![0.9, 0.1, 0.5, 0.5], 0).unwrap();
        let r = solve_bruteforce(&mdp).unwrap();
        assert_eq!(r.policy.as_slice(), &[0, 0]);
        assert!((r.gain - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn steers_to_the_free_absorbing_state() {
        // action 0 moves to state 0, action 1 moves to state 1; cost is 0 on
        // state 0 and 1 on state 1 regardless of action.
        let kernel = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let mdp = Mdp::new(2, 2, vec![0.0, 0.0, 1.0, 1.0], kernel, 1).unwrap();
        let r = solve_bruteforce(&mdp).unwrap();
        assert_eq!(r.gain, 0.0);
        assert_eq!(r.policy.as_slice(), &[0, 0]);
        assert!(r.bellman_residual < 1e-12);
    }

    #[test]
    fn guard_rejects_huge_enumerations() {
        let s = 21;
        let mdp = Mdp::new_unchecked(s, 2, vec![0.0; s * 2], vec![1.0 / s as f64; s * 2 * s], 0).unwrap();
        assert!(matches!(solve_bruteforce(&mdp), Err(SolveError::TooManyPolicies { .. })));
    }
}
