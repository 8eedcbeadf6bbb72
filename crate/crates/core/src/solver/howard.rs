//! Howard policy iteration for unichain policies, used to finish a solve
//! when value iteration contracts too slowly (nearly decomposable kernels).

use alloc::vec;
use alloc::vec::Vec;

use super::q_value;
use crate::linalg::{solve_in_place, Matrix};
use crate::mdp::Mdp;

/// Gain and relative values (`v[0] = 0`) of `actions`, assuming the induced
/// chain has a single recurrent class. `None` if the system is singular.
///
/// Diagonal entries `1 - p(s|s)` are formed as the off-diagonal row sum so
/// that tiny exit probabilities keep their relative precision.
fn evaluate(mdp: &Mdp, actions: &[usize]) -> Option<(f64, Vec<f64>)> {
    let n = mdp.num_states();
    let kernel = mdp.kernel();
    // unknowns: gain in column 0, v(1..n) in columns 1..n
    let mut a = Matrix::zeros(n);
    let mut b = vec![0.0; n];
    for s in 0..n {
        let row = kernel.row(s, actions[s]);
        a.set(s, 0, 1.0);
        for j in 1..n {
            let entry = if j == s { row.iter().enumerate().filter(|&(i, _)| i != s).map(|(_, p)| p).sum() } else { -row[j] };
            a.set(s, j, entry);
        }
        b[s] = mdp.cost(s, actions[s]);
    }
    solve_in_place(&mut a, &mut b, 1).ok()?;
    let gain = b[0];
    let mut values = b;
    values[0] = 0.0;
    values.iter().all(|x| x.is_finite()).then_some((gain, values))
}

/// Policy iteration from `start`. Returns the gain and relative values of
/// the last policy; the caller certifies them.
pub(super) fn policy_iteration(mdp: &Mdp, start: Vec<usize>, max_rounds: usize) -> Option<(f64, Vec<f64>)> {
    let n = mdp.num_states();
    let mut actions = start;
    let (mut gain, mut values) = evaluate(mdp, &actions)?;
    for _ in 0..max_rounds {
        let scale = values.iter().fold(1.0f64, |m, v| m.max(libm::fabs(*v)));
        let margin = 1e-13 * scale;
        let mut changed = false;
        for s in 0..n {
            let current = q_value(mdp, &values, s, actions[s]);
            let mut best = (actions[s], current - margin);
            for a in 0..mdp.num_actions() {
                let q = q_value(mdp, &values, s, a);
                if q < best.1 {
                    best = (a, q);
                }
            }
            if best.0 != actions[s] {
                actions[s] = best.0;
                changed = true;
            }
        }
        if !changed {
            return Some((gain, values));
        }
        (gain, values) = evaluate(mdp, &actions)?;
    }
    None
}
