//! Long-run structure of a finite Markov chain: recurrent classes, the
//! Cesàro limit `P* = lim (1/N) sum_n P^n`, gain `P* c` and bias.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{solve_in_place, Matrix, Singular};

#[derive(Debug, Clone)]
pub(crate) struct ChainAnalysis {
    #[cfg_attr(not(test), allow(dead_code))]
    pub limit: Matrix,
    /// Long-run average cost from each starting state.
    pub gain: Vec<f64>,
    /// Bias `h` with `(I - P) h = c - gain` and `P* h = 0`.
    pub bias: Vec<f64>,
}

/// `reach[i * n + j]`: `j` reachable from `i` in zero or more steps.
fn reachability(p: &Matrix) -> Vec<bool> {
    let n = p.n;
    let mut reach = vec![false; n * n];
    for i in 0..n {
        reach[i * n + i] = true;
        for j in 0..n {
            if p.get(i, j) > 0.0 {
                reach[i * n + j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i * n + k] {
                for j in 0..n {
                    if reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Closed communicating classes, each sorted ascending.
fn recurrent_classes(p: &Matrix) -> Vec<Vec<usize>> {
    let n = p.n;
    let reach = reachability(p);
    let recurrent: Vec<bool> = (0..n).map(|i| (0..n).all(|j| !reach[i * n + j] || reach[j * n + i])).collect();
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if recurrent[i] && !assigned[i] {
            let class: Vec<usize> = (0..n).filter(|&j| reach[i * n + j] && reach[j * n + i]).collect();
            for &j in &class {
                assigned[j] = true;
            }
            classes.push(class);
        }
    }
    classes
}

/// Stationary distribution of the chain restricted to a closed class.
fn class_stationary(p: &Matrix, class: &[usize]) -> Result<Vec<f64>, Singular> {
    let m = class.len();
    // (I - P_C)^T pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = Matrix::zeros(m);
    for (r, &i) in class.iter().enumerate() {
        for (c, &j) in class.iter().enumerate() {
            let delta = if r == c { 1.0 } else { 0.0 };
            // transpose: row index is the target state
            a.set(c, r, delta - p.get(i, j));
        }
    }
    for c in 0..m {
        a.set(m - 1, c, 1.0);
    }
    let mut b = vec![0.0; m];
    b[m - 1] = 1.0;
    solve_in_place(&mut a, &mut b, 1)?;
    Ok(b)
}

pub(crate) fn analyze(p: &Matrix, cost: &[f64]) -> Result<ChainAnalysis, Singular> {
    let n = p.n;
    let classes = recurrent_classes(p);
    let mut class_of = vec![usize::MAX; n];
    for (k, class) in classes.iter().enumerate() {
        for &i in class {
            class_of[i] = k;
        }
    }
    let stationary: Vec<Vec<f64>> = classes.iter().map(|c| class_stationary(p, c)).collect::<Result<_, _>>()?;

    // Absorption probabilities from transient states: (I - P_TT) B = P_TR.
    let transient: Vec<usize> = (0..n).filter(|&i| class_of[i] == usize::MAX).collect();
    let nt = transient.len();
    let nc = classes.len();
    let mut absorb = vec![0.0; nt * nc];
    if nt > 0 {
        let mut a = Matrix::zeros(nt);
        for (r, &i) in transient.iter().enumerate() {
            for (c, &j) in transient.iter().enumerate() {
                let delta = if r == c { 1.0 } else { 0.0 };
                a.set(r, c, delta - p.get(i, j));
            }
            for j in 0..n {
                if class_of[j] != usize::MAX {
                    absorb[r * nc + class_of[j]] += p.get(i, j);
                }
            }
        }
        solve_in_place(&mut a, &mut absorb, nc)?;
    }

    let mut limit = Matrix::zeros(n);
    for i in 0..n {
        match class_of[i] {
            usize::MAX => {
                let r = transient.iter().position(|&x| x == i).expect("transient index");
                for (k, class) in classes.iter().enumerate() {
                    let weight = absorb[r * nc + k];
                    for (pos, &j) in class.iter().enumerate() {
                        limit.set(i, j, limit.get(i, j) + weight * stationary[k][pos]);
                    }
                }
            }
            k => {
                for (pos, &j) in classes[k].iter().enumerate() {
                    limit.set(i, j, stationary[k][pos]);
                }
            }
        }
    }

    let gain = limit.mul_vec(cost);
    // (I - P + P*) h = c - gain
    let mut a = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, a.get(i, j) - p.get(i, j) + limit.get(i, j));
        }
    }
    let mut bias: Vec<f64> = cost.iter().zip(&gain).map(|(c, g)| c - g).collect();
    solve_in_place(&mut a, &mut bias, 1)?;
    Ok(ChainAnalysis { limit, gain, bias })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, rows: &[f64]) -> Matrix {
        Matrix { n, data: rows.to_vec() }
    }

    #[test]
    fn two_state_irreducible_chain() {
        // P = [[0.9, 0.1], [0.5, 0.5]]: stationary (5/6, 1/6).
        let p = matrix(2, &[0.9, 0.1, 0.5, 0.5]);
        let r = analyze(&p, &[0.0, 1.0]).unwrap();
        for i in 0..2 {
            assert!((r.limit.get(i, 0) - 5.0 / 6.0).abs() < 1e-12);
            assert!((r.gain[i] - 1.0 / 6.0).abs() < 1e-12);
        }
        // bias solves h = c - g + P h
        for i in 0..2 {
            let ph: f64 = (0..2).map(|j| p.get(i, j) * r.bias[j]).sum();
            assert!((r.bias[i] - ([0.0, 1.0][i] - r.gain[i] + ph)).abs() < 1e-12);
        }
    }

    #[test]
    fn transient_state_splits_between_two_classes() {
        // state 0 absorbing (cost 0), state 2 absorbing (cost 1),
        // state 1 goes to either with prob 1/2.
        let p = matrix(3, &[1.0, 0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 1.0]);
        let r = analyze(&p, &[0.0, 0.3, 1.0]).unwrap();
        assert!((r.gain[0] - 0.0).abs() < 1e-12);
        assert!((r.gain[1] - 0.5).abs() < 1e-12);
        assert!((r.gain[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_chain_uses_cesaro_average() {
        let p = matrix(2, &[0.0, 1.0, 1.0, 0.0]);
        let r = analyze(&p, &[0.0, 1.0]).unwrap();
        assert!((r.gain[0] - 0.5).abs() < 1e-12 && (r.gain[1] - 0.5).abs() < 1e-12);
    }
}
