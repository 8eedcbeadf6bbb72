//! Minimal dense linear algebra for the small systems the oracle solves.

use alloc::vec;
use alloc::vec::Vec;

/// Square row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Singular;

/// Solves `A X = B` in place by Gaussian elimination with partial pivoting.
/// `b` holds `nrhs` right-hand sides row-major (`n x nrhs`); on success it
/// holds the solution.
pub(crate) fn solve_in_place(a: &mut Matrix, b: &mut [f64], nrhs: usize) -> Result<(), Singular> {
    let n = a.n;
    debug_assert_eq!(b.len(), n * nrhs);
    let scale = a.data.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x))).max(1.0);
    for col in 0..n {
        let mut pivot = col;
        let mut best = libm::fabs(a.get(col, col));
        for r in col + 1..n {
            let v = libm::fabs(a.get(r, col));
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best <= 1e-300 * scale {
            return Err(Singular);
        }
        if pivot != col {
            for j in 0..n {
                a.data.swap(col * n + j, pivot * n + j);
            }
            for j in 0..nrhs {
                b.swap(col * nrhs + j, pivot * nrhs + j);
            }
        }
        let diag = a.get(col, col);
        for r in col + 1..n {
            let factor = a.get(r, col) / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let v = a.get(r, j) - factor * a.get(col, j);
                a.set(r, j, v);
            }
            for j in 0..nrhs {
                b[r * nrhs + j] -= factor * b[col * nrhs + j];
            }
        }
    }
    for col in (0..n).rev() {
        let diag = a.get(col, col);
        for j in 0..nrhs {
            let mut acc = b[col * nrhs + j];
            for k in col + 1..n {
                acc -= a.get(col, k) * b[k * nrhs + j];
            }
            b[col * nrhs + j] = acc / diag;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_pivoting_system() {
        // [[0, 2], [3, 1]] x = [4, 5]  ->  x = [1, 2]
        let mut a = Matrix { n: 2, data: vec![0.0, 2.0, 3.0, 1.0] };
        let mut b = vec![4.0, 5.0];
        solve_in_place(&mut a, &mut b, 1).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-14 && (b[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn detects_singular_matrix() {
        let mut a = Matrix { n: 2, data: vec![1.0, 2.0, 2.0, 4.0] };
        let mut b = vec![1.0, 2.0];
        assert_eq!(solve_in_place(&mut a, &mut b, 1), Err(Singular));
    }

    #[test]
    fn multiple_right_hand_sides() {
        let mut a = Matrix { n: 3, data: vec![2.0, 0.0, 0.0, 0.0, 4.0, 0.0, 1.0, 0.0, 1.0] };
        let mut b = vec![2.0, 4.0, 8.0, 12.0, 3.0, 5.0];
        solve_in_place(&mut a, &mut b, 2).unwrap();
        let expect = [1.0, 2.0, 2.0, 3.0, 2.0, 3.0];
        for (x, e) in b.iter().zip(expect) {
            assert!((x - e).abs() < 1e-14);
        }
    }
}
