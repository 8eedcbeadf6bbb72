//! Seeded random streams and the samplers built on top of them.
//!
//! Every sampler here is implemented in-crate so that the numbers a seed
//! produces never change with a dependency upgrade:
//!
//! * uniforms take the top 53 bits of a `ChaCha8` word;
//! * normals use the Marsaglia polar method (the second variate is dropped);
//! * gammas use Marsaglia–Tsang, with the `U^(1/a)` boost for shape `a < 1`
//!   carried out in log space;
//! * Dirichlet rows are normalized gamma draws (log-sum-exp);
//! * categorical draws are inverse-CDF over the row with one uniform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// The random stream type used by environments, agents and the harness.
pub type SimRng = ChaCha8Rng;

/// Independent sub-streams derived from a single run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Drawing the true kernel from the prior.
    Truth,
    /// State transitions of the simulated system.
    Environment,
    /// The agent's own randomness (posterior samples).
    Agent,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Truth => 0,
            Stream::Environment => 1,
            Stream::Agent => 2,
        }
    }
}

/// Builds the `which` sub-stream of `seed`.
pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Uniform draw on `[0, 1)`.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * INV_2_53
}

/// Uniform draw on the open interval `(0, 1)`.
#[inline]
pub fn uniform_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * INV_2_53
}

/// Standard normal draw (Marsaglia polar method).
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x = 2.0 * uniform(rng) - 1.0;
        let y = 2.0 * uniform(rng) - 1.0;
        let r2 = x * x + y * y;
        if r2 > 0.0 && r2 < 1.0 {
            return x * libm::sqrt(-2.0 * libm::log(r2) / r2);
        }
    }
}

/// Marsaglia–Tsang draw for `shape >= 1`.
fn gamma_mt<R: RngCore + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / libm::sqrt(9.0 * d);
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = uniform_open(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || libm::log(u) < 0.5 * x2 + d * (1.0 - v + libm::log(v)) {
            return d * v;
        }
    }
}

/// Natural log of a `Gamma(shape, 1)` draw.
///
/// For `shape < 1` the boost `G(a) = G(a + 1) * U^(1/a)` is applied in log
/// space, so tiny shapes never underflow to `ln 0`.
pub fn ln_gamma_variate<R: RngCore + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let g = gamma_mt(rng, shape + 1.0);
        let u = uniform_open(rng);
        libm::log(g) + libm::log(u) / shape
    } else {
        libm::log(gamma_mt(rng, shape))
    }
}

/// `Gamma(shape, 1)` draw. May underflow to `0.0` for very small shapes.
pub fn gamma<R: RngCore + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    libm::exp(ln_gamma_variate(rng, shape))
}

/// Fills `out` with one `Dirichlet(alpha)` draw.
///
/// `alpha` and `out` must have equal length and every `alpha` must be
/// positive. The result sums to one up to rounding.
pub fn dirichlet_into<R: RngCore + ?Sized>(rng: &mut R, alpha: &[f64], out: &mut [f64]) {
    debug_assert_eq!(alpha.len(), out.len());
    let mut max = f64::NEG_INFINITY;
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = ln_gamma_variate(rng, a);
        if *o > max {
            max = *o;
        }
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = libm::exp(*o - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Inverse-CDF categorical draw over `probs`.
///
/// Zero-probability entries are never returned. If rounding leaves the
/// cumulative sum just short of the uniform, the last positive entry wins.
pub fn categorical<R: RngCore + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u = uniform(rng);
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = i;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream(7, Stream::Environment);
        let mut b = stream(7, Stream::Environment);
        let mut c = stream(7, Stream::Agent);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn uniform_ranges() {
        let mut rng = stream(1, Stream::Agent);
        for _ in 0..10_000 {
            let u = uniform(&mut rng);
            assert!((0.0..1.0).contains(&u));
            let v = uniform_open(&mut rng);
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = stream(2, Stream::Agent);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        // SE of the mean is 1/sqrt(n) ~ 0.0022
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn gamma_moments_across_shapes() {
        // Gamma(a, 1): mean a, variance a.
        for &shape in &[0.1, 0.5, 1.0, 2.5, 10.0] {
            let mut rng = stream(3, Stream::Agent);
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| gamma(&mut rng, shape)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            let se = libm::sqrt(shape / n as f64);
            assert!((mean - shape).abs() < 4.0 * se, "shape {shape} mean {mean}");
            assert!((var - shape).abs() / shape < 0.05, "shape {shape} var {var}");
        }
    }

    #[test]
    fn tiny_shape_stays_finite_in_log_space() {
        let mut rng = stream(4, Stream::Agent);
        for _ in 0..1000 {
            let l = ln_gamma_variate(&mut rng, 1e-9);
            assert!(l.is_finite());
        }
    }

    #[test]
    fn dirichlet_rows_sum_to_one() {
        let mut rng = stream(5, Stream::Agent);
        let alpha = vec![0.1; 6];
        let mut out = vec![0.0; 6];
        for _ in 0..10_000 {
            dirichlet_into(&mut rng, &alpha, &mut out);
            let s: f64 = out.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(out.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn categorical_point_mass_and_zero_entries() {
        let mut rng = stream(6, Stream::Environment);
        let row = [0.0, 0.0, 0.0, 1.0, 0.0];
        for _ in 0..1000 {
            assert_eq!(categorical(&mut rng, &row), 3);
        }
        let row = [0.0, 0.5, 0.0, 0.5, 0.0];
        for _ in 0..1000 {
            let i = categorical(&mut rng, &row);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn categorical_short_row_falls_back_to_last_positive() {
        let mut rng = stream(8, Stream::Environment);
        let row = [0.3, 0.3, 0.0];
        for _ in 0..1000 {
            let i = categorical(&mut rng, &row);
            assert!(i <= 1);
        }
    }
}
