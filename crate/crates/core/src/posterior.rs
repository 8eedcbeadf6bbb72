//! Independent Dirichlet posteriors over the kernel rows, visit counts, and
//! posterior sampling.
//!
//! With a `Dirichlet(alpha)` prior on each row `theta(. | s, a)`, observing
//! the transition `(s, a) -> s'` multiplies the density by
//! `theta(s' | s, a)` and renormalizes, which is exactly
//! `alpha[s, a, s'] += 1`.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::mdp::Kernel;
use crate::rng::dirichlet_into;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PosteriorError {
    #[error("prior pseudo-count at index {index} must be positive and finite, got {value}")]
    NonPositivePrior { index: usize, value: f64 },
    #[error("table has {found} entries, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("index ({state}, {action}, {next_state}) out of range")]
    OutOfRange { state: usize, action: usize, next_state: usize },
    #[error("snapshot is inconsistent: {0}")]
    InconsistentSnapshot(&'static str),
}

/// Visit counts `N_t(s, a)` and transition counts `N_t(s, a, s')`.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VisitCounts {
    num_states: usize,
    num_actions: usize,
    n: Vec<u64>,
    n3: Vec<u64>,
}

impl VisitCounts {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            n: vec![0; num_states * num_actions],
            n3: vec![0; num_states * num_actions * num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.n[s * self.num_actions + a]
    }

    #[inline]
    pub fn transitions(&self, s: usize, a: usize, next: usize) -> u64 {
        self.n3[(s * self.num_actions + a) * self.num_states + next]
    }

    /// Flat `[s * A + a]` visit table.
    pub fn visit_table(&self) -> &[u64] {
        &self.n
    }

    pub fn transition_table(&self) -> &[u64] {
        &self.n3
    }

    pub fn total(&self) -> u64 {
        self.n.iter().sum()
    }

    fn check(&self, s: usize, a: usize, next: usize) -> Result<(), PosteriorError> {
        if s >= self.num_states || a >= self.num_actions || next >= self.num_states {
            return Err(PosteriorError::OutOfRange { state: s, action: a, next_state: next });
        }
        Ok(())
    }

    pub fn record(&mut self, s: usize, a: usize, next: usize) -> Result<(), PosteriorError> {
        self.check(s, a, next)?;
        self.n[s * self.num_actions + a] += 1;
        self.n3[(s * self.num_actions + a) * self.num_states + next] += 1;
        Ok(())
    }

    /// `N(s,a,s') / max(1, N(s,a))`; rows never visited are all zero.
    pub fn empirical_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n3.len()];
        for z in 0..self.n.len() {
            let denom = self.n[z].max(1) as f64;
            for next in 0..self.num_states {
                out[z * self.num_states + next] = self.n3[z * self.num_states + next] as f64 / denom;
            }
        }
        out
    }

    /// True iff some pair has strictly more than twice the visits it had in
    /// `snapshot`.
    pub fn more_than_doubled_since(&self, snapshot: &VisitCounts) -> bool {
        self.n.iter().zip(&snapshot.n).any(|(&now, &then)| now > 2 * then)
    }
}

/// Product of independent Dirichlet posteriors, one per `(s, a)` row.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPosterior {
    num_states: usize,
    num_actions: usize,
    prior: Vec<f64>,
    alpha: Vec<f64>,
}

impl TabularPosterior {
    /// Posterior equal to the given prior table `[(s * A + a) * S + s']`.
    pub fn new(num_states: usize, num_actions: usize, prior: Vec<f64>) -> Result<Self, PosteriorError> {
        let expected = num_states * num_actions * num_states;
        if prior.len() != expected {
            return Err(PosteriorError::Shape { expected, found: prior.len() });
        }
        if let Some((index, &value)) = prior.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
            return Err(PosteriorError::NonPositivePrior { index, value });
        }
        Ok(Self { num_states, num_actions, alpha: prior.clone(), prior })
    }

    /// Every pseudo-count equal to `value`.
    pub fn symmetric(num_states: usize, num_actions: usize, value: f64) -> Result<Self, PosteriorError> {
        Self::new(num_states, num_actions, vec![value; num_states * num_actions * num_states])
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn alpha_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.alpha[start..start + self.num_states]
    }

    /// Bayes update for the single observed transition `(s, a) -> next`.
    pub fn observe(&mut self, s: usize, a: usize, next: usize) -> Result<(), PosteriorError> {
        if s >= self.num_states || a >= self.num_actions || next >= self.num_states {
            return Err(PosteriorError::OutOfRange { state: s, action: a, next_state: next });
        }
        self.alpha[(s * self.num_actions + a) * self.num_states + next] += 1.0;
        Ok(())
    }

    /// Draws a kernel with each row independently `Dirichlet(alpha[s, a, .])`.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Kernel {
        let mut kernel = Kernel::uniform(self.num_states, self.num_actions);
        self.sample_into(rng, &mut kernel);
        kernel
    }

    /// [`Self::sample`] writing into an existing kernel of matching shape.
    pub fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, kernel: &mut Kernel) {
        assert_eq!(kernel.num_states(), self.num_states);
        assert_eq!(kernel.num_actions(), self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                dirichlet_into(rng, self.alpha_row(s, a), kernel.row_mut(s, a));
            }
        }
    }

    /// Posterior mean `alpha[s, a, .] / sum alpha[s, a, .]`.
    pub fn mean(&self) -> Kernel {
        let mut probs = self.alpha.clone();
        for row in probs.chunks_mut(self.num_states) {
            let total: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= total;
            }
        }
        Kernel::from_flat(self.num_states, self.num_actions, probs).expect("shape preserved")
    }

    pub fn snapshot(&self, counts: &VisitCounts) -> PosteriorSnapshot {
        PosteriorSnapshot {
            num_states: self.num_states,
            num_actions: self.num_actions,
            prior_alpha: self.prior.clone(),
            alpha: self.alpha.clone(),
            counts: counts.clone(),
        }
    }
}

/// Update both the posterior and the visit counts for one transition.
pub fn update(
    posterior: &mut TabularPosterior,
    counts: &mut VisitCounts,
    s: usize,
    a: usize,
    next: usize,
) -> Result<(), PosteriorError> {
    counts.record(s, a, next)?;
    posterior.observe(s, a, next)
}

/// Checkpoint of a posterior and its counts.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct PosteriorSnapshot {
    pub num_states: usize,
    pub num_actions: usize,
    pub prior_alpha: Vec<f64>,
    pub alpha: Vec<f64>,
    pub counts: VisitCounts,
}

impl PosteriorSnapshot {
    /// Rebuilds the posterior, checking `alpha = prior + N(s, a, s')`.
    pub fn restore(self) -> Result<(TabularPosterior, VisitCounts), PosteriorError> {
        let mut posterior = TabularPosterior::new(self.num_states, self.num_actions, self.prior_alpha)?;
        let c = &self.counts;
        if c.num_states != self.num_states
            || c.num_actions != self.num_actions
            || c.n.len() != self.num_states * self.num_actions
            || c.n3.len() != posterior.alpha.len()
        {
            return Err(PosteriorError::InconsistentSnapshot("count table shape"));
        }
        if self.alpha.len() != posterior.alpha.len() {
            return Err(PosteriorError::Shape { expected: posterior.alpha.len(), found: self.alpha.len() });
        }
        for z in 0..c.n.len() {
            let row = &c.n3[z * self.num_states..(z + 1) * self.num_states];
            if row.iter().sum::<u64>() != c.n[z] {
                return Err(PosteriorError::InconsistentSnapshot("visit counts disagree with transition counts"));
            }
        }
        for (i, (&a, &p)) in self.alpha.iter().zip(&posterior.prior).enumerate() {
            if a != p + c.n3[i] as f64 {
                return Err(PosteriorError::InconsistentSnapshot("alpha differs from prior plus counts"));
            }
        }
        posterior.alpha = self.alpha;
        Ok((posterior, self.counts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn single_observation_bumps_one_entry() {
        let mut post = TabularPosterior::symmetric(3, 2, 0.1).unwrap();
        let mut counts = VisitCounts::new(3, 2);
        update(&mut post, &mut counts, 0, 1, 2).unwrap();
        for (i, &a) in post.alpha().iter().enumerate() {
            // flat index of (s=0, a=1, s'=2)
            let expect = if i == 5 { 1.1 } else { 0.1 };
            assert_eq!(a, expect);
        }
        assert_eq!(counts.visits(0, 1), 1);
        assert_eq!(counts.transitions(0, 1, 2), 1);
        assert_eq!(counts.total(), 1);
    }

    #[test]
    fn repeated_observations_add_up() {
        let mut post = TabularPosterior::symmetric(3, 2, 0.1).unwrap();
        let mut counts = VisitCounts::new(3, 2);
        update(&mut post, &mut counts, 2, 0, 1).unwrap();
        update(&mut post, &mut counts, 2, 0, 1).unwrap();
        assert_eq!(post.alpha_row(2, 0)[1], 0.1 + 2.0);
    }

    #[test]
    fn posterior_mean_matches_closed_form() {
        // S = 6, prior 0.1: 3 of 5 visits land on s' = 4.
        let mut post = TabularPosterior::symmetric(6, 2, 0.1).unwrap();
        let mut counts = VisitCounts::new(6, 2);
        for next in [4, 4, 1, 4, 0] {
            update(&mut post, &mut counts, 3, 1, next).unwrap();
        }
        let mean = post.mean();
        assert!((mean.row(3, 1)[4] - (0.1 + 3.0) / (0.6 + 5.0)).abs() < 1e-15);
    }

    #[test]
    fn mean_of_two_state_row() {
        let mut post = TabularPosterior::symmetric(2, 2, 0.1).unwrap();
        let mut counts = VisitCounts::new(2, 2);
        for _ in 0..5 {
            update(&mut post, &mut counts, 0, 0, 0).unwrap();
        }
        let mean = post.mean();
        assert!((mean.row(0, 0)[0] - 5.1 / 5.2).abs() < 1e-15);
        assert!((mean.row(0, 0)[1] - 0.1 / 5.2).abs() < 1e-15);
    }

    #[test]
    fn fresh_uniform_prior_has_uniform_mean() {
        let mean = TabularPosterior::symmetric(4, 2, 0.1).unwrap().mean();
        assert!(mean.as_flat().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn out_of_range_is_rejected() {
        let mut post = TabularPosterior::symmetric(3, 2, 0.1).unwrap();
        let mut counts = VisitCounts::new(3, 2);
        assert!(update(&mut post, &mut counts, 0, 2, 0).is_err());
        assert!(update(&mut post, &mut counts, 0, 0, 3).is_err());
        assert_eq!(counts.total(), 0);
    }

    #[test]
    fn prior_must_be_positive() {
        assert!(TabularPosterior::symmetric(2, 2, 0.0).is_err());
        assert!(TabularPosterior::new(2, 2, vec![0.1; 7]).is_err());
    }

    #[test]
    fn concentrated_row_samples_near_point_mass() {
        let s = 4;
        let mut prior = vec![1e-9; s * 2 * s];
        for z in 0..s * 2 {
            prior[z * s] = 1e9;
        }
        let post = TabularPosterior::new(s, 2, prior).unwrap();
        let mut rng = stream(1, Stream::Agent);
        let k = post.sample(&mut rng);
        for z in 0..s * 2 {
            assert!(k.as_flat()[z * s] > 0.999);
        }
    }

    #[test]
    fn empirical_mean_guards_unvisited_rows() {
        let mut counts = VisitCounts::new(2, 2);
        counts.record(1, 0, 1).unwrap();
        counts.record(1, 0, 0).unwrap();
        let m = counts.empirical_mean();
        assert_eq!(&m[0..2], &[0.0, 0.0]);
        assert_eq!(&m[4..6], &[0.5, 0.5]);
    }

    #[test]
    fn doubling_predicate() {
        let mut counts = VisitCounts::new(2, 2);
        let snap = counts.clone();
        assert!(!counts.more_than_doubled_since(&snap));
        counts.record(0, 0, 0).unwrap();
        assert!(counts.more_than_doubled_since(&snap));
        let snap = counts.clone();
        counts.record(0, 0, 0).unwrap();
        assert!(!counts.more_than_doubled_since(&snap));
        counts.record(0, 0, 1).unwrap();
        assert!(counts.more_than_doubled_since(&snap));
    }

    #[test]
    fn snapshot_restores_and_detects_tampering() {
        let mut post = TabularPosterior::symmetric(3, 2, 0.1).unwrap();
        let mut counts = VisitCounts::new(3, 2);
        update(&mut post, &mut counts, 1, 1, 0).unwrap();
        let snap = post.snapshot(&counts);
        let (p2, c2) = snap.clone().restore().unwrap();
        assert_eq!((p2, c2), (post, counts));
        let mut bad = snap;
        bad.alpha[0] += 1.0;
        assert!(bad.restore().is_err());
    }
}
